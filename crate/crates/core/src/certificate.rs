//! Polyhedral Lyapunov certificates: the linear constraint system in the
//! gradients and multipliers, an independent witness checker, set-valued
//! Lie-derivative spot checks and level-set bounds.
//!
//! For a cone `Z_j = {F_j (x - x_e) >= 0}` with gradient `p_j`:
//! - positivity: `p_j = F_j^T mu_j`, `mu_j >= 1`, so `p_j . xi > 0` on `Z_j \ {0}`
//!   whenever the cone is pointed;
//! - decrease: `[E e; 0 1]^T v + sum_t [A_t^T; a_t^T] p_{j_t} = 0`, `v >= 1`,
//!   so `sum_t p_{j_t} . (A_t x + a_t) <= -v_last < 0` on the whole closed cell;
//! - continuity: `p_i - p_j = lambda f_ij`, `lambda >= 1`, so `V` agrees on
//!   the shared facet `f_ij . (x - x_e) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::geometry::{dot, norm, shared_facet, Cone, Facet, IndexSets, PolyCell};
use crate::lpcore::{l1_epigraph, solve, AffineExpr, LinearProgram, LpSolution, LpStatus, Row};
use crate::model::{AffineVertex, PwaSystem};

/// `V(x) = p_j . (x - x_e)` for `x - x_e` in cone `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralLyapunov {
    pub center: Vec<f64>,
    pub cones: Vec<Cone>,
    pub gradients: Vec<Vec<f64>>,
}

impl PolyhedralLyapunov {
    pub fn check(&self) -> Result<()> {
        let n = self.center.len();
        dim_check(self.cones.len() == self.gradients.len(), || "one gradient per cone is required".into())?;
        dim_check(self.cones.iter().all(|c| c.dim() == n) && self.gradients.iter().all(|p| p.len() == n), || {
            "Lyapunov cones or gradients differ from the center dimension".into()
        })
    }

    /// Cone holding `x - x_e` with the largest normalized row margin.
    pub fn cone_of(&self, x: &[f64]) -> Option<usize> {
        let xi: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = norm(&xi).max(1e-300);
        self.cones
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.f.iter().map(|row| dot(row, &xi) / (norm(row) * r)).fold(f64::INFINITY, f64::min)))
            .filter(|&(_, s)| s >= -1e-9)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    }

    /// `V(x)`; `None` when no cone contains `x - x_e`.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        let j = self.cone_of(x)?;
        let xi: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        Some(dot(&self.gradients[j], &xi))
    }
}

/// Which condition a decrease block encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTag {
    /// Cell `i`, cone `j`, vertex `k`.
    Triple { i: usize, j: usize, k: usize },
    /// Cross terms of a sliding segment on switching ray `ray`.
    Sliding { ray: usize },
}

/// `sum_t p_{cone_t} . (A_t x + a_t) < 0` for every `x` in `cell`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseBlock {
    pub cell: PolyCell,
    pub terms: Vec<(usize, AffineVertex)>,
    pub tag: BlockTag,
}

impl DecreaseBlock {
    /// Number of multipliers: one per cell row plus the homogenizing one.
    pub fn multipliers(&self) -> usize {
        self.cell.rows() + 1
    }
}

/// Everything the constraint system needs: cones, oriented facets and
/// decrease blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateProblem {
    pub center: Vec<f64>,
    pub cones: Vec<Cone>,
    pub facets: Vec<Facet>,
    pub blocks: Vec<DecreaseBlock>,
}

impl CertificateProblem {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.dim();
        dim_check(self.cones.iter().all(|c| c.dim() == n), || "cone dimension".into())?;
        for f in &self.facets {
            dim_check(f.i < self.cones.len() && f.j < self.cones.len() && f.f.len() == n, || "facet out of range".into())?;
        }
        for b in &self.blocks {
            b.cell.check()?;
            dim_check(b.cell.dim() == n, || "block cell dimension".into())?;
            for (j, v) in &b.terms {
                dim_check(*j < self.cones.len() && v.dim() == n, || "block term out of range".into())?;
            }
        }
        Ok(())
    }

    /// Blocks for every `dec` triple and facets for every `cont` pair. The
    /// block cell is `X_i` intersected with `Z_j`, omitting cone rows that
    /// `X_i` already carries.
    pub fn from_system(system: &PwaSystem, cones: &[Cone], center: &[f64], sets: &IndexSets) -> Result<Self> {
        system.check()?;
        let mut facets = Vec::with_capacity(sets.cont.len());
        for &(i, j) in &sets.cont {
            let f = shared_facet(&cones[i], &cones[j]).ok_or_else(|| Error::Config(format!("cones {i} and {j} share no facet")))?;
            facets.push(Facet { i, j, f });
        }
        let mut blocks = Vec::with_capacity(sets.dec.len());
        for &(i, j, k) in &sets.dec {
            let cell = &system.partition.cells[i];
            let cone_cell = cones[j].as_cell(center);
            let mut e_mat = cell.e_mat.clone();
            let mut e_vec = cell.e_vec.clone();
            for (r, e) in cone_cell.e_mat.iter().zip(&cone_cell.e_vec) {
                let present = cell.e_mat.iter().zip(&cell.e_vec).any(|(cr, ce)| {
                    cr.iter().zip(r).all(|(a, b)| (a - b).abs() <= 1e-12) && (ce - e).abs() <= 1e-12
                });
                if !present {
                    e_mat.push(r.clone());
                    e_vec.push(*e);
                }
            }
            let vertex = system.inclusions[i].vertices[k].clone();
            blocks.push(DecreaseBlock { cell: PolyCell { e_mat, e_vec }, terms: vec![(j, vertex)], tag: BlockTag::Triple { i, j, k } });
        }
        let p = CertificateProblem { center: center.to_vec(), cones: cones.to_vec(), facets, blocks };
        p.check()?;
        Ok(p)
    }
}

/// Multipliers and slacks attesting the constraint system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateWitness {
    pub mu: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

impl CertificateWitness {
    pub fn slack_l1(&self) -> f64 {
        self.q.iter().flatten().map(|v| v.abs()).sum()
    }
}

/// Column layout of the certificate program.
#[derive(Debug, Clone)]
pub struct CertificateLp {
    pub lp: LinearProgram,
    pub n: usize,
    /// `p_j[d]` is column `p0 + j n + d`.
    pub p0: usize,
    pub mu: Vec<usize>,
    pub lambda: Vec<usize>,
    pub v: Vec<usize>,
    /// Residual expressions per block; zero in the exact program.
    pub residuals: Vec<Vec<AffineExpr>>,
}

impl CertificateLp {
    pub fn p_col(&self, j: usize, d: usize) -> usize {
        self.p0 + j * self.n + d
    }

    pub fn gradients(&self, z: &[f64], cones: usize) -> Vec<Vec<f64>> {
        (0..cones).map(|j| (0..self.n).map(|d| z[self.p_col(j, d)]).collect()).collect()
    }

    pub fn witness(&self, problem: &CertificateProblem, z: &[f64]) -> CertificateWitness {
        let take = |start: usize, len: usize| z[start..start + len].to_vec();
        CertificateWitness {
            mu: self.mu.iter().zip(&problem.cones).map(|(&s, c)| take(s, c.f.len())).collect(),
            v: self.v.iter().zip(&problem.blocks).map(|(&s, b)| take(s, b.multipliers())).collect(),
            lambda: self.lambda.iter().map(|&s| z[s]).collect(),
            q: self.residuals.iter().map(|r| r.iter().map(|e| e.eval(z)).collect()).collect(),
        }
    }

    pub fn lyapunov(&self, problem: &CertificateProblem, z: &[f64]) -> PolyhedralLyapunov {
        PolyhedralLyapunov { center: problem.center.clone(), cones: problem.cones.clone(), gradients: self.gradients(z, problem.cones.len()) }
    }
}

/// Adds `p_j - F_j^T mu_j = 0` with `mu_j >= 1`; returns the first `mu` column per cone.
pub fn positivity_constraints(lp: &mut LinearProgram, cones: &[Cone], p0: usize, n: usize) -> Vec<usize> {
    cones
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mu = lp.add_vars(c.f.len(), 1.0, f64::INFINITY, 0.0);
            for d in 0..n {
                let mut row: Row = vec![(p0 + j * n + d, 1.0)];
                row.extend(c.f.iter().enumerate().filter(|(_, r)| r[d] != 0.0).map(|(r, fr)| (mu + r, -fr[d])));
                lp.add_eq(row, 0.0);
            }
            mu
        })
        .collect()
}

/// Adds `p_i - p_j - lambda f_ij = 0` with `lambda >= 1`; returns the `lambda` columns.
pub fn continuity_constraints(lp: &mut LinearProgram, facets: &[Facet], p0: usize, n: usize) -> Vec<usize> {
    facets
        .iter()
        .map(|f| {
            let lam = lp.add_var(1.0, f64::INFINITY, 0.0);
            for d in 0..n {
                lp.add_eq(vec![(p0 + f.i * n + d, 1.0), (p0 + f.j * n + d, -1.0), (lam, -f.f[d])], 0.0);
            }
            lam
        })
        .collect()
}

/// Residual `[E e; 0 1]^T v + sum_t [A_t^T; a_t^T] p_{j_t}` of one block.
fn block_residual(block: &DecreaseBlock, v0: usize, p0: usize, n: usize) -> Vec<AffineExpr> {
    let rows = block.cell.rows();
    (0..=n)
        .map(|d| {
            let mut terms: Row = Vec::new();
            for r in 0..rows {
                let c = if d < n { block.cell.e_mat[r][d] } else { block.cell.e_vec[r] };
                if c != 0.0 {
                    terms.push((v0 + r, c));
                }
            }
            if d == n {
                terms.push((v0 + rows, 1.0));
            }
            for (j, vert) in &block.terms {
                for e in 0..n {
                    let c = if d < n { vert.a_mat[e][d] } else { vert.a_vec[e] };
                    if c != 0.0 {
                        terms.push((p0 + j * n + e, c));
                    }
                }
            }
            AffineExpr::new(terms, 0.0)
        })
        .collect()
}

/// Adds the decrease blocks with `v >= 1`. Exact form sets every residual to
/// zero; relaxed form charges their l1 norm to the cost instead.
pub fn decrease_constraints(
    lp: &mut LinearProgram,
    blocks: &[DecreaseBlock],
    p0: usize,
    n: usize,
    relaxed: bool,
) -> (Vec<usize>, Vec<Vec<AffineExpr>>) {
    let mut vs = Vec::with_capacity(blocks.len());
    let mut residuals = Vec::with_capacity(blocks.len());
    for b in blocks {
        let v0 = lp.add_vars(b.multipliers(), 1.0, f64::INFINITY, 0.0);
        let res = block_residual(b, v0, p0, n);
        if relaxed {
            l1_epigraph(lp, &res, 1.0);
        } else {
            for e in &res {
                lp.add_eq(e.terms.clone(), -e.constant);
            }
        }
        vs.push(v0);
        residuals.push(res);
    }
    (vs, residuals)
}

/// The full program in `(p, mu, lambda, v)`, minimizing the total l1 slack
/// when `relaxed`.
pub fn build_certificate_lp(problem: &CertificateProblem, relaxed: bool) -> Result<CertificateLp> {
    problem.check()?;
    let n = problem.dim();
    let mut lp = LinearProgram::new();
    let p0 = lp.add_vars(problem.cones.len() * n, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let mu = positivity_constraints(&mut lp, &problem.cones, p0, n);
    let lambda = continuity_constraints(&mut lp, &problem.facets, p0, n);
    let (v, residuals) = decrease_constraints(&mut lp, &problem.blocks, p0, n, relaxed);
    Ok(CertificateLp { lp, n, p0, mu, lambda, v, residuals })
}

/// Solves the program. The witness is present whenever the status is optimal.
pub fn solve_certificate(problem: &CertificateProblem, relaxed: bool) -> Result<(LpSolution, Option<(PolyhedralLyapunov, CertificateWitness)>)> {
    let clp = build_certificate_lp(problem, relaxed)?;
    let sol = solve(&clp.lp)?;
    let out = if sol.status == LpStatus::Optimal { Some((clp.lyapunov(problem, &sol.z), clp.witness(problem, &sol.z))) } else { None };
    Ok((sol, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResidual {
    pub name: String,
    /// Equality residual, or the amount an inequality falls short.
    pub violation: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub feasible: bool,
    pub max_violation: f64,
    pub slack_l1: f64,
    pub residuals: Vec<ConstraintResidual>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstraintResidual> {
        self.residuals.iter().filter(|r| !r.ok)
    }
}

const EQ_TOL: f64 = 1e-7;
const INEQ_TOL: f64 = 1e-9;

/// Re-evaluates every constraint from the witness alone. Equalities must hold
/// to `1e-7 (1 + sum |terms|)`; multiplier bounds to `1e-9`.
pub fn verify_certificate(problem: &CertificateProblem, lyap: &PolyhedralLyapunov, w: &CertificateWitness) -> Result<VerifyReport> {
    problem.check()?;
    lyap.check()?;
    let n = problem.dim();
    let shape_ok = lyap.cones.len() == problem.cones.len()
        && w.mu.len() == problem.cones.len()
        && w.mu.iter().zip(&problem.cones).all(|(m, c)| m.len() == c.f.len())
        && w.lambda.len() == problem.facets.len()
        && w.v.len() == problem.blocks.len()
        && w.v.iter().zip(&problem.blocks).all(|(v, b)| v.len() == b.multipliers());
    dim_check(shape_ok, || "witness shape does not match the certificate problem".into())?;
    let p = &lyap.gradients;
    let mut out = Vec::new();
    let mut eq = |name: String, terms: &[f64]| {
        let val: f64 = terms.iter().sum();
        let scale: f64 = 1.0 + terms.iter().map(|t| t.abs()).sum::<f64>();
        out.push(ConstraintResidual { name, violation: val.abs(), ok: val.abs() <= EQ_TOL * scale });
    };
    for (j, c) in problem.cones.iter().enumerate() {
        for d in 0..n {
            let mut t = vec![p[j][d]];
            t.extend(c.f.iter().zip(&w.mu[j]).map(|(r, m)| -r[d] * m));
            eq(format!("positivity cone {j} coord {d}: p = F^T mu"), &t);
        }
    }
    for (t, f) in problem.facets.iter().enumerate() {
        for d in 0..n {
            eq(format!("continuity facet {t} ({},{}) coord {d}: p_i - p_j = lambda f", f.i, f.j), &[p[f.i][d], -p[f.j][d], -w.lambda[t] * f.f[d]]);
        }
    }
    for (b, blk) in problem.blocks.iter().enumerate() {
        let rows = blk.cell.rows();
        for d in 0..=n {
            let mut t: Vec<f64> = (0..rows).map(|r| w.v[b][r] * if d < n { blk.cell.e_mat[r][d] } else { blk.cell.e_vec[r] }).collect();
            if d == n {
                t.push(w.v[b][rows]);
            }
            for (j, vert) in &blk.terms {
                let (atp, ap) = vert.dual(&p[*j]);
                t.push(if d < n { atp[d] } else { ap });
            }
            eq(format!("decrease block {b} {:?} coord {d}", blk.tag), &t);
        }
    }
    let mut ge1 = |name: String, x: f64| {
        let short = (1.0 - x).max(0.0);
        out.push(ConstraintResidual { name, violation: short, ok: x >= 1.0 - INEQ_TOL && x.is_finite() });
    };
    for (j, m) in w.mu.iter().enumerate() {
        for (r, &x) in m.iter().enumerate() {
            ge1(format!("positivity cone {j}: mu[{r}] >= 1"), x);
        }
    }
    for (t, &x) in w.lambda.iter().enumerate() {
        ge1(format!("continuity facet {t}: lambda >= 1"), x);
    }
    for (b, v) in w.v.iter().enumerate() {
        for (r, &x) in v.iter().enumerate() {
            ge1(format!("decrease block {b}: v[{r}] >= 1"), x);
        }
    }
    let max_violation = out.iter().map(|r| r.violation).fold(0.0, f64::max);
    Ok(VerifyReport { feasible: out.iter().all(|r| r.ok), max_violation, slack_l1: w.slack_l1(), residuals: out })
}

/// Upper bound of the set-valued Lie derivative of `V` at `x`: the largest
/// `p_j . f` over every cell and cone containing `x` and every vertex field.
pub fn lie_derivative_max(system: &PwaSystem, lyap: &PolyhedralLyapunov, x: &[f64]) -> Result<f64> {
    system.check()?;
    lyap.check()?;
    dim_check(x.len() == lyap.center.len(), || "state dimension".into())?;
    const TOL: f64 = 1e-9;
    let xi: Vec<f64> = x.iter().zip(&lyap.center).map(|(a, b)| a - b).collect();
    let cones: Vec<usize> = (0..lyap.cones.len()).filter(|&j| lyap.cones[j].contains(&xi, TOL)).collect();
    let cells: Vec<usize> = (0..system.partition.cells.len()).filter(|&i| system.partition.cells[i].contains(x, TOL)).collect();
    if cones.is_empty() || cells.is_empty() {
        return Err(Error::Domain(format!("{x:?} lies outside the analysed domain")));
    }
    let mut best = f64::NEG_INFINITY;
    for &i in &cells {
        for v in &system.inclusions[i].vertices {
            let f = v.eval(x);
            for &j in &cones {
                best = best.max(dot(&lyap.gradients[j], &f));
            }
        }
    }
    Ok(best)
}

/// `(S_max, S_min)`: the largest level with `{V <= c}` inside `domain`, and
/// the smallest value of `V` on `domain`.
pub fn level_set_bounds(lyap: &PolyhedralLyapunov, domain: &PolyCell) -> Result<(f64, f64)> {
    lyap.check()?;
    domain.check()?;
    let n = lyap.center.len();
    dim_check(domain.dim() == n, || "domain dimension".into())?;
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut lp = LinearProgram::new();
            let x0 = lp.add_vars(n, f64::NEG_INFINITY, f64::INFINITY, 0.0);
            lp.cost[x0 + k] = -sign;
            for (row, &e) in domain.e_mat.iter().zip(&domain.e_vec) {
                lp.add_ge(row.iter().enumerate().map(|(d, &a)| (x0 + d, a)).collect(), -e);
            }
            match solve(&lp)?.status {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => return Err(Error::Domain("domain is unbounded".into())),
                LpStatus::Infeasible => return Err(Error::Empty("domain is empty".into())),
            }
        }
    }
    let center_slack = domain.eval(&lyap.center);
    let inside = center_slack.iter().all(|&s| s >= 0.0);
    let mut s_max = f64::INFINITY;
    if inside {
        for (cone, p) in lyap.cones.iter().zip(&lyap.gradients) {
            for (row, &slack) in domain.e_mat.iter().zip(&center_slack) {
                // max -row . xi  s.t.  F xi >= 0, p . xi <= 1
                let mut lp = LinearProgram::new();
                let x0 = lp.add_vars(n, f64::NEG_INFINITY, f64::INFINITY, 0.0);
                for d in 0..n {
                    lp.cost[x0 + d] = row[d];
                }
                for fr in &cone.f {
                    lp.add_ge(fr.iter().enumerate().map(|(d, &a)| (x0 + d, a)).collect(), 0.0);
                }
                lp.add_le(p.iter().enumerate().map(|(d, &a)| (x0 + d, a)).collect(), 1.0);
                let sol = solve(&lp)?;
                match sol.status {
                    LpStatus::Optimal => {
                        let reach = -sol.objective;
                        if reach > 1e-12 {
                            s_max = s_max.min(slack / reach);
                        }
                    }
                    LpStatus::Unbounded => return Err(Error::Domain("sublevel sets of V are unbounded".into())),
                    LpStatus::Infeasible => return Err(Error::Numerical("level-set program infeasible".into())),
                }
            }
        }
    } else {
        s_max = 0.0;
    }
    if !s_max.is_finite() {
        return Err(Error::Domain("domain is unbounded".into()));
    }
    let s_min = if inside {
        0.0
    } else {
        let mut best = f64::INFINITY;
        for (cone, p) in lyap.cones.iter().zip(&lyap.gradients) {
            let mut lp = LinearProgram::new();
            let x0 = lp.add_vars(n, f64::NEG_INFINITY, f64::INFINITY, 0.0);
            for d in 0..n {
                lp.cost[x0 + d] = p[d];
            }
            for fr in &cone.f {
                lp.add_ge(fr.iter().enumerate().map(|(d, &a)| (x0 + d, a)).collect(), 0.0);
            }
            for (row, &slack) in domain.e_mat.iter().zip(&center_slack) {
                lp.add_ge(row.iter().enumerate().map(|(d, &a)| (x0 + d, a)).collect(), -slack);
            }
            let sol = solve(&lp)?;
            if sol.is_optimal() {
                best = best.min(sol.objective);
            }
        }
        best
    };
    Ok((s_max, s_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_index_sets, uniform_sectors, Partition};
    use crate::model::AffineInclusion;

    fn scalar_problem(a: f64) -> CertificateProblem {
        CertificateProblem {
            center: vec![0.0],
            cones: vec![Cone::new(vec![vec![1.0]]).unwrap()],
            facets: vec![],
            blocks: vec![DecreaseBlock {
                cell: PolyCell::new(vec![vec![1.0]], vec![0.0]).unwrap(),
                terms: vec![(0, AffineVertex::new(vec![vec![a]], vec![0.0]).unwrap())],
                tag: BlockTag::Triple { i: 0, j: 0, k: 0 },
            }],
        }
    }

    fn offset_problem(a: f64, offset: f64) -> CertificateProblem {
        let mut p = scalar_problem(a);
        p.blocks[0].terms[0].1.a_vec[0] = offset;
        p
    }

    #[test]
    fn vanishing_field_at_the_vertex_is_not_certifiable() {
        // The homogenizing multiplier forces p . f(x_e) < 0 on the closed cell.
        let prob = scalar_problem(-1.0);
        assert_eq!(solve_certificate(&prob, false).unwrap().0.status, LpStatus::Infeasible);
    }

    #[test]
    fn offset_scalar_system_is_certified() {
        let prob = offset_problem(-1.0, -1.0);
        let (sol, w) = solve_certificate(&prob, false).unwrap();
        assert!(sol.is_optimal());
        let (lyap, w) = w.unwrap();
        assert!(lyap.gradients[0][0] >= 1.0);
        let rep = verify_certificate(&prob, &lyap, &w).unwrap();
        assert!(rep.feasible, "{:?}", rep.failures().collect::<Vec<_>>());
    }

    #[test]
    fn unstable_scalar_system_needs_slack() {
        let prob = scalar_problem(1.0);
        assert_eq!(solve_certificate(&prob, false).unwrap().0.status, LpStatus::Infeasible);
        let (sol, w) = solve_certificate(&prob, true).unwrap();
        assert!(sol.is_optimal() && sol.objective > 1e-3);
        assert!(w.unwrap().1.slack_l1() > 1e-3);
    }

    #[test]
    fn lowered_multiplier_is_named() {
        let prob = offset_problem(-1.0, -1.0);
        let (_, w) = solve_certificate(&prob, false).unwrap();
        let (lyap, mut w) = w.unwrap();
        w.mu[0][0] = 0.5;
        let rep = verify_certificate(&prob, &lyap, &w).unwrap();
        assert!(!rep.feasible);
        assert!(rep.failures().any(|f| f.name.contains("mu[0] >= 1")));
    }

    #[test]
    fn half_plane_continuity_example() {
        let right = Cone::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let left = Cone::new(vec![vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = shared_facet(&right, &left).unwrap();
        let mut lp = LinearProgram::new();
        let p0 = lp.add_vars(4, f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let lam = continuity_constraints(&mut lp, &[Facet { i: 0, j: 1, f }], p0, 2);
        for (k, v) in [1.0, 1.0, -1.0, 1.0].into_iter().enumerate() {
            lp.lower[p0 + k] = v;
            lp.upper[p0 + k] = v;
        }
        let sol = solve(&lp).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.z[lam[0]] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn quadrant_linear_system_round_trip() {
        // Constant fields pointing back toward the origin in each quadrant, P = Q.
        let s = uniform_sectors(4, 0.0).unwrap();
        let part = Partition::from_cones(&s.cones, &[0.0, 0.0], s.facets.clone());
        let incs = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
            .iter()
            .map(|a| AffineInclusion::single(AffineVertex::new(vec![vec![-0.5, 0.0], vec![0.0, -0.5]], a.to_vec()).unwrap()))
            .collect();
        let sys = PwaSystem::new(part.clone(), incs).unwrap();
        let sets = build_index_sets(&part, &part, &sys.vertex_counts()).unwrap();
        assert_eq!(sets.dec.len(), 4);
        let prob = CertificateProblem::from_system(&sys, &s.cones, &[0.0, 0.0], &sets).unwrap();
        assert!(prob.blocks.iter().all(|b| b.cell.rows() == 2));
        let (sol, w) = solve_certificate(&prob, false).unwrap();
        assert!(sol.is_optimal());
        let (lyap, w) = w.unwrap();
        assert!(verify_certificate(&prob, &lyap, &w).unwrap().feasible);
        let d = lie_derivative_max(&sys, &lyap, &[0.3, -0.7]).unwrap();
        assert!(d < 0.0);
        assert!(matches!(lie_derivative_max(&sys, &lyap, &[f64::NAN, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn infinity_norm_levels_on_unit_box() {
        let s = uniform_sectors(4, std::f64::consts::FRAC_PI_4).unwrap();
        // Sector k spans the diagonals around axis direction k.
        let dirs = [[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]];
        let lyap = PolyhedralLyapunov { center: vec![0.0, 0.0], cones: s.cones.clone(), gradients: dirs.iter().map(|d| d.to_vec()).collect() };
        let bx = PolyCell::axis_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let (smax, smin) = level_set_bounds(&lyap, &bx).unwrap();
        assert!((smax - 1.0).abs() < 1e-9);
        assert_eq!(smin, 0.0);
        assert!((lyap.value(&[0.5, -0.2]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbounded_domain_is_rejected() {
        let s = uniform_sectors(4, std::f64::consts::FRAC_PI_4).unwrap();
        let dirs = [[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]];
        let lyap = PolyhedralLyapunov { center: vec![0.0, 0.0], cones: s.cones, gradients: dirs.iter().map(|d| d.to_vec()).collect() };
        let half = PolyCell::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert!(matches!(level_set_bounds(&lyap, &half), Err(Error::Domain(_))));
    }
}
