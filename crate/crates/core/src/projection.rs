//! Projection of a classifier onto the certifiable set by alternating
//! convex search on the relaxed bilinear program.
//!
//! The Lyapunov partition is rebuilt from the iterate: uniform sectors about
//! the equilibrium with ray 0 on the classifier-induced switching line, so the
//! system cells coincide with the sectors (P = Q). Each cell carries one row
//! linked to the weights, `side * (H^T w1, h . w1 + w0)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    build_certificate_lp, solve_certificate, verify_certificate, BlockTag, CertificateProblem, CertificateWitness, DecreaseBlock,
    PolyhedralLyapunov, VerifyReport,
};
use crate::classifier::{LinearClassifier, MeasurementMap};
use crate::error::{dim_check, Error, Result};
use crate::geometry::{dot, norm, uniform_sectors, PolyCell, Partition, Sectors};
use crate::io::fmt_f64;
use crate::lpcore::{l1_epigraph, solve, AffineExpr, LinearProgram, LpStatus, Row};
use crate::model::{AffineInclusion, PwaSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcsConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub slack_tol: f64,
    /// Smallest accepted step fraction of the line search.
    pub min_step: f64,
    /// Switching-line angles tried when the search stalls with slack; 0 disables.
    pub angle_sweep: usize,
}

impl Default for AcsConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, beta: 1e-3, max_iters: 100, slack_tol: 1e-6, min_step: 1e-3, angle_sweep: 72 }
    }
}

impl AcsConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.beta > 0.0 && self.max_iters >= 1 && self.slack_tol >= 0.0 && self.min_step > 0.0) {
            return Err(Error::Config("ACS needs epsilon > 0, beta > 0, max_iters >= 1, slack_tol >= 0, min_step > 0".into()));
        }
        Ok(())
    }
}

/// Everything needed to rebuild the certificate program for a weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionContext {
    pub center: Vec<f64>,
    pub map: MeasurementMap,
    /// Field where the pulled-back score is nonnegative.
    pub positive: AffineInclusion,
    pub negative: AffineInclusion,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub sectors: usize,
    /// Keep the switching line through the equilibrium.
    pub anchor: bool,
    /// Cut distance of the optional sliding blocks; `None` disables them.
    pub sliding: Option<f64>,
}

/// Sector partition aligned with the current switching line.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorGeometry {
    pub sectors: Sectors,
    /// `+1` where the sector lies on the nonnegative side of the line.
    pub sides: Vec<f64>,
    /// State-space normal `H^T w1` and offset `h . w1 + w0`.
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// A decrease block whose `linked` rows are `sign * (normal, offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTemplate {
    pub block: DecreaseBlock,
    pub linked: Vec<(usize, f64)>,
}

#[cfg(test)]
const BOX_ROWS: usize = 4;

impl ProjectionContext {
    pub fn check(&self) -> Result<()> {
        dim_check(self.center.len() == 2, || "sector partitions are planar".into())?;
        dim_check(self.map.state_dim() == 2, || "measurement map must act on planar states".into())?;
        dim_check(self.box_lo.len() == 2 && self.box_hi.len() == 2, || "box bounds must be planar".into())?;
        dim_check(self.positive.dim() == 2 && self.negative.dim() == 2, || "fields must be planar".into())?;
        if self.sectors < 4 || self.sectors % 2 != 0 {
            return Err(Error::Config(format!("sector count must be even and at least 4, got {}", self.sectors)));
        }
        if (0..2).any(|k| !(self.box_lo[k] < self.center[k] && self.center[k] < self.box_hi[k])) {
            return Err(Error::Config("the certificate box must contain the equilibrium in its interior".into()));
        }
        Ok(())
    }

    pub fn weights_dim(&self) -> usize {
        self.map.measurement_dim() + 1
    }

    pub fn domain(&self) -> PolyCell {
        PolyCell::axis_box(&self.box_lo, &self.box_hi).expect("box bounds checked")
    }

    /// `(H x_e + h, 1)`; the anchor requires `anchor_row . w = 0`.
    pub fn anchor_row(&self) -> Vec<f64> {
        let mut a = self.map.apply(&self.center);
        a.push(1.0);
        a
    }

    pub fn pull_back(&self, w: &[f64]) -> (Vec<f64>, f64) {
        self.map.pull_back(&LinearClassifier::from_stacked(w))
    }

    pub fn geometry(&self, w: &[f64]) -> Result<SectorGeometry> {
        dim_check(w.len() == self.weights_dim(), || format!("weights have length {}, expected {}", w.len(), self.weights_dim()))?;
        let (g, c) = self.pull_back(w);
        if norm(&g) < 1e-10 {
            return Err(Error::Numerical("classifier direction vanishes in state space".into()));
        }
        let sectors = uniform_sectors(self.sectors, (-g[0]).atan2(g[1]))?;
        let step = 2.0 * std::f64::consts::PI / self.sectors as f64;
        let sides = sectors
            .rays
            .iter()
            .map(|&a| {
                let mid = a + step / 2.0;
                if dot(&g, &[mid.cos(), mid.sin()]) > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Ok(SectorGeometry { sectors, sides, normal: g, offset: c })
    }

    fn field(&self, side: f64) -> &AffineInclusion {
        if side > 0.0 {
            &self.positive
        } else {
            &self.negative
        }
    }

    fn box_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let b = self.domain();
        (b.e_mat, b.e_vec)
    }

    /// Blocks with linked rows left at zero.
    pub fn templates(&self, geo: &SectorGeometry) -> Vec<BlockTemplate> {
        let xe = &self.center;
        let (bm, bv) = self.box_rows();
        let mut out = Vec::new();
        for (i, cone) in geo.sectors.cones.iter().enumerate() {
            let mut e_mat = cone.f.clone();
            let mut e_vec: Vec<f64> = cone.f.iter().map(|r| -dot(r, xe)).collect();
            e_mat.push(vec![0.0, 0.0]);
            e_vec.push(0.0);
            e_mat.extend(bm.iter().cloned());
            e_vec.extend(bv.iter().copied());
            for (k, v) in self.field(geo.sides[i]).vertices.iter().enumerate() {
                out.push(BlockTemplate {
                    block: DecreaseBlock { cell: PolyCell { e_mat: e_mat.clone(), e_vec: e_vec.clone() }, terms: vec![(i, v.clone())], tag: BlockTag::Triple { i, j: i, k } },
                    linked: vec![(2, geo.sides[i])],
                });
            }
        }
        if let Some(delta) = self.sliding {
            let n = self.sectors;
            for (ja, jb, ray) in [(0, n - 1, 0), (n / 2 - 1, n / 2, n / 2)] {
                let u = geo.sectors.ray(ray);
                let mut e_mat = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
                let mut e_vec = vec![0.0, 0.0];
                e_mat.extend(bm.iter().cloned());
                e_vec.extend(bv.iter().copied());
                e_mat.push(u.to_vec());
                e_vec.push(-dot(&u, xe) - delta);
                for va in &self.field(geo.sides[ja]).vertices {
                    for vb in &self.field(geo.sides[jb]).vertices {
                        out.push(BlockTemplate {
                            block: DecreaseBlock {
                                cell: PolyCell { e_mat: e_mat.clone(), e_vec: e_vec.clone() },
                                terms: vec![(jb, va.clone()), (ja, vb.clone())],
                                tag: BlockTag::Sliding { ray },
                            },
                            linked: vec![(0, 1.0), (1, -1.0)],
                        });
                    }
                }
            }
        }
        out
    }

    /// Certificate program and templates at `w`.
    pub fn problem_at(&self, w: &[f64]) -> Result<(SectorGeometry, CertificateProblem, Vec<BlockTemplate>)> {
        self.check()?;
        let geo = self.geometry(w)?;
        let templates = self.templates(&geo);
        let blocks = templates
            .iter()
            .map(|t| {
                let mut b = t.block.clone();
                for &(r, s) in &t.linked {
                    b.cell.e_mat[r] = geo.normal.iter().map(|g| s * g).collect();
                    b.cell.e_vec[r] = s * geo.offset;
                }
                b
            })
            .collect();
        let problem = CertificateProblem {
            center: self.center.clone(),
            cones: geo.sectors.cones.clone(),
            facets: geo.sectors.facets.clone(),
            blocks,
        };
        Ok((geo, problem, templates))
    }

    /// The closed-loop PWA model at `w`: one cell per sector.
    pub fn system_at(&self, w: &[f64]) -> Result<PwaSystem> {
        let (geo, problem, _) = self.problem_at(w)?;
        let mut cells = Vec::new();
        let mut incs = Vec::new();
        for b in &problem.blocks {
            if let BlockTag::Triple { i, k: 0, .. } = b.tag {
                cells.push(b.cell.clone());
                incs.push(self.field(geo.sides[i]).clone());
            }
        }
        let mut sys = PwaSystem::new(Partition { cells, center: self.center.clone(), adjacency: geo.sectors.facets.clone() }, incs)?;
        sys.metadata.insert("validity".into(), serde_json::json!({"box_lo": self.box_lo, "box_hi": self.box_hi}));
        Ok(sys)
    }
}

/// Result of the multiplier half-step.
#[derive(Debug, Clone)]
pub struct MultiplierStep {
    pub w: Vec<f64>,
    pub geometry: SectorGeometry,
    pub problem: CertificateProblem,
    pub templates: Vec<BlockTemplate>,
    pub lyapunov: PolyhedralLyapunov,
    pub witness: CertificateWitness,
    pub slack: f64,
    /// `beta |w - w'|_1 + slack`.
    pub objective: f64,
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Minimizes the total slack over `(p, mu, lambda, v)` with `w` fixed.
pub fn multiplier_step(ctx: &ProjectionContext, w: &[f64], w_prime: &[f64], beta: f64) -> Result<MultiplierStep> {
    let (geometry, problem, templates) = ctx.problem_at(w)?;
    let clp = build_certificate_lp(&problem, true)?;
    let sol = solve(&clp.lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!("relaxed multiplier program returned {:?}", sol.status)));
    }
    let witness = clp.witness(&problem, &sol.z);
    let lyapunov = clp.lyapunov(&problem, &sol.z);
    let slack = witness.slack_l1();
    Ok(MultiplierStep {
        w: w.to_vec(),
        objective: slack + beta * l1_dist(w, w_prime),
        geometry,
        problem,
        templates,
        lyapunov,
        witness,
        slack,
    })
}

/// Minimizes `beta |w - w'|_1 + slack` over `w` with the multipliers and the
/// sector geometry of `step` frozen; `p` is then fixed by `p = F^T mu`.
pub fn classifier_step(ctx: &ProjectionContext, step: &MultiplierStep, w_prime: &[f64], beta: f64) -> Result<(Vec<f64>, f64)> {
    let m1 = ctx.weights_dim();
    dim_check(w_prime.len() == m1, || "target weight dimension".into())?;
    let n = 2;
    let mut lp = LinearProgram::new();
    let up = lp.add_vars(m1, 0.0, f64::INFINITY, beta);
    let dn = lp.add_vars(m1, 0.0, f64::INFINITY, beta);
    let hm = &ctx.map.h_mat;
    let hv = &ctx.map.h_vec;
    let mut exprs = Vec::new();
    for (t, tpl) in step.templates.iter().enumerate() {
        let v = &step.witness.v[t];
        let b = &tpl.block;
        let rows = b.cell.rows();
        let vs: f64 = tpl.linked.iter().map(|&(r, s)| s * v[r]).sum();
        for d in 0..=n {
            let mut constant: f64 = (0..rows).map(|r| v[r] * if d < n { b.cell.e_mat[r][d] } else { b.cell.e_vec[r] }).sum();
            if d == n {
                constant += v[rows];
            }
            for (j, vert) in &b.terms {
                let (atp, ap) = vert.dual(&step.lyapunov.gradients[*j]);
                constant += if d < n { atp[d] } else { ap };
            }
            // Linked contribution vs * (H[:, d] . w1) or vs * (h . w1 + w0).
            let coef: Vec<f64> = (0..m1)
                .map(|k| {
                    if k + 1 == m1 {
                        if d == n { vs } else { 0.0 }
                    } else if d < n {
                        vs * hm[k][d]
                    } else {
                        vs * hv[k]
                    }
                })
                .collect();
            let mut terms: Row = Vec::new();
            for (k, &c) in coef.iter().enumerate() {
                if c != 0.0 {
                    terms.push((up + k, c));
                    terms.push((dn + k, -c));
                }
            }
            exprs.push(AffineExpr::new(terms, constant + dot(&coef, w_prime)));
        }
    }
    l1_epigraph(&mut lp, &exprs, 1.0);
    if ctx.anchor {
        let a = ctx.anchor_row();
        let mut row: Row = Vec::with_capacity(2 * m1);
        for (k, &c) in a.iter().enumerate() {
            row.push((up + k, c));
            row.push((dn + k, -c));
        }
        lp.add_eq(row, -dot(&a, w_prime));
    }
    let sol = solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!("classifier program returned {:?}", sol.status)));
    }
    let w = (0..m1).map(|k| w_prime[k] + sol.z[up + k] - sol.z[dn + k]).collect();
    Ok((w, sol.objective))
}

/// Closest point of `w'` in l1 whose switching line has direction angle
/// `theta` and whose normal keeps at least the current length.
fn closest_with_angle(ctx: &ProjectionContext, w_prime: &[f64], theta: f64) -> Result<Option<Vec<f64>>> {
    let m1 = ctx.weights_dim();
    let mut lp = LinearProgram::new();
    let up = lp.add_vars(m1, 0.0, f64::INFINITY, 1.0);
    let dn = lp.add_vars(m1, 0.0, f64::INFINITY, 1.0);
    let along = [theta.cos(), theta.sin()];
    let across = [-theta.sin(), theta.cos()];
    let (g, _) = ctx.pull_back(w_prime);
    let kappa = norm(&g).max(1e-6);
    // Row r over w with w1-part H dir and zero w0.
    let lin = |dir: &[f64; 2]| -> Vec<f64> {
        let mut r: Vec<f64> = ctx.map.h_mat.iter().map(|h| dot(h, dir)).collect();
        r.push(0.0);
        r
    };
    let split = |r: &[f64]| -> Row { r.iter().enumerate().flat_map(|(k, &c)| [(up + k, c), (dn + k, -c)]).collect() };
    // The normal is parallel to `across`: no component along the line.
    let r_along = lin(&along);
    lp.add_eq(split(&r_along), -dot(&r_along, w_prime));
    let r_across = lin(&across);
    lp.add_ge(split(&r_across), kappa - dot(&r_across, w_prime));
    if ctx.anchor {
        let a = ctx.anchor_row();
        lp.add_eq(split(&a), -dot(&a, w_prime));
    }
    let sol = solve(&lp)?;
    Ok(sol.is_optimal().then(|| (0..m1).map(|k| w_prime[k] + sol.z[up + k] - sol.z[dn + k]).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcsRecord {
    pub iter: usize,
    pub objective: f64,
    pub slack_l1: f64,
    pub dw_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcsTrace {
    pub records: Vec<AcsRecord>,
}

impl AcsTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.records.windows(2).all(|p| p[1].objective <= p[0].objective + tol)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = ["iter", "objective", "slack_l1", "dw_norm", "step"].map(String::from);
        let rows = self.records.iter().map(|r| vec![r.iter.to_string(), fmt_f64(r.objective), fmt_f64(r.slack_l1), fmt_f64(r.dw_norm), fmt_f64(r.step)]);
        crate::io::write_csv(path, &header, rows)
    }
}

/// Outcome of one projection.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub w: Vec<f64>,
    pub lyapunov: PolyhedralLyapunov,
    pub witness: CertificateWitness,
    pub problem: CertificateProblem,
    pub trace: AcsTrace,
    pub slack: f64,
    /// Final slack within tolerance.
    pub success: bool,
    /// The exact program was re-solved at `w` and its witness passed verification.
    pub verified: bool,
}

/// l1-closest point of `w'` on the anchor hyperplane: moves the coordinate
/// with the largest anchor coefficient.
pub fn anchor_projection(ctx: &ProjectionContext, w_prime: &[f64]) -> Vec<f64> {
    let mut w = w_prime.to_vec();
    if ctx.anchor {
        let a = ctx.anchor_row();
        let k = (0..a.len()).max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs())).unwrap_or(0);
        w[k] -= dot(&a, w_prime) / a[k];
    }
    w
}

fn acs_from(ctx: &ProjectionContext, start: Vec<f64>, w_prime: &[f64], cfg: &AcsConfig, trace: &mut AcsTrace) -> Result<MultiplierStep> {
    let mut cur = multiplier_step(ctx, &start, w_prime, cfg.beta)?;
    let base = trace.records.len();
    trace.records.push(AcsRecord { iter: base, objective: cur.objective, slack_l1: cur.slack, dw_norm: 0.0, step: 0.0 });
    for _ in 0..cfg.max_iters {
        let (wn, _) = classifier_step(ctx, &cur, w_prime, cfg.beta)?;
        let mut tau = 1.0;
        let mut accepted = None;
        while tau >= cfg.min_step {
            let wt: Vec<f64> = cur.w.iter().zip(&wn).map(|(a, b)| a + tau * (b - a)).collect();
            // A trial whose direction vanishes is rejected like an ascent step.
            if let Ok(mt) = multiplier_step(ctx, &wt, w_prime, cfg.beta) {
                if mt.objective <= cur.objective + 1e-12 {
                    accepted = Some(mt);
                    break;
                }
            }
            tau *= 0.5;
        }
        let Some(next) = accepted else { break };
        let dw = l1_dist(&next.w, &cur.w);
        cur = next;
        trace.records.push(AcsRecord { iter: trace.records.len(), objective: cur.objective, slack_l1: cur.slack, dw_norm: dw, step: tau });
        if dw <= cfg.epsilon || cur.slack <= cfg.slack_tol && dw <= cfg.epsilon.max(1e-12) {
            break;
        }
    }
    Ok(cur)
}

/// Alternating convex search from the anchored `w'`, with an optional sweep
/// over switching-line angles when the search stalls with positive slack.
pub fn project(w_prime: &[f64], cfg: &AcsConfig, ctx: &ProjectionContext) -> Result<ProjectionOutcome> {
    cfg.check()?;
    ctx.check()?;
    dim_check(w_prime.len() == ctx.weights_dim(), || "target weight dimension".into())?;
    let mut trace = AcsTrace::default();
    let mut best = acs_from(ctx, anchor_projection(ctx, w_prime), w_prime, cfg, &mut trace)?;
    if ctx.sliding.is_some() && cfg.angle_sweep > 0 {
        for _ in 0..3 {
            if best.slack <= cfg.slack_tol {
                break;
            }
            let mut cand: Option<MultiplierStep> = None;
            for s in 0..cfg.angle_sweep {
                let theta = 2.0 * std::f64::consts::PI * s as f64 / cfg.angle_sweep as f64;
                let Some(wc) = closest_with_angle(ctx, w_prime, theta)? else { continue };
                if let Ok(mc) = multiplier_step(ctx, &wc, w_prime, cfg.beta) {
                    if cand.as_ref().is_none_or(|c| mc.objective < c.objective) {
                        cand = Some(mc);
                    }
                }
            }
            let Some(c) = cand else { break };
            if c.objective >= best.objective - 1e-12 {
                break;
            }
            best = acs_from(ctx, c.w, w_prime, cfg, &mut trace)?;
        }
    }
    let success = best.slack <= cfg.slack_tol;
    let mut out = ProjectionOutcome {
        w: best.w.clone(),
        lyapunov: best.lyapunov.clone(),
        witness: best.witness.clone(),
        problem: best.problem.clone(),
        trace,
        slack: best.slack,
        success,
        verified: false,
    };
    if success {
        let (sol, exact) = solve_certificate(&best.problem, false)?;
        if let (true, Some((lyap, wit))) = (sol.is_optimal(), exact) {
            if verify_certificate(&best.problem, &lyap, &wit)?.feasible {
                out.lyapunov = lyap;
                out.witness = wit;
                out.verified = true;
            }
        }
    }
    Ok(out)
}

/// A projected classifier's certificate with everything needed to check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCertificate {
    pub context: ProjectionContext,
    pub lyapunov: PolyhedralLyapunov,
    pub witness: CertificateWitness,
    pub slack_l1: f64,
    pub success: bool,
}

impl PairCertificate {
    /// Rebuilds the program from the context and `w` and checks the witness.
    pub fn verify(&self, w: &[f64]) -> Result<VerifyReport> {
        let (_, problem, _) = self.context.problem_at(w)?;
        verify_certificate(&problem, &self.lyapunov, &self.witness)
    }
}
