//! Dense linear programming.
//!
//! Programs are written in the general form
//!
//! ```text
//! minimize    c.z
//! subject to  A_eq z  = b_eq
//!             A_ub z <= b_ub
//!             lower <= z <= upper      (bounds may be infinite)
//! ```
//!
//! and solved by a two-phase primal simplex on a dense tableau. Entering
//! columns follow Dantzig's rule with lowest-index tie-breaking; after 50
//! consecutive degenerate pivots the solver switches to Bland's rule until the
//! next nondegenerate pivot. The final basis is re-factorized with an LU
//! decomposition of the original columns so reported values carry no
//! accumulated tableau drift.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse row of a constraint matrix: `(column, coefficient)` pairs.
pub type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub a_eq: Vec<Row>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Row>,
    pub b_ub: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; empty unless `status == Optimal`.
    pub z: Vec<f64>,
    pub objective: f64,
    /// Dual bound b.y recovered from the optimal basis; equals `objective`
    /// up to round-off when the basis is optimal.
    pub dual_objective: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Affine expression `constant + sum coef * z[col]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Row,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Row, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * z[j]).sum::<f64>()
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    /// Adds `n` variables with identical bounds and cost; returns the first index.
    pub fn add_vars(&mut self, n: usize, lower: f64, upper: f64, cost: f64) -> usize {
        let first = self.num_vars();
        for _ in 0..n {
            self.add_var(lower, upper, cost);
        }
        first
    }

    pub fn add_eq(&mut self, row: Row, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn add_le(&mut self, row: Row, rhs: f64) {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn add_ge(&mut self, row: Row, rhs: f64) {
        self.add_le(row.into_iter().map(|(j, a)| (j, -a)).collect(), -rhs);
    }

    /// Builds a program from dense blocks. `bounds` holds `(lower, upper)` per
    /// variable; `None` means the nonnegative orthant.
    pub fn from_dense(
        cost: &[f64],
        a_eq: &[Vec<f64>],
        b_eq: &[f64],
        a_ub: &[Vec<f64>],
        b_ub: &[f64],
        bounds: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        let n = cost.len();
        let sparse = |rows: &[Vec<f64>]| -> Result<Vec<Row>> {
            rows.iter()
                .map(|r| {
                    if r.len() != n {
                        return Err(Error::Dimension(format!(
                            "constraint row has {} entries, expected {n}",
                            r.len()
                        )));
                    }
                    Ok(r.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (j, *a)).collect())
                })
                .collect()
        };
        let (lower, upper) = match bounds {
            Some(b) => {
                if b.len() != n {
                    return Err(Error::Dimension(format!("{} bounds for {n} variables", b.len())));
                }
                b.iter().copied().unzip()
            }
            None => (vec![0.0; n], vec![f64::INFINITY; n]),
        };
        let lp = Self {
            cost: cost.to_vec(),
            a_eq: sparse(a_eq)?,
            b_eq: b_eq.to_vec(),
            a_ub: sparse(a_ub)?,
            b_ub: b_ub.to_vec(),
            lower,
            upper,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("bounds length differs from cost length".into()));
        }
        if self.a_eq.len() != self.b_eq.len() || self.a_ub.len() != self.b_ub.len() {
            return Err(Error::Dimension("row count differs from right-hand side length".into()));
        }
        for row in self.a_eq.iter().chain(&self.a_ub) {
            for &(j, a) in row {
                if j >= n {
                    return Err(Error::Dimension(format!("column {j} out of range ({n} variables)")));
                }
                if !a.is_finite() {
                    return Err(Error::Numerical("non-finite constraint coefficient".into()));
                }
            }
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("non-finite cost entry".into()));
        }
        if self.b_eq.iter().chain(&self.b_ub).any(|b| !b.is_finite()) {
            return Err(Error::Numerical("non-finite right-hand side".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::Config(format!("empty bound interval for variable {j}")));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, z: &[f64]) -> f64 {
        self.cost.iter().zip(z).map(|(c, x)| c * x).sum()
    }

    /// Largest violation of any constraint or bound at `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let dot = |r: &Row| r.iter().map(|&(j, a)| a * z[j]).sum::<f64>();
        let mut worst = 0.0f64;
        for (r, b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(r) - b).abs());
        }
        for (r, b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max(dot(r) - b);
        }
        for (j, x) in z.iter().enumerate() {
            worst = worst.max(self.lower[j] - x).max(x - self.upper[j]);
        }
        worst
    }

    /// Plain-text dump in CPLEX LP format.
    pub fn to_lp_format(&self) -> String {
        let term = |out: &mut String, first: &mut bool, a: f64, j: usize| {
            let sign = if a < 0.0 { "-" } else if *first { "" } else { "+" };
            let _ = write!(out, " {sign} {:.17e} z{j}", a.abs());
            *first = false;
        };
        let mut s = String::from("Minimize\n obj:");
        let mut first = true;
        for (j, &c) in self.cost.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, &mut first, c, j);
            }
        }
        if first {
            s.push_str(" 0 z0");
        }
        s.push_str("\nSubject To\n");
        for (k, (r, b)) in self.a_eq.iter().zip(&self.b_eq).enumerate() {
            let _ = write!(s, " e{k}:");
            let mut first = true;
            for &(j, a) in r {
                term(&mut s, &mut first, a, j);
            }
            let _ = writeln!(s, " = {b:.17e}");
        }
        for (k, (r, b)) in self.a_ub.iter().zip(&self.b_ub).enumerate() {
            let _ = write!(s, " u{k}:");
            let mut first = true;
            for &(j, a) in r {
                term(&mut s, &mut first, a, j);
            }
            let _ = writeln!(s, " <= {b:.17e}");
        }
        s.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " z{j} free");
                }
                (true, false) => {
                    let _ = writeln!(s, " z{j} >= {lo:.17e}");
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= z{j} <= {hi:.17e}");
                }
                (true, true) => {
                    let _ = writeln!(s, " {lo:.17e} <= z{j} <= {hi:.17e}");
                }
            }
        }
        s.push_str("End\n");
        s
    }
}

/// Adds `t_r >= expr_r` and `t_r >= -expr_r` for every expression and charges
/// `weight * sum t_r` to the cost. Returns the indices of the `t_r`.
pub fn l1_epigraph(lp: &mut LinearProgram, rows: &[AffineExpr], weight: f64) -> Vec<usize> {
    rows.iter()
        .map(|e| {
            let t = lp.add_var(0.0, f64::INFINITY, weight);
            // expr - t <= 0  and  -expr - t <= 0
            let mut up = e.terms.clone();
            up.push((t, -1.0));
            lp.add_le(up, -e.constant);
            let mut dn: Row = e.terms.iter().map(|&(j, a)| (j, -a)).collect();
            dn.push((t, -1.0));
            lp.add_le(dn, e.constant);
            t
        })
        .collect()
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_LIMIT: usize = 50;
const MAX_REINVERSIONS: usize = 4;

/// How an original variable is expressed through nonnegative columns.
#[derive(Clone, Copy)]
enum VarMap {
    Shift { col: usize, offset: f64 },
    Flip { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    const_obj: f64,
    map: Vec<VarMap>,
    /// Columns that start in the basis for each row (slack with +1), if any.
    start_basis: Vec<Option<usize>>,
}

fn standard_form(lp: &LinearProgram) -> StandardForm {
    let n = lp.num_vars();
    let mut map = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let m = if lo.is_finite() {
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            VarMap::Shift { col: ncols, offset: lo }
        } else if hi.is_finite() {
            VarMap::Flip { col: ncols, offset: hi }
        } else {
            ncols += 1;
            VarMap::Split { pos: ncols - 1, neg: ncols }
        };
        ncols += 1;
        map.push(m);
    }
    let n_eq = lp.a_eq.len();
    let n_ub = lp.a_ub.len() + upper_rows.len();
    let rows = n_eq + n_ub;
    let slack0 = ncols;
    let total = ncols + n_ub;
    let mut a = DMatrix::<f64>::zeros(rows, total);
    let mut b = DVector::<f64>::zeros(rows);
    let mut c = DVector::<f64>::zeros(total);
    let mut const_obj = 0.0;

    let put = |a: &mut DMatrix<f64>, r: usize, j: usize, coef: f64| -> f64 {
        match map[j] {
            VarMap::Shift { col, offset } => {
                a[(r, col)] += coef;
                coef * offset
            }
            VarMap::Flip { col, offset } => {
                a[(r, col)] -= coef;
                coef * offset
            }
            VarMap::Split { pos, neg } => {
                a[(r, pos)] += coef;
                a[(r, neg)] -= coef;
                0.0
            }
        }
    };
    for (r, (row, rhs)) in lp.a_eq.iter().zip(&lp.b_eq).enumerate() {
        let mut shift = 0.0;
        for &(j, coef) in row {
            shift += put(&mut a, r, j, coef);
        }
        b[r] = rhs - shift;
    }
    for (k, (row, rhs)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
        let r = n_eq + k;
        let mut shift = 0.0;
        for &(j, coef) in row {
            shift += put(&mut a, r, j, coef);
        }
        b[r] = rhs - shift;
        a[(r, slack0 + k)] = 1.0;
    }
    for (k, &(col, width)) in upper_rows.iter().enumerate() {
        let r = n_eq + lp.a_ub.len() + k;
        a[(r, col)] = 1.0;
        b[r] = width;
        a[(r, slack0 + lp.a_ub.len() + k)] = 1.0;
    }
    for j in 0..n {
        let cj = lp.cost[j];
        match map[j] {
            VarMap::Shift { col, offset } => {
                c[col] += cj;
                const_obj += cj * offset;
            }
            VarMap::Flip { col, offset } => {
                c[col] -= cj;
                const_obj += cj * offset;
            }
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }
    let mut start_basis = vec![None; rows];
    for r in 0..rows {
        if b[r] < 0.0 {
            b[r] = -b[r];
            for x in a.row_mut(r).iter_mut() {
                *x = -*x;
            }
        } else if r >= n_eq {
            start_basis[r] = Some(slack0 + (r - n_eq));
        }
    }
    StandardForm { a, b, c, const_obj, map, start_basis }
}

/// Dense simplex tableau over `[A | I_art]` with an attached right-hand side.
struct Tableau {
    m: usize,
    /// Structural plus artificial columns.
    ncols: usize,
    /// Row-major `m x ncols` coefficients.
    t: Vec<f64>,
    rhs: DVector<f64>,
    basis: Vec<usize>,
    active: Vec<bool>,
}

enum Outcome {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn reduced_costs(&self, cost: &DVector<f64>) -> DVector<f64> {
        let mut d = cost.clone();
        for r in 0..self.m {
            if !self.active[r] {
                continue;
            }
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.t[r * self.ncols..(r + 1) * self.ncols];
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * self.ncols + j]
    }

    fn pivot(&mut self, pr: usize, pc: usize, d: &mut DVector<f64>) {
        let w = self.ncols;
        let piv = self.at(pr, pc);
        for x in &mut self.t[pr * w..(pr + 1) * w] {
            *x /= piv;
        }
        self.rhs[pr] /= piv;
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        let prhs = self.rhs[pr];
        for r in 0..self.m {
            if r == pr || !self.active[r] {
                continue;
            }
            let f = self.at(r, pc);
            if f != 0.0 {
                let row = &mut self.t[r * w..(r + 1) * w];
                for &j in &nz {
                    row[j] -= f * prow[j];
                }
                row[pc] = 0.0;
                self.rhs[r] -= f * prhs;
                if self.rhs[r] < 0.0 && self.rhs[r] > -1e-11 {
                    self.rhs[r] = 0.0;
                }
            }
        }
        let f = d[pc];
        if f != 0.0 {
            for &j in &nz {
                d[j] -= f * prow[j];
            }
            d[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations for `cost` over the columns marked `allowed`.
    fn run(&mut self, cost: &DVector<f64>, allowed: &[bool], max_iter: usize) -> Outcome {
        let mut d = self.reduced_costs(cost);
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_LIMIT;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..self.ncols {
                if !allowed[j] || d[j] >= -COST_TOL {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if d[j] < best {
                    best = d[j];
                    enter = Some(j);
                }
            }
            let Some(pc) = enter else {
                return Outcome::Optimal;
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.m {
                if !self.active[r] {
                    continue;
                }
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs[r] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                            if tie {
                                self.basis[r] < self.basis[l]
                            } else {
                                ratio < best_ratio
                            }
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        leave = Some(r);
                    }
                }
            }
            let Some(pr) = leave else {
                return Outcome::Unbounded;
            };
            if best_ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc, &mut d);
        }
        Outcome::Stalled
    }

    /// Rebuilds the tableau from the original matrix and the current basis.
    fn reinvert(&mut self, a_full: &DMatrix<f64>, b: &DVector<f64>) -> bool {
        let rows: Vec<usize> = (0..self.m).filter(|&r| self.active[r]).collect();
        let k = rows.len();
        let mut bm = DMatrix::<f64>::zeros(k, k);
        for (ci, &r) in rows.iter().enumerate() {
            let col = self.basis[r];
            for (ri, &rr) in rows.iter().enumerate() {
                bm[(ri, ci)] = a_full[(rr, col)];
            }
        }
        let lu = bm.lu();
        let mut sub = DMatrix::<f64>::zeros(k, self.ncols + 1);
        for (ri, &rr) in rows.iter().enumerate() {
            for j in 0..self.ncols {
                sub[(ri, j)] = a_full[(rr, j)];
            }
            sub[(ri, self.ncols)] = b[rr];
        }
        let Some(sol) = lu.solve(&sub) else {
            return false;
        };
        if sol.iter().any(|x| !x.is_finite()) {
            return false;
        }
        // Row ci of the solution belongs to the basic variable of column ci.
        for (ci, &r) in rows.iter().enumerate() {
            for j in 0..self.ncols {
                self.t[r * self.ncols + j] = sol[(ci, j)];
            }
            self.rhs[r] = sol[(ci, self.ncols)];
        }
        true
    }
}

/// Solves `lp`. Infeasible and unbounded programs are reported through the
/// status; `Err(Numerical)` means no status could be certified.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let sf = standard_form(lp);
    let m = sf.a.nrows();
    let n_struct = sf.a.ncols();
    let art: Vec<usize> = (0..m).filter(|&r| sf.start_basis[r].is_none()).collect();
    let ncols = n_struct + art.len();
    let mut a_full = DMatrix::<f64>::zeros(m, ncols);
    a_full.view_mut((0, 0), (m, n_struct)).copy_from(&sf.a);
    let mut basis = vec![0usize; m];
    for r in 0..m {
        if let Some(s) = sf.start_basis[r] {
            basis[r] = s;
        }
    }
    for (k, &r) in art.iter().enumerate() {
        a_full[(r, n_struct + k)] = 1.0;
        basis[r] = n_struct + k;
    }
    let mut tab = Tableau {
        m,
        ncols,
        t: (0..m).flat_map(|r| (0..ncols).map(move |j| (r, j))).map(|(r, j)| a_full[(r, j)]).collect(),
        rhs: sf.b.clone(),
        basis,
        active: vec![true; m],
    };
    let max_iter = 50 * (m + ncols) + 1000;
    let scale = 1.0 + sf.b.amax();

    if !art.is_empty() {
        let mut c1 = DVector::<f64>::zeros(ncols);
        for k in 0..art.len() {
            c1[n_struct + k] = 1.0;
        }
        let allowed = vec![true; ncols];
        match tab.run(&c1, &allowed, max_iter) {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Err(Error::Numerical("phase one reported unbounded".into())),
            Outcome::Stalled => return Err(Error::Numerical("phase one iteration limit".into())),
        }
        let infeas: f64 = (0..m).filter(|&r| tab.basis[r] >= n_struct).map(|r| tab.rhs[r]).sum();
        if infeas > 1e-8 * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                z: Vec::new(),
                objective: f64::NAN,
                dual_objective: f64::NAN,
            });
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut dummy = DVector::<f64>::zeros(ncols);
        for r in 0..m {
            if tab.basis[r] < n_struct {
                continue;
            }
            let pc = (0..n_struct)
                .filter(|&j| tab.at(r, j).abs() > 1e-7)
                .max_by(|&x, &y| tab.at(r, x).abs().total_cmp(&tab.at(r, y).abs()));
            match pc {
                Some(pc) => tab.pivot(r, pc, &mut dummy),
                None => tab.active[r] = false,
            }
        }
    }

    let mut c2 = DVector::<f64>::zeros(ncols);
    c2.rows_mut(0, n_struct).copy_from(&sf.c);
    let allowed: Vec<bool> = (0..ncols).map(|j| j < n_struct).collect();
    let mut reinversions = 0;
    loop {
        match tab.run(&c2, &allowed, max_iter) {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    z: Vec::new(),
                    objective: f64::NEG_INFINITY,
                    dual_objective: f64::NAN,
                })
            }
            Outcome::Stalled => return Err(Error::Numerical("phase two iteration limit".into())),
        }
        if !tab.reinvert(&a_full, &sf.b) {
            return Err(Error::Numerical("singular basis at optimum".into()));
        }
        let d = tab.reduced_costs(&c2);
        let primal_ok = (0..m).all(|r| !tab.active[r] || tab.rhs[r] >= -1e-9 * scale);
        let dual_ok = (0..n_struct).all(|j| d[j] >= -1e-7 * (1.0 + sf.c.amax()));
        if primal_ok && dual_ok {
            break;
        }
        reinversions += 1;
        if reinversions > MAX_REINVERSIONS {
            return Err(Error::Numerical("basis drift persists after re-inversion".into()));
        }
        if !primal_ok {
            // Drift made a basic value negative: restart phase two from a
            // clean feasible basis is not available, so clamp tiny values.
            for r in 0..m {
                if tab.active[r] && tab.rhs[r] < 0.0 {
                    if tab.rhs[r] < -1e-6 * scale {
                        return Err(Error::Numerical("basic solution infeasible after re-inversion".into()));
                    }
                    tab.rhs[r] = 0.0;
                }
            }
        }
    }

    let mut y = vec![0.0; n_struct];
    for r in 0..m {
        if tab.active[r] && tab.basis[r] < n_struct {
            y[tab.basis[r]] = tab.rhs[r].max(0.0);
        }
    }
    let z: Vec<f64> = sf
        .map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shift { col, offset } => offset + y[col],
            VarMap::Flip { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective = lp.objective_at(&z);
    let dual_objective = dual_bound(&tab, &a_full, &sf, &c2).unwrap_or(f64::NAN);
    let viol = lp.max_violation(&z);
    if viol > 1e-7 * (1.0 + lp.b_eq.iter().chain(&lp.b_ub).fold(0.0f64, |a, b| a.max(b.abs()))) {
        return Err(Error::Numerical(format!("optimal point violates constraints by {viol:e}")));
    }
    Ok(LpSolution { status: LpStatus::Optimal, z, objective, dual_objective })
}

/// Dual objective `b.y + const` with `y = B^-T c_B` from the final basis.
fn dual_bound(tab: &Tableau, a_full: &DMatrix<f64>, sf: &StandardForm, c: &DVector<f64>) -> Option<f64> {
    let rows: Vec<usize> = (0..tab.m).filter(|&r| tab.active[r]).collect();
    let k = rows.len();
    if k == 0 {
        return Some(sf.const_obj);
    }
    let mut bt = DMatrix::<f64>::zeros(k, k);
    let mut cb = DVector::<f64>::zeros(k);
    for (ci, &r) in rows.iter().enumerate() {
        let col = tab.basis[r];
        cb[ci] = c[col];
        for (ri, &rr) in rows.iter().enumerate() {
            bt[(ci, ri)] = a_full[(rr, col)];
        }
    }
    let y = bt.lu().solve(&cb)?;
    let by: f64 = rows.iter().enumerate().map(|(ri, &rr)| y[ri] * sf.b[rr]).sum();
    Some(by + sf.const_obj)
}
