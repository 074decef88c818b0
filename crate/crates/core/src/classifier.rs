//! Linear binary classifiers, their one-vs-one composition, the hinge loss,
//! the fitted measurement map and the state partition it induces.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_check, Error, Result};
use crate::geometry::{dot, norm, PolyCell};
use crate::io::fmt_f64;
use crate::model::Control;

/// Unordered label pair of a one-vs-one classifier; label `i` scores positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pair {
    P12,
    P13,
    P23,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::P12, Pair::P13, Pair::P23];

    pub fn labels(self) -> (Control, Control) {
        match self {
            Pair::P12 => (Control::U1, Control::U2),
            Pair::P13 => (Control::U1, Control::U3),
            Pair::P23 => (Control::U2, Control::U3),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Pair::P12 => "12",
            Pair::P13 => "13",
            Pair::P23 => "23",
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Pair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "12" => Ok(Pair::P12),
            "13" => Ok(Pair::P13),
            "23" => Ok(Pair::P23),
            _ => Err(Error::Parse(format!("unknown classifier pair '{s}'"))),
        }
    }
}

impl Serialize for Pair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Pair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Score `w1 . y + w0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub w1: Vec<f64>,
    pub w0: f64,
}

impl LinearClassifier {
    pub fn new(w1: Vec<f64>, w0: f64) -> Result<Self> {
        if w1.iter().chain(std::iter::once(&w0)).any(|v| !v.is_finite()) {
            return Err(Error::Config("classifier weights must be finite".into()));
        }
        Ok(Self { w1, w0 })
    }

    /// From the stacked vector `(w1, w0)`.
    pub fn from_stacked(w: &[f64]) -> Self {
        let (w0, w1) = w.split_last().expect("stacked weights are nonempty");
        Self { w1: w1.to_vec(), w0: *w0 }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut w = self.w1.clone();
        w.push(self.w0);
        w
    }

    pub fn dim(&self) -> usize {
        self.w1.len()
    }

    pub fn score(&self, y: &[f64]) -> f64 {
        dot(&self.w1, y) + self.w0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierBank {
    pub pairs: BTreeMap<Pair, LinearClassifier>,
}

impl ClassifierBank {
    pub fn new(c12: LinearClassifier, c13: LinearClassifier, c23: LinearClassifier) -> Result<Self> {
        let bank = Self { pairs: [(Pair::P12, c12), (Pair::P13, c13), (Pair::P23, c23)].into() };
        bank.check()?;
        Ok(bank)
    }

    pub fn check(&self) -> Result<()> {
        for p in Pair::ALL {
            if !self.pairs.contains_key(&p) {
                return Err(Error::Config(format!("classifier bank lacks pair {p}")));
            }
        }
        let m = self.pairs[&Pair::P12].dim();
        dim_check(self.pairs.values().all(|c| c.dim() == m), || "classifiers differ in measurement dimension".into())
    }

    pub fn get(&self, p: Pair) -> &LinearClassifier {
        &self.pairs[&p]
    }

    pub fn dim(&self) -> usize {
        self.pairs.values().next().map_or(0, LinearClassifier::dim)
    }
}

/// Decision rule; scores of exactly zero fall through to `U1`.
pub fn decide(s12: f64, s13: f64, s23: f64) -> Control {
    if s12 < 0.0 && s23 > 0.0 {
        Control::U2
    } else if s13 < 0.0 && s23 < 0.0 {
        Control::U3
    } else {
        Control::U1
    }
}

pub fn predict(bank: &ClassifierBank, y: &[f64]) -> Result<Control> {
    bank.check()?;
    dim_check(y.len() == bank.dim(), || format!("measurement has dimension {}, classifiers {}", y.len(), bank.dim()))?;
    Ok(decide(bank.get(Pair::P12).score(y), bank.get(Pair::P13).score(y), bank.get(Pair::P23).score(y)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub label: Control,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let d = Self { records };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<()> {
        if let Some(r0) = self.records.first() {
            let (n, m) = (r0.x.len(), r0.y.len());
            dim_check(self.records.iter().all(|r| r.x.len() == n && r.y.len() == m), || "inconsistent record dimensions".into())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn measurement_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.y.len())
    }

    /// Records labeled with either label of `pair`, encoded `+1` / `-1`.
    pub fn binary(&self, pair: Pair) -> BinaryData {
        let (pos, neg) = pair.labels();
        let mut out = BinaryData::default();
        for r in &self.records {
            let b = if r.label == pos {
                1.0
            } else if r.label == neg {
                -1.0
            } else {
                continue;
            };
            out.y.push(r.y.clone());
            out.b.push(b);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let (n, m) = (self.state_dim(), self.measurement_dim());
        let mut header: Vec<String> = (1..=n).map(|k| format!("x_{k}")).collect();
        header.extend((1..=m).map(|k| format!("y_{k}")));
        header.push("label".into());
        let rows = self.records.iter().map(|r| {
            let mut row: Vec<String> = r.x.iter().chain(&r.y).map(|&v| fmt_f64(v)).collect();
            row.push(r.label.index().to_string());
            row
        });
        crate::io::write_csv(path, &header, rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let header = rd.headers()?.clone();
        let n = header.iter().filter(|h| h.starts_with("x_")).count();
        let m = header.iter().filter(|h| h.starts_with("y_")).count();
        if header.len() != n + m + 1 || header.get(n + m) != Some("label") {
            return Err(Error::Parse("dataset header must be x_1..x_n, y_1..y_m, label".into()));
        }
        let mut records = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| Error::Parse(format!("column {k}: {e}")))
            };
            let x = (0..n).map(num).collect::<Result<Vec<_>>>()?;
            let y = (n..n + m).map(num).collect::<Result<Vec<_>>>()?;
            let lab: u8 = rec[n + m].trim().parse().map_err(|e| Error::Parse(format!("label: {e}")))?;
            records.push(Record { x, y, label: Control::try_from(lab)? });
        }
        Dataset::new(records)
    }
}

/// Measurements with `+1` / `-1` labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryData {
    pub y: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl BinaryData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn check_binary(w: &[f64], data: &BinaryData, gamma: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("hinge loss over an empty dataset".into()));
    }
    if gamma <= 0.0 {
        return Err(Error::Config(format!("hinge weight must be positive, got {gamma}")));
    }
    dim_check(data.y.iter().all(|y| y.len() + 1 == w.len()), || "weight and measurement dimensions differ".into())
}

fn score_stacked(w: &[f64], y: &[f64]) -> f64 {
    dot(&w[..y.len()], y) + w[y.len()]
}

/// `|w|_2 + gamma * sum max(0, 1 - b (w1 . y + w0))` over stacked `w`.
pub fn hinge_loss_stacked(w: &[f64], data: &BinaryData, gamma: f64) -> Result<f64> {
    check_binary(w, data, gamma)?;
    let hinge: f64 = data.y.iter().zip(&data.b).map(|(y, b)| (1.0 - b * score_stacked(w, y)).max(0.0)).sum();
    Ok(norm(w) + gamma * hinge)
}

/// Subgradient of [`hinge_loss_stacked`]; active kinks count as violating,
/// and the norm term contributes zero at `w = 0`.
pub fn hinge_subgradient_stacked(w: &[f64], data: &BinaryData, gamma: f64) -> Result<Vec<f64>> {
    check_binary(w, data, gamma)?;
    let nw = norm(w);
    let mut g: Vec<f64> = if nw > 0.0 { w.iter().map(|v| v / nw).collect() } else { vec![0.0; w.len()] };
    for (y, &b) in data.y.iter().zip(&data.b) {
        if 1.0 - b * score_stacked(w, y) >= 0.0 {
            for (gk, yk) in g.iter_mut().zip(y) {
                *gk -= gamma * b * yk;
            }
            let last = g.len() - 1;
            g[last] -= gamma * b;
        }
    }
    Ok(g)
}

pub fn hinge_loss(c: &LinearClassifier, data: &BinaryData, gamma: f64) -> Result<f64> {
    hinge_loss_stacked(&c.stacked(), data, gamma)
}

pub fn hinge_subgradient(c: &LinearClassifier, data: &BinaryData, gamma: f64) -> Result<Vec<f64>> {
    hinge_subgradient_stacked(&c.stacked(), data, gamma)
}

/// Monomials of total degree at most `degree` in `n` variables, graded.
fn exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; n]];
    for deg in 1..=degree {
        let mut cur = vec![0u32; n];
        fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if k + 1 == cur.len() {
                cur[k] = left;
                out.push(cur.clone());
                return;
            }
            for e in (0..=left).rev() {
                cur[k] = e;
                rec(k + 1, left - e, cur, out);
            }
        }
        if n > 0 {
            rec(0, deg, &mut cur, &mut out);
        }
    }
    out
}

/// Least-squares polynomial model `y(x) = C^T phi(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    pub exponents: Vec<Vec<u32>>,
    /// One row of coefficients per monomial, `m` columns.
    pub coef: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub ridge: bool,
}

impl PolynomialFit {
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.exponents.iter().map(|e| e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product()).collect()
    }

    /// Rows `d phi / d x_c` for each monomial.
    fn feature_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.exponents
            .iter()
            .map(|e| {
                (0..x.len())
                    .map(|c| {
                        if e[c] == 0 {
                            return 0.0;
                        }
                        e.iter().enumerate().map(|(k, &p)| if k == c { p as f64 * x[k].powi(p as i32 - 1) } else { x[k].powi(p as i32) }).product()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.features(x);
        let m = self.coef.first().map_or(0, Vec::len);
        (0..m).map(|j| phi.iter().zip(&self.coef).map(|(p, c)| p * c[j]).sum()).collect()
    }

    /// First-order model `y ~ H x + h` about `x0`.
    pub fn linearize(&self, x0: &[f64]) -> MeasurementMap {
        let jac = self.feature_jacobian(x0);
        let m = self.coef.first().map_or(0, Vec::len);
        let n = x0.len();
        let h_mat: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|c| jac.iter().zip(&self.coef).map(|(jr, cr)| jr[c] * cr[j]).sum()).collect()).collect();
        let y0 = self.eval(x0);
        let h_vec = (0..m).map(|j| y0[j] - dot(&h_mat[j], x0)).collect();
        MeasurementMap { h_mat, h_vec, expansion: x0.to_vec(), residual_rms: self.residual_rms, ridge: self.ridge }
    }
}

/// `y ~ H x + h` near `expansion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMap {
    #[serde(rename = "H")]
    pub h_mat: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    pub h_vec: Vec<f64>,
    pub expansion: Vec<f64>,
    pub residual_rms: f64,
    pub ridge: bool,
}

impl MeasurementMap {
    pub fn new(h_mat: Vec<Vec<f64>>, h_vec: Vec<f64>) -> Result<Self> {
        dim_check(h_mat.len() == h_vec.len(), || "H and h differ in rows".into())?;
        let n = h_mat.first().map_or(0, Vec::len);
        dim_check(h_mat.iter().all(|r| r.len() == n), || "ragged H".into())?;
        Ok(Self { h_mat, h_vec, expansion: vec![0.0; n], residual_rms: 0.0, ridge: false })
    }

    pub fn state_dim(&self) -> usize {
        self.h_mat.first().map_or(0, Vec::len)
    }

    pub fn measurement_dim(&self) -> usize {
        self.h_vec.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.h_mat.iter().zip(&self.h_vec).map(|(r, h)| dot(r, x) + h).collect()
    }

    /// State-space form `(H^T w1, h . w1 + w0)` of a classifier score.
    pub fn pull_back(&self, c: &LinearClassifier) -> (Vec<f64>, f64) {
        let n = self.state_dim();
        let g = (0..n).map(|k| self.h_mat.iter().zip(&c.w1).map(|(r, w)| r[k] * w).sum()).collect();
        (g, dot(&self.h_vec, &c.w1) + c.w0)
    }
}

/// Polynomial regression of measurements on states.
pub fn fit_polynomial(data: &Dataset, degree: u32) -> Result<PolynomialFit> {
    data.check()?;
    let n = data.state_dim();
    let m = data.measurement_dim();
    let ex = exponents(n, degree);
    let nf = ex.len();
    let mut distinct: Vec<&Vec<f64>> = data.records.iter().map(|r| &r.x).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < n + 1 {
        return Err(Error::Empty(format!("{} distinct states; at least {} needed", distinct.len(), n + 1)));
    }
    let proto = PolynomialFit { exponents: ex, coef: vec![], residual_rms: 0.0, ridge: false };
    let phi = DMatrix::from_fn(data.len(), nf, |r, c| proto.features(&data.records[r].x)[c]);
    let y = DMatrix::from_fn(data.len(), m, |r, c| data.records[r].y[c]);
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count();
    let (coef, ridge) = if rank == nf {
        (svd.solve(&y, 0.0).map_err(|e| Error::Numerical(e.to_string()))?, false)
    } else {
        let gram = phi.transpose() * &phi + DMatrix::identity(nf, nf) * 1e-8;
        let chol = gram.cholesky().ok_or_else(|| Error::Numerical("ridge system not positive definite".into()))?;
        (chol.solve(&(phi.transpose() * &y)), true)
    };
    let res = &phi * &coef - &y;
    let residual_rms = (res.iter().map(|v| v * v).sum::<f64>() / res.len().max(1) as f64).sqrt();
    Ok(PolynomialFit {
        coef: (0..nf).map(|r| (0..m).map(|c| coef[(r, c)]).collect()).collect(),
        residual_rms,
        ridge,
        ..proto
    })
}

/// Fits a polynomial model and linearizes it at `expansion`, defaulting to
/// the mean training state.
pub fn fit_measurement_map(data: &Dataset, degree: u32, expansion: Option<&[f64]>) -> Result<MeasurementMap> {
    let fit = fit_polynomial(data, degree)?;
    let x0: Vec<f64> = match expansion {
        Some(x) => {
            dim_check(x.len() == data.state_dim(), || "expansion point dimension".into())?;
            x.to_vec()
        }
        None => {
            let n = data.state_dim();
            let mut mean = DVector::zeros(n);
            for r in &data.records {
                mean += DVector::from_column_slice(&r.x);
            }
            (mean / data.len() as f64).iter().copied().collect()
        }
    };
    Ok(fit.linearize(&x0))
}

/// Signed reference to one classifier's pulled-back halfspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowRef {
    pub pair: Pair,
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedCell {
    pub label: Control,
    pub rows: Vec<RowRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateRow {
    pub cell: usize,
    pub row: usize,
    pub pair: Pair,
    pub norm: f64,
}

/// Convex cells of the decision rule in state space. Each row is
/// `sign * (H^T w1, h . w1 + w0)` of the referenced classifier, so the
/// cells are linear in the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedPartition {
    pub cells: Vec<InducedCell>,
}

const DEGENERATE_NORM: f64 = 1e-10;

impl InducedPartition {
    pub fn row(map: &MeasurementMap, c: &LinearClassifier, sign: f64) -> (Vec<f64>, f64) {
        let (g, off) = map.pull_back(c);
        (g.into_iter().map(|v| sign * v).collect(), sign * off)
    }

    /// Concrete cells for the given weights, and the rows whose state-space
    /// direction vanishes.
    pub fn materialize(&self, bank: &ClassifierBank, map: &MeasurementMap) -> Result<(Vec<PolyCell>, Vec<DegenerateRow>)> {
        bank.check()?;
        dim_check(bank.dim() == map.measurement_dim(), || "bank and map differ in measurement dimension".into())?;
        let mut cells = Vec::new();
        let mut degenerate = Vec::new();
        for (ci, cell) in self.cells.iter().enumerate() {
            let mut e_mat = Vec::new();
            let mut e_vec = Vec::new();
            for (ri, r) in cell.rows.iter().enumerate() {
                let (g, off) = Self::row(map, bank.get(r.pair), r.sign);
                let nrm = norm(&g);
                if nrm < DEGENERATE_NORM {
                    degenerate.push(DegenerateRow { cell: ci, row: ri, pair: r.pair, norm: nrm });
                }
                e_mat.push(g);
                e_vec.push(off);
            }
            cells.push(PolyCell::new(e_mat, e_vec)?);
        }
        Ok((cells, degenerate))
    }

    /// Label of the first cell containing `x`.
    pub fn membership(&self, bank: &ClassifierBank, map: &MeasurementMap, x: &[f64]) -> Result<Option<Control>> {
        let (cells, _) = self.materialize(bank, map)?;
        Ok(cells.iter().zip(&self.cells).find(|(c, _)| c.contains(x, 0.0)).map(|(_, ic)| ic.label))
    }
}

/// Five convex cells realizing the decision rule: three pieces for `U1`
/// and one each for `U2` and `U3`.
pub fn induced_state_partition(bank: &ClassifierBank, map: &MeasurementMap) -> Result<(InducedPartition, Vec<DegenerateRow>)> {
    let r = |pair, sign| RowRef { pair, sign };
    use Pair::*;
    let part = InducedPartition {
        cells: vec![
            InducedCell { label: Control::U1, rows: vec![r(P12, 1.0), r(P13, 1.0)] },
            InducedCell { label: Control::U1, rows: vec![r(P12, 1.0), r(P13, -1.0), r(P23, 1.0)] },
            InducedCell { label: Control::U1, rows: vec![r(P12, -1.0), r(P23, -1.0), r(P13, 1.0)] },
            InducedCell { label: Control::U2, rows: vec![r(P12, -1.0), r(P23, 1.0)] },
            InducedCell { label: Control::U3, rows: vec![r(P13, -1.0), r(P23, -1.0)] },
        ],
    };
    let (_, degenerate) = part.materialize(bank, map)?;
    Ok((part, degenerate))
}

/// The two halfspaces of one classifier in state space, positive side first.
pub fn binary_partition(c: &LinearClassifier, map: &MeasurementMap) -> Result<[PolyCell; 2]> {
    dim_check(c.dim() == map.measurement_dim(), || "classifier and map differ in measurement dimension".into())?;
    let (gp, op) = InducedPartition::row(map, c, 1.0);
    let (gn, on) = InducedPartition::row(map, c, -1.0);
    Ok([PolyCell::new(vec![gp], vec![op])?, PolyCell::new(vec![gn], vec![on])?])
}
