//! Piecewise-affine differential inclusions and the unicycle path-following
//! fields in Frenet coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::geometry::{dot, norm, Partition};

/// The field `x -> A x + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineVertex {
    #[serde(rename = "A")]
    pub a_mat: Vec<Vec<f64>>,
    #[serde(rename = "a")]
    pub a_vec: Vec<f64>,
}

impl AffineVertex {
    pub fn new(a_mat: Vec<Vec<f64>>, a_vec: Vec<f64>) -> Result<Self> {
        let n = a_vec.len();
        dim_check(a_mat.len() == n && a_mat.iter().all(|r| r.len() == n), || {
            format!("affine vertex needs a {n}x{n} matrix")
        })?;
        if a_mat.iter().flatten().chain(&a_vec).any(|v| !v.is_finite()) {
            return Err(Error::Config("affine vertex has non-finite entries".into()));
        }
        Ok(Self { a_mat, a_vec })
    }

    /// Constant field `a`.
    pub fn constant(a_vec: Vec<f64>) -> Self {
        let n = a_vec.len();
        Self { a_mat: vec![vec![0.0; n]; n], a_vec }
    }

    pub fn dim(&self) -> usize {
        self.a_vec.len()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.a_mat.iter().zip(&self.a_vec).map(|(r, a)| dot(r, x) + a).collect()
    }

    /// Coefficients of `p . (A x + a)` as `(A^T p, a . p)`.
    pub fn dual(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let n = self.dim();
        let at_p = (0..n).map(|c| (0..n).map(|r| self.a_mat[r][c] * p[r]).sum()).collect();
        (at_p, dot(&self.a_vec, p))
    }
}

/// Convex hull of finitely many affine fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineInclusion {
    pub vertices: Vec<AffineVertex>,
}

impl AffineInclusion {
    pub fn new(vertices: Vec<AffineVertex>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Empty("inclusion has no vertices".into()));
        }
        let n = vertices[0].dim();
        dim_check(vertices.iter().all(|v| v.dim() == n), || "inclusion vertices differ in dimension".into())?;
        Ok(Self { vertices })
    }

    pub fn single(v: AffineVertex) -> Self {
        Self { vertices: vec![v] }
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].dim()
    }
}

/// Vertex fields at `x`; the admissible derivatives are their convex hull.
pub fn inclusion_extremes(inc: &AffineInclusion, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    dim_check(x.len() == inc.dim(), || format!("state has dimension {}, inclusion {}", x.len(), inc.dim()))?;
    Ok(inc.vertices.iter().map(|v| v.eval(x)).collect())
}

/// One inclusion per cell of the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwaSystem {
    pub partition: Partition,
    pub inclusions: Vec<AffineInclusion>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl PwaSystem {
    pub fn new(partition: Partition, inclusions: Vec<AffineInclusion>) -> Result<Self> {
        let s = Self { partition, inclusions, metadata: Default::default() };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        self.partition.check()?;
        dim_check(self.inclusions.len() == self.partition.cells.len(), || {
            format!("{} inclusions for {} cells", self.inclusions.len(), self.partition.cells.len())
        })?;
        let n = self.partition.dim();
        dim_check(self.inclusions.iter().all(|i| i.dim() == n), || "inclusion dimension differs from partition".into())
    }

    pub fn vertex_counts(&self) -> Vec<usize> {
        self.inclusions.iter().map(|i| i.vertices.len()).collect()
    }
}

/// Heading error and lateral offset relative to the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    pub psi: f64,
    pub d: f64,
}

impl FrenetState {
    pub fn new(psi: f64, d: f64) -> Result<Self> {
        if !psi.is_finite() || !d.is_finite() || psi.abs() >= std::f64::consts::PI {
            return Err(Error::Domain(format!("invalid Frenet state ({psi}, {d})")));
        }
        Ok(Self { psi, d })
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.psi, self.d]
    }
}

/// Control actions: 1 follows the path, 2 turns left, 3 turns right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Control {
    U1,
    U2,
    U3,
}

impl Control {
    pub const ALL: [Control; 3] = [Control::U1, Control::U2, Control::U3];

    pub fn index(self) -> u8 {
        match self {
            Control::U1 => 1,
            Control::U2 => 2,
            Control::U3 => 3,
        }
    }
}

impl TryFrom<u8> for Control {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Control::U1),
            2 => Ok(Control::U2),
            3 => Ok(Control::U3),
            _ => Err(Error::Parse(format!("control label must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<Control> for u8 {
    fn from(c: Control) -> u8 {
        c.index()
    }
}

const SINGULAR_TOL: f64 = 1e-6;

/// Nonlinear Frenet-frame kinematics of the unicycle under control `u`.
pub fn frenet_dynamics(x: FrenetState, u: Control, rho: f64, v_star: f64, omega_star: f64) -> Result<[f64; 2]> {
    match u {
        Control::U1 => {
            let den = 1.0 - rho * x.d;
            if den.abs() <= SINGULAR_TOL {
                return Err(Error::Domain(format!("Frenet singularity: 1 - rho d = {den}")));
            }
            Ok([v_star * rho * x.psi.cos() / den, v_star * x.psi.sin()])
        }
        Control::U2 => Ok([omega_star, 0.0]),
        Control::U3 => Ok([-omega_star, 0.0]),
    }
}

/// Affine over-approximations `[A_1, A_2, A_3]` of the three closed-loop
/// fields. `A_1` takes one vertex per endpoint of the curvature interval.
pub fn build_unicycle_inclusions(v_star: f64, omega_star: f64, rho: (f64, f64)) -> Result<Vec<AffineInclusion>> {
    let (lo, hi) = rho;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Config(format!("curvature interval [{lo}, {hi}] must be bounded and ordered")));
    }
    let follow = |r: f64| AffineVertex { a_mat: vec![vec![0.0, -r * v_star], vec![v_star, 0.0]], a_vec: vec![v_star * r, 0.0] };
    let mut a1 = vec![follow(lo)];
    if hi > lo {
        a1.push(follow(hi));
    }
    Ok(vec![
        AffineInclusion { vertices: a1 },
        AffineInclusion::single(AffineVertex::constant(vec![omega_star, 0.0])),
        AffineInclusion::single(AffineVertex::constant(vec![-omega_star, 0.0])),
    ])
}

/// Euclidean distance from `q` to the convex hull of `points`.
pub fn distance_to_hull(points: &[Vec<f64>], q: &[f64]) -> f64 {
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    match points.len() {
        0 => f64::INFINITY,
        1 => norm(&sub(q, &points[0])),
        2 => {
            let d = sub(&points[1], &points[0]);
            let dd = dot(&d, &d);
            let t = if dd == 0.0 { 0.0 } else { (dot(&sub(q, &points[0]), &d) / dd).clamp(0.0, 1.0) };
            let proj: Vec<f64> = points[0].iter().zip(&d).map(|(p, e)| p + t * e).collect();
            norm(&sub(q, &proj))
        }
        _ => {
            // Frank-Wolfe on the simplex of convex weights.
            let k = points.len();
            let mut lam = vec![1.0 / k as f64; k];
            let mut best = f64::INFINITY;
            for it in 0..2000 {
                let y: Vec<f64> = (0..q.len()).map(|c| (0..k).map(|i| lam[i] * points[i][c]).sum()).collect();
                let r = sub(&y, q);
                best = best.min(norm(&r));
                let s = (0..k).min_by(|&a, &b| dot(&r, &points[a]).total_cmp(&dot(&r, &points[b]))).unwrap_or(0);
                let gamma = 2.0 / (it as f64 + 2.0);
                for (i, l) in lam.iter_mut().enumerate() {
                    *l = (1.0 - gamma) * *l + if i == s { gamma } else { 0.0 };
                }
            }
            best
        }
    }
}

/// Largest distance between the nonlinear path-following field and the hull
/// of the `A_1` vertices over `samples`, each `(state, rho)`.
pub fn hull_violation(inc: &AffineInclusion, samples: &[(FrenetState, f64)], v_star: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(x, rho) in samples {
        let f = frenet_dynamics(x, Control::U1, rho, v_star, 0.0)?;
        let ext = inclusion_extremes(inc, &x.as_vec())?;
        worst = worst.max(distance_to_hull(&ext, &f));
    }
    Ok(worst)
}
