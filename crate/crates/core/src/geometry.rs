//! Polyhedral cells, pointed cones and the index sets tying a system
//! partition to a conic Lyapunov partition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::lpcore::{solve, LinearProgram, LpStatus};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `{x : normal . x + offset >= 0}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.iter().all(|&a| a == 0.0) {
            return Err(Error::Config("halfspace normal is identically zero".into()));
        }
        Ok(Self { normal, offset })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }
}

/// `{x : E x + e >= 0}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCell {
    #[serde(rename = "E")]
    pub e_mat: Vec<Vec<f64>>,
    #[serde(rename = "e")]
    pub e_vec: Vec<f64>,
}

impl PolyCell {
    pub fn new(e_mat: Vec<Vec<f64>>, e_vec: Vec<f64>) -> Result<Self> {
        let c = Self { e_mat, e_vec };
        c.check()?;
        Ok(c)
    }

    pub fn from_halfspaces(hs: &[Halfspace]) -> Result<Self> {
        Self::new(hs.iter().map(|h| h.normal.clone()).collect(), hs.iter().map(|h| h.offset).collect())
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        dim_check(lo.len() == hi.len(), || "box bounds differ in length".into())?;
        let n = lo.len();
        let mut e_mat = Vec::with_capacity(2 * n);
        let mut e_vec = Vec::with_capacity(2 * n);
        for k in 0..n {
            let mut up = vec![0.0; n];
            up[k] = 1.0;
            e_mat.push(up);
            e_vec.push(-lo[k]);
            let mut dn = vec![0.0; n];
            dn[k] = -1.0;
            e_mat.push(dn);
            e_vec.push(hi[k]);
        }
        Self::new(e_mat, e_vec)
    }

    pub fn check(&self) -> Result<()> {
        dim_check(!self.e_mat.is_empty(), || "cell has no rows".into())?;
        dim_check(self.e_mat.len() == self.e_vec.len(), || {
            format!("cell has {} rows but {} offsets", self.e_mat.len(), self.e_vec.len())
        })?;
        let n = self.e_mat[0].len();
        dim_check(self.e_mat.iter().all(|r| r.len() == n), || "ragged cell matrix".into())
    }

    pub fn dim(&self) -> usize {
        self.e_mat.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> usize {
        self.e_mat.len()
    }

    /// Row values `E x + e`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.e_mat.iter().zip(&self.e_vec).map(|(r, e)| dot(r, x) + e).collect()
    }

    /// Smallest row value; nonnegative iff `x` is in the cell.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.eval(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.min_slack(x) >= -tol
    }

    /// Conjunction of the two constraint systems.
    pub fn intersect(&self, other: &PolyCell) -> Result<PolyCell> {
        dim_check(self.dim() == other.dim(), || "intersecting cells of different dimension".into())?;
        let mut e_mat = self.e_mat.clone();
        e_mat.extend(other.e_mat.iter().cloned());
        let mut e_vec = self.e_vec.clone();
        e_vec.extend(other.e_vec.iter().copied());
        Ok(PolyCell { e_mat, e_vec })
    }
}

/// `{x : F (x - center) >= 0}`; the center is held by the owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
}

impl Cone {
    pub fn new(f: Vec<Vec<f64>>) -> Result<Self> {
        dim_check(!f.is_empty(), || "cone has no rows".into())?;
        let n = f[0].len();
        dim_check(f.iter().all(|r| r.len() == n), || "ragged cone matrix".into())?;
        Ok(Self { f })
    }

    pub fn dim(&self) -> usize {
        self.f.first().map_or(0, Vec::len)
    }

    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        self.f.iter().map(|r| dot(r, xi)).collect()
    }

    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        self.f.iter().all(|r| dot(r, xi) >= -tol * (1.0 + norm(xi)))
    }

    /// Pointed iff `F` has full column rank (no line through the center).
    pub fn is_pointed(&self) -> bool {
        let n = self.dim();
        let m = DMatrix::from_fn(self.f.len(), n, |i, j| self.f[i][j]);
        m.rank(1e-10) == n
    }

    pub fn as_cell(&self, center: &[f64]) -> PolyCell {
        PolyCell { e_mat: self.f.clone(), e_vec: self.f.iter().map(|r| -dot(r, center)).collect() }
    }
}

/// Shared facet between cells `i` and `j`; `f` is a unit normal pointing
/// from cell `j` into cell `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, Vec<f64>)", into = "(usize, usize, Vec<f64>)")]
pub struct Facet {
    pub i: usize,
    pub j: usize,
    pub f: Vec<f64>,
}

impl From<(usize, usize, Vec<f64>)> for Facet {
    fn from((i, j, f): (usize, usize, Vec<f64>)) -> Self {
        Facet { i, j, f }
    }
}

impl From<Facet> for (usize, usize, Vec<f64>) {
    fn from(x: Facet) -> Self {
        (x.i, x.j, x.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub cells: Vec<PolyCell>,
    pub center: Vec<f64>,
    #[serde(default)]
    pub adjacency: Vec<Facet>,
}

impl Partition {
    pub fn check(&self) -> Result<()> {
        let n = self.center.len();
        for c in &self.cells {
            c.check()?;
            dim_check(c.dim() == n, || format!("cell dimension {} differs from center dimension {n}", c.dim()))?;
        }
        for f in &self.adjacency {
            dim_check(f.i < self.cells.len() && f.j < self.cells.len(), || "facet index out of range".into())?;
            dim_check(f.f.len() == n, || "facet normal dimension".into())?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Index of the cell with the largest minimum slack, if any contains `x`.
    pub fn locate(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.min_slack(x)))
            .filter(|&(_, s)| s >= -tol)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    pub fn from_cones(cones: &[Cone], center: &[f64], facets: Vec<Facet>) -> Self {
        Partition { cells: cones.iter().map(|c| c.as_cell(center)).collect(), center: center.to_vec(), adjacency: facets }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSets {
    pub cont: Vec<(usize, usize)>,
    pub dec: Vec<(usize, usize, usize)>,
}

const BOX_RADIUS: f64 = 1e3;

/// Largest `s <= 1` such that a point of `cell` (within a large box) has every
/// row value at least `s * |row|`. `None` when the cell is empty.
pub fn interior_margin(cell: &PolyCell) -> Result<Option<f64>> {
    cell.check()?;
    let n = cell.dim();
    let mut lp = LinearProgram::new();
    let x0 = lp.add_vars(n, -BOX_RADIUS, BOX_RADIUS, 0.0);
    let s = lp.add_var(f64::NEG_INFINITY, 1.0, -1.0);
    for (row, &e) in cell.e_mat.iter().zip(&cell.e_vec) {
        let nr = norm(row);
        // row.x + e - s*|row| >= 0
        let mut r: Vec<(usize, f64)> = row.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(k, &a)| (x0 + k, a)).collect();
        r.push((s, -nr));
        lp.add_ge(r, -e);
    }
    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(sol.z[s])),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Numerical("interior margin program unbounded".into())),
    }
}

/// True iff `{x : E x + e >= 0}` is nonempty.
pub fn cell_nonempty(cell: &PolyCell) -> Result<bool> {
    cell.check()?;
    let n = cell.dim();
    let mut lp = LinearProgram::new();
    let x0 = lp.add_vars(n, f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for (row, &e) in cell.e_mat.iter().zip(&cell.e_vec) {
        lp.add_ge(row.iter().enumerate().map(|(k, &a)| (x0 + k, a)).collect(), -e);
    }
    Ok(solve(&lp)?.status == LpStatus::Optimal)
}

/// True iff the cell has a nonempty interior.
pub fn has_interior(cell: &PolyCell) -> Result<bool> {
    Ok(interior_margin(cell)?.is_some_and(|s| s > 1e-9))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Unit normal of the common boundary of two cones pointing into `a`, when
/// they meet in a full (n-1)-dimensional facet.
pub fn shared_facet(a: &Cone, b: &Cone) -> Option<Vec<f64>> {
    let n = a.dim();
    if b.dim() != n {
        return None;
    }
    for (ia, ra) in a.f.iter().enumerate() {
        if norm(ra) == 0.0 {
            continue;
        }
        let ua = unit(ra);
        for (ib, rb) in b.f.iter().enumerate() {
            if norm(rb) == 0.0 {
                continue;
            }
            let ub = unit(rb);
            if ua.iter().zip(&ub).any(|(x, y)| (x + y).abs() > 1e-9) {
                continue;
            }
            // Relative interior of the facet: other rows strictly positive on ra.xi = 0.
            let mut lp = LinearProgram::new();
            let x0 = lp.add_vars(n, -1.0, 1.0, 0.0);
            let s = lp.add_var(f64::NEG_INFINITY, 1.0, -1.0);
            lp.add_eq(ra.iter().enumerate().map(|(k, &v)| (x0 + k, v)).collect(), 0.0);
            let others = a.f.iter().enumerate().filter(|(k, _)| *k != ia).chain(b.f.iter().enumerate().filter(|(k, _)| *k != ib));
            for (_, r) in others {
                let mut row: Vec<(usize, f64)> = r.iter().enumerate().map(|(k, &v)| (x0 + k, v)).collect();
                row.push((s, -norm(r)));
                lp.add_ge(row, 0.0);
            }
            if let Ok(sol) = solve(&lp) {
                if sol.is_optimal() && sol.z[s] > 1e-9 {
                    return Some(ua);
                }
            }
        }
    }
    None
}

/// Planar sector partition about a center.
#[derive(Debug, Clone, PartialEq)]
pub struct Sectors {
    /// Ray angles; sector `s` spans `rays[s]` to `rays[s + 1]` counterclockwise.
    pub rays: Vec<f64>,
    pub cones: Vec<Cone>,
    pub facets: Vec<Facet>,
}

impl Sectors {
    pub fn ray(&self, k: usize) -> [f64; 2] {
        let a = self.rays[k % self.rays.len()];
        [a.cos(), a.sin()]
    }
}

/// `count` equal sectors of the plane whose first ray has angle `angle0`.
pub fn uniform_sectors(count: usize, angle0: f64) -> Result<Sectors> {
    if count < 3 {
        return Err(Error::Config(format!("at least 3 sectors are needed for pointed cones, got {count}")));
    }
    let step = 2.0 * std::f64::consts::PI / count as f64;
    let rays: Vec<f64> = (0..count).map(|s| angle0 + step * s as f64).collect();
    let cones = (0..count)
        .map(|s| {
            let (a, b) = (rays[s], rays[(s + 1) % count]);
            Cone { f: vec![vec![-a.sin(), a.cos()], vec![b.sin(), -b.cos()]] }
        })
        .collect();
    let facets = (0..count)
        .map(|s| {
            let a = rays[(s + 1) % count];
            Facet { i: (s + 1) % count, j: s, f: vec![-a.sin(), a.cos()] }
        })
        .collect();
    Ok(Sectors { rays, cones, facets })
}

/// Index sets for a system partition and a conic Lyapunov partition sharing
/// a center. `cont` holds cone pairs with a shared facet; `dec` holds
/// `(cell, cone, vertex)` triples whose intersection has nonempty interior.
pub fn build_index_sets(system: &Partition, lyap: &Partition, vertex_counts: &[usize]) -> Result<IndexSets> {
    system.check()?;
    lyap.check()?;
    dim_check(system.dim() == lyap.dim(), || "partitions differ in dimension".into())?;
    dim_check(vertex_counts.len() == system.cells.len(), || "one vertex count per system cell is required".into())?;
    let cone_of = |c: &PolyCell| Cone { f: c.e_mat.clone() };
    let mut cont = Vec::new();
    for i in 0..lyap.cells.len() {
        for j in (i + 1)..lyap.cells.len() {
            if shared_facet(&cone_of(&lyap.cells[i]), &cone_of(&lyap.cells[j])).is_some() {
                cont.push((i, j));
            }
        }
    }
    let mut dec = Vec::new();
    for (i, cell) in system.cells.iter().enumerate() {
        for (j, cone) in lyap.cells.iter().enumerate() {
            if has_interior(&cell.intersect(cone)?)? {
                dec.extend((0..vertex_counts[i]).map(|k| (i, j, k)));
            }
        }
    }
    Ok(IndexSets { cont, dec })
}
