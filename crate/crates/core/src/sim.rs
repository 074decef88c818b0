//! Simulation: Filippov integration of PWA inclusions, the synthetic corridor
//! range sensor, training-set generation and the nonlinear closed loop.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::PolyhedralLyapunov;
use crate::classifier::{predict, ClassifierBank, Dataset, Record};
use crate::error::{dim_check, Error, Result};
use crate::geometry::dot;
use crate::io::fmt_f64;
use crate::model::{frenet_dynamics, Control, FrenetState, PwaSystem};

/// Sampled solution. `modes` holds the active cell (PWA) or control index
/// (plant); `labels` the vertex used (PWA) or the control index (plant).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<usize>,
    pub labels: Vec<usize>,
    pub sliding: Vec<bool>,
    pub events: Vec<f64>,
    /// Why integration stopped before the horizon, if it did.
    pub truncated: Option<String>,
}

impl Trajectory {
    fn push(&mut self, t: f64, x: &[f64], mode: usize, label: usize, sliding: bool) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.modes.push(mode);
        self.labels.push(label);
        self.sliding.push(sliding);
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x_{k}")));
        header.push("mode".into());
        header.push("label".into());
        let rows = (0..self.times.len()).map(|s| {
            let mut r = vec![fmt_f64(self.times[s])];
            r.extend(self.states[s].iter().map(|&v| fmt_f64(v)));
            r.push(self.modes[s].to_string());
            r.push(self.labels[s].to_string());
            r
        });
        crate::io::write_csv(path, &header, rows)
    }
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4(x: &[f64], h: f64, f: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let k1 = f(x);
    let k2 = f(&axpy(x, h / 2.0, &k1));
    let k3 = f(&axpy(x, h / 2.0, &k2));
    let k4 = f(&axpy(x, h, &k3));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

const MEMBER_TOL: f64 = 1e-10;
const EVENT_TIME_TOL: f64 = 1e-9;
const MAX_EVENTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Cell(usize),
    /// Sliding on row `r` of cell `i`, against cell `j`.
    Slide { i: usize, j: usize, r: usize },
}

struct Pwa<'a> {
    sys: &'a PwaSystem,
    lyap: Option<&'a PolyhedralLyapunov>,
}

impl Pwa<'_> {
    /// Field of cell `i` at `x`, taking the vertex with the largest `V` rate.
    fn field(&self, i: usize, x: &[f64]) -> (Vec<f64>, usize) {
        let verts = &self.sys.inclusions[i].vertices;
        if verts.len() == 1 {
            return (verts[0].eval(x), 0);
        }
        let j = self.lyap.and_then(|l| l.cone_of(x));
        let mut best = (verts[0].eval(x), 0);
        if let (Some(l), Some(j)) = (self.lyap, j) {
            let mut rate = dot(&l.gradients[j], &best.0);
            for (k, v) in verts.iter().enumerate().skip(1) {
                let f = v.eval(x);
                let r = dot(&l.gradients[j], &f);
                if r > rate {
                    rate = r;
                    best = (f, k);
                }
            }
        }
        best
    }

    fn slack(&self, i: usize, x: &[f64]) -> f64 {
        self.sys.partition.cells[i].min_slack(x)
    }

    /// Filippov combination with zero normal component on row `r` of cell `i`.
    fn sliding_field(&self, i: usize, j: usize, r: usize, x: &[f64]) -> Vec<f64> {
        let n = &self.sys.partition.cells[i].e_mat[r];
        let (fi, _) = self.field(i, x);
        let (fj, _) = self.field(j, x);
        let (a, b) = (dot(n, &fi), dot(n, &fj));
        let alpha = if (b - a).abs() > 0.0 { b / (b - a) } else { 0.5 };
        fi.iter().zip(&fj).map(|(p, q)| alpha * p + (1.0 - alpha) * q).collect()
    }
}

/// Number of independent directions among the rows active at `x`; parallel
/// duplicates describe one facet.
fn active_normals_span(cell: &crate::geometry::PolyCell, x: &[f64]) -> usize {
    let vals = cell.eval(x);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for (row, v) in cell.e_mat.iter().zip(&vals) {
        let nr = crate::geometry::norm(row);
        if nr == 0.0 || v.abs() > 1e-7 * nr.max(1.0) {
            continue;
        }
        let u: Vec<f64> = row.iter().map(|c| c / nr).collect();
        if !dirs.iter().any(|d| (dot(d, &u).abs() - 1.0).abs() < 1e-9) {
            dirs.push(u);
        }
    }
    dirs.len()
}

/// Integrates the inclusion with fixed-step RK4 between events. Boundary
/// crossings are located by bisection; attractive facets switch to the
/// Filippov sliding field. With `lyap`, multi-vertex cells use the vertex
/// with the largest rate of `V`.
pub fn simulate_pwa(system: &PwaSystem, x0: &[f64], t_end: f64, dt: f64, lyap: Option<&PolyhedralLyapunov>) -> Result<Trajectory> {
    system.check()?;
    dim_check(x0.len() == system.partition.dim(), || "initial state dimension".into())?;
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got dt = {dt}, T = {t_end}")));
    }
    let pwa = Pwa { sys: system, lyap };
    let cells = &system.partition.cells;
    let Some(start) = system.partition.locate(x0, MEMBER_TOL) else {
        return Err(Error::Domain(format!("initial state {x0:?} lies in no cell")));
    };
    let mut traj = Trajectory::default();
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut mode = Mode::Cell(start);
    traj.push(t, &x, start, pwa.field(start, &x).1, false);
    let mut events = 0usize;
    while t < t_end - 1e-12 {
        if events > MAX_EVENTS {
            traj.truncated = Some("event limit reached".into());
            break;
        }
        let h = dt.min(t_end - t);
        match mode {
            Mode::Cell(i) => {
                let f = |y: &[f64]| pwa.field(i, y).0;
                let x1 = rk4(&x, h, &f);
                if pwa.slack(i, &x1) >= -MEMBER_TOL {
                    x = x1;
                    t += h;
                    traj.push(t, &x, i, pwa.field(i, &x).1, false);
                    continue;
                }
                let (mut lo, mut hi) = (0.0, 1.0);
                while (hi - lo) * h > EVENT_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    if pwa.slack(i, &rk4(&x, mid * h, &f)) >= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let xb = rk4(&x, lo * h, &f);
                let xo = rk4(&x, hi * h, &f);
                t += lo * h;
                events += 1;
                traj.events.push(t);
                let vals = cells[i].eval(&xo);
                let r = (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("cells have rows");
                if active_normals_span(&cells[i], &xb) > 1 {
                    traj.push(t, &xb, i, pwa.field(i, &xb).1, false);
                    traj.truncated = Some("codimension-2 intersection".into());
                    break;
                }
                let fi = pwa.field(i, &xb).0;
                let probe = axpy(&xb, 1e-7 / (1.0 + crate::geometry::norm(&fi)), &fi);
                let next = (0..cells.len()).filter(|&k| k != i && cells[k].contains(&probe, 1e-9)).max_by(|&a, &b| {
                    cells[a].min_slack(&probe).total_cmp(&cells[b].min_slack(&probe))
                });
                let Some(j) = next else {
                    x = xb;
                    traj.push(t, &x, i, pwa.field(i, &x).1, false);
                    traj.truncated = Some("domain exit".into());
                    break;
                };
                let nrm = &cells[i].e_mat[r];
                let fj = pwa.field(j, &xb).0;
                x = xb;
                mode = if dot(nrm, &fi) < 0.0 && dot(nrm, &fj) > 0.0 { Mode::Slide { i, j, r } } else { Mode::Cell(j) };
                let (m, s) = match mode {
                    Mode::Slide { i, .. } => (i, true),
                    Mode::Cell(j) => (j, false),
                };
                traj.push(t, &x, m, pwa.field(m, &x).1, s);
            }
            Mode::Slide { i, j, r } => {
                let nrm = cells[i].e_mat[r].clone();
                let off = cells[i].e_vec[r];
                let nn = dot(&nrm, &nrm);
                let (a, b) = (dot(&nrm, &pwa.field(i, &x).0), dot(&nrm, &pwa.field(j, &x).0));
                if a >= 0.0 || b <= 0.0 {
                    events += 1;
                    traj.events.push(t);
                    mode = Mode::Cell(if a >= 0.0 { i } else { j });
                    continue;
                }
                let f = |y: &[f64]| pwa.sliding_field(i, j, r, y);
                let onto = |y: Vec<f64>| -> Vec<f64> {
                    let s = (dot(&nrm, &y) + off) / nn;
                    y.iter().zip(&nrm).map(|(p, q)| p - s * q).collect()
                };
                let inside = |y: &[f64]| {
                    let vi = cells[i].eval(y);
                    vi.iter().enumerate().all(|(k, v)| k == r || *v >= -MEMBER_TOL) && cells[j].contains(y, 1e-7)
                };
                let x1 = onto(rk4(&x, h, &f));
                if inside(&x1) {
                    x = x1;
                    t += h;
                    traj.push(t, &x, i, pwa.field(i, &x).1, true);
                    continue;
                }
                let (mut lo, mut hi) = (0.0, 1.0);
                while (hi - lo) * h > EVENT_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    if inside(&onto(rk4(&x, mid * h, &f))) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                x = onto(rk4(&x, lo * h, &f));
                t += lo * h;
                traj.events.push(t);
                traj.push(t, &x, i, pwa.field(i, &x).1, true);
                traj.truncated = Some("codimension-2 intersection".into());
                break;
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub rays: usize,
    pub fov: f64,
    pub max_range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { rays: 420, fov: 4.0 * PI / 3.0, max_range: 10.0 }
    }
}

/// Curvature `rho` from arc length `start` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSegment {
    pub start: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorWorld {
    #[serde(default)]
    pub curvature: Vec<CurvatureSegment>,
    pub half_width: f64,
    pub sensor: SensorConfig,
    #[serde(default)]
    pub noise_std: f64,
}

impl Default for CorridorWorld {
    fn default() -> Self {
        Self { curvature: vec![], half_width: 1.0, sensor: SensorConfig::default(), noise_std: 0.0 }
    }
}

impl CorridorWorld {
    pub fn check(&self) -> Result<()> {
        if !(self.half_width > 0.0) || self.sensor.rays == 0 || !(self.sensor.max_range > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config("corridor needs half-width > 0, at least one ray, range > 0, noise >= 0".into()));
        }
        if self.curvature.iter().any(|c| c.rho.abs() * self.half_width >= 1.0) {
            return Err(Error::Config("curvature radius must exceed the corridor half-width".into()));
        }
        Ok(())
    }

    /// Piecewise-constant curvature; zero before the first segment.
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.curvature.iter().filter(|c| c.start <= s).last().map_or(0.0, |c| c.rho)
    }

    pub fn ray_angles(&self) -> Vec<f64> {
        let m = self.sensor.rays;
        if m == 1 {
            return vec![0.0];
        }
        let f = self.sensor.fov;
        (0..m).map(|k| -f / 2.0 + f * k as f64 / (m - 1) as f64).collect()
    }
}

fn first_circle_hit(p: [f64; 2], dir: [f64; 2], c: [f64; 2], r: f64) -> Option<f64> {
    let q = [p[0] - c[0], p[1] - c[1]];
    let b = dir[0] * q[0] + dir[1] * q[1];
    let cc = q[0] * q[0] + q[1] * q[1] - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [-b - sq, -b + sq].into_iter().filter(|&t| t > 1e-12).reduce(f64::min)
}

/// Range scan from pose `x` at arc length `s`. Walls are parallel lines for
/// zero curvature and concentric arcs about the center of curvature otherwise.
pub fn render_scan(world: &CorridorWorld, x: FrenetState, s: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Vec<f64>> {
    world.check()?;
    let w = world.half_width;
    if x.d.abs() >= w {
        return Err(Error::Domain(format!("pose d = {} is outside the corridor", x.d)));
    }
    let rho = world.curvature_at(s);
    let rmax = world.sensor.max_range;
    let mut out: Vec<f64> = world
        .ray_angles()
        .into_iter()
        .map(|phi| {
            let th = x.psi + phi;
            let (sn, cs) = th.sin_cos();
            let t = if rho == 0.0 {
                if sn > 1e-12 {
                    (w - x.d) / sn
                } else if sn < -1e-12 {
                    (w + x.d) / -sn
                } else {
                    f64::INFINITY
                }
            } else {
                let c = [0.0, 1.0 / rho];
                let inner = first_circle_hit([0.0, x.d], [cs, sn], c, (1.0 / rho - w).abs());
                let outer = first_circle_hit([0.0, x.d], [cs, sn], c, (1.0 / rho + w).abs());
                inner.into_iter().chain(outer).fold(f64::INFINITY, f64::min)
            };
            t.min(rmax)
        })
        .collect();
    if world.noise_std > 0.0 {
        if let Some(rng) = rng {
            let nd = Normal::new(0.0, world.noise_std).map_err(|e| Error::Config(e.to_string()))?;
            for v in &mut out {
                *v = (*v + nd.sample(rng)).clamp(0.0, rmax);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub psi: f64,
    pub d: f64,
    pub label: Control,
}

/// Labels for the training grid. On `d = 0` heading right gets `U3`,
/// heading left gets `U2`, aligned gets `U1`. Off-center rows steer back
/// unless already heading back, which gets `U1`.
pub fn default_label(psi: f64, d: f64) -> Control {
    const EPS: f64 = 1e-9;
    if d.abs() < EPS {
        if psi.abs() < EPS {
            Control::U1
        } else if psi > 0.0 {
            Control::U3
        } else {
            Control::U2
        }
    } else if d > 0.0 {
        if psi > -EPS { Control::U3 } else { Control::U1 }
    } else if psi < EPS {
        Control::U2
    } else {
        Control::U1
    }
}

/// The 3 x 3 grid `d in {0.5, 0, -0.5}`, `psi in {pi/6, 0, -pi/6}`.
pub fn training_points() -> Vec<GridPoint> {
    let mut g = Vec::with_capacity(9);
    for d in [0.5, 0.0, -0.5] {
        for psi in [PI / 6.0, 0.0, -PI / 6.0] {
            g.push(GridPoint { psi, d, label: default_label(psi, d) });
        }
    }
    g
}

/// Relabels `(pi/6, 0.5)` as `U1` and drops the `(0, 0)` record.
pub fn mislabel(grid: &[GridPoint]) -> Vec<GridPoint> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    grid.iter()
        .filter(|g| !(close(g.psi, 0.0) && close(g.d, 0.0)))
        .map(|g| if close(g.psi, PI / 6.0) && close(g.d, 0.5) { GridPoint { label: Control::U1, ..*g } } else { *g })
        .collect()
}

/// Scans of each grid pose on a straight stretch of the corridor.
pub fn generate_dataset(world: &CorridorWorld, grid: &[GridPoint], seed: u64) -> Result<Dataset> {
    let straight = CorridorWorld { curvature: vec![], ..world.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(grid.len());
    for g in grid {
        let y = render_scan(&straight, FrenetState::new(g.psi, g.d)?, 0.0, Some(&mut rng))?;
        records.push(Record { x: vec![g.psi, g.d], y, label: g.label });
    }
    Dataset::new(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub v_star: f64,
    pub omega_star: f64,
    /// Control period; the label is held over it.
    pub dt: f64,
    pub substeps: usize,
    pub t_end: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self { v_star: 0.5, omega_star: 0.15, dt: 0.05, substeps: 4, t_end: 60.0 }
    }
}

/// Thresholds that classify a plant run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCriteria {
    /// Equilibrium segment `psi = 0`, `d` between these bounds.
    pub segment: (f64, f64),
    pub radius: f64,
    pub min_switches: usize,
    pub min_progress: f64,
}

impl Default for OutcomeCriteria {
    fn default() -> Self {
        Self { segment: (-0.25, 0.25), radius: 0.1, min_switches: 20, min_progress: 0.5 }
    }
}

impl OutcomeCriteria {
    pub fn distance(&self, psi: f64, d: f64) -> f64 {
        let dd = if d < self.segment.0 {
            self.segment.0 - d
        } else if d > self.segment.1 {
            d - self.segment.1
        } else {
            0.0
        };
        psi.hypot(dd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantOutcome {
    Crash { time: f64 },
    Oscillation,
    Converged { time: f64 },
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRun {
    pub trajectory: Trajectory,
    pub arc_length: Vec<f64>,
    pub switches: usize,
    pub progress: f64,
    pub final_distance: f64,
    pub outcome: PlantOutcome,
}

/// Nonlinear closed loop: every control period the scan is rendered and
/// classified, and the chosen action is held while RK4 integrates the
/// Frenet kinematics together with the arc length.
pub fn simulate_plant(
    bank: &ClassifierBank,
    world: &CorridorWorld,
    x0: FrenetState,
    cfg: &PlantConfig,
    criteria: &OutcomeCriteria,
    seed: u64,
) -> Result<PlantRun> {
    world.check()?;
    bank.check()?;
    if !(cfg.dt > 0.0) || cfg.substeps == 0 || !(cfg.t_end >= 0.0) {
        return Err(Error::Config("plant needs dt > 0, substeps >= 1 and T >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::default();
    let mut arc = Vec::new();
    let mut state = [x0.psi, x0.d, 0.0];
    let mut t = 0.0;
    let mut crash = None;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut prev: Option<Control> = None;
    let mut switches = 0;
    for step in 0..=steps {
        let x = FrenetState { psi: state[0], d: state[1] };
        if x.d.abs() >= world.half_width {
            crash = Some(t);
            traj.push(t, &[x.psi, x.d], 0, 0, false);
            arc.push(state[2]);
            break;
        }
        let y = render_scan(world, x, state[2], Some(&mut rng))?;
        let u = predict(bank, &y)?;
        if prev.is_some_and(|p| p != u) {
            switches += 1;
        }
        prev = Some(u);
        traj.push(t, &[x.psi, x.d], u.index() as usize, u.index() as usize, false);
        arc.push(state[2]);
        if step == steps {
            break;
        }
        let h = cfg.dt / cfg.substeps as f64;
        let f = |z: &[f64]| -> Vec<f64> {
            let rho = world.curvature_at(z[2]);
            let xs = FrenetState { psi: z[0], d: z[1] };
            let dz = frenet_dynamics(xs, u, rho, cfg.v_star, cfg.omega_star).unwrap_or([f64::NAN, f64::NAN]);
            let ds = if u == Control::U1 { cfg.v_star * z[0].cos() / (1.0 - rho * z[1]) } else { 0.0 };
            vec![dz[0], dz[1], ds]
        };
        for _ in 0..cfg.substeps {
            let z = rk4(&state, h, &f);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("Frenet singularity near d = {}", state[1])));
            }
            state = [z[0], z[1], z[2]];
        }
        t = (step + 1) as f64 * cfg.dt;
    }
    let progress = arc.last().copied().unwrap_or(0.0) - arc.first().copied().unwrap_or(0.0);
    let last = traj.last_state().map(|s| (s[0], s[1])).unwrap_or((x0.psi, x0.d));
    let final_distance = criteria.distance(last.0, last.1);
    let outcome = if let Some(time) = crash {
        PlantOutcome::Crash { time }
    } else if switches >= criteria.min_switches && progress < criteria.min_progress {
        PlantOutcome::Oscillation
    } else if final_distance <= criteria.radius {
        let mut entered = traj.times.last().copied().unwrap_or(0.0);
        for (k, s) in traj.states.iter().enumerate().rev() {
            if criteria.distance(s[0], s[1]) > criteria.radius {
                break;
            }
            entered = traj.times[k];
        }
        PlantOutcome::Converged { time: entered }
    } else {
        PlantOutcome::NotConverged
    };
    Ok(PlantRun { trajectory: traj, arc_length: arc, switches, progress, final_distance, outcome })
}

/// Runs every start in parallel; results keep the order of `starts` and
/// run `k` uses noise seed `seed + k`.
pub fn simulate_batch(
    bank: &ClassifierBank,
    world: &CorridorWorld,
    starts: &[FrenetState],
    cfg: &PlantConfig,
    criteria: &OutcomeCriteria,
    seed: u64,
) -> Vec<Result<PlantRun>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(k, &x0)| simulate_plant(bank, world, x0, cfg, criteria, seed.wrapping_add(k as u64)))
        .collect()
}
