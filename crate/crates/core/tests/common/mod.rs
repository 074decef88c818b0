//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use cilsynth::certificate::{solve_certificate, CertificateProblem, CertificateWitness, PolyhedralLyapunov};
use cilsynth::classifier::{BinaryData, MeasurementMap};
use cilsynth::geometry::{build_index_sets, uniform_sectors, Cone, Partition, Sectors};
use cilsynth::lpcore::LinearProgram;
use cilsynth::model::{build_unicycle_inclusions, AffineInclusion, AffineVertex, PwaSystem};
use cilsynth::projection::ProjectionContext;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A sector partition about `center` with one inclusion per sector.
pub struct SectorSystem {
    pub system: PwaSystem,
    pub sectors: Sectors,
    pub center: Vec<f64>,
}

impl SectorSystem {
    pub fn problem(&self) -> CertificateProblem {
        let part = &self.system.partition;
        let sets = build_index_sets(part, part, &self.system.vertex_counts()).expect("index sets");
        CertificateProblem::from_system(&self.system, &self.sectors.cones, &self.center, &sets).expect("problem")
    }

    /// Sector `s` spans `rays[s]` to `rays[s] + 2 pi / count`.
    pub fn sector_span(&self, s: usize) -> (f64, f64) {
        let step = 2.0 * PI / self.sectors.rays.len() as f64;
        (self.sectors.rays[s], self.sectors.rays[s] + step)
    }
}

/// Fields pull toward the center along each sector bisector, plus a
/// contracting linear part; a second vertex perturbs the first.
pub fn random_stable_system(r: &mut ChaCha8Rng) -> SectorSystem {
    let count = r.random_range(4..=8);
    let sectors = uniform_sectors(count, r.random_range(0.0..2.0 * PI)).unwrap();
    let center = vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let step = 2.0 * PI / count as f64;
    let incs = (0..count)
        .map(|s| {
            let mid = sectors.rays[s] + step / 2.0;
            let c = r.random_range(0.5..2.0);
            let a = r.random_range(0.3..1.0);
            let nverts = r.random_range(1..=2);
            let verts = (0..nverts)
                .map(|_| {
                    let eps = 0.1 * a;
                    let m = [[-a + r.random_range(-eps..eps), r.random_range(-eps..eps)], [r.random_range(-eps..eps), -a + r.random_range(-eps..eps)]];
                    let b = [-c * mid.cos() + r.random_range(-0.1..0.1), -c * mid.sin() + r.random_range(-0.1..0.1)];
                    // f(x) = M (x - center) + b
                    let off = [b[0] - m[0][0] * center[0] - m[0][1] * center[1], b[1] - m[1][0] * center[0] - m[1][1] * center[1]];
                    AffineVertex::new(vec![m[0].to_vec(), m[1].to_vec()], off.to_vec()).unwrap()
                })
                .collect();
            AffineInclusion::new(verts).unwrap()
        })
        .collect();
    let part = Partition::from_cones(&sectors.cones, &center, sectors.facets.clone());
    SectorSystem { system: PwaSystem::new(part, incs).unwrap(), sectors, center }
}

/// Arbitrary affine fields; usually not certifiable.
pub fn random_general_system(r: &mut ChaCha8Rng) -> SectorSystem {
    let count = r.random_range(3..=8);
    let sectors = uniform_sectors(count, r.random_range(0.0..2.0 * PI)).unwrap();
    let center = vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let incs = (0..count)
        .map(|_| {
            let nverts = r.random_range(1..=3);
            let verts = (0..nverts)
                .map(|_| {
                    let m = (0..2).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
                    AffineVertex::new(m, (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
                })
                .collect();
            AffineInclusion::new(verts).unwrap()
        })
        .collect();
    let part = Partition::from_cones(&sectors.cones, &center, sectors.facets.clone());
    SectorSystem { system: PwaSystem::new(part, incs).unwrap(), sectors, center }
}

/// Draws stable systems until the exact program certifies one.
pub fn random_certified(r: &mut ChaCha8Rng) -> (SectorSystem, CertificateProblem, PolyhedralLyapunov, CertificateWitness) {
    for _ in 0..1000 {
        let s = random_stable_system(r);
        let prob = s.problem();
        let (sol, w) = solve_certificate(&prob, false).unwrap();
        if let (true, Some((lyap, wit))) = (sol.is_optimal(), w) {
            return (s, prob, lyap, wit);
        }
    }
    panic!("no certifiable system in 1000 draws");
}

/// A cone `{F xi >= 0}` with an invertible random `F`.
pub fn random_pointed_cone(r: &mut ChaCha8Rng) -> Cone {
    loop {
        let f: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        if (f[0][0] * f[1][1] - f[0][1] * f[1][0]).abs() > 0.1 {
            return Cone::new(f).unwrap();
        }
    }
}

/// Points `F^{-1} s` for `s >= 0`, `s != 0`; these fill the cone.
pub fn sample_cone(cone: &Cone, r: &mut ChaCha8Rng, count: usize) -> Vec<[f64; 2]> {
    let f = &cone.f;
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    (0..count)
        .map(|k| {
            let s = match k {
                0 => [1.0, 0.0],
                1 => [0.0, 1.0],
                _ => [r.random_range(0.0..1.0), r.random_range(0.0..1.0)],
            };
            [(f[1][1] * s[0] - f[0][1] * s[1]) / det, (-f[1][0] * s[0] + f[0][0] * s[1]) / det]
        })
        .collect()
}

/// Box-bounded random program with `n` variables.
pub fn random_lp(r: &mut ChaCha8Rng) -> LinearProgram {
    let n = r.random_range(1..=4);
    let mut lp = LinearProgram::new();
    for _ in 0..n {
        let lo = r.random_range(-2.0..0.0);
        let hi = r.random_range(0.5..3.0);
        lp.add_var(lo, hi, r.random_range(-1.0..1.0));
    }
    for _ in 0..r.random_range(0..=4) {
        let row = (0..n).map(|j| (j, r.random_range(-1.0..1.0))).collect();
        lp.add_le(row, r.random_range(-1.0..2.0));
    }
    for _ in 0..r.random_range(0..=1usize.min(n - 1)) {
        let row = (0..n).map(|j| (j, r.random_range(-1.0..1.0))).collect();
        lp.add_eq(row, r.random_range(-0.5..0.5));
    }
    lp
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                for k in c..n {
                    a[i][k] -= f * a[c][k];
                }
                b[i] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Optimal value by enumerating every basic feasible solution; `None` when
/// no vertex is feasible. Requires finite bounds on every variable.
pub fn bfs_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.cost.len();
    let dense = |row: &[(usize, f64)]| {
        let mut v = vec![0.0; n];
        for &(j, c) in row {
            v[j] += c;
        }
        v
    };
    let eqs: Vec<(Vec<f64>, f64)> = lp.a_eq.iter().zip(&lp.b_eq).map(|(r, &b)| (dense(r), b)).collect();
    let mut ineqs: Vec<(Vec<f64>, f64)> = lp.a_ub.iter().zip(&lp.b_ub).map(|(r, &b)| (dense(r), b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        ineqs.push((e.clone(), lp.upper[j]));
        ineqs.push((e.iter().map(|v| -v).collect(), -lp.lower[j]));
    }
    let need = n - eqs.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..need).collect();
    loop {
        let mut a: Vec<Vec<f64>> = eqs.iter().map(|e| e.0.clone()).collect();
        let mut b: Vec<f64> = eqs.iter().map(|e| e.1).collect();
        for &i in &idx {
            a.push(ineqs[i].0.clone());
            b.push(ineqs[i].1);
        }
        if let Some(x) = solve_dense(a, b) {
            let ok_eq = eqs.iter().all(|(r, b)| (r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() - b).abs() <= 1e-9);
            let ok_ub = ineqs.iter().all(|(r, b)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9);
            if ok_eq && ok_ub {
                let obj: f64 = lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |o: f64| o.min(obj)));
            }
        }
        // next combination
        let m = ineqs.len();
        let mut k = need;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - need + k {
                idx[k] += 1;
                for t in k + 1..need {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
        if need == 0 {
            return best;
        }
    }
}

/// Separable-ish random hinge data in `m` dimensions.
pub fn random_binary(r: &mut ChaCha8Rng, m: usize, count: usize) -> BinaryData {
    let y: Vec<Vec<f64>> = (0..count).map(|_| (0..m).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let b = (0..count).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    BinaryData { y, b }
}

/// A projection instance shaped like the corridor pairs with random data.
pub fn random_projection_context(r: &mut ChaCha8Rng) -> ProjectionContext {
    let m = r.random_range(3..=6);
    let h_mat = (0..m).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let h_vec = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let map = MeasurementMap::new(h_mat, h_vec).unwrap();
    let rho = if r.random_bool(0.5) { r.random_range(0.5..1.5) } else { -r.random_range(0.5..1.5) };
    let inc = build_unicycle_inclusions(r.random_range(0.3..1.0), r.random_range(0.05..0.3), (rho, rho)).unwrap();
    let c = r.random_range(-0.3..0.3);
    let (hp, hd) = (r.random_range(0.3..0.6), r.random_range(0.3..0.7));
    ProjectionContext {
        center: vec![0.0, c],
        map,
        positive: inc[0].clone(),
        negative: if rho < 0.0 { inc[1].clone() } else { inc[2].clone() },
        box_lo: vec![-hp, c - hd],
        box_hi: vec![hp, c + hd],
        sectors: if r.random_bool(0.5) { 8 } else { 16 },
        anchor: true,
        sliding: None,
    }
}
