//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use cilsynth::certificate::{level_set_bounds, solve_certificate, verify_certificate};
use cilsynth::classifier::{hinge_loss_stacked, hinge_subgradient_stacked};
use cilsynth::experiment::{run_case_study, ExperimentConfig};
use cilsynth::lpcore::{solve, LinearProgram, LpStatus};
use cilsynth::projection::{project, AcsConfig};
use cilsynth::sim::simulate_pwa;
use common::*;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
    /// A failure the certificate does not rule out; reported, not fatal.
    known_gap: bool,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, known_gap: false }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soundness() -> Verdict {
    let t = Instant::now();
    let mut r = rng(1);
    let (mut pos, mut dec, mut cont, mut checks, mut unverified) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for _ in 0..50 {
        let (s, prob, lyap, wit) = random_certified(&mut r);
        if !verify_certificate(&prob, &lyap, &wit).unwrap().feasible {
            unverified += 1;
        }
        for cell in 0..s.sectors.cones.len() {
            let (a, b) = s.sector_span(cell);
            for _ in 0..10_000 {
                let th = r.random_range(a..b);
                let rad = r.random_range(1e-6..5.0);
                let xi = [rad * th.cos(), rad * th.sin()];
                let x = [s.center[0] + xi[0], s.center[1] + xi[1]];
                let p = &lyap.gradients[cell];
                checks += 1;
                if dot(p, &xi) <= -1e-7 {
                    pos += 1;
                }
                for v in &s.system.inclusions[cell].vertices {
                    if dot(p, &v.eval(&x)) >= 1e-7 {
                        dec += 1;
                    }
                }
            }
        }
        for f in &s.sectors.facets {
            let ray = s.sectors.rays[f.i % s.sectors.rays.len()];
            for k in 0..100 {
                let rad = 10f64.powf(-3.0 + 3.0 * k as f64 / 99.0);
                let xi = [rad * ray.cos(), rad * ray.sin()];
                let d: Vec<f64> = lyap.gradients[f.i].iter().zip(&lyap.gradients[f.j]).map(|(p, q)| p - q).collect();
                if dot(&d, &xi).abs() > 1e-7 * (1.0 + rad) {
                    cont += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        pos + dec + cont + unverified == 0 && secs <= 60.0,
        format!("50 systems ({unverified} witnesses rejected), {checks} cell samples: positivity {pos}, decrease {dec}, continuity {cont} violations; {secs:.1} s"),
    )
}

fn positivity_equivalence() -> Verdict {
    let mut r = rng(2);
    let mut mismatches = 0;
    for _ in 0..200 {
        let cone = random_pointed_cone(&mut r);
        let mut lp = LinearProgram::new();
        let p0 = lp.add_vars(2, f64::NEG_INFINITY, f64::INFINITY, 0.0);
        cilsynth::certificate::positivity_constraints(&mut lp, std::slice::from_ref(&cone), p0, 2);
        let sol = solve(&lp).unwrap();
        let ok = sol.is_optimal() && {
            let p = &sol.z[p0..p0 + 2];
            sample_cone(&cone, &mut r, 2000).iter().all(|xi| dot(p, xi) > 0.0)
        };
        if !ok {
            mismatches += 1;
        }
    }
    let mut found = 0;
    while found < 200 {
        let cone = random_pointed_cone(&mut r);
        let p = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        if !sample_cone(&cone, &mut r, 2000).iter().any(|xi| dot(&p, xi) <= 0.0) {
            continue;
        }
        found += 1;
        let mut lp = LinearProgram::new();
        let p0 = lp.add_var(p[0], p[0], 0.0);
        lp.add_var(p[1], p[1], 0.0);
        cilsynth::certificate::positivity_constraints(&mut lp, std::slice::from_ref(&cone), p0, 2);
        if solve(&lp).unwrap().status != LpStatus::Infeasible {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("200 feasible cones and 200 counterexample pairs: {mismatches} mismatches"))
}

fn relaxed_always_optimal() -> Verdict {
    let mut r = rng(3);
    let mut bad = 0;
    let mut positive_slack = 0;
    for k in 0..100 {
        let s = if k % 2 == 0 { random_general_system(&mut r) } else { random_stable_system(&mut r) };
        let (sol, w) = solve_certificate(&s.problem(), true).unwrap();
        if !sol.is_optimal() {
            bad += 1;
        } else if w.is_some_and(|(_, w)| w.slack_l1() > 1e-9) {
            positive_slack += 1;
        }
    }
    verdict(bad == 0, format!("100 relaxed programs: {bad} not optimal ({positive_slack} needed slack)"))
}

fn acs_monotone() -> Verdict {
    let mut r = rng(4);
    let cfg = AcsConfig { max_iters: 30, ..AcsConfig::default() };
    let (mut done, mut broken, mut iters, mut errors) = (0, 0, 0, 0);
    while done < 20 {
        let ctx = random_projection_context(&mut r);
        let wp: Vec<f64> = (0..ctx.weights_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        match project(&wp, &cfg, &ctx) {
            Ok(out) => {
                done += 1;
                iters += out.trace.records.len();
                if !out.trace.is_monotone(1e-9) {
                    broken += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    verdict(broken == 0, format!("20 instances, {iters} recorded iterations: {broken} non-monotone ({errors} degenerate draws redrawn)"))
}

fn gradient_check() -> Verdict {
    let mut r = rng(5);
    let h = 1e-6;
    let (mut points, mut worst) = (0, 0.0f64);
    while points < 20 {
        let data = random_binary(&mut r, 5, 12);
        let w: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let smooth = data.y.iter().zip(&data.b).all(|(y, b)| (1.0 - b * (dot(&w[..5], y) + w[5])).abs() > 1e-3);
        if !smooth {
            continue;
        }
        points += 1;
        let g = hinge_subgradient_stacked(&w, &data, 100.0).unwrap();
        let fd: Vec<f64> = (0..w.len())
            .map(|k| {
                let (mut a, mut b) = (w.clone(), w.clone());
                a[k] += h;
                b[k] -= h;
                (hinge_loss_stacked(&a, &data, 100.0).unwrap() - hinge_loss_stacked(&b, &data, 100.0).unwrap()) / (2.0 * h)
            })
            .collect();
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(err / scale);
    }
    verdict(worst <= 1e-5, format!("20 smooth points: worst relative error {worst:.2e}"))
}

fn case_study_and_lyapunov() -> (Verdict, Verdict) {
    let cfg = ExperimentConfig::default();
    let rep = run_case_study(&cfg).expect("case study runs");
    let slack_ok = rep.pairs.iter().all(|p| p.slack_l1 <= 1e-6 && p.success && p.verified) && rep.pairs.len() == 2;
    let n = rep.starts.len();
    let pass6 = slack_ok && rep.c2_converged == n && rep.c1_failures >= 7 && rep.total_seconds <= 600.0;
    let slacks: Vec<String> = rep.pairs.iter().map(|p| format!("w{} slack {:.1e} verified {}", p.pair.key(), p.slack_l1, p.verified)).collect();
    let v6 = verdict(
        pass6,
        format!(
            "(a) {}; (b) C2 converged {}/{n}; (c) C1 crash or oscillation {}/{n}; {:.1} s",
            slacks.join(", "),
            rep.c2_converged,
            rep.c1_failures,
            rep.total_seconds
        ),
    );

    let mut parts = Vec::new();
    let mut all_ok = true;
    let mut interior_increase = false;
    for (pair, cert) in &rep.certificates {
        let ctx = &cert.context;
        let w = rep.constrained.get(*pair).stacked();
        let sys = ctx.system_at(&w).unwrap();
        let (_, smin) = level_set_bounds(&cert.lyapunov, &ctx.domain()).unwrap();
        let (mut worst, mut runs, mut bad_steps, mut sliding_bad) = (0.0f64, 0, 0, 0);
        for x0 in rep.starts.iter().map(|s| [s.psi, s.d]).filter(|x| ctx.domain().contains(x, 0.0)) {
            runs += 1;
            let tr = simulate_pwa(&sys, &x0, 60.0, 0.01, Some(&cert.lyapunov)).unwrap();
            let v: Vec<f64> = tr.states.iter().map(|x| cert.lyapunov.value(x).unwrap_or(0.0)).collect();
            for k in 0..v.len().saturating_sub(1) {
                if v[k] <= smin + 1e-6 {
                    break;
                }
                let inc = v[k + 1] - v[k];
                if inc > 1e-6 {
                    bad_steps += 1;
                    worst = worst.max(inc);
                    if tr.sliding[k] || tr.sliding[k + 1] {
                        sliding_bad += 1;
                    } else {
                        interior_increase = true;
                    }
                }
            }
        }
        all_ok &= bad_steps == 0;
        parts.push(format!("w{}: {runs} runs, {bad_steps} increasing steps ({sliding_bad} while sliding), max increase {worst:.2e}", pair.key()));
    }
    let v7 = Verdict {
        pass: all_ok,
        detail: parts.join("; "),
        // Sliding motion is outside what the interior certificate constrains.
        known_gap: !all_ok && !interior_increase,
    };
    (v6, v7)
}

fn lp_oracle() -> Verdict {
    let mut r = rng(8);
    let (mut mismatch, mut infeasible, mut worst) = (0, 0, 0.0f64);
    for _ in 0..1000 {
        let lp = random_lp(&mut r);
        let sol = solve(&lp).unwrap();
        match bfs_oracle(&lp) {
            Some(best) => {
                if !sol.is_optimal() {
                    mismatch += 1;
                } else {
                    let gap = (sol.objective - best).abs();
                    worst = worst.max(gap);
                    if gap > 1e-6 {
                        mismatch += 1;
                    }
                }
            }
            None => {
                infeasible += 1;
                if sol.status != LpStatus::Infeasible {
                    mismatch += 1;
                }
            }
        }
    }
    verdict(mismatch == 0, format!("1000 programs ({infeasible} infeasible): {mismatch} mismatches, worst gap {worst:.1e}"))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let (v6, v7) = case_study_and_lyapunov();
    let results = [
        ("1 certificate soundness", soundness()),
        ("2 positivity equivalence", positivity_equivalence()),
        ("3 relaxed feasibility", relaxed_always_optimal()),
        ("4 ACS monotonicity", acs_monotone()),
        ("5 subgradient check", gradient_check()),
        ("6 case study", v6),
        ("7 Lyapunov along trajectories", v7),
        ("8 LP oracle", lp_oracle()),
    ];
    let mut fatal = false;
    for (name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && v.known_gap { " [increases only on sliding segments; see README]" } else { "" };
        println!("criterion {name}: {tag} - {}{note}", v.detail);
        fatal |= !v.pass && !v.known_gap;
    }
    if fatal { ExitCode::FAILURE } else { ExitCode::SUCCESS }
}
