mod common;

use cilsynth::certificate::{level_set_bounds, lie_derivative_max, solve_certificate, verify_certificate};
use cilsynth::geometry::PolyCell;
use cilsynth::projection::{anchor_projection, project, AcsConfig};
use common::*;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solver_witnesses_always_verify(seed in any::<u64>()) {
        let (_, prob, lyap, wit) = random_certified(&mut rng(seed));
        let rep = verify_certificate(&prob, &lyap, &wit).unwrap();
        prop_assert!(rep.feasible, "{:?}", rep.failures().next());
        prop_assert!(rep.slack_l1 <= 1e-9);
    }

    #[test]
    fn exact_feasibility_matches_zero_relaxed_slack(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = if r.random_bool(0.5) { random_stable_system(&mut r) } else { random_general_system(&mut r) };
        let prob = s.problem();
        let (exact, _) = solve_certificate(&prob, false).unwrap();
        let (relaxed, w) = solve_certificate(&prob, true).unwrap();
        prop_assert!(relaxed.is_optimal());
        let slack = w.unwrap().1.slack_l1();
        prop_assert_eq!(exact.is_optimal(), slack <= 1e-7, "relaxed slack {}", slack);
    }

    #[test]
    fn certified_fields_decrease_everywhere_sampled(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (s, _, lyap, _) = random_certified(&mut r);
        for _ in 0..200 {
            let th = r.random_range(0.0..std::f64::consts::TAU);
            let rad = r.random_range(1e-3..3.0);
            let x = [s.center[0] + rad * th.cos(), s.center[1] + rad * th.sin()];
            prop_assert!(lie_derivative_max(&s.system, &lyap, &x).unwrap() < 0.0);
            prop_assert!(lyap.value(&x).unwrap() > 0.0);
        }
    }

    #[test]
    fn lowering_any_multiplier_below_one_is_caught(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let (_, prob, lyap, mut wit) = random_certified(&mut rng(seed));
        let j = pick.index(wit.mu.len());
        wit.mu[j][0] = 0.5;
        let rep = verify_certificate(&prob, &lyap, &wit).unwrap();
        prop_assert!(!rep.feasible);
        prop_assert!(rep.failures().any(|f| f.name.contains("mu")));
    }

    #[test]
    fn level_bounds_bracket_sampled_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (s, _, lyap, _) = random_certified(&mut r);
        let half = r.random_range(0.2..2.0);
        let lo = [s.center[0] - half, s.center[1] - half * 0.7];
        let hi = [s.center[0] + half * 1.3, s.center[1] + half];
        let domain = PolyCell::axis_box(&lo, &hi).unwrap();
        let (smax, smin) = level_set_bounds(&lyap, &domain).unwrap();
        prop_assert_eq!(smin, 0.0);
        let mut boundary_min = f64::INFINITY;
        for k in 0..400 {
            let t = k as f64 / 100.0;
            let x = match k / 100 {
                0 => [lo[0] + (t - 0.0) * (hi[0] - lo[0]), lo[1]],
                1 => [hi[0], lo[1] + (t - 1.0) * (hi[1] - lo[1])],
                2 => [hi[0] - (t - 2.0) * (hi[0] - lo[0]), hi[1]],
                _ => [lo[0], hi[1] - (t - 3.0) * (hi[1] - lo[1])],
            };
            boundary_min = boundary_min.min(lyap.value(&x).unwrap());
        }
        // The largest sublevel set inside the box touches its boundary.
        prop_assert!(smax <= boundary_min + 1e-9);
        prop_assert!(smax >= boundary_min - 0.05 * boundary_min.abs() - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projection_is_anchored_monotone_and_sound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ctx = random_projection_context(&mut r);
        let wp: Vec<f64> = (0..ctx.weights_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = anchor_projection(&ctx, &wp);
        let anchored: f64 = ctx.anchor_row().iter().zip(&a).map(|(p, q)| p * q).sum();
        prop_assert!(anchored.abs() <= 1e-9);
        prop_assert_eq!(anchor_projection(&ctx, &a).iter().zip(&a).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) <= 1e-12, true);
        let cfg = AcsConfig { max_iters: 20, ..AcsConfig::default() };
        if let Ok(out) = project(&wp, &cfg, &ctx) {
            prop_assert!(out.trace.is_monotone(1e-9));
            if out.verified {
                let (_, prob, _) = ctx.problem_at(&out.w).unwrap();
                prop_assert!(verify_certificate(&prob, &out.lyapunov, &out.witness).unwrap().feasible);
            }
        }
    }
}
