mod common;

use std::f64::consts::PI;

use cilsynth::geometry::{shared_facet, uniform_sectors, Partition, PolyCell};
use cilsynth::io::{fmt_f64, to_json_string};
use cilsynth::lpcore::{solve, LinearProgram, LpStatus};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimal_points_are_feasible_and_match_the_oracle(seed in any::<u64>()) {
        let lp = random_lp(&mut rng(seed));
        let sol = solve(&lp).unwrap();
        match bfs_oracle(&lp) {
            Some(best) => {
                prop_assert!(sol.is_optimal());
                prop_assert!(lp.max_violation(&sol.z) <= 1e-9);
                prop_assert!((sol.objective - best).abs() <= 1e-6);
                prop_assert!((sol.objective - lp.objective_at(&sol.z)).abs() <= 1e-9);
                prop_assert!((sol.objective - sol.dual_objective).abs() <= 1e-6);
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn positive_cost_scaling_scales_the_optimum(seed in any::<u64>(), k in 0.1f64..10.0) {
        let lp = random_lp(&mut rng(seed));
        let mut scaled = lp.clone();
        scaled.cost.iter_mut().for_each(|c| *c *= k);
        let (a, b) = (solve(&lp).unwrap(), solve(&scaled).unwrap());
        prop_assert_eq!(a.status, b.status);
        if a.is_optimal() {
            prop_assert!((k * a.objective - b.objective).abs() <= 1e-7 * (1.0 + b.objective.abs()));
        }
    }

    #[test]
    fn free_descent_direction_is_unbounded(c in 0.1f64..5.0, b in -3.0f64..3.0) {
        // min -c x subject to x >= b has no lower bound.
        let mut lp = LinearProgram::new();
        lp.add_var(b, f64::INFINITY, -c);
        prop_assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn sectors_tile_the_plane(count in 3usize..20, a0 in 0.0f64..(2.0 * PI), th in 0.0f64..(2.0 * PI), r in 1e-3f64..10.0) {
        let s = uniform_sectors(count, a0).unwrap();
        let xi = [r * th.cos(), r * th.sin()];
        let inside = s.cones.iter().filter(|c| c.contains(&xi, 1e-12)).count();
        prop_assert!((1..=2).contains(&inside));
        prop_assert!(s.cones.iter().all(|c| c.is_pointed()));
        let part = Partition::from_cones(&s.cones, &[0.0, 0.0], s.facets.clone());
        prop_assert!(part.locate(&xi, 1e-12).is_some());
    }

    #[test]
    fn facet_normals_point_into_the_first_cell(count in 3usize..12, a0 in 0.0f64..(2.0 * PI)) {
        let s = uniform_sectors(count, a0).unwrap();
        for f in &s.facets {
            let n = shared_facet(&s.cones[f.i], &s.cones[f.j]).unwrap();
            let m = shared_facet(&s.cones[f.j], &s.cones[f.i]).unwrap();
            prop_assert!(n.iter().zip(&m).all(|(a, b)| (a + b).abs() < 1e-9));
            let step = 2.0 * PI / count as f64;
            let mid = s.rays[f.i] + step / 2.0;
            prop_assert!(n[0] * mid.cos() + n[1] * mid.sin() > 0.0);
        }
    }

    #[test]
    fn box_membership_matches_bounds(lo in prop::array::uniform2(-5.0f64..0.0), w in prop::array::uniform2(0.1f64..5.0), t in prop::array::uniform2(-0.5f64..1.5)) {
        let hi = [lo[0] + w[0], lo[1] + w[1]];
        let b = PolyCell::axis_box(&lo, &hi).unwrap();
        let x = [lo[0] + t[0] * w[0], lo[1] + t[1] * w[1]];
        let inside = (0.0..=1.0).contains(&t[0]) && (0.0..=1.0).contains(&t[1]);
        prop_assert_eq!(b.contains(&x, 0.0), inside);
    }

    #[test]
    fn floats_round_trip_through_text(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        let back: Vec<f64> = serde_json::from_str(&to_json_string(&vec![x]).unwrap()).unwrap();
        prop_assert_eq!(back[0].to_bits(), x.to_bits());
    }
}

#[test]
fn oracle_agrees_on_a_hand_solved_program() {
    // min -x - y, x + y <= 1, 0 <= x, y <= 1 has value -1.
    let mut lp = LinearProgram::new();
    lp.add_var(0.0, 1.0, -1.0);
    lp.add_var(0.0, 1.0, -1.0);
    lp.add_le(vec![(0, 1.0), (1, 1.0)], 1.0);
    assert_eq!(bfs_oracle(&lp), Some(-1.0));
    assert!((solve(&lp).unwrap().objective + 1.0).abs() < 1e-12);
}
