use proptest::prelude::*;

use vlrb::metrics::{cost_norm, rank_score};
use vlrb::pareto::{pareto_set, Point};
use vlrb::soft_label::{expected_cost, soft_target, Lambda};

fn row() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    (2usize..8).prop_flat_map(|m| {
        (prop::collection::vec(0u8..2, m), prop::collection::vec(1e-4f64..10.0, m))
            .prop_filter("at least one correct model", |(y, _)| y.contains(&1))
    })
}

proptest! {
    #[test]
    fn soft_target_is_a_distribution_on_correct_models((y, c) in row(), l in 0.0f64..1e5) {
        let t = soft_target(&y, &c, Lambda::new(l).unwrap()).unwrap();
        let total: f64 = t.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (p, &yj) in t.probs.iter().zip(&y) {
            prop_assert!(*p >= 0.0);
            if yj == 0 {
                prop_assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn expected_cost_falls_as_lambda_grows((y, c) in row(), a in 0.0f64..1e3, b in 0.0f64..1e3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let t_lo = soft_target(&y, &c, Lambda::new(lo).unwrap()).unwrap();
        let t_hi = soft_target(&y, &c, Lambda::new(hi).unwrap()).unwrap();
        prop_assert!(expected_cost(&t_hi, &c) <= expected_cost(&t_lo, &c) + 1e-12);
    }

    #[test]
    fn rank_score_lies_between_its_inputs(acc in 0.0f64..100.0, cn in 0.0f64..100.0, beta in 0.01f64..10.0) {
        let s = rank_score(acc, cn, beta);
        prop_assert!(s >= acc.min(cn) - 1e-9 && s <= acc.max(cn) + 1e-9);
    }

    #[test]
    fn cost_norm_is_clamped_and_decreasing(x in 1e-6f64..1e3, y in 1e-6f64..1e3, lo in 1e-3f64..1.0, span in 1.0f64..100.0) {
        let hi = lo * span;
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        let (na, nb) = (cost_norm(a, lo, hi), cost_norm(b, lo, hi));
        prop_assert!((0.0..=100.0).contains(&na) && (0.0..=100.0).contains(&nb));
        prop_assert!(na >= nb);
    }

    #[test]
    fn pareto_set_is_mutually_non_dominated(pts in prop::collection::vec((0.01f64..10.0, 0.0f64..100.0), 1..40)) {
        let points: Vec<Point> = pts.iter().map(|&(c, a)| Point::new(c, a)).collect();
        let front = pareto_set(&points).unwrap();
        for p in &front {
            prop_assert!(!points.iter().any(|q| q.dominates(p)));
        }
        for p in &points {
            prop_assert!(front.contains(p) || front.iter().any(|f| f.dominates(p)));
        }
    }
}
