use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use trustspa::{gpsr_bb_solve, sigmoid, softplus, solve_subproblem, GpsrConfig, PairBuffer, SparseProblem};

fn vec_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-10.0..10.0f64, n).prop_map(DVector::from_vec)
}

proptest! {
    #[test]
    fn softplus_bounds(t in -700.0..700.0f64) {
        let sp = softplus(t);
        prop_assert!(sp >= 0.0);
        prop_assert!(sp >= t);
        prop_assert!(sp <= t.max(0.0) + std::f64::consts::LN_2 + 1e-15);
        let s = sigmoid(t);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-t) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_monotone(a in -50.0..50.0f64, d in 1e-6..10.0f64) {
        prop_assert!(softplus(a + d) > softplus(a));
    }

    #[test]
    fn buffer_update_is_all_or_nothing(
        pairs in prop::collection::vec((vec_strategy(6), vec_strategy(6)), 1..12),
        memory in 1usize..6,
    ) {
        let mut buf = PairBuffer::new(6, memory).unwrap();
        for (s, y) in &pairs {
            let before = (buf.len(), buf.gamma(), buf.sty().clone());
            let accepted = buf.update(s, y).unwrap();
            prop_assert!(buf.len() <= memory);
            if accepted {
                prop_assert!(s.dot(y) > 0.0);
                prop_assert_eq!(buf.newest().unwrap().0, s);
                prop_assert!(buf.gamma() > 0.0);
            } else {
                prop_assert_eq!(before.0, buf.len());
                prop_assert_eq!(before.1, buf.gamma());
                prop_assert_eq!(&before.2, buf.sty());
            }
        }
    }

    #[test]
    fn subproblem_step_is_feasible_descent(
        g in vec_strategy(8),
        s in vec_strategy(8),
        scale in 0.1..5.0f64,
        delta in 1e-3..1e3f64,
    ) {
        let mut buf = PairBuffer::new(8, 5).unwrap();
        let y = &s * scale + DVector::from_fn(8, |i, _| 0.1 * (i as f64));
        buf.update(&s, &y).unwrap();
        let sol = solve_subproblem(&mut buf, &g, delta).unwrap();
        prop_assert!(sol.p.norm() <= delta * (1.0 + 1e-8));
        prop_assert!(sol.pred <= 0.0);
        prop_assert!(sol.sigma >= 0.0);
    }

    #[test]
    fn gpsr_iterates_are_nonnegative(
        entries in prop::collection::vec(-1.0..1.0f64, 12),
        y in vec_strategy(3),
        tau in 0.01..1.0f64,
    ) {
        let a = DMatrix::from_vec(3, 4, entries);
        let prob = SparseProblem::dense(a, y, tau).unwrap();
        let out = gpsr_bb_solve(&prob, &GpsrConfig { tol: 1e-10, max_iters: 300 }).unwrap();
        prop_assert!(out.z.iter().all(|&z| z >= 0.0));
        let mut last = f64::INFINITY;
        for rec in &out.trace {
            prop_assert!(rec.objective <= last);
            last = rec.objective;
        }
    }
}
