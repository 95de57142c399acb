use elcpd::{implied_weights, solve_lambda, ElError, GFrame, SolverSettings};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_frame(g: &[f64]) -> GFrame {
    GFrame::from_rows(&g.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
}

/// Maximizer of `Σ log(1 + λ g_t)` by bisection on the derivative, which is
/// strictly decreasing on the feasible interval.
fn brute_force(g: &[f64]) -> (f64, f64) {
    let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-1.0 / max, -1.0 / min);
    let deriv = |l: f64| g.iter().map(|v| v / (1.0 + l * v)).sum::<f64>();
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    (l, g.iter().map(|v| (1.0 + l * v).ln()).sum())
}

#[test]
fn three_row_example_matches_oracle() {
    let g = [0.5, -0.3, -0.1];
    let s = solve_lambda(&scalar_frame(&g), 1.0, &SolverSettings::default()).unwrap();
    let (l, obj) = brute_force(&g);
    assert!((s.lambda[0] - l).abs() < 1e-6, "{} vs {l}", s.lambda[0]);
    assert!((s.objective - obj).abs() < 1e-9);
}

#[test]
fn random_scalar_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let settings = SolverSettings::default();
    let (mut solved, mut hull) = (0, 0);
    for case in 0..400 {
        let m = rng.random_range(2..=8);
        let shift = if case % 4 == 0 { 3.0 } else { 0.0 };
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0) * 2.0 + shift).collect();
        let one_signed = g.iter().all(|v| *v > 0.0) || g.iter().all(|v| *v < 0.0);
        let scale = rng.random_range(1.0..5.0);
        match solve_lambda(&scalar_frame(&g), scale, &settings) {
            Ok(s) => {
                assert!(!one_signed, "case {case}: solved a one-signed frame {g:?}");
                let (l, obj) = brute_force(&g);
                let mu = s.lambda[0] * scale;
                assert!((mu - l).abs() <= 1e-6 * l.abs().max(1.0), "case {case}: {mu} vs {l} for {g:?}");
                assert!((s.objective - obj).abs() <= 1e-8 * obj.abs().max(1.0));
                solved += 1;
            }
            Err(ElError::ConvexHull { .. }) => {
                assert!(one_signed, "case {case}: spurious hull error on {g:?}");
                hull += 1;
            }
            Err(e) => panic!("case {case}: {e}"),
        }
    }
    assert!(solved >= 100 && hull >= 20, "solved {solved}, hull {hull}");
}

#[test]
fn nonconvergence_is_reported_with_iteration_cap() {
    let g = [5.0, -0.01, -0.02, 3.0];
    let settings = SolverSettings { max_inner: 1, ..Default::default() };
    match solve_lambda(&scalar_frame(&g), 1.0, &settings) {
        Err(ElError::NonConvergence { iterations, .. }) => assert_eq!(iterations, 1),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn feasibility_and_weights(rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 6..30),
                               scale in 0.5f64..10.0) {
        let frame = GFrame::from_rows(&rows).unwrap();
        if let Ok(s) = solve_lambda(&frame, scale, &SolverSettings::default()) {
            let w = implied_weights(&frame, scale, &s.lambda);
            prop_assert!(w.iter().all(|v| *v > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for j in 0..2 {
                let moment: f64 = frame.rows().zip(&w).map(|(g, p)| p * g[j]).sum();
                prop_assert!(moment.abs() < 1e-8);
            }
            prop_assert!(s.objective >= 0.0);
        }
    }
}
