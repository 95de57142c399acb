use elcpd::{
    gen_ar_change, neg2_log_lambda, normalize, raw_threshold, z_h0, z_h1, ChangeModel, ElError, NoiseModel,
    SolverSettings, TimeSeries, DEFAULT_BURN_IN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ar(n: usize, k: usize, pre: f64, post: f64, seed: u64) -> TimeSeries {
    gen_ar_change(n, k, &[pre], &[post], NoiseModel::Gaussian, DEFAULT_BURN_IN, seed).unwrap()
}

#[test]
fn nesting_and_nonnegativity_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let settings = SolverSettings::default();
    let mut checked = 0;
    for case in 0..500u64 {
        let n = rng.random_range(60..=160);
        let k0 = rng.random_range(n / 4..3 * n / 4);
        let pre = rng.random_range(-0.6..0.6);
        let post = if case % 2 == 0 { pre } else { rng.random_range(-0.6..0.6) };
        let noise = NoiseModel::ALL[case as usize % 4];
        let x = gen_ar_change(n, k0, &[pre], &[post], noise, DEFAULT_BURN_IN, case).unwrap();
        let k = rng.random_range(15..n - 15);
        let model = ChangeModel::new(&x, 1, &settings).unwrap();
        match model.evaluate(k, None) {
            Ok(fit) => {
                assert!(fit.z_h1 >= 0.0, "case {case}");
                assert!(fit.z_h0 >= fit.z_h1 - 1e-6, "case {case}: {} < {}", fit.z_h0, fit.z_h1);
                assert!(fit.stat >= 0.0);
                checked += 1;
            }
            Err(ElError::ConvexHull { .. } | ElError::NonConvergence { .. }) => {}
            Err(e) => panic!("case {case}: {e}"),
        }
    }
    assert!(checked >= 450, "only {checked} of 500 splits evaluated");
}

/// `X = (a_{L−p+1..L}, a_1..a_L, a_1..a_L)` split at `k = L + p`: both
/// segments see the same estimating rows.
fn duplicated(a: &[f64], p: usize) -> (TimeSeries, usize) {
    let l = a.len();
    let mut v = a[l - p..].to_vec();
    v.extend_from_slice(a);
    v.extend_from_slice(a);
    (TimeSeries::new(v).unwrap(), l + p)
}

#[test]
fn duplicated_segments_give_zero_statistic() {
    let settings = SolverSettings::default();
    for (seed, p) in [(1u64, 1usize), (2, 1), (3, 2), (4, 1), (5, 2)] {
        let base = gen_ar_change(45, 20, &vec![0.2; p], &vec![0.2; p], NoiseModel::Gaussian, 100, seed).unwrap();
        let (x, k) = duplicated(base.values(), p);
        let stat = neg2_log_lambda(&x, k, p, &settings).unwrap();
        assert!(stat <= 1e-6, "seed {seed}, p {p}: {stat}");
    }
}

#[test]
fn statistic_is_scale_invariant() {
    let settings = SolverSettings::default();
    for seed in 0..5 {
        let x = ar(120, 60, 0.1, 0.6, 30 + seed);
        let base = neg2_log_lambda(&x, 55, 1, &settings).unwrap();
        for c in [1e-3, 0.5, 7.0, 1e3] {
            let scaled = neg2_log_lambda(&x.scaled(c).unwrap(), 55, 1, &settings).unwrap();
            assert!((scaled - base).abs() <= 1e-4, "c={c}: {scaled} vs {base}");
        }
    }
}

#[test]
fn estimates_follow_the_data_scale() {
    let settings = SolverSettings::default();
    let x = ar(150, 75, 0.3, 0.3, 77);
    let (_, b) = z_h0(&x, 75, 1, &settings).unwrap();
    let (_, b3) = z_h0(&x.scaled(3.0).unwrap(), 75, 1, &settings).unwrap();
    assert!((b.phi()[0] - b3.phi()[0]).abs() < 1e-6);
    assert!((9.0 * b.sigma2() - b3.sigma2()).abs() < 1e-6 * b3.sigma2());
}

#[test]
fn time_reversal_holds_in_distribution() {
    // Gaussian stationary AR series are time reversible, so Z_H1 at k and
    // Z_H1 of the reversed series at n − k share a law. Per series they differ
    // because estimating rows look backwards.
    let settings = SolverSettings::default();
    let mut diffs = Vec::new();
    let mut corr_pairs = Vec::new();
    for seed in 0..150 {
        let x = ar(120, 60, 0.3, 0.3, 900 + seed);
        let (Ok((a, _)), Ok((b, _))) = (z_h1(&x, 45, 1, &settings), z_h1(&x.reversed(), 75, 1, &settings)) else {
            continue;
        };
        diffs.push(a - b);
        corr_pairs.push((a, b));
    }
    let m = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / m;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / m.sqrt(), "mean difference {mean} (sd {sd})");
    let (ma, mb) = (corr_pairs.iter().map(|p| p.0).sum::<f64>() / m, corr_pairs.iter().map(|p| p.1).sum::<f64>() / m);
    let cov: f64 = corr_pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum();
    let va: f64 = corr_pairs.iter().map(|p| (p.0 - ma).powi(2)).sum();
    let vb: f64 = corr_pairs.iter().map(|p| (p.1 - mb).powi(2)).sum();
    assert!(cov / (va * vb).sqrt() > 0.5);
}

#[test]
fn regression_snapshots() {
    let settings = SolverSettings::default();
    let a = ar(100, 50, 0.1, 0.5, 2024);
    let (zh1, _) = z_h1(&a, 50, 1, &settings).unwrap();
    assert!((zh1 - 1.633_627_673).abs() < 1e-6, "{zh1}");

    let b = ar(200, 100, 0.3, 0.3, 2025);
    let stat = neg2_log_lambda(&b, 100, 1, &settings).unwrap();
    assert!((stat - 0.397_547_035).abs() < 1e-6, "{stat}");
    let (zh0, _) = z_h0(&b, 100, 1, &settings).unwrap();
    assert!((zh0 - 3.051_573_464).abs() < 1e-6, "{zh0}");
}

#[test]
fn strong_change_exceeds_threshold() {
    let settings = SolverSettings::default();
    let x = ar(200, 100, 0.1, 0.9, 2026);
    let stat = neg2_log_lambda(&x, 100, 1, &settings).unwrap();
    assert!(stat > 20.0, "{stat}");
    assert!(stat > raw_threshold(0.05, 200, 1).unwrap());
    assert!(normalize(stat, 200, 1).unwrap() > 2.970195);
}

#[test]
fn degenerate_segments_are_reported() {
    let settings = SolverSettings::default();
    let x = TimeSeries::new(vec![1.0; 60]).unwrap();
    let err = neg2_log_lambda(&x, 30, 1, &settings).unwrap_err();
    assert!(matches!(err, ElError::DegenerateSegment(_)), "{err}");
    let short = ar(60, 30, 0.2, 0.2, 1);
    assert!(matches!(neg2_log_lambda(&short, 3, 1, &settings), Err(ElError::DegenerateSegment(_))));
    assert!(matches!(neg2_log_lambda(&short, 60, 1, &settings), Err(ElError::Index(_))));
}
