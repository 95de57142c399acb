use elcpd::{
    empirical_critval_study, gen_ar_change, power_study, sample_noise, ElError, NoiseModel, PowerStudyConfig,
    SolverSettings,
};

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    num / den
}

#[test]
fn recursion_replays_the_noise_stream() {
    // The generator draws one innovation per step from a single stream, so
    // the raw draws reconstruct every observation, including the first
    // post-change ones that feed on pre-change lags.
    for noise in NoiseModel::ALL {
        let (n, k, burn) = (80, 30, 25);
        let (pre, post) = ([0.4, -0.2], [-0.3, 0.5]);
        let x = gen_ar_change(n, k, &pre, &post, noise, burn, 77).unwrap();
        let e = sample_noise(noise, burn + n, 77);
        let v = x.values();
        for t in 2..n {
            let phi = if t >= k { &post } else { &pre };
            let want = e[burn + t] + phi[0] * v[t - 1] + phi[1] * v[t - 2];
            assert!((v[t] - want).abs() < 1e-12, "{noise} t={t}");
        }
    }
}

#[test]
fn equal_coefficients_ignore_the_change_location() {
    let a = gen_ar_change(200, 40, &[0.3], &[0.3], NoiseModel::ScaledT4, 100, 5).unwrap();
    let b = gen_ar_change(200, 160, &[0.3], &[0.3], NoiseModel::ScaledT4, 100, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn autocorrelation_follows_the_coefficient() {
    let n = 100_000;
    let white = gen_ar_change(n, n / 2, &[0.0], &[0.0], NoiseModel::Gaussian, 500, 1).unwrap();
    assert!(lag1_autocorrelation(white.values()).abs() <= 3.0 / (n as f64).sqrt());
    let ar = gen_ar_change(n, n / 2, &[0.5], &[0.5], NoiseModel::Gaussian, 500, 2).unwrap();
    assert!((lag1_autocorrelation(ar.values()) - 0.5).abs() <= 0.01);
}

#[test]
fn generator_validates_inputs() {
    assert!(gen_ar_change(100, 50, &[1.2], &[0.1], NoiseModel::Gaussian, 10, 1).is_err());
    assert!(gen_ar_change(100, 100, &[0.1], &[0.1], NoiseModel::Gaussian, 10, 1).is_err());
    assert!(gen_ar_change(100, 50, &[0.1], &[0.1, 0.2], NoiseModel::Gaussian, 10, 1).is_err());
}

const CONFIG: &str = "\
# small design
n = 100, 150
k.100 = 20, 50   # two locations
k.150 = 30
noise = gaussian, t4
reps = 12
alpha = 0.05
seed = 99
";

#[test]
fn config_parsing() {
    let cfg = PowerStudyConfig::parse(CONFIG).unwrap();
    assert_eq!(cfg.n_values, vec![100, 150]);
    assert_eq!(cfg.k_values[&100], vec![20, 50]);
    assert_eq!(cfg.noises, vec![NoiseModel::Gaussian, NoiseModel::ScaledT4]);
    assert_eq!((cfg.reps, cfg.seed), (12, 99));
    assert_eq!((cfg.phi_pre.clone(), cfg.phi_post.clone()), (vec![0.1], vec![0.5]));
    assert_eq!(cfg.cells().len(), 6);

    let all = PowerStudyConfig::parse("n = 100\nk.100 = 50\nnoise = all\n").unwrap();
    assert_eq!(all.noises, NoiseModel::ALL.to_vec());
}

#[test]
fn config_errors_name_the_line() {
    let cases = [
        ("n = 100\nk.100 = 50\nreps = many\n", "line 3"),
        ("n = 100\nk.100 = 50\nwidth = 3\n", "line 3"),
        ("n = 100\nthis line has no equals\n", "line 2"),
        ("n = 100\nk.100 = 50\nnoise = cauchy\n", "line 3"),
    ];
    for (text, want) in cases {
        let err = PowerStudyConfig::parse(text).unwrap_err();
        assert!(matches!(err, ElError::Input(_)));
        assert!(err.to_string().contains(want), "{err}");
    }
    assert!(PowerStudyConfig::parse("n = 100\n").unwrap_err().to_string().contains("k.100"));
    assert!(PowerStudyConfig::parse("n = 100\nk.100 = 5\n").unwrap_err().to_string().contains("trimmed range"));
    assert!(PowerStudyConfig::parse("n = 100\nk.100 = 50\nalpha = 1.5\n").is_err());
}

#[test]
fn power_table_is_deterministic() {
    let cfg = PowerStudyConfig::parse(CONFIG).unwrap();
    let settings = SolverSettings::default();
    let seq = power_study(&cfg, false, &settings).unwrap();
    let again = power_study(&cfg, false, &settings).unwrap();
    let par = power_study(&cfg, true, &settings).unwrap();
    assert_eq!(seq.to_csv(), again.to_csv());
    assert_eq!(seq, par);
    assert!(seq.to_csv().starts_with("n,k,noise,power,reps,failures\n"));
    assert_eq!(seq.to_csv().lines().count(), 7);
    for c in &seq.cells {
        assert!((0.0..=1.0).contains(&c.power));
        assert_eq!(c.reps, 12);
        let done = c.reps - c.failures;
        assert!((c.power * done as f64 - c.rejections as f64).abs() < 1e-9);
    }
}

#[test]
fn critval_study_quantiles() {
    let settings = SolverSettings::default();
    let levels = [0.10, 0.05, 0.01];
    let s = empirical_critval_study(100, &[0.3], NoiseModel::Gaussian, 500, &levels, 4, false, &settings).unwrap();
    assert_eq!(s.rows.len(), 3);
    assert!(s.rows.windows(2).all(|w| w[0].empirical <= w[1].empirical));
    let theory: Vec<f64> = s.rows.iter().map(|r| r.theoretical).collect();
    for (got, want) in theory.iter().zip([2.250367, 2.970195, 4.600149]) {
        assert!((got - want).abs() < 1e-6);
    }
    assert!(s.statistics.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(s.statistics.len() + s.failures, 500);
    assert!(empirical_critval_study(100, &[0.3], NoiseModel::Gaussian, 499, &levels, 4, false, &settings).is_err());
}
