//! Simulation of AR(p) series with an injected change and the Monte Carlo
//! studies built on them.
//!
//! Seeds: every replicate draws from `ChaCha8Rng::seed_from_u64(s)` with
//! `s = derive_seed(master, &[n, k, noise_id, rep])`, so a cell's numbers do
//! not depend on which other cells are run or on thread scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::el_solver::SolverSettings;
use crate::error::{ElError, Result};
use crate::estimating::{is_stationary, min_root_modulus, TimeSeries};
use crate::exec::{derive_seed, par_map};
use crate::scan::{default_trim, gumbel_quantile, trimmed_scan, ScanOptions};

/// Innovation law, standardized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// N(0, 1)
    Gaussian,
    /// Exp(1) − 1
    #[serde(rename = "exponential")]
    CenteredExponential,
    /// (χ²₄ − 4) / (2√2)
    #[serde(rename = "chisq4")]
    StandardizedChiSq4,
    /// t₄ / √2
    #[serde(rename = "t4")]
    ScaledT4,
}

impl NoiseModel {
    pub const ALL: [NoiseModel; 4] =
        [NoiseModel::Gaussian, NoiseModel::CenteredExponential, NoiseModel::StandardizedChiSq4, NoiseModel::ScaledT4];

    pub fn name(self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::CenteredExponential => "exponential",
            NoiseModel::StandardizedChiSq4 => "chisq4",
            NoiseModel::ScaledT4 => "t4",
        }
    }

    fn id(self) -> u64 {
        match self {
            NoiseModel::Gaussian => 0,
            NoiseModel::CenteredExponential => 1,
            NoiseModel::StandardizedChiSq4 => 2,
            NoiseModel::ScaledT4 => 3,
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian => StandardNormal.sample(rng),
            NoiseModel::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            NoiseModel::StandardizedChiSq4 => {
                let c = ChiSquared::new(4.0).expect("valid degrees of freedom").sample(rng);
                (c - 4.0) / (2.0 * std::f64::consts::SQRT_2)
            }
            NoiseModel::ScaledT4 => {
                StudentT::new(4.0).expect("valid degrees of freedom").sample(rng) / std::f64::consts::SQRT_2
            }
        }
    }
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseModel {
    type Err = ElError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "n01" => Ok(NoiseModel::Gaussian),
            "exponential" | "exp" => Ok(NoiseModel::CenteredExponential),
            "chisq4" | "chisq" => Ok(NoiseModel::StandardizedChiSq4),
            "t4" | "t" => Ok(NoiseModel::ScaledT4),
            other => Err(ElError::input(format!(
                "unknown noise model '{other}' (expected gaussian, exponential, chisq4 or t4)"
            ))),
        }
    }
}

/// `count` i.i.d. draws from the standardized law.
pub fn sample_noise(kind: NoiseModel, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| kind.draw(&mut rng)).collect()
}

/// Warm-up draws discarded before `t = 1`.
pub const DEFAULT_BURN_IN: usize = 500;

/// Simulates `X_t = Σ φ_r X_{t−r} + ε_t` for `t ≤ k` and with `φ*` for
/// `t > k`. The recursion starts from zeros, runs `burn_in` discarded steps
/// under the pre-change coefficients and never resets its lags.
pub fn gen_ar_change(
    n: usize,
    k: usize,
    phi_pre: &[f64],
    phi_post: &[f64],
    noise: NoiseModel,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries> {
    if phi_pre.is_empty() || phi_pre.len() != phi_post.len() {
        return Err(ElError::input("coefficient vectors must share a positive length"));
    }
    if k == 0 || k >= n {
        return Err(ElError::input(format!("change location must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    for (label, phi) in [("pre-change", phi_pre), ("post-change", phi_post)] {
        if !is_stationary(phi) {
            return Err(ElError::input(format!(
                "{label} coefficients {phi:?} are not stationary (smallest root modulus {:.4})",
                min_root_modulus(phi)
            )));
        }
    }
    let p = phi_pre.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lags = vec![0.0; p];
    let mut out = Vec::with_capacity(n);
    for i in 0..burn_in + n {
        let phi = if i >= burn_in + k { phi_post } else { phi_pre };
        let mut x = noise.draw(&mut rng);
        for (c, l) in phi.iter().zip(&lags) {
            x += c * l;
        }
        lags.rotate_right(1);
        lags[0] = x;
        if i >= burn_in {
            out.push(x);
        }
    }
    TimeSeries::new(out)
}

/// One simulated (n, k, noise) design point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub n: usize,
    pub k: usize,
    pub noise: NoiseModel,
}

/// Per-replicate summary of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub z_star: f64,
    pub k_hat: usize,
    pub t_normalized: Option<f64>,
}

/// Monte Carlo design shared by the studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub phi_pre: Vec<f64>,
    pub phi_post: Vec<f64>,
    pub burn_in: usize,
    pub alpha: f64,
    pub seed: u64,
    pub parallel: bool,
}

/// Runs `reps` independent scans for one cell.
pub fn simulate_cell(
    cell: CellKey,
    reps: usize,
    design: &SimulationDesign,
    settings: &SolverSettings,
) -> Vec<Result<RepOutcome>> {
    let options = ScanOptions { alpha: design.alpha, ..ScanOptions::default() };
    let p = design.phi_pre.len();
    let ids: Vec<u64> = (0..reps as u64).collect();
    par_map(&ids, design.parallel, |&rep| {
        let seed = derive_seed(design.seed, &[cell.n as u64, cell.k as u64, cell.noise.id(), rep]);
        let series =
            gen_ar_change(cell.n, cell.k, &design.phi_pre, &design.phi_post, cell.noise, design.burn_in, seed)?;
        let res = trimmed_scan(&series, p, &options, settings)?;
        Ok(RepOutcome { z_star: res.z_star, k_hat: res.k_hat, t_normalized: res.t_normalized })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudyConfig {
    pub n_values: Vec<usize>,
    pub k_values: BTreeMap<usize, Vec<usize>>,
    pub phi_pre: Vec<f64>,
    pub phi_post: Vec<f64>,
    pub noises: Vec<NoiseModel>,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub burn_in: usize,
}

impl Default for PowerStudyConfig {
    fn default() -> Self {
        Self {
            n_values: Vec::new(),
            k_values: BTreeMap::new(),
            phi_pre: vec![0.1],
            phi_post: vec![0.5],
            noises: vec![NoiseModel::Gaussian],
            reps: 1000,
            alpha: 0.05,
            seed: 20_240_501,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

fn parse_list<T: FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| ElError::input(format!("line {line}: cannot parse '{s}' in '{key}'"))))
        .collect()
}

fn parse_one<T: FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| ElError::input(format!("line {line}: cannot parse '{}' for '{key}'", value.trim())))
}

impl PowerStudyConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys: `n`, `k.<n>`,
    /// `phi_pre`, `phi_post`, `noise`, `reps`, `alpha`, `seed`, `burn_in`.
    /// List values are comma separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PowerStudyConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ElError::input(format!("line {line}: expected 'key = value'")))?;
            let key = key.trim();
            match key {
                "n" => cfg.n_values = parse_list(value, line, key)?,
                "phi_pre" => cfg.phi_pre = parse_list(value, line, key)?,
                "phi_post" => cfg.phi_post = parse_list(value, line, key)?,
                "noise" => {
                    cfg.noises = if value.trim() == "all" {
                        NoiseModel::ALL.to_vec()
                    } else {
                        value
                            .split(',')
                            .map(|s| s.parse::<NoiseModel>().map_err(|e| ElError::input(format!("line {line}: {e}"))))
                            .collect::<Result<_>>()?
                    }
                }
                "reps" => cfg.reps = parse_one(value, line, key)?,
                "alpha" => cfg.alpha = parse_one(value, line, key)?,
                "seed" => cfg.seed = parse_one(value, line, key)?,
                "burn_in" => cfg.burn_in = parse_one(value, line, key)?,
                _ => {
                    if let Some(n) = key.strip_prefix("k.") {
                        let n: usize = parse_one(n, line, key)?;
                        cfg.k_values.insert(n, parse_list(value, line, key)?);
                    } else {
                        return Err(ElError::input(format!("line {line}: unknown key '{key}'")));
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(ElError::input("config lists no sample sizes"));
        }
        if self.reps == 0 {
            return Err(ElError::input("reps must be at least 1"));
        }
        gumbel_quantile(self.alpha)?;
        if self.phi_pre.is_empty() || self.phi_pre.len() != self.phi_post.len() {
            return Err(ElError::input("phi_pre and phi_post must share a positive length"));
        }
        if self.noises.is_empty() {
            return Err(ElError::input("config lists no noise models"));
        }
        for &n in &self.n_values {
            let ks = self
                .k_values
                .get(&n)
                .ok_or_else(|| ElError::input(format!("no change locations given for n={n} (add 'k.{n} = …')")))?;
            let (t1, t2) = default_trim(n)?;
            if let Some(&k) = ks.iter().find(|&&k| k < t1 || k > n - t2) {
                return Err(ElError::input(format!(
                    "k={k} for n={n} lies outside the trimmed range {t1}..={}",
                    n - t2
                )));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &n in &self.n_values {
            for &k in &self.k_values[&n] {
                for &noise in &self.noises {
                    out.push(CellKey { n, k, noise });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub n: usize,
    pub k: usize,
    pub noise: NoiseModel,
    /// Rejections over completed replicates.
    pub power: f64,
    pub rejections: usize,
    pub reps: usize,
    pub failures: usize,
    /// More than 5% of replicates failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub cells: Vec<PowerCell>,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl PowerTable {
    pub fn get(&self, n: usize, k: usize, noise: NoiseModel) -> Option<&PowerCell> {
        self.cells.iter().find(|c| c.n == n && c.k == k && c.noise == noise)
    }

    /// CSV with header `n,k,noise,power,reps,failures`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,k,noise,power,reps,failures\n");
        for c in &self.cells {
            let _ = writeln!(s, "{},{},{},{:.6},{},{}", c.n, c.k, c.noise, c.power, c.reps, c.failures);
        }
        s
    }
}

/// Rejects when the normalized statistic strictly exceeds `t_α`.
fn rejects(outcome: &RepOutcome, t_alpha: f64) -> bool {
    outcome.t_normalized.is_some_and(|t| t > t_alpha)
}

/// Rejection frequencies for every configured cell.
pub fn power_study(config: &PowerStudyConfig, parallel: bool, settings: &SolverSettings) -> Result<PowerTable> {
    config.validate()?;
    let t_alpha = gumbel_quantile(config.alpha)?;
    let design = SimulationDesign {
        phi_pre: config.phi_pre.clone(),
        phi_post: config.phi_post.clone(),
        burn_in: config.burn_in,
        alpha: config.alpha,
        seed: config.seed,
        parallel,
    };
    let cells = config
        .cells()
        .into_iter()
        .map(|cell| {
            let outcomes = simulate_cell(cell, config.reps, &design, settings);
            let done: Vec<&RepOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            let failures = config.reps - done.len();
            let rejections = done.iter().filter(|o| rejects(o, t_alpha)).count();
            PowerCell {
                n: cell.n,
                k: cell.k,
                noise: cell.noise,
                power: if done.is_empty() { 0.0 } else { rejections as f64 / done.len() as f64 },
                rejections,
                reps: config.reps,
                failures,
                flagged: failures as f64 > 0.05 * config.reps as f64,
            }
        })
        .collect();
    Ok(PowerTable { cells, reps: config.reps, alpha: config.alpha, seed: config.seed })
}

/// Linear-interpolation quantile of sorted data at probability `q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritvalRow {
    pub alpha: f64,
    pub empirical: f64,
    pub theoretical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritvalStudy {
    pub n: usize,
    pub noise: NoiseModel,
    pub reps: usize,
    pub failures: usize,
    pub rows: Vec<CritvalRow>,
    /// Normalized statistics of the completed replicates, sorted.
    pub statistics: Vec<f64>,
}

/// Upper-level empirical quantiles of the normalized statistic under a
/// no-change AR(p) with coefficients `phi`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_critval_study(
    n: usize,
    phi: &[f64],
    noise: NoiseModel,
    reps: usize,
    levels: &[f64],
    seed: u64,
    parallel: bool,
    settings: &SolverSettings,
) -> Result<CritvalStudy> {
    if reps < 500 {
        return Err(ElError::input(format!("critical-value study needs at least 500 replicates, got {reps}")));
    }
    let theoretical: Vec<f64> = levels.iter().map(|&a| gumbel_quantile(a)).collect::<Result<_>>()?;
    let design = SimulationDesign {
        phi_pre: phi.to_vec(),
        phi_post: phi.to_vec(),
        burn_in: DEFAULT_BURN_IN,
        alpha: 0.05,
        seed,
        parallel,
    };
    let (t1, _) = default_trim(n)?;
    let outcomes = simulate_cell(CellKey { n, k: t1, noise }, reps, &design, settings);
    let mut statistics: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok()?.t_normalized).collect();
    if statistics.is_empty() {
        return Err(ElError::Scan("no replicate produced a normalized statistic".into()));
    }
    statistics.sort_by(f64::total_cmp);
    let rows = levels
        .iter()
        .zip(theoretical)
        .map(|(&alpha, theoretical)| CritvalRow {
            alpha,
            empirical: quantile_sorted(&statistics, 1.0 - alpha),
            theoretical,
        })
        .collect();
    Ok(CritvalStudy { n, noise, reps, failures: reps - statistics.len(), rows, statistics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        (m, var)
    }

    #[test]
    fn noise_laws_are_standardized() {
        for (kind, band) in [
            (NoiseModel::Gaussian, 0.02),
            (NoiseModel::CenteredExponential, 0.02),
            (NoiseModel::StandardizedChiSq4, 0.02),
            (NoiseModel::ScaledT4, 0.1),
        ] {
            let draws = sample_noise(kind, 1_000_000, 42);
            let (m, v) = moments(&draws);
            assert!(m.abs() < 0.005, "{kind}: mean {m}");
            assert!((v - 1.0).abs() < band, "{kind}: variance {v}");
        }
    }

    #[test]
    fn noise_supports() {
        assert!(sample_noise(NoiseModel::CenteredExponential, 100_000, 1).iter().all(|&x| x > -1.0));
        let bound = -std::f64::consts::SQRT_2;
        assert!(sample_noise(NoiseModel::StandardizedChiSq4, 100_000, 1).iter().all(|&x| x > bound));
    }

    #[test]
    fn noise_is_seeded() {
        assert_eq!(sample_noise(NoiseModel::ScaledT4, 50, 9), sample_noise(NoiseModel::ScaledT4, 50, 9));
        assert_ne!(sample_noise(NoiseModel::ScaledT4, 50, 9), sample_noise(NoiseModel::ScaledT4, 50, 10));
    }

    fn lag1_autocorrelation(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        num / den
    }

    #[test]
    fn white_noise_when_coefficient_is_zero() {
        let n = 5000;
        let x = gen_ar_change(n, n / 2, &[0.0], &[0.0], NoiseModel::Gaussian, 100, 3).unwrap();
        assert!(lag1_autocorrelation(x.values()).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn ar1_autocorrelation_matches_coefficient() {
        let n = 100_000;
        let x = gen_ar_change(n, n - 1, &[0.5], &[0.5], NoiseModel::Gaussian, 500, 4).unwrap();
        assert!((lag1_autocorrelation(x.values()) - 0.5).abs() < 0.01);
    }

    #[test]
    fn equal_coefficients_give_the_no_change_path() {
        let a = gen_ar_change(200, 50, &[0.3], &[0.3], NoiseModel::Gaussian, 50, 8).unwrap();
        let b = gen_ar_change(200, 150, &[0.3], &[0.3], NoiseModel::Gaussian, 50, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn change_keeps_prechange_state() {
        // Same stream: the first k values agree and the switch only alters later ones.
        let a = gen_ar_change(100, 60, &[0.1], &[0.1], NoiseModel::Gaussian, 20, 5).unwrap();
        let b = gen_ar_change(100, 60, &[0.1], &[0.9], NoiseModel::Gaussian, 20, 5).unwrap();
        assert_eq!(&a.values()[..60], &b.values()[..60]);
        let noise = b.values()[60] - 0.9 * b.values()[59];
        assert!((a.values()[60] - 0.1 * a.values()[59] - noise).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonstationary_coefficients() {
        assert!(gen_ar_change(100, 50, &[1.0], &[0.5], NoiseModel::Gaussian, 10, 1).is_err());
        assert!(gen_ar_change(100, 100, &[0.1], &[0.5], NoiseModel::Gaussian, 10, 1).is_err());
    }

    #[test]
    fn config_parsing() {
        let cfg =
            PowerStudyConfig::parse("# row one\nn = 100\nk.100 = 20, 30\nnoise = all\nreps = 10 # small\nseed = 7\n")
                .unwrap();
        assert_eq!(cfg.n_values, vec![100]);
        assert_eq!(cfg.k_values[&100], vec![20, 30]);
        assert_eq!(cfg.noises.len(), 4);
        assert_eq!(cfg.cells().len(), 8);

        let err = PowerStudyConfig::parse("n = 100\nk.100 = 20\nreps = many\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = PowerStudyConfig::parse("n = 100\nbogus\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(PowerStudyConfig::parse("n = 100\nk.100 = 5\n").is_err());
        assert!(PowerStudyConfig::parse("n = 100\n").is_err());
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.9) - 4.6).abs() < 1e-12);
    }
}
