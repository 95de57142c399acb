//! Trimmed maximum of the split statistic, its extreme-value calibration,
//! and bootstrap p-values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::el_solver::{ChangeModel, SolverSettings, SplitFit};
use crate::error::{ElError, Result};
use crate::estimating::{min_root_modulus, ols_fit, ArSpec, TimeSeries};
use crate::exec::{derive_seed, par_map};

/// Smallest series length with a default trim.
pub const MIN_SCAN_LEN: usize = 25;

/// Fraction of failed splits beyond which a scan is abandoned.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// `(n_T1, n_T2) = (2⌊√n⌋, 2⌊√n⌋)`.
pub fn default_trim(n: usize) -> Result<(usize, usize)> {
    if n < MIN_SCAN_LEN {
        return Err(ElError::input(format!(
            "series of length {n} is shorter than {MIN_SCAN_LEN}; supply an explicit trim and use bootstrap p-values"
        )));
    }
    let t = 2 * n.isqrt();
    Ok((t, t))
}

/// Effective range constant `u(n) = (n² + (2s)² − 2ns) / (2s)²` with `s = ⌊√n⌋`.
pub fn u_of_n(n: usize) -> Result<f64> {
    if n < 5 {
        return Err(ElError::input(format!("u(n) needs n >= 5, got {n}")));
    }
    let n_f = n as f64;
    let s = n.isqrt() as f64;
    let two_s = 2.0 * s;
    Ok((n_f * n_f + two_s * two_s - 2.0 * n_f * s) / (two_s * two_s))
}

/// `A(x) = (2 log x)^{1/2}`.
pub fn a_fn(x: f64) -> f64 {
    (2.0 * x.ln()).sqrt()
}

/// `D_r(x) = 2 log x + (r/2) log log x − log Γ(r/2)`.
pub fn d_fn(x: f64, r: usize) -> f64 {
    let half = r as f64 / 2.0;
    2.0 * x.ln() + half * x.ln().ln() - libm::lgamma(half)
}

/// Normalizing constants evaluated at `x = log u(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConstants {
    pub a_val: f64,
    pub d_val: f64,
    pub u_n: f64,
    pub r: usize,
}

impl CalibrationConstants {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(ElError::input("dimension r must be at least 1"));
        }
        let u_n = u_of_n(n)?;
        if u_n <= std::f64::consts::E {
            return Err(ElError::input(format!(
                "u({n}) = {u_n:.4} <= e, so log log u(n) is not positive; use bootstrap p-values"
            )));
        }
        let x = u_n.ln();
        Ok(Self { a_val: a_fn(x), d_val: d_fn(x, r), u_n, r })
    }

    /// `A·√z − D_r`.
    pub fn normalize(&self, z: f64) -> f64 {
        self.a_val * z.max(0.0).sqrt() - self.d_val
    }

    /// Raw `Z_n*` value whose normalization equals `t`.
    pub fn raw_threshold(&self, t: f64) -> f64 {
        let root = ((t + self.d_val) / self.a_val).max(0.0);
        root * root
    }
}

/// `A(log u(n))·√z − D_r(log u(n))`.
pub fn normalize(z: f64, n: usize, r: usize) -> Result<f64> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(ElError::input(format!("statistic must be finite and non-negative, got {z}")));
    }
    Ok(CalibrationConstants::new(n, r)?.normalize(z))
}

/// Upper-`alpha` quantile of the standard Gumbel law, `−log(−log(1 − α))`.
pub fn gumbel_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ElError::input(format!("level must lie in (0, 1), got {alpha}")));
    }
    Ok(-(-(-alpha).ln_1p()).ln())
}

/// `1 − exp(−e^{−t})`.
pub fn p_value_asymptotic(t: f64) -> f64 {
    (-(-(-t).exp()).exp_m1()).clamp(0.0, 1.0)
}

/// Raw `Z_n*` rejection threshold `((t_α + D_r)/A)²`.
pub fn raw_threshold(alpha: f64, n: usize, r: usize) -> Result<f64> {
    Ok(CalibrationConstants::new(n, r)?.raw_threshold(gumbel_quantile(alpha)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub alpha: f64,
    /// Overrides `default_trim`.
    pub trim: Option<(usize, usize)>,
    /// Overrides the calibration dimension `r = p`.
    pub r: Option<usize>,
    /// Initialize each split from its neighbour's optimum.
    pub warm_start: bool,
    /// Evaluate blocks of splits on the rayon pool.
    pub parallel: bool,
    /// Warm-start chains never cross a block boundary, which keeps the
    /// profile independent of scheduling.
    pub block_len: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { alpha: 0.05, trim: None, r: None, warm_start: true, parallel: false, block_len: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub k: usize,
    pub stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub n: usize,
    pub p: usize,
    /// `(k, −2 log Λ_k)` over the trimmed range, failed splits omitted.
    pub profile: Vec<ProfilePoint>,
    #[serde(default)]
    pub failures: Vec<ScanFailure>,
    pub z_star: f64,
    pub k_hat: usize,
    pub theta_hat: f64,
    /// `None` when the asymptotic calibration is undefined for this `n`.
    pub t_normalized: Option<f64>,
    pub p_value: Option<f64>,
    /// Gumbel quantile `t_α`.
    pub critical_value: f64,
    /// `Z_n*` threshold equivalent to `t_α`.
    pub raw_threshold: Option<f64>,
    pub alpha: f64,
    pub reject: bool,
    pub trim: (usize, usize),
    pub r: usize,
}

fn resolve_trim(n: usize, trim: Option<(usize, usize)>) -> Result<(usize, usize)> {
    let (t1, t2) = match trim {
        Some(t) => t,
        None => default_trim(n)?,
    };
    if t1 == 0 || t1 + t2 > n {
        return Err(ElError::input(format!("trim ({t1}, {t2}) leaves no splits in a series of length {n}")));
    }
    Ok((t1, t2))
}

/// Evaluates `−2 log Λ_k` for every `k` in `lo..=hi`.
pub fn split_profile(model: &ChangeModel, lo: usize, hi: usize, options: &ScanOptions) -> Vec<(usize, Result<f64>)> {
    let ks: Vec<usize> = (lo..=hi).collect();
    let blocks: Vec<&[usize]> = ks.chunks(options.block_len.max(1)).collect();
    let per_block = par_map(&blocks, options.parallel, |block| {
        let mut warm: Option<SplitFit> = None;
        block
            .iter()
            .map(|&k| {
                let res = model.evaluate(k, warm.as_ref().filter(|_| options.warm_start));
                match res {
                    Ok(fit) => {
                        let stat = fit.stat;
                        warm = Some(fit);
                        (k, Ok(stat))
                    }
                    Err(e) => (k, Err(e)),
                }
            })
            .collect::<Vec<_>>()
    });
    per_block.into_iter().flatten().collect()
}

/// Trimmed maximum `Z_n*` over `k ∈ {n_T1, …, n − n_T2}` with its
/// asymptotic calibration and decision.
pub fn trimmed_scan(
    series: &TimeSeries,
    p: usize,
    options: &ScanOptions,
    settings: &SolverSettings,
) -> Result<ScanResult> {
    let n = series.len();
    let (t1, t2) = resolve_trim(n, options.trim)?;
    let r = options.r.unwrap_or(p);
    let critical_value = gumbel_quantile(options.alpha)?;
    let model = ChangeModel::new(series, p, settings)?;
    let (lo, hi) = (t1, n - t2);
    let evaluated = split_profile(&model, lo, hi, options);

    let mut profile = Vec::with_capacity(evaluated.len());
    let mut failures = Vec::new();
    for (k, res) in evaluated {
        match res {
            Ok(stat) => profile.push(ProfilePoint { k, stat }),
            Err(e) => failures.push(ScanFailure { k, reason: e.to_string() }),
        }
    }
    let range_len = hi - lo + 1;
    if profile.is_empty() || failures.len() as f64 > MAX_FAILURE_FRACTION * range_len as f64 {
        let first = failures.first().map(|f| format!(" (first: k={}: {})", f.k, f.reason)).unwrap_or_default();
        return Err(ElError::Scan(format!("{} of {range_len} splits failed{first}", failures.len())));
    }
    let mut best = &profile[0];
    for pt in &profile[1..] {
        if pt.stat > best.stat {
            best = pt;
        }
    }
    let (z_star, k_hat) = (best.stat, best.k);
    let calibration = CalibrationConstants::new(n, r).ok();
    let t_normalized = calibration.map(|c| c.normalize(z_star));
    let p_value = t_normalized.map(p_value_asymptotic);
    let reject = p_value.is_some_and(|pv| pv <= options.alpha);
    Ok(ScanResult {
        n,
        p,
        profile,
        failures,
        z_star,
        k_hat,
        theta_hat: k_hat as f64 / n as f64,
        t_normalized,
        p_value,
        critical_value,
        raw_threshold: calibration.map(|c| c.raw_threshold(critical_value)),
        alpha: options.alpha,
        reject,
        trim: (t1, t2),
        r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `(1 + #{Z_b* ≥ Z_obs*}) / (B' + 1)` over the `B'` replicates that
    /// completed.
    pub p_value: f64,
    pub z_obs: f64,
    pub replicates: usize,
    pub failures: usize,
    pub exceedances: usize,
    pub null_fit: ArSpec,
}

/// Residual-bootstrap p-value of `Z_n*` under the fitted null AR(p).
pub fn bootstrap_pvalue(
    series: &TimeSeries,
    p: usize,
    replicates: usize,
    seed: u64,
    options: &ScanOptions,
    settings: &SolverSettings,
) -> Result<BootstrapResult> {
    let observed = trimmed_scan(series, p, options, settings)?;
    bootstrap_from_observed(series, p, observed.z_star, replicates, seed, options, settings)
}

/// As [`bootstrap_pvalue`] with an already computed observed `Z_n*`.
pub fn bootstrap_from_observed(
    series: &TimeSeries,
    p: usize,
    z_obs: f64,
    replicates: usize,
    seed: u64,
    options: &ScanOptions,
    settings: &SolverSettings,
) -> Result<BootstrapResult> {
    if replicates < 99 {
        return Err(ElError::input(format!("bootstrap needs at least 99 replicates, got {replicates}")));
    }
    let n = series.len();
    let x = series.values();
    let fit = ols_fit(x, p, p + 1..=n)?;
    let modulus = min_root_modulus(&fit.phi);
    if modulus <= 1.0 + 1e-9 {
        return Err(ElError::Bootstrap {
            reason: format!("fitted null AR({p}) is not stationary"),
            root_modulus: modulus,
        });
    }
    let mean = fit.residuals.iter().sum::<f64>() / fit.residuals.len() as f64;
    let centered: Vec<f64> = fit.residuals.iter().map(|e| e - mean).collect();
    let null_fit = ArSpec::new(fit.phi.clone(), fit.sigma2)?;

    let inner = ScanOptions { parallel: false, ..options.clone() };
    let ids: Vec<u64> = (0..replicates as u64).collect();
    let stats = par_map(&ids, options.parallel, |&b| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xB007, b]));
        let mut y = Vec::with_capacity(n);
        y.extend_from_slice(&x[..p]);
        for t in p..n {
            let mut v = centered[rng.random_range(0..centered.len())];
            for (r, c) in fit.phi.iter().enumerate() {
                v += c * y[t - 1 - r];
            }
            y.push(v);
        }
        TimeSeries::new(y).and_then(|s| trimmed_scan(&s, p, &inner, settings)).map(|res| res.z_star).ok()
    });
    let done: Vec<f64> = stats.into_iter().flatten().collect();
    let failures = replicates - done.len();
    if done.is_empty() {
        return Err(ElError::Bootstrap { reason: "every bootstrap replicate failed".into(), root_modulus: modulus });
    }
    let exceedances = done.iter().filter(|&&z| z >= z_obs).count();
    Ok(BootstrapResult {
        p_value: (1 + exceedances) as f64 / (done.len() + 1) as f64,
        z_obs,
        replicates: done.len(),
        failures,
        exceedances,
        null_fit,
    })
}
