use elcpd::{
    binary_segment, gen_ar_change, gumbel_quantile, raw_threshold, sample_noise, trimmed_scan, NoiseModel, ScanOptions,
    SegmentOptions, SolverSettings, TimeSeries, DEFAULT_BURN_IN,
};
use serde::{Deserialize, Serialize};

/// Keeps a single request under a few seconds in the browser.
const MAX_N: usize = 2000;

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct ScanRequest {
    pub n: usize,
    pub k: usize,
    pub phi_pre: f64,
    pub phi_post: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for ScanRequest {
    fn default() -> Self {
        Self { n: 250, k: 100, phi_pre: 0.1, phi_post: 0.5, noise: NoiseModel::Gaussian, seed: 7, alpha: 0.05 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScanResponse {
    pub series: Vec<f64>,
    pub profile: Vec<(usize, f64)>,
    pub z_star: f64,
    pub k_hat: usize,
    pub normalized: Option<f64>,
    pub p_value: Option<f64>,
    pub threshold: Option<f64>,
    pub reject: bool,
    pub trim: (usize, usize),
}

fn check_n(n: usize) -> Result<(), String> {
    if n > MAX_N {
        return Err(format!("n is limited to {MAX_N} in the browser demo"));
    }
    Ok(())
}

fn parse<T: for<'de> Deserialize<'de>>(request: &str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

pub fn simulate_and_scan(request: &str) -> Result<String, String> {
    let req: ScanRequest = parse(request)?;
    check_n(req.n)?;
    let series = gen_ar_change(req.n, req.k, &[req.phi_pre], &[req.phi_post], req.noise, DEFAULT_BURN_IN, req.seed)
        .map_err(|e| e.to_string())?;
    let options = ScanOptions { alpha: req.alpha, ..Default::default() };
    let scan = trimmed_scan(&series, 1, &options, &SolverSettings::default()).map_err(|e| e.to_string())?;
    to_json(&ScanResponse {
        series: series.values().to_vec(),
        profile: scan.profile.iter().map(|pt| (pt.k, pt.stat)).collect(),
        z_star: scan.z_star,
        k_hat: scan.k_hat,
        normalized: scan.t_normalized,
        p_value: scan.p_value,
        threshold: scan.raw_threshold,
        reject: scan.reject,
        trim: scan.trim,
    })
}

#[derive(Debug, Deserialize)]
pub struct CritvalRequest {
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub r: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CritvalRow {
    pub alpha: f64,
    pub t_alpha: f64,
    pub raw_threshold: Option<f64>,
}

pub fn critical_values(request: &str) -> Result<String, String> {
    let req: CritvalRequest = parse(request)?;
    let rows = req
        .alphas
        .iter()
        .map(|&alpha| {
            let t_alpha = gumbel_quantile(alpha).map_err(|e| e.to_string())?;
            let raw = req.n.map(|n| raw_threshold(alpha, n, req.r)).transpose().map_err(|e| e.to_string())?;
            Ok(CritvalRow { alpha, t_alpha, raw_threshold: raw })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&rows)
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct SegmentRequest {
    pub n: usize,
    /// Last index of every regime but the final one.
    pub breaks: Vec<usize>,
    /// One AR(1) coefficient per regime.
    pub phis: Vec<f64>,
    pub seed: u64,
    pub alpha: f64,
    pub min_len: usize,
}

impl Default for SegmentRequest {
    fn default() -> Self {
        Self { n: 450, breaks: vec![150, 300], phis: vec![0.1, 0.8, 0.1], seed: 3, alpha: 0.05, min_len: 50 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub series: Vec<f64>,
    pub change_points: Vec<usize>,
    /// `(start, end, depth, decision)` per tested interval.
    pub nodes: Vec<(usize, usize, usize, String)>,
}

/// Piecewise AR(1) path that carries its lags across regime boundaries.
pub fn piecewise_ar1(n: usize, breaks: &[usize], phis: &[f64], seed: u64) -> Result<TimeSeries, String> {
    if phis.len() != breaks.len() + 1 {
        return Err("need one coefficient per regime".into());
    }
    if phis.iter().any(|p| p.abs() >= 1.0) {
        return Err("coefficients must lie in (-1, 1)".into());
    }
    if breaks.windows(2).any(|w| w[0] >= w[1]) || breaks.iter().any(|&b| b == 0 || b >= n) {
        return Err("breaks must be increasing and inside 1..n".into());
    }
    let e = sample_noise(NoiseModel::Gaussian, n + DEFAULT_BURN_IN, seed);
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(n);
    for (i, eps) in e.iter().enumerate() {
        let t = i as isize - DEFAULT_BURN_IN as isize + 1;
        let regime = breaks.iter().filter(|&&b| t > b as isize).count();
        prev = phis[regime] * prev + eps;
        if t >= 1 {
            out.push(prev);
        }
    }
    TimeSeries::new(out).map_err(|e| e.to_string())
}

pub fn segment(request: &str) -> Result<String, String> {
    let req: SegmentRequest = parse(request)?;
    check_n(req.n)?;
    let series = piecewise_ar1(req.n, &req.breaks, &req.phis, req.seed)?;
    let options = SegmentOptions { alpha: req.alpha, min_len: req.min_len, ..Default::default() };
    let res = binary_segment(&series, 1, &options, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let nodes = res
        .tree
        .iter()
        .map(|nd| {
            let label = serde_json::to_value(&nd.decision)
                .ok()
                .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
                .unwrap_or_default();
            (nd.start, nd.end, nd.depth, label)
        })
        .collect();
    to_json(&SegmentResponse { series: series.values().to_vec(), change_points: res.change_points, nodes })
}
