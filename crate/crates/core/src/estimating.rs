//! AR(p) residuals and the estimating-function rows used by the
//! empirical-likelihood solver.
//!
//! Time indices are 1-based throughout the public interface: `t = 1` is the
//! first observation. A row for time `t` needs the `p` lags `t-1, …, t-p`, so
//! the first usable index is `p + 1`.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ElError, Result};

/// An ordered, finite sequence of real observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ElError::input("time series must contain at least one value"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(ElError::input(format!("time series value at t={} is not finite", pos + 1)));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at 1-based time `t`.
    pub fn at(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    /// Sub-series covering the 1-based inclusive interval.
    pub fn slice(&self, range: RangeInclusive<usize>) -> Result<TimeSeries> {
        let (a, b) = (*range.start(), *range.end());
        if a == 0 || b > self.len() || a > b {
            return Err(ElError::Index(format!("interval {a}..={b} outside 1..={}", self.len())));
        }
        TimeSeries::new(self.values[a - 1..b].to_vec())
    }

    pub fn reversed(&self) -> TimeSeries {
        let mut v = self.values.clone();
        v.reverse();
        TimeSeries { values: v }
    }

    pub fn scaled(&self, c: f64) -> Result<TimeSeries> {
        TimeSeries::new(self.values.iter().map(|v| v * c).collect())
    }
}

/// AR(p) coefficients and innovation variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArSpec {
    phi: Vec<f64>,
    sigma2: f64,
}

impl ArSpec {
    pub fn new(phi: Vec<f64>, sigma2: f64) -> Result<Self> {
        if phi.is_empty() {
            return Err(ElError::input("AR order must be at least 1"));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(ElError::input("AR coefficients must be finite"));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(ElError::input(format!("innovation variance must be positive, got {sigma2}")));
        }
        Ok(Self { phi, sigma2 })
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Smallest modulus among the roots of `1 - φ₁z - … - φ_p z^p`.
    pub fn min_root_modulus(&self) -> f64 {
        min_root_modulus(&self.phi)
    }

    /// All characteristic roots lie strictly outside the unit circle.
    pub fn is_stationary(&self) -> bool {
        is_stationary(&self.phi)
    }
}

/// Smallest root modulus of the AR characteristic polynomial, computed as
/// the reciprocal of the companion matrix spectral radius.
pub fn min_root_modulus(phi: &[f64]) -> f64 {
    let p = phi.len();
    if p == 0 {
        return f64::INFINITY;
    }
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for (j, &c) in phi.iter().enumerate() {
        companion[(0, j)] = c;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    let radius = companion.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if radius == 0.0 {
        f64::INFINITY
    } else {
        1.0 / radius
    }
}

pub fn is_stationary(phi: &[f64]) -> bool {
    min_root_modulus(phi) > 1.0 + 1e-12
}

/// A hypothesised single change: coefficients `phi_pre` for `t ≤ k` and
/// `phi_post` afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeAlternative {
    pub phi_pre: Vec<f64>,
    pub phi_post: Vec<f64>,
    pub delta: Vec<f64>,
    pub k: usize,
    pub sigma2: f64,
}

impl ChangeAlternative {
    pub fn new(phi_pre: Vec<f64>, phi_post: Vec<f64>, k: usize, n: usize, sigma2: f64) -> Result<Self> {
        if phi_pre.len() != phi_post.len() || phi_pre.is_empty() {
            return Err(ElError::input("pre- and post-change coefficient vectors must share a positive length"));
        }
        if k == 0 || k >= n {
            return Err(ElError::input(format!("change location must satisfy 1 <= k < n, got k={k}, n={n}")));
        }
        let delta = phi_post.iter().zip(&phi_pre).map(|(b, a)| b - a).collect();
        Ok(Self { phi_pre, phi_post, delta, k, sigma2 })
    }
}

/// Estimating-function rows `(X_t, X_{t-1}ε_t, …, X_{t-p}ε_t, ε_t² − σ²)`,
/// stored row-major with `dim = p + 2` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GFrame {
    data: Vec<f64>,
    dim: usize,
    index_range: RangeInclusive<usize>,
}

impl GFrame {
    /// Builds a frame from explicit rows. Used for synthetic solver inputs.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if dim == 0 {
            return Err(ElError::input("frame needs at least one non-empty row"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(ElError::input("frame rows must share one dimension"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ElError::Numerical("non-finite entry in frame".into()));
        }
        Ok(Self { data, dim, index_range: 1..=rows.len() })
    }

    pub(crate) fn from_flat(data: Vec<f64>, dim: usize, index_range: RangeInclusive<usize>) -> Self {
        Self { data, dim, index_range }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn index_range(&self) -> RangeInclusive<usize> {
        self.index_range.clone()
    }

    pub fn row_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_rows() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

fn check_range(n: usize, p: usize, range: &RangeInclusive<usize>) -> Result<()> {
    let (a, b) = (*range.start(), *range.end());
    if a > b {
        return Err(ElError::Index(format!("empty interval {a}..={b}")));
    }
    if a < p + 1 {
        return Err(ElError::Index(format!("interval starts at t={a} but an AR({p}) row needs t >= {}", p + 1)));
    }
    if b > n {
        return Err(ElError::Index(format!("interval ends at t={b} beyond series length {n}")));
    }
    Ok(())
}

/// Residual at 1-based `t` on raw values. Caller guarantees `t > phi.len()`.
#[inline]
pub(crate) fn residual_at(values: &[f64], t: usize, phi: &[f64]) -> f64 {
    let i = t - 1;
    let mut e = values[i];
    for (r, &c) in phi.iter().enumerate() {
        e -= c * values[i - r - 1];
    }
    e
}

/// `ε_t = X_t − Σ φ_r X_{t−r}` for every `t` in `range`.
pub fn residuals(series: &TimeSeries, spec: &ArSpec, range: RangeInclusive<usize>) -> Result<Vec<f64>> {
    check_range(series.len(), spec.order(), &range)?;
    Ok(range.map(|t| residual_at(series.values(), t, spec.phi())).collect())
}

/// Writes the estimating row for time `t` into `out` (length `p + 2`) and
/// returns the residual.
#[inline]
pub(crate) fn fill_row(values: &[f64], t: usize, phi: &[f64], sigma2: f64, out: &mut [f64]) -> f64 {
    let p = phi.len();
    let e = residual_at(values, t, phi);
    out[0] = values[t - 1];
    for r in 1..=p {
        out[r] = values[t - 1 - r] * e;
    }
    out[p + 1] = e * e - sigma2;
    e
}

/// Estimating-function frame over `range` at the supplied coefficients.
pub fn g_frame(series: &TimeSeries, spec: &ArSpec, range: RangeInclusive<usize>) -> Result<GFrame> {
    check_range(series.len(), spec.order(), &range)?;
    let dim = spec.order() + 2;
    let rows = range.end() - range.start() + 1;
    let mut data = vec![0.0; rows * dim];
    for (i, t) in range.clone().enumerate() {
        fill_row(series.values(), t, spec.phi(), spec.sigma2(), &mut data[i * dim..(i + 1) * dim]);
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ElError::Numerical("non-finite estimating row".into()));
    }
    Ok(GFrame::from_flat(data, dim, range))
}

/// Least-squares AR(p) fit without intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub phi: Vec<f64>,
    /// Mean squared residual over the fitted range.
    pub sigma2: f64,
    pub residuals: Vec<f64>,
}

/// Regresses `X_t` on its `p` lags for `t` in `range`.
pub fn ols_fit(values: &[f64], p: usize, range: RangeInclusive<usize>) -> Result<ArFit> {
    if p == 0 {
        return Err(ElError::input("AR order must be at least 1"));
    }
    check_range(values.len(), p, &range)?;
    let m = range.end() - range.start() + 1;
    if m < p + 1 {
        return Err(ElError::DegenerateSegment(format!("{m} rows cannot identify {p} coefficients and a variance")));
    }
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for t in range.clone() {
        let y = values[t - 1];
        for i in 0..p {
            let xi = values[t - 2 - i];
            xty[i] += xi * y;
            for j in 0..=i {
                xtx[(i, j)] += xi * values[t - 2 - j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    let max_diag = (0..p).map(|i| xtx[(i, i)]).fold(0.0_f64, f64::max);
    let chol = match xtx.clone().cholesky() {
        Some(c) if max_diag > 0.0 => c,
        _ => {
            return Err(ElError::DegenerateSegment(format!(
                "lagged design over t={}..={} is rank deficient",
                range.start(),
                range.end()
            )))
        }
    };
    let l = chol.l();
    if (0..p).any(|i| l[(i, i)] * l[(i, i)] <= 1e-10 * max_diag) {
        return Err(ElError::DegenerateSegment(format!(
            "lagged design over t={}..={} is numerically rank deficient",
            range.start(),
            range.end()
        )));
    }
    let phi: Vec<f64> = chol.solve(&xty).iter().copied().collect();
    let residuals: Vec<f64> = range.clone().map(|t| residual_at(values, t, &phi)).collect();
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / m as f64;
    let scale = range.clone().map(|t| values[t - 1] * values[t - 1]).sum::<f64>() / m as f64;
    if sigma2.is_nan() || sigma2 <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(ElError::DegenerateSegment(format!(
            "AR({p}) fit over t={}..={} leaves zero residual variance",
            range.start(),
            range.end()
        )));
    }
    Ok(ArFit { phi, sigma2, residuals })
}
