//! Empirical-likelihood solves for the AR change-point model.
//!
//! The inner problem maximizes the concave dual `Σ log(1 + s·λ'g_t)` over the
//! multiplier `λ` for fixed AR parameters. The outer problem minimizes the
//! resulting profile over the parameters, either shared across both segments
//! (null hypothesis) or per segment (alternative).
//!
//! Because `s·λ` can be absorbed into one vector, the inner solve works with
//! the effective multiplier `μ = s·λ` and reports `λ = μ / s`.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ElError, Result};
use crate::estimating::{fill_row, ols_fit, ArSpec, GFrame, TimeSeries};

/// Tolerances and caps for the nested optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop the inner solve once `‖Σ p_t g_t‖` and `|1 − Σ p_t|` fall below
    /// this.
    pub lambda_tol: f64,
    /// Outer step tolerance, relative to `1 + ‖β‖`.
    pub beta_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Pseudo-log threshold; `None` means `1/m` for a segment of `m` rows.
    pub logstar_eps: Option<f64>,
    /// Use one innovation variance for both segments under the alternative.
    /// Freeing it adds a degree of freedom the extreme-value calibration
    /// (`r = p`) does not count, and the scan over-rejects.
    pub shared_sigma2: bool,
    /// Jittered restarts attempted after an outer failure.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda_tol: 1e-10,
            beta_tol: 1e-8,
            max_inner: 100,
            max_outer: 200,
            logstar_eps: None,
            shared_sigma2: true,
            restarts: 3,
            seed: 0x5eed,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let tol_ok = |v: f64| v.is_finite() && v > 0.0;
        if !tol_ok(self.lambda_tol) || !tol_ok(self.beta_tol) {
            return Err(ElError::input("solver tolerances must be positive"));
        }
        if let Some(eps) = self.logstar_eps {
            if !tol_ok(eps) || eps >= 1.0 {
                return Err(ElError::input("pseudo-log threshold must lie in (0, 1)"));
            }
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(ElError::input("iteration caps must be at least 1"));
        }
        Ok(())
    }
}

/// Converged multiplier for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    /// Maximized `Σ log(1 + s·λ'g_t)`.
    pub objective: f64,
    pub iterations: usize,
    /// `‖Σ p_t g_t‖` at the returned multiplier.
    pub grad_norm: f64,
}

/// Full description of one constrained EL optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElSolution {
    /// Multipliers per segment, in the unscaled parametrization.
    pub lambda: Vec<Vec<f64>>,
    /// Parameters: `(φ, σ²)` under the null; per-segment `(φ, σ²)` blocks
    /// (or `(Φ, Φ*, σ²)` with a shared variance) under the alternative.
    pub beta: Vec<f64>,
    /// `2·Σ log(1 + ·)` summed over segments.
    pub objective: f64,
    pub weights: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[inline]
fn logstar(z: f64, eps: f64) -> (f64, f64, f64) {
    // value, first derivative, negated second derivative
    if z >= eps {
        (z.ln(), 1.0 / z, 1.0 / (z * z))
    } else {
        let r = z / eps;
        (eps.ln() - 1.5 + 2.0 * r - 0.5 * r * r, (2.0 - r) / eps, 1.0 / (eps * eps))
    }
}

struct DualState {
    mu: Vec<f64>,
    objective: f64,
    iterations: usize,
    grad_norm: f64,
}

/// Largest admissible `1 + μ'g`; beyond it the iterate is escaping to
/// infinity, which only happens when zero is outside the hull.
const DIVERGENCE_BOUND: f64 = 1e12;

fn dual_value(data: &[f64], dim: usize, mu: &[f64], eps: f64) -> f64 {
    data.chunks_exact(dim).map(|g| logstar(1.0 + dot(mu, g), eps).0).sum()
}

fn dual_grad_norm(data: &[f64], dim: usize, mu: &[f64], eps: f64) -> f64 {
    let mut grad = vec![0.0; dim];
    for g in data.chunks_exact(dim) {
        let d1 = logstar(1.0 + dot(mu, g), eps).1;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += d1 * v;
        }
    }
    grad.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A coordinate with all entries of one sign (and not all zero) gives a
/// direction along which the dual grows without bound.
fn one_signed_coordinate(data: &[f64], dim: usize) -> bool {
    (0..dim).any(|j| {
        let (mut pos, mut neg) = (false, false);
        for g in data.chunks_exact(dim) {
            pos |= g[j] > 0.0;
            neg |= g[j] < 0.0;
        }
        pos != neg
    })
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0_f64, f64::max).max(1e-300);
    let mut ridge = 1e-12 * scale;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..h.nrows() {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            return Some(ch.solve(rhs));
        }
        ridge *= 100.0;
    }
    None
}

/// Damped Newton on the pseudo-log dual over row-major `data`.
fn dual_newton(data: &[f64], dim: usize, start: Option<&[f64]>, settings: &SolverSettings) -> Result<DualState> {
    let m = data.len() / dim;
    if m == 0 {
        return Err(ElError::input("empty estimating frame"));
    }
    if one_signed_coordinate(data, dim) {
        return Err(ElError::ConvexHull { rows: m });
    }
    let eps = settings.logstar_eps.unwrap_or(1.0 / m as f64).min(1.0 / m as f64);
    let mut mu: Vec<f64> = match start {
        Some(s) if s.len() == dim && s.iter().all(|v| v.is_finite()) => s.to_vec(),
        _ => vec![0.0; dim],
    };
    let mut grad = DVector::<f64>::zeros(dim);
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    let mut trial = vec![0.0; dim];
    let mut iterations = 0;

    loop {
        grad.fill(0.0);
        hess.fill(0.0);
        let mut obj = 0.0;
        let mut min_z = f64::INFINITY;
        let mut max_z = f64::NEG_INFINITY;
        for g in data.chunks_exact(dim) {
            let z = 1.0 + dot(&mu, g);
            min_z = min_z.min(z);
            max_z = max_z.max(z);
            let (f, d1, c) = logstar(z, eps);
            obj += f;
            for i in 0..dim {
                grad[i] += d1 * g[i];
                let cg = c * g[i];
                for j in 0..=i {
                    hess[(i, j)] += cg * g[j];
                }
            }
        }
        if !obj.is_finite() || max_z > DIVERGENCE_BOUND {
            return Err(ElError::ConvexHull { rows: m });
        }
        let grad_norm = grad.norm() / m as f64;
        // The weights sum to 1 - μ'∇/m. Escaping to infinity outside the hull
        // also drives ∇ to zero, but keeps μ'∇ near m.
        let mass_gap = dot(&mu, grad.as_slice()).abs() / m as f64;
        if grad_norm <= settings.lambda_tol && mass_gap <= settings.lambda_tol {
            if min_z < eps {
                return Err(ElError::ConvexHull { rows: m });
            }
            return Ok(DualState { mu, objective: obj, iterations, grad_norm });
        }
        if iterations >= settings.max_inner {
            return Err(ElError::NonConvergence { context: "multiplier solve".into(), iterations, grad_norm });
        }
        iterations += 1;
        for i in 0..dim {
            for j in 0..i {
                hess[(j, i)] = hess[(i, j)];
            }
        }
        let step = solve_spd(&hess, &grad).ok_or_else(|| ElError::Numerical("singular dual Hessian".into()))?;
        let decrement = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..dim {
                trial[i] = mu[i] + t * step[i];
            }
            let val = dual_value(data, dim, &trial, eps);
            if val >= obj + 1e-4 * t * decrement {
                accepted = true;
                break;
            }
            // Near the optimum the increase drowns in rounding; a full step
            // that does not lose ground and shrinks the gradient is still a
            // Newton step.
            if t == 1.0
                && val >= obj - 1e-12 * (1.0 + obj.abs())
                && dual_grad_norm(data, dim, &trial, eps) < grad_norm * m as f64
            {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if accepted && trial == mu {
            accepted = false;
        }
        if !accepted {
            if min_z >= eps
                && grad_norm <= settings.lambda_tol.sqrt() * 1e-2
                && mass_gap <= settings.lambda_tol.sqrt() * 1e-2
            {
                // Rounding floor reached short of the nominal tolerance.
                return Ok(DualState { mu, objective: obj, iterations, grad_norm });
            }
            return Err(ElError::NonConvergence {
                context: "multiplier line search stalled".into(),
                iterations,
                grad_norm,
            });
        }
        mu.copy_from_slice(&trial);
    }
}

/// Maximizes `Σ log(1 + scale·λ'g_t)` over `λ`.
pub fn solve_lambda(frame: &GFrame, scale: f64, settings: &SolverSettings) -> Result<DualSolution> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(ElError::input(format!("scale must be positive, got {scale}")));
    }
    settings.validate()?;
    let st = dual_newton(frame.as_flat(), frame.dim(), None, settings)?;
    Ok(DualSolution {
        lambda: st.mu.iter().map(|v| v / scale).collect(),
        objective: st.objective,
        iterations: st.iterations,
        grad_norm: st.grad_norm,
    })
}

/// EL weights `p_t = 1 / (m (1 + scale·λ'g_t))` implied by a multiplier.
pub fn implied_weights(frame: &GFrame, scale: f64, lambda: &[f64]) -> Vec<f64> {
    let m = frame.n_rows() as f64;
    frame.rows().map(|g| 1.0 / (m * (1.0 + scale * dot(lambda, g)))).collect()
}

/// Minimum number of rows per segment: twice the moment dimension.
pub fn min_segment_rows(p: usize) -> usize {
    2 * (p + 2)
}

/// Sup over `λ` of the segment log-EL term at fixed parameters.
pub fn segment_el(
    series: &TimeSeries,
    segment: RangeInclusive<usize>,
    beta: &ArSpec,
    scale: f64,
    settings: &SolverSettings,
) -> Result<f64> {
    let rows = segment.end().saturating_sub(*segment.start()) + 1;
    if rows < 2 {
        return Err(ElError::DegenerateSegment(format!("segment has {rows} usable row(s), need at least 2")));
    }
    let frame = crate::estimating::g_frame(series, beta, segment)?;
    Ok(solve_lambda(&frame, scale, settings)?.objective)
}

// ---------------------------------------------------------------------------
// Outer profile optimization

/// One block of consecutive rows sharing parameters.
#[derive(Debug, Clone)]
struct SegSpec {
    start: usize,
    end: usize,
    phi_off: usize,
    sigma_idx: usize,
}

impl SegSpec {
    fn rows(&self) -> usize {
        self.end - self.start + 1
    }
}

struct Problem<'a> {
    values: &'a [f64],
    p: usize,
    segs: Vec<SegSpec>,
    nparam: usize,
}

#[derive(Clone)]
struct Eval {
    f: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    mus: Vec<Vec<f64>>,
}

impl Problem<'_> {
    fn total_rows(&self) -> usize {
        self.segs.iter().map(SegSpec::rows).sum()
    }

    fn seg_params<'t>(&self, s: &SegSpec, theta: &'t [f64]) -> (&'t [f64], f64) {
        (&theta[s.phi_off..s.phi_off + self.p], theta[s.sigma_idx])
    }

    fn segment_rows(&self, s: &SegSpec, theta: &[f64], buf: &mut Vec<f64>, resid: &mut Vec<f64>) {
        let d = self.p + 2;
        let (phi, sigma2) = self.seg_params(s, theta);
        buf.resize(s.rows() * d, 0.0);
        resid.resize(s.rows(), 0.0);
        for (i, t) in (s.start..=s.end).enumerate() {
            resid[i] = fill_row(self.values, t, phi, sigma2, &mut buf[i * d..(i + 1) * d]);
        }
    }

    /// Profile value, envelope gradient and exact profile Hessian.
    fn eval(&self, theta: &[f64], warm: Option<&[Vec<f64>]>, settings: &SolverSettings) -> Result<Eval> {
        let p = self.p;
        let d = p + 2;
        let q = p + 1;
        let mut f = 0.0;
        let mut grad = DVector::<f64>::zeros(self.nparam);
        let mut hess = DMatrix::<f64>::zeros(self.nparam, self.nparam);
        let mut mus = Vec::with_capacity(self.segs.len());
        let mut buf = Vec::new();
        let mut resid = Vec::new();
        for (si, s) in self.segs.iter().enumerate() {
            self.segment_rows(s, theta, &mut buf, &mut resid);
            let start = warm.and_then(|w| w.get(si)).map(|v| v.as_slice());
            let st = dual_newton(&buf, d, start, settings)?;
            f += st.objective;
            // v_t = ∂g_t'μ, B = Σ (∂g_t/z_t − g_t v_t'/z_t²), M = Σ g_t g_t'/z_t²,
            // C = Σ (μ_last ∂²ε_t²/z_t − v_t v_t'/z_t²); profile Hessian C + B'M⁻¹B.
            let mut b = DMatrix::<f64>::zeros(d, q);
            let mut mm = DMatrix::<f64>::zeros(d, d);
            let mut c = DMatrix::<f64>::zeros(q, q);
            let mut g_local = DVector::<f64>::zeros(q);
            let mut dg = vec![0.0; d * q];
            let mut v = vec![0.0; q];
            let mu_last = st.mu[p + 1];
            for (i, t) in (s.start..=s.end).enumerate() {
                let g = &buf[i * d..(i + 1) * d];
                let z = 1.0 + dot(&st.mu, g);
                let w = 1.0 / z;
                let w2 = w * w;
                let e = resid[i];
                let lag = |j: usize| self.values[t - 2 - j];
                dg.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..p {
                    for r in 0..p {
                        dg[(r + 1) * q + j] = -lag(r) * lag(j);
                    }
                    dg[(p + 1) * q + j] = -2.0 * e * lag(j);
                }
                dg[(p + 1) * q + p] = -1.0;
                for (jc, vj) in v.iter_mut().enumerate() {
                    *vj = (0..d).map(|r| dg[r * q + jc] * st.mu[r]).sum();
                }
                for jc in 0..q {
                    g_local[jc] += w * v[jc];
                    for r in 0..d {
                        b[(r, jc)] += w * dg[r * q + jc] - w2 * g[r] * v[jc];
                    }
                    for jr in 0..q {
                        c[(jr, jc)] -= w2 * v[jr] * v[jc];
                    }
                }
                for jr in 0..p {
                    for jc in 0..p {
                        c[(jr, jc)] += w * mu_last * 2.0 * lag(jr) * lag(jc);
                    }
                }
                for r in 0..d {
                    let gr = w2 * g[r];
                    for cc in 0..=r {
                        mm[(r, cc)] += gr * g[cc];
                    }
                }
            }
            for r in 0..d {
                for cc in 0..r {
                    mm[(cc, r)] = mm[(r, cc)];
                }
            }
            let minv_b = match mm.clone().cholesky() {
                Some(ch) => ch.solve(&b),
                None => {
                    let mut cols = DMatrix::<f64>::zeros(d, q);
                    for col_i in 0..q {
                        let col = solve_spd(&mm, &b.column(col_i).into_owned())
                            .ok_or_else(|| ElError::Numerical("singular moment covariance".into()))?;
                        cols.set_column(col_i, &col);
                    }
                    cols
                }
            };
            let h_local = c + b.transpose() * minv_b;
            let idx: Vec<usize> = (0..p).map(|j| s.phi_off + j).chain(std::iter::once(s.sigma_idx)).collect();
            for (li, &gi) in idx.iter().enumerate() {
                grad[gi] += g_local[li];
                for (lj, &gj) in idx.iter().enumerate() {
                    hess[(gi, gj)] += h_local[(li, lj)];
                }
            }
            mus.push(st.mu);
        }
        if !f.is_finite() {
            return Err(ElError::Numerical("non-finite profile value".into()));
        }
        Ok(Eval { f, grad, hess, mus })
    }

    fn feasible(&self, theta: &[f64]) -> bool {
        self.segs.iter().all(|s| theta[s.sigma_idx] > 0.0) && theta.iter().all(|v| v.is_finite())
    }
}

struct OuterResult {
    theta: Vec<f64>,
    eval: Eval,
    iterations: usize,
    grad_norm: f64,
}

/// Levenberg–Marquardt on the profile with its exact Hessian and the
/// analytic envelope gradient.
fn minimize(
    problem: &Problem,
    theta0: &[f64],
    warm: Option<&[Vec<f64>]>,
    settings: &SolverSettings,
) -> Result<OuterResult> {
    if !problem.feasible(theta0) {
        return Err(ElError::Numerical("infeasible starting parameters".into()));
    }
    let rows = problem.total_rows() as f64;
    let grad_tol = 1e-11;
    let mut theta = theta0.to_vec();
    let mut cur = problem.eval(&theta, warm, settings)?;
    let mut damping = 1e-6;
    let mut trial = vec![0.0; theta.len()];
    for it in 0..settings.max_outer {
        let grad_norm = cur.grad.norm() / rows;
        if grad_norm <= grad_tol {
            return Ok(OuterResult { theta, eval: cur, iterations: it, grad_norm });
        }
        let mut accepted: Option<(Eval, f64)> = None;
        while damping < 1e12 {
            let mut h = cur.hess.clone();
            for i in 0..h.nrows() {
                h[(i, i)] += damping * (h[(i, i)].abs() + 1e-12);
            }
            let Some(step) = solve_spd(&h, &(-&cur.grad)) else {
                damping *= 10.0;
                continue;
            };
            for i in 0..theta.len() {
                trial[i] = theta[i] + step[i];
            }
            if problem.feasible(&trial) {
                if let Ok(ev) = problem.eval(&trial, Some(&cur.mus), settings) {
                    if ev.f <= cur.f + 1e-14 * (1.0 + cur.f) {
                        accepted = Some((ev, step.norm()));
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        let Some((ev, step_norm)) = accepted else {
            if grad_norm <= 1e-8 {
                return Ok(OuterResult { theta, eval: cur, iterations: it, grad_norm });
            }
            return Err(ElError::NonConvergence {
                context: "parameter profile stalled".into(),
                iterations: it,
                grad_norm,
            });
        };
        theta.copy_from_slice(&trial);
        let improvement = cur.f - ev.f;
        cur = ev;
        damping = (damping * 0.1).max(1e-9);
        let scale = 1.0 + theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm <= settings.beta_tol * scale && improvement <= 1e-12 * (1.0 + cur.f) {
            let grad_norm = cur.grad.norm() / rows;
            return Ok(OuterResult { theta, eval: cur, iterations: it + 1, grad_norm });
        }
    }
    let grad_norm = cur.grad.norm() / rows;
    Err(ElError::NonConvergence { context: "parameter profile".into(), iterations: settings.max_outer, grad_norm })
}

fn jitter(theta: &[f64], seed: u64, attempt: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    theta.iter().map(|v| v * (1.0 + 1e-2 * rng.random_range(-1.0..=1.0))).collect()
}

fn minimize_with_restarts(
    problem: &Problem,
    theta0: &[f64],
    warm: Option<&[Vec<f64>]>,
    settings: &SolverSettings,
    seed: u64,
) -> Result<OuterResult> {
    let mut last = match minimize(problem, theta0, warm, settings) {
        Ok(r) => return Ok(r),
        Err(e @ (ElError::NonConvergence { .. } | ElError::Numerical(_) | ElError::ConvexHull { .. })) => e,
        Err(e) => return Err(e),
    };
    for attempt in 1..=settings.restarts {
        let start = jitter(theta0, seed, attempt);
        match minimize(problem, &start, None, settings) {
            Ok(r) => return Ok(r),
            Err(e) => last = e,
        }
    }
    Err(last)
}

// ---------------------------------------------------------------------------
// Hypothesis fits

/// Parameters and multipliers of one hypothesis at one split, in the
/// standardized units of the owning [`ChangeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFit {
    /// `2·Σ log(1 + ·)` summed over both segments.
    pub z: f64,
    theta: Vec<f64>,
    mus: Vec<Vec<f64>>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Both hypotheses at one candidate split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFit {
    pub k: usize,
    pub z_h0: f64,
    pub z_h1: f64,
    /// `−2 log Λ_k` after clamping tiny negatives to zero.
    pub stat: f64,
    pub h0: HypothesisFit,
    pub h1: HypothesisFit,
}

/// Tolerance below zero within which `−2 log Λ_k` is reported as 0.
pub const CLAMP_TOL: f64 = 1e-6;

/// A series prepared for repeated split evaluations.
///
/// The series is divided by its root mean square before fitting. Every
/// estimating component is a power of the data scale, so the EL values are
/// unchanged and the solver sees unit-scale numbers.
#[derive(Debug, Clone)]
pub struct ChangeModel {
    values: Vec<f64>,
    scale: f64,
    p: usize,
    settings: SolverSettings,
    h0_start: Vec<f64>,
}

impl ChangeModel {
    pub fn new(series: &TimeSeries, p: usize, settings: &SolverSettings) -> Result<Self> {
        settings.validate()?;
        if p == 0 {
            return Err(ElError::input("AR order must be at least 1"));
        }
        let n = series.len();
        if n < p + 2 * min_segment_rows(p) {
            return Err(ElError::input(format!("series of length {n} is too short for two AR({p}) segments")));
        }
        let rms = (series.values().iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if rms == 0.0 {
            return Err(ElError::DegenerateSegment("series is identically zero".into()));
        }
        let values: Vec<f64> = series.values().iter().map(|v| v / rms).collect();
        let fit = ols_fit(&values, p, p + 1..=n)?;
        let mut h0_start = fit.phi;
        h0_start.push(fit.sigma2);
        Ok(Self { values, scale: rms, p, settings: settings.clone(), h0_start })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Data scale divided out before fitting.
    pub fn data_scale(&self) -> f64 {
        self.scale
    }

    fn check_split(&self, k: usize) -> Result<()> {
        let n = self.n();
        let need = min_segment_rows(self.p);
        if k <= self.p || k >= n {
            return Err(ElError::Index(format!("split k={k} outside {}..{n}", self.p + 1)));
        }
        let (r1, r2) = (k - self.p, n - k);
        if r1 < need || r2 < need {
            return Err(ElError::DegenerateSegment(format!(
                "split k={k} leaves {r1} and {r2} rows; each segment needs {need}"
            )));
        }
        Ok(())
    }

    fn seg_bounds(&self, k: usize) -> [(usize, usize); 2] {
        [(self.p + 1, k), (k + 1, self.n())]
    }

    fn seed_for(&self, k: usize, tag: u64) -> u64 {
        self.settings.seed ^ ((k as u64) << 8) ^ tag
    }

    fn h0_problem(&self, k: usize) -> Problem<'_> {
        let [(a1, b1), (a2, b2)] = self.seg_bounds(k);
        let p = self.p;
        Problem {
            values: &self.values,
            p,
            segs: vec![
                SegSpec { start: a1, end: b1, phi_off: 0, sigma_idx: p },
                SegSpec { start: a2, end: b2, phi_off: 0, sigma_idx: p },
            ],
            nparam: p + 1,
        }
    }

    fn single_problem(&self, start: usize, end: usize) -> Problem<'_> {
        let p = self.p;
        Problem { values: &self.values, p, segs: vec![SegSpec { start, end, phi_off: 0, sigma_idx: p }], nparam: p + 1 }
    }

    fn shared_sigma_problem(&self, k: usize) -> Problem<'_> {
        let [(a1, b1), (a2, b2)] = self.seg_bounds(k);
        let p = self.p;
        Problem {
            values: &self.values,
            p,
            segs: vec![
                SegSpec { start: a1, end: b1, phi_off: 0, sigma_idx: 2 * p },
                SegSpec { start: a2, end: b2, phi_off: p, sigma_idx: 2 * p },
            ],
            nparam: 2 * p + 1,
        }
    }

    /// Null fit: one `(Φ, σ²)` shared by both segments.
    pub fn fit_h0(&self, k: usize, warm: Option<&HypothesisFit>) -> Result<HypothesisFit> {
        self.check_split(k)?;
        let problem = self.h0_problem(k);
        let (start, mus) = match warm {
            Some(w) if w.theta.len() == problem.nparam => (w.theta.clone(), Some(w.mus.as_slice())),
            _ => (self.h0_start.clone(), None),
        };
        let res =
            minimize_with_restarts(&problem, &start, mus, &self.settings, self.seed_for(k, 0)).or_else(
                |e| match warm {
                    Some(_) => {
                        minimize_with_restarts(&problem, &self.h0_start, None, &self.settings, self.seed_for(k, 1))
                    }
                    None => Err(e),
                },
            )?;
        let fit = HypothesisFit {
            z: 2.0 * res.eval.f,
            theta: res.theta,
            mus: res.eval.mus,
            iterations: res.iterations,
            grad_norm: res.grad_norm,
        };
        let (q1, q2) = self.h0_scores_internal(k, &fit);
        let (n1, n2) = (norm(&q1), norm(&q2));
        if n1 > 1e-6 || n2 > 1e-6 {
            return Err(ElError::NonConvergence {
                context: format!("null fit at k={k} is not stationary (|Q1|={n1:.2e}, |Q2|={n2:.2e})"),
                iterations: fit.iterations,
                grad_norm: n1.max(n2),
            });
        }
        Ok(fit)
    }

    fn segment_start(&self, start: usize, end: usize) -> Result<Vec<f64>> {
        let fit = ols_fit(&self.values, self.p, start..=end)?;
        let mut theta = fit.phi;
        theta.push(fit.sigma2);
        Ok(theta)
    }

    fn fit_single(
        &self,
        start: usize,
        end: usize,
        warm_theta: Option<(&[f64], &[f64])>,
        fallback: Option<&[f64]>,
        seed: u64,
    ) -> Result<OuterResult> {
        let problem = self.single_problem(start, end);
        let first = match warm_theta {
            Some((theta, mu)) => {
                let mus = [mu.to_vec()];
                minimize_with_restarts(&problem, theta, Some(&mus), &self.settings, seed).or_else(|_| {
                    minimize_with_restarts(&problem, &self.segment_start(start, end)?, None, &self.settings, seed ^ 1)
                })
            }
            None => minimize_with_restarts(&problem, &self.segment_start(start, end)?, None, &self.settings, seed),
        };
        let Some(alt) = fallback else { return first };
        // The alternative nests the null, so its optimum can never be worse
        // than the null parameters restricted to this segment.
        let at_null = problem.eval(alt, None, &self.settings);
        match (first, at_null) {
            (Ok(r), Ok(ev)) if r.eval.f <= ev.f + 1e-10 => Ok(r),
            (Ok(r), Err(_)) => Ok(r),
            (first, _) => match minimize_with_restarts(&problem, alt, None, &self.settings, seed ^ 2) {
                Ok(r2) => match first {
                    Ok(r) if r.eval.f <= r2.eval.f => Ok(r),
                    _ => Ok(r2),
                },
                Err(e) => first.or(Err(e)),
            },
        }
    }

    /// Alternative fit: separate coefficients per segment.
    pub fn fit_h1(
        &self,
        k: usize,
        warm: Option<&HypothesisFit>,
        null: Option<&HypothesisFit>,
    ) -> Result<HypothesisFit> {
        self.check_split(k)?;
        let p = self.p;
        if self.settings.shared_sigma2 {
            return self.fit_h1_shared(k, warm, null);
        }
        let bounds = self.seg_bounds(k);
        let mut theta = Vec::with_capacity(2 * (p + 1));
        let mut mus = Vec::with_capacity(2);
        let mut f = 0.0;
        let mut iterations = 0;
        let mut grad_norm = 0.0_f64;
        for (si, &(a, b)) in bounds.iter().enumerate() {
            let warm_seg = warm
                .filter(|w| w.theta.len() == 2 * (p + 1) && w.mus.len() == 2)
                .map(|w| (&w.theta[si * (p + 1)..(si + 1) * (p + 1)], w.mus[si].as_slice()));
            let fallback = null.map(|h| h.theta.as_slice());
            let r = self.fit_single(a, b, warm_seg, fallback, self.seed_for(k, 10 + si as u64))?;
            f += r.eval.f;
            iterations += r.iterations;
            grad_norm = grad_norm.max(r.grad_norm);
            theta.extend_from_slice(&r.theta);
            mus.extend(r.eval.mus);
        }
        Ok(HypothesisFit { z: 2.0 * f, theta, mus, iterations, grad_norm })
    }

    fn fit_h1_shared(
        &self,
        k: usize,
        warm: Option<&HypothesisFit>,
        null: Option<&HypothesisFit>,
    ) -> Result<HypothesisFit> {
        let p = self.p;
        let problem = self.shared_sigma_problem(k);
        let [(a1, b1), (a2, b2)] = self.seg_bounds(k);
        let cold = || -> Result<Vec<f64>> {
            let s1 = self.segment_start(a1, b1)?;
            let s2 = self.segment_start(a2, b2)?;
            let (m1, m2) = ((b1 - a1 + 1) as f64, (b2 - a2 + 1) as f64);
            let mut theta = s1[..p].to_vec();
            theta.extend_from_slice(&s2[..p]);
            theta.push((m1 * s1[p] + m2 * s2[p]) / (m1 + m2));
            Ok(theta)
        };
        let seed = self.seed_for(k, 20);
        let mut res = match warm {
            Some(w) if w.theta.len() == problem.nparam => {
                minimize_with_restarts(&problem, &w.theta, Some(&w.mus), &self.settings, seed)
                    .or_else(|_| minimize_with_restarts(&problem, &cold()?, None, &self.settings, seed ^ 1))
            }
            _ => minimize_with_restarts(&problem, &cold()?, None, &self.settings, seed),
        };
        if let Some(h) = null {
            let mut nested = h.theta[..p].to_vec();
            nested.extend_from_slice(&h.theta[..p]);
            nested.push(h.theta[p]);
            let beaten = match &res {
                Ok(r) => r.eval.f > h.z / 2.0 + 1e-10,
                Err(_) => true,
            };
            if beaten {
                if let Ok(r2) = minimize_with_restarts(&problem, &nested, None, &self.settings, seed ^ 2) {
                    if res.as_ref().map(|r| r2.eval.f < r.eval.f).unwrap_or(true) {
                        res = Ok(r2);
                    }
                }
            }
        }
        let r = res?;
        Ok(HypothesisFit {
            z: 2.0 * r.eval.f,
            theta: r.theta,
            mus: r.eval.mus,
            iterations: r.iterations,
            grad_norm: r.grad_norm,
        })
    }

    /// Both hypotheses and the clamped ratio statistic at split `k`.
    pub fn evaluate(&self, k: usize, warm: Option<&SplitFit>) -> Result<SplitFit> {
        let h0 = self.fit_h0(k, warm.map(|w| &w.h0))?;
        let h1 = self.fit_h1(k, warm.map(|w| &w.h1), Some(&h0))?;
        let raw = h0.z - h1.z;
        let stat = clamp_statistic(raw)?;
        Ok(SplitFit { k, z_h0: h0.z, z_h1: h1.z, stat, h0, h1 })
    }

    /// Null parameters in original units: `(Φ, σ²)`.
    pub fn h0_spec(&self, fit: &HypothesisFit) -> Result<ArSpec> {
        let p = self.p;
        ArSpec::new(fit.theta[..p].to_vec(), fit.theta[p] * self.scale * self.scale)
    }

    /// Per-segment alternative parameters in original units.
    pub fn h1_specs(&self, fit: &HypothesisFit) -> Result<[ArSpec; 2]> {
        let p = self.p;
        let s2 = self.scale * self.scale;
        if self.settings.shared_sigma2 {
            let sigma2 = fit.theta[2 * p] * s2;
            Ok([ArSpec::new(fit.theta[..p].to_vec(), sigma2)?, ArSpec::new(fit.theta[p..2 * p].to_vec(), sigma2)?])
        } else {
            Ok([
                ArSpec::new(fit.theta[..p].to_vec(), fit.theta[p] * s2)?,
                ArSpec::new(fit.theta[p + 1..2 * p + 1].to_vec(), fit.theta[2 * p + 1] * s2)?,
            ])
        }
    }

    /// Scores of the null Lagrangian at a fitted point, in standardized units.
    fn h0_scores_internal(&self, k: usize, fit: &HypothesisFit) -> (Vec<f64>, Vec<f64>) {
        let n = self.n() as f64;
        let scales = [n / k as f64, n / (self.n() - k) as f64];
        let lambda: Vec<f64> = fit.mus.iter().zip(scales).flat_map(|(mu, s)| mu.iter().map(move |v| v / s)).collect();
        let p = self.p;
        let phi = &fit.theta[..p];
        let sigma2 = fit.theta[p];
        scores_raw(&self.values, p, k, phi, sigma2, &lambda)
    }

    /// Expanded description of a null fit in original units.
    pub fn h0_solution(&self, k: usize, fit: &HypothesisFit) -> Result<ElSolution> {
        let spec = self.h0_spec(fit)?;
        let mut beta = spec.phi().to_vec();
        beta.push(spec.sigma2());
        let [(a1, b1), (a2, b2)] = self.seg_bounds(k);
        self.expand_solution(k, fit, beta, &[(a1, b1, 0, self.p), (a2, b2, 0, self.p)])
    }

    /// Expanded description of an alternative fit in original units.
    pub fn h1_solution(&self, k: usize, fit: &HypothesisFit) -> Result<ElSolution> {
        let p = self.p;
        let specs = self.h1_specs(fit)?;
        let mut beta = specs[0].phi().to_vec();
        let [(a1, b1), (a2, b2)] = self.seg_bounds(k);
        let layout = if self.settings.shared_sigma2 {
            beta.extend_from_slice(specs[1].phi());
            beta.push(specs[0].sigma2());
            [(a1, b1, 0, 2 * p), (a2, b2, p, 2 * p)]
        } else {
            beta.push(specs[0].sigma2());
            beta.extend_from_slice(specs[1].phi());
            beta.push(specs[1].sigma2());
            [(a1, b1, 0, p), (a2, b2, p + 1, 2 * p + 1)]
        };
        self.expand_solution(k, fit, beta, &layout)
    }

    fn expand_solution(
        &self,
        k: usize,
        fit: &HypothesisFit,
        beta: Vec<f64>,
        layout: &[(usize, usize, usize, usize); 2],
    ) -> Result<ElSolution> {
        let p = self.p;
        let d = p + 2;
        let n = self.n() as f64;
        let scales = [n / k as f64, n / (self.n() - k) as f64];
        let mut lambda = Vec::new();
        let mut weights = Vec::new();
        let mut row = vec![0.0; d];
        // Multipliers in original units: component j of g scales by c^{1} or c^{2}.
        let c = self.scale;
        let unit: Vec<f64> = (0..d).map(|j| if j == 0 { c } else { c * c }).collect();
        for (si, &(a, b, phi_off, sigma_idx)) in layout.iter().enumerate() {
            let mu = &fit.mus[si];
            let phi = &fit.theta[phi_off..phi_off + p];
            let sigma2 = fit.theta[sigma_idx];
            let m = (b - a + 1) as f64;
            let w: Vec<f64> = (a..=b)
                .map(|t| {
                    fill_row(&self.values, t, phi, sigma2, &mut row);
                    1.0 / (m * (1.0 + dot(mu, &row)))
                })
                .collect();
            weights.push(w);
            lambda.push(mu.iter().zip(&unit).map(|(v, u)| v / scales[si] / u).collect());
        }
        Ok(ElSolution {
            lambda,
            beta,
            objective: fit.z,
            weights,
            converged: true,
            iterations: fit.iterations,
            grad_norm: fit.grad_norm,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Applies the reporting clamp to a raw `Z_{H0} − Z_{H1}` difference.
pub fn clamp_statistic(raw: f64) -> Result<f64> {
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(ElError::Numerical(format!(
            "likelihood ratio {raw:.3e} is negative beyond tolerance; the alternative fit failed"
        )))
    }
}

/// Lagrangian `(1/n) Σ_m log(1 + θ_m⁻¹ λ'g̃_m)` of the null problem, with `λ`
/// stacked as `(λ₁, λ₂)` and `θ_m⁻¹` equal to `n/k` before the split and
/// `n/(n−k)` after it.
fn lagrangian_raw(values: &[f64], p: usize, k: usize, phi: &[f64], sigma2: f64, lambda: &[f64]) -> f64 {
    let n = values.len();
    let d = p + 2;
    let mut row = vec![0.0; d];
    let mut total = 0.0;
    for t in p + 1..=n {
        let (s, lam) =
            if t <= k { (n as f64 / k as f64, &lambda[..d]) } else { (n as f64 / (n - k) as f64, &lambda[d..]) };
        fill_row(values, t, phi, sigma2, &mut row);
        total += (1.0 + s * dot(lam, &row)).ln();
    }
    total / n as f64
}

fn scores_raw(values: &[f64], p: usize, k: usize, phi: &[f64], sigma2: f64, lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let d = p + 2;
    let mut row = vec![0.0; d];
    let mut q1 = vec![0.0; 2 * d];
    let mut q2 = vec![0.0; p + 1];
    for t in p + 1..=n {
        let (s, off) = if t <= k { (n as f64 / k as f64, 0) } else { (n as f64 / (n - k) as f64, d) };
        let lam = &lambda[off..off + d];
        let e = fill_row(values, t, phi, sigma2, &mut row);
        let w = s / (1.0 + s * dot(lam, &row));
        for j in 0..d {
            q1[off + j] += w * row[j];
        }
        // (∂g/∂β)'λ for β = (φ, σ²)
        for j in 0..p {
            let xj = values[t - 2 - j];
            let mut acc = 0.0;
            for r in 0..p {
                acc -= lam[r + 1] * values[t - 2 - r] * xj;
            }
            acc -= lam[p + 1] * 2.0 * e * xj;
            q2[j] += w * acc;
        }
        q2[p] -= w * lam[p + 1];
    }
    let nf = n as f64;
    q1.iter_mut().for_each(|v| *v /= nf);
    q2.iter_mut().for_each(|v| *v /= nf);
    (q1, q2)
}

/// Null-hypothesis Lagrangian `(1/n) Σ log(1 + θ_m⁻¹ λ'g̃_m(β))`; `Z_{H0,k}`
/// equals `2n` times its saddle value.
pub fn h0_lagrangian(series: &TimeSeries, k: usize, beta: &ArSpec, lambda: &[f64]) -> Result<f64> {
    check_scores_input(series, k, beta, lambda)?;
    Ok(lagrangian_raw(series.values(), beta.order(), k, beta.phi(), beta.sigma2(), lambda))
}

/// Score functions `(Q₁ₙ, Q₂ₙ)`: gradients of [`h0_lagrangian`] in the
/// stacked multiplier and in `β = (Φ, σ²)`.
pub fn h0_scores(series: &TimeSeries, k: usize, beta: &ArSpec, lambda: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_scores_input(series, k, beta, lambda)?;
    Ok(scores_raw(series.values(), beta.order(), k, beta.phi(), beta.sigma2(), lambda))
}

fn check_scores_input(series: &TimeSeries, k: usize, beta: &ArSpec, lambda: &[f64]) -> Result<()> {
    let p = beta.order();
    if lambda.len() != 2 * (p + 2) {
        return Err(ElError::input(format!("stacked multiplier must have length {}", 2 * (p + 2))));
    }
    if k <= p || k >= series.len() {
        return Err(ElError::Index(format!("split k={k} outside {}..{}", p + 1, series.len())));
    }
    Ok(())
}

/// `Z_{H1,k}` with per-segment parameter estimates in original units.
pub fn z_h1(series: &TimeSeries, k: usize, p: usize, settings: &SolverSettings) -> Result<(f64, [ArSpec; 2])> {
    let model = ChangeModel::new(series, p, settings)?;
    let fit = model.fit_h1(k, None, None)?;
    Ok((fit.z, model.h1_specs(&fit)?))
}

/// `Z_{H0,k}` with the common parameter estimate in original units.
pub fn z_h0(series: &TimeSeries, k: usize, p: usize, settings: &SolverSettings) -> Result<(f64, ArSpec)> {
    let model = ChangeModel::new(series, p, settings)?;
    let fit = model.fit_h0(k, None)?;
    Ok((fit.z, model.h0_spec(&fit)?))
}

/// `−2 log Λ_k = Z_{H0,k} − Z_{H1,k}`, clamped at zero within tolerance.
pub fn neg2_log_lambda(series: &TimeSeries, k: usize, p: usize, settings: &SolverSettings) -> Result<f64> {
    let model = ChangeModel::new(series, p, settings)?;
    Ok(model.evaluate(k, None)?.stat)
}

/// Null fit with its multipliers mapped back to original units, for score
/// checks: returns `(β̃, stacked λ̃, Z_{H0,k})`.
pub fn h0_saddle_point(
    series: &TimeSeries,
    k: usize,
    p: usize,
    settings: &SolverSettings,
) -> Result<(ArSpec, Vec<f64>, f64)> {
    let model = ChangeModel::new(series, p, settings)?;
    let fit = model.fit_h0(k, None)?;
    let sol = model.h0_solution(k, &fit)?;
    let lambda = sol.lambda.concat();
    Ok((model.h0_spec(&fit)?, lambda, fit.z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(rows: &[f64]) -> GFrame {
        GFrame::from_rows(&rows.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn profile_hessian_matches_gradient_differences() {
        let values: Vec<f64> =
            (0..80).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0 + 0.3 * ((i as f64) * 0.7).sin()).collect();
        let problem = Problem {
            values: &values,
            p: 2,
            segs: vec![
                SegSpec { start: 3, end: 40, phi_off: 0, sigma_idx: 2 },
                SegSpec { start: 41, end: 80, phi_off: 0, sigma_idx: 2 },
            ],
            nparam: 3,
        };
        let settings = SolverSettings::default();
        let theta = [0.1, -0.05, 1.4];
        let base = problem.eval(&theta, None, &settings).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[j] += h;
            dn[j] -= h;
            let gu = problem.eval(&up, None, &settings).unwrap().grad;
            let gd = problem.eval(&dn, None, &settings).unwrap().grad;
            for i in 0..3 {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                let an = base.hess[(i, j)];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1.0), "H[{i},{j}] {an} vs {fd}");
            }
        }
    }

    #[test]
    fn zero_mean_frame_gives_zero_multiplier() {
        let s = solve_lambda(&frame(&[1.0, -1.0]), 1.0, &SolverSettings::default()).unwrap();
        assert!(s.lambda[0].abs() < 1e-14);
        assert!(s.objective.abs() < 1e-14);
    }

    #[test]
    fn one_signed_frame_is_outside_hull() {
        let r = solve_lambda(&frame(&[1.0, 1.0]), 1.0, &SolverSettings::default());
        assert!(matches!(r, Err(ElError::ConvexHull { .. })));
    }

    #[test]
    fn hull_failure_in_two_dimensions() {
        // Zero lies outside the hull although no single coordinate is one-signed.
        let f = GFrame::from_rows(&[vec![1.0, 0.5], vec![-0.5, 1.0], vec![2.0, -0.2]]).unwrap();
        let r = solve_lambda(&f, 1.0, &SolverSettings::default());
        assert!(matches!(r, Err(ElError::ConvexHull { .. })), "{r:?}");
    }

    #[test]
    fn scale_only_rescales_lambda() {
        let f = frame(&[0.5, -0.3, -0.1]);
        let a = solve_lambda(&f, 1.0, &SolverSettings::default()).unwrap();
        let b = solve_lambda(&f, 4.0, &SolverSettings::default()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-12);
        assert!((a.lambda[0] - 4.0 * b.lambda[0]).abs() < 1e-10);
    }

    #[test]
    fn logstar_is_c2_at_threshold() {
        let eps = 0.05;
        let below = logstar(eps - 1e-9, eps);
        let above = logstar(eps + 1e-9, eps);
        assert!((below.0 - above.0).abs() < 1e-6);
        assert!((below.1 - above.1).abs() < 1e-5);
        assert!((below.2 - above.2).abs() / above.2 < 1e-6);
    }

    #[test]
    fn clamp_rules() {
        assert_eq!(clamp_statistic(-5e-7).unwrap(), 0.0);
        assert_eq!(clamp_statistic(2.5).unwrap(), 2.5);
        assert!(matches!(clamp_statistic(-1e-3), Err(ElError::Numerical(_))));
    }

    #[test]
    fn settings_validation() {
        let mut s = SolverSettings::default();
        assert!(s.validate().is_ok());
        s.max_inner = 0;
        assert!(s.validate().is_err());
        let s = SolverSettings { lambda_tol: -1.0, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
