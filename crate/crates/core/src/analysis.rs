//! Level sets, theoretical envelopes, minimal speeds and acceleration
//! diagnostics.

use thiserror::Error;

use crate::certificates::{hyp2_constant, CertificateError, PhiProfile};
use crate::discretization::Field;
use crate::kernels::{DispersalMoment, KernelError, KernelSpec};
use crate::quadrature::{golden_section_max, Tolerance};
use crate::reaction::ReactionSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("parameter order violated: {0}")]
    ParameterOrder(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("hypothesis not satisfied: {0}")]
    HypothesisNotSatisfied(String),
    #[error("infinite speed expected: {0}")]
    Divergent(String),
    #[error("need at least {needed} samples in the window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("level set absent at t = {t}")]
    AbsentCrossing { t: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

/// Rightmost downcrossing of `λ` on the nodes `xs`, linearly interpolated.
pub fn right_crossing(xs: &[f64], values: &[f64], lambda: f64) -> Option<f64> {
    (1..values.len()).rev().find(|&i| values[i] < lambda && lambda <= values[i - 1]).map(|i| {
        let (u0, u1) = (values[i - 1], values[i]);
        xs[i - 1] + (u0 - lambda) / (u0 - u1) * (xs[i] - xs[i - 1])
    })
}

/// Leftmost upcrossing of `λ`, the mirror of [`right_crossing`].
pub fn left_crossing(xs: &[f64], values: &[f64], lambda: f64) -> Option<f64> {
    (0..values.len().saturating_sub(1)).find(|&i| values[i] < lambda && lambda <= values[i + 1]).map(|i| {
        let (u0, u1) = (values[i + 1], values[i]);
        xs[i + 1] + (u0 - lambda) / (u0 - u1) * (xs[i] - xs[i + 1])
    })
}

/// `(x_right, x_left)` of the level set `{u = λ}`; `x_left` is a coordinate,
/// so it is negative for fronts moving left.
pub fn extract_level_set(field: &Field, lambda: f64) -> (Option<f64>, Option<f64>) {
    let xs = field.grid.coordinates();
    (right_crossing(&xs, &field.values, lambda), left_crossing(&xs, &field.values, lambda))
}

/// First downcrossing met when walking right from the node closest to `x = 0`.
pub fn inner_right_crossing(field: &Field, lambda: f64) -> Option<f64> {
    let xs = field.grid.coordinates();
    let start = field.grid.n() / 2;
    let v = &field.values;
    (start..v.len())
        .find(|&i| v[i] < lambda && i > 0 && lambda <= v[i - 1])
        .map(|i| xs[i - 1] + (v[i - 1] - lambda) / (v[i - 1] - v[i]) * (xs[i] - xs[i - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSample {
    pub t: f64,
    pub x_right: Option<f64>,
    pub x_left: Option<f64>,
    /// Innermost crossing, kept only when it differs from `x_right` by more
    /// than `2dx`.
    pub inner_right: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetTrace {
    pub lambda: f64,
    pub samples: Vec<LevelSample>,
}

impl LevelSetTrace {
    pub fn from_snapshots(snapshots: &[Field], lambda: f64) -> Result<Self, AnalysisError> {
        check_level(lambda)?;
        let samples = snapshots
            .iter()
            .map(|f| {
                let (x_right, x_left) = extract_level_set(f, lambda);
                let inner = inner_right_crossing(f, lambda);
                let inner_right = match (inner, x_right) {
                    (Some(a), Some(b)) if (a - b).abs() > 2.0 * f.grid.dx() => Some(a),
                    _ => None,
                };
                LevelSample { t: f.time, x_right, x_left, inner_right }
            })
            .collect();
        Ok(LevelSetTrace { lambda, samples })
    }

    /// Builds a trace from `(t, x_right)` pairs, e.g. for synthetic data.
    pub fn from_points(lambda: f64, points: &[(f64, f64)]) -> Self {
        let samples = points
            .iter()
            .map(|(t, x)| LevelSample { t: *t, x_right: Some(*x), x_left: Some(-*x), inner_right: None })
            .collect();
        LevelSetTrace { lambda, samples }
    }

    /// First sample time with a nonempty level set.
    pub fn first_time(&self) -> Option<f64> {
        self.samples.iter().find(|s| s.x_right.is_some()).map(|s| s.t)
    }

    /// `x_right` at the sample closest to `t`, within `tol`.
    pub fn x_right_at(&self, t: f64, tol: f64) -> Option<f64> {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|s| (s.t - t).abs() <= tol)
            .and_then(|s| s.x_right)
    }

    /// `(t, x_right)` for samples in `[t0, t1]` with a crossing.
    pub fn points_in(&self, window: (f64, f64)) -> Vec<(f64, f64)> {
        let eps = 1e-9 * (1.0 + window.1.abs());
        self.samples
            .iter()
            .filter(|s| s.t >= window.0 - eps && s.t <= window.1 + eps)
            .filter_map(|s| s.x_right.map(|x| (s.t, x)))
            .collect()
    }

    /// The last third of the sampled time range.
    pub fn final_third(&self) -> Option<(f64, f64)> {
        let t0 = self.samples.first()?.t;
        let t1 = self.samples.last()?.t;
        Some((t0 + 2.0 * (t1 - t0) / 3.0, t1))
    }
}

fn check_level(lambda: f64) -> Result<(), AnalysisError> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::Precondition(format!("level must lie in (0, 1), got {lambda}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub lambda: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub times: Vec<f64>,
    /// `J⁻¹(e^{-(f'(0) - ε)t})`, zero while the level exceeds `J(0)`.
    pub lower: Vec<f64>,
    /// `J⁻¹(e^{-ρt})`.
    pub upper: Vec<f64>,
    pub x_right: Vec<Option<f64>>,
    /// `lower ≤ x_right ≤ upper`; absent without a trace or a crossing.
    pub contained: Vec<Option<bool>>,
}

/// Theoretical lower and upper front envelopes at `times`, with containment
/// flags when a trace is supplied.
pub fn envelopes(
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    lambda: f64,
    epsilon: f64,
    rho: f64,
    times: &[f64],
    trace: Option<&LevelSetTrace>,
) -> Result<EnvelopeReport, AnalysisError> {
    check_level(lambda)?;
    let fp = reaction.fprime0();
    if !(epsilon > 0.0 && epsilon < fp) {
        return Err(AnalysisError::ParameterOrder(format!("need 0 < epsilon < f'(0) = {fp}, got epsilon = {epsilon}")));
    }
    if !(rho > fp) {
        return Err(AnalysisError::ParameterOrder(format!("need rho > f'(0) = {fp}, got rho = {rho}")));
    }
    let mut report = EnvelopeReport {
        lambda,
        epsilon,
        rho,
        times: times.to_vec(),
        lower: Vec::with_capacity(times.len()),
        upper: Vec::with_capacity(times.len()),
        x_right: Vec::with_capacity(times.len()),
        contained: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let lower = kernel.inverse_ln_tail(-(fp - epsilon) * t)?;
        let upper = kernel.inverse_ln_tail(-rho * t)?;
        let x = trace.and_then(|tr| tr.x_right_at(t, 1e-6 * (1.0 + t.abs())));
        report.lower.push(lower);
        report.upper.push(upper);
        report.x_right.push(x);
        report.contained.push(x.map(|x| lower <= x && x <= upper));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoRoute {
    /// `ρ0 = r + K` with `K = sup (J∗J)/J - 1`.
    SelfConvolution { k: f64 },
    /// `ρ0 = max(∫ J e^φ, 1) - 1 + r`.
    Profile { integral: f64, tau: f64, sigma: f64, epsilon0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho0: f64,
    pub margin: f64,
    /// `ρ0 (1 + margin)`.
    pub rho: f64,
    pub route: RhoRoute,
}

pub const DEFAULT_RHO_MARGIN: f64 = 0.05;

/// Upper-envelope rate from the supersolution constructions, preferring the
/// `(J∗J)/J` route when the kernel admits it.
pub fn theoretical_rho(
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    margin: f64,
) -> Result<RhoEstimate, AnalysisError> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(AnalysisError::Precondition(format!("margin must be finite and nonnegative, got {margin}")));
    }
    let report = kernel.classify();
    let r = reaction.sup_per_capita_rate();
    let (rho0, route) = if report.hyp2.holds {
        let k = hyp2_constant(kernel)?;
        (r + k, RhoRoute::SelfConvolution { k })
    } else if report.hyp1.holds {
        let p = PhiProfile::new(kernel)?;
        let integral = p.weighted_integral(Tolerance::new(0.0, 1e-12))?;
        (integral.max(1.0) - 1.0 + r, RhoRoute::Profile { integral, tau: p.tau, sigma: p.sigma, epsilon0: p.epsilon0 })
    } else {
        return Err(AnalysisError::HypothesisNotSatisfied(format!(
            "the {} kernel is exponentially bounded",
            kernel.family().name()
        )));
    };
    let rho = rho0 * (1.0 + margin);
    if !(rho > reaction.fprime0()) {
        return Err(AnalysisError::ParameterOrder(format!("rho = {rho} does not exceed f'(0)")));
    }
    Ok(RhoEstimate { rho0, margin, rho, route })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalSpeed {
    pub c_star: f64,
    pub eta_star: f64,
}

/// `min_η (D ∫ J e^{ηz} dz - 1 + f'(0)) / η`.
pub fn minimal_speed<K: DispersalMoment>(kernel: &K, reaction: &ReactionSpec) -> Result<MinimalSpeed, AnalysisError> {
    minimal_speed_for_rate(kernel, reaction.fprime0())
}

/// As [`minimal_speed`] for an explicit `f'(0)`.
pub fn minimal_speed_for_rate<K: DispersalMoment>(kernel: &K, fprime0: f64) -> Result<MinimalSpeed, AnalysisError> {
    if !(fprime0 > 0.0 && fprime0.is_finite()) {
        return Err(AnalysisError::Precondition(format!("f'(0) must be positive, got {fprime0}")));
    }
    let h = |eta: f64| -> f64 {
        match kernel.weighted_moment(eta) {
            Ok(m) if m.is_finite() => (m - 1.0 + fprime0) / eta,
            _ => f64::INFINITY,
        }
    };
    let eta0 = 1e-3;
    if !h(eta0).is_finite() {
        return Err(AnalysisError::Divergent(format!(
            "no finite exponential moment at eta = {eta0}; the kernel is fat-tailed"
        )));
    }
    // h → ∞ as η → 0+; walk right until h stops decreasing
    let mut a = eta0;
    let mut b = 2.0 * eta0;
    let mut hb = h(b);
    let mut ha = h(a);
    while hb < ha {
        a = b;
        ha = hb;
        b *= 2.0;
        hb = h(b);
        if b > 1e8 {
            return Err(AnalysisError::Precondition("speed function has no minimum below eta = 1e8".into()));
        }
    }
    let lo = (a / 2.0).max(eta0 / 2.0);
    let hi = b;
    check_quasiconvex(&h, lo, hi)?;
    let (eta_star, neg) = golden_section_max(|e| -h(e), lo, hi, 1e-10);
    Ok(MinimalSpeed { c_star: -neg, eta_star })
}

/// Sampled check that `h` decreases then increases on `[lo, hi]`.
fn check_quasiconvex<F: Fn(f64) -> f64>(h: &F, lo: f64, hi: f64) -> Result<(), AnalysisError> {
    let n = 64;
    let vals: Vec<f64> = (0..=n).map(|i| h(lo + (hi - lo) * i as f64 / n as f64)).collect();
    let scale = vals.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    let slack = 1e-12 * scale.max(1.0);
    let mut rising = false;
    for w in vals.windows(2) {
        if w[1] > w[0] + slack {
            rising = true;
        } else if rising && w[1] < w[0] - slack {
            return Err(AnalysisError::Precondition("speed function is not unimodal on the bracket".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEstimate {
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub const MIN_FIT_SAMPLES: usize = 5;

/// Least-squares line through `(x, y)` pairs: `(slope, intercept, rms)`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    (slope, intercept, (ss / n).sqrt())
}

fn fit_window<F: Fn(f64, f64) -> (f64, f64)>(
    trace: &LevelSetTrace,
    window: (f64, f64),
    transform: F,
) -> Result<SpeedEstimate, AnalysisError> {
    let points: Vec<(f64, f64)> = trace.points_in(window).into_iter().map(|(t, x)| transform(t, x)).collect();
    if points.len() < MIN_FIT_SAMPLES {
        return Err(AnalysisError::InsufficientSamples { needed: MIN_FIT_SAMPLES, found: points.len() });
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(AnalysisError::Precondition("fit window contains non-positive values".into()));
    }
    let (slope, intercept, residual) = fit_line(&points);
    Ok(SpeedEstimate { window, slope, intercept, residual })
}

/// Slope of `x_right` against `t` on the window.
pub fn empirical_speed(trace: &LevelSetTrace, window: (f64, f64)) -> Result<SpeedEstimate, AnalysisError> {
    fit_window(trace, window, |t, x| (t, x))
}

/// Slope of `ln x_right` against `t`.
pub fn log_growth_rate(trace: &LevelSetTrace, window: (f64, f64)) -> Result<SpeedEstimate, AnalysisError> {
    fit_window(trace, window, |t, x| (t, if x > 0.0 { x.ln() } else { f64::NAN }))
}

/// Slope of `ln x_right` against `ln t`.
pub fn power_law_exponent(trace: &LevelSetTrace, window: (f64, f64)) -> Result<SpeedEstimate, AnalysisError> {
    fit_window(trace, window, |t, x| (if t > 0.0 { t.ln() } else { f64::NAN }, if x > 0.0 { x.ln() } else { f64::NAN }))
}

/// Speeds on `count` consecutive equal windows tiling `span`.
pub fn windowed_speeds(
    trace: &LevelSetTrace,
    span: (f64, f64),
    count: usize,
) -> Result<Vec<SpeedEstimate>, AnalysisError> {
    let width = (span.1 - span.0) / count as f64;
    (0..count)
        .map(|i| {
            let a = span.0 + i as f64 * width;
            empirical_speed(trace, (a, a + width))
        })
        .collect()
}

/// `x_right(λ_lo) - x_right(λ_hi)` at each requested time.
pub fn flatness_width(
    trace_hi: &LevelSetTrace,
    trace_lo: &LevelSetTrace,
    times: &[f64],
) -> Result<Vec<f64>, AnalysisError> {
    times
        .iter()
        .map(|&t| {
            let tol = 1e-6 * (1.0 + t.abs());
            let hi = trace_hi.x_right_at(t, tol).ok_or(AnalysisError::AbsentCrossing { t })?;
            let lo = trace_lo.x_right_at(t, tol).ok_or(AnalysisError::AbsentCrossing { t })?;
            Ok(lo - hi)
        })
        .collect()
}

/// Half-width `L` with a 25% margin over the upper envelope at `t_max`, and
/// at least four times the support of the initial data.
pub fn recommend_domain(kernel: &KernelSpec, rho: f64, t_max: f64, support: f64) -> Result<f64, AnalysisError> {
    if !(rho > 0.0 && t_max >= 0.0 && support >= 0.0) {
        return Err(AnalysisError::Precondition(format!(
            "need rho > 0, t_max ≥ 0 and support ≥ 0, got {rho}, {t_max}, {support}"
        )));
    }
    let reach = kernel.inverse_ln_tail(-rho * t_max)?;
    Ok((1.25 * reach).max(4.0 * support))
}
