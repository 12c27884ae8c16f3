//! Spot checks of sub- and supersolution constructions. For a space-time
//! function `w` the residual
//!
//! ```text
//! N[w](t, x) = w_t - (J∗w - w) - f(w)
//! ```
//!
//! is evaluated at sample points with `J∗w` computed by adaptive quadrature
//! split at the kinks of `w` and of `J(x - ·)`. Subsolutions need `N ≤ 0`,
//! supersolutions `N ≥ 0`, both up to the quadrature tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::InitialShape;
use crate::kernels::{KernelError, KernelSpec};
use crate::quadrature::{golden_section_max, integrate_graded, integrate_real_line, QuadError, Tolerance};
use crate::reaction::{ReactionError, ReactionSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("hypothesis not satisfied: {0}")]
    HypothesisNotSatisfied(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Reaction(#[from] ReactionError),
}

/// Default absolute tolerance of the residual quadratures.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Width of the first graded piece next to each breakpoint.
const GRADE_H0: f64 = 0.25;

fn quad_tolerance(quad_tol: f64) -> Tolerance {
    Tolerance::new(1e-3 * quad_tol, 1e-12)
}

/// A function of `(t, x)` that can be checked against the evolution operator.
pub trait SpaceTimeFunction: Sync {
    fn value(&self, t: f64, x: f64) -> f64;

    /// Defaults to a centered difference with `h = 1e-6`.
    fn time_derivative(&self, t: f64, x: f64) -> f64 {
        let h = 1e-6;
        (self.value(t + h, x) - self.value(t - h, x)) / (2.0 * h)
    }

    /// Points where `x ↦ w(t, x)` is not smooth.
    fn kinks(&self, _t: f64) -> Vec<f64> {
        Vec::new()
    }
}

fn kernel_breakpoints(kernel: &KernelSpec, x: f64, out: &mut Vec<f64>) {
    out.push(x);
    let s = kernel.splice_radius();
    if s > 0.0 {
        out.push(x - s);
        out.push(x + s);
    }
}

/// `∫ J(x - y) w(y) dy` over the real line.
pub fn convolve_at<W: Fn(f64) -> f64>(
    kernel: &KernelSpec,
    w: W,
    x: f64,
    kinks: &[f64],
    tol: Tolerance,
) -> Result<f64, QuadError> {
    let mut points = kinks.to_vec();
    kernel_breakpoints(kernel, x, &mut points);
    let f = |y: f64| {
        let wy = w(y);
        if wy == 0.0 {
            0.0
        } else {
            kernel.evaluate(x - y) * wy
        }
    };
    Ok(integrate_real_line(f, &points, GRADE_H0, tol)?.value)
}

/// `∫ J(x - y) g(y) dy` for `g` supported in `[-R, R]`.
fn convolve_compact<G: Fn(f64) -> f64>(
    kernel: &KernelSpec,
    g: G,
    radius: f64,
    kinks: &[f64],
    x: f64,
    tol: Tolerance,
) -> Result<f64, QuadError> {
    let mut points = kinks.to_vec();
    kernel_breakpoints(kernel, x, &mut points);
    points.push(-radius);
    points.push(radius);
    points.retain(|p| (-radius..=radius).contains(p));
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut total = 0.0;
    for w in points.windows(2) {
        total += integrate_graded(|y| kernel.evaluate(x - y) * g(y), w[0], w[1], GRADE_H0, tol)?.value;
    }
    Ok(total)
}

/// `w_t - (J∗w - w) - f(w)` at `(t, x)`; `reaction = None` is the linear
/// problem `f ≡ 0`.
pub fn residual(
    w: &dyn SpaceTimeFunction,
    kernel: &KernelSpec,
    reaction: Option<&ReactionSpec>,
    t: f64,
    x: f64,
    quad_tol: f64,
) -> Result<f64, CertificateError> {
    let wv = w.value(t, x);
    let wt = w.time_derivative(t, x);
    let conv = convolve_at(kernel, |y| w.value(t, y), x, &w.kinks(t), quad_tolerance(quad_tol))?;
    let f = match reaction {
        Some(r) => r.evaluate_f(wv)?,
        None => 0.0,
    };
    Ok(wt - (conv - wv) - f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// Passes when the value is `≤ tol`.
    AtMost,
    /// Passes when the value is `≥ -tol`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSample {
    pub t: f64,
    pub x: f64,
    pub residual: f64,
    /// Region or check that produced the sample, e.g. `plateau`.
    pub region: &'static str,
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub construction: String,
    pub quad_tol: f64,
    pub samples: Vec<CertificateSample>,
    /// Named constants of the construction, recorded for reproducibility.
    pub constants: Vec<(String, f64)>,
}

impl CertificateReport {
    fn new(construction: &str, quad_tol: f64) -> Self {
        CertificateReport { construction: construction.into(), quad_tol, samples: Vec::new(), constants: Vec::new() }
    }

    pub fn passes(&self, s: &CertificateSample) -> bool {
        match s.sense {
            Sense::AtMost => s.residual <= self.quad_tol,
            Sense::AtLeast => s.residual >= -self.quad_tol,
        }
    }

    /// Recomputed from the stored residuals every time.
    pub fn verdict(&self) -> bool {
        self.samples.iter().all(|s| self.passes(s))
    }

    /// The sample with the largest violation margin (or the tightest pass).
    pub fn worst(&self) -> Option<&CertificateSample> {
        let margin = |s: &CertificateSample| match s.sense {
            Sense::AtMost => s.residual,
            Sense::AtLeast => -s.residual,
        };
        self.samples.iter().max_by(|a, b| margin(a).total_cmp(&margin(b)))
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Deterministic sample points; `x` is usually log-spaced and `t` linear.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub points: Vec<(f64, f64)>,
}

impl SampleGrid {
    pub fn product(times: &[f64], xs: &[f64]) -> Self {
        let points = times.iter().flat_map(|t| xs.iter().map(move |x| (*t, *x))).collect();
        SampleGrid { points }
    }
}

/// `n` points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// `n` log-spaced points from `a` to `b` inclusive, `0 < a < b`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

fn evaluate_samples(
    w: &dyn SpaceTimeFunction,
    kernel: &KernelSpec,
    reaction: Option<&ReactionSpec>,
    points: &[(f64, f64)],
    quad_tol: f64,
) -> Result<Vec<f64>, CertificateError> {
    points.par_iter().map(|(t, x)| residual(w, kernel, reaction, *t, *x, quad_tol)).collect()
}

// ---------------------------------------------------------------- step 1

/// `v(t, x) = (u0(x) + t (J∗u0)(x)) e^{-t}`, a subsolution of the linear
/// problem.
#[derive(Debug, Clone)]
pub struct LinearSubsolution {
    pub kernel: KernelSpec,
    pub u0: InitialShape,
}

impl LinearSubsolution {
    pub fn new(kernel: &KernelSpec, u0: &InitialShape) -> Result<Self, CertificateError> {
        u0.validate().map_err(|e| CertificateError::InvalidParameter(e.to_string()))?;
        Ok(LinearSubsolution { kernel: *kernel, u0: u0.clone() })
    }

    /// `(J∗u0)(x)`, relative accuracy about `1e-12`.
    pub fn kernel_times_u0(&self, x: f64) -> f64 {
        let eval = |tol| {
            convolve_compact(&self.kernel, |y| self.u0.value(y), self.u0.support_radius(), &self.u0.kinks(), x, tol)
        };
        // a coarse pass sets the absolute scale so short pieces need not
        // meet the relative target on their own
        let scale = match eval(Tolerance::new(f64::MIN_POSITIVE, 1e-6)) {
            Ok(v) => v.abs(),
            Err(_) => return f64::NAN,
        };
        eval(Tolerance::new((1e-13 * scale).max(f64::MIN_POSITIVE), 1e-12)).unwrap_or(f64::NAN)
    }
}

impl SpaceTimeFunction for LinearSubsolution {
    fn value(&self, t: f64, x: f64) -> f64 {
        (self.u0.value(x) + t * self.kernel_times_u0(x)) * (-t).exp()
    }

    fn time_derivative(&self, t: f64, x: f64) -> f64 {
        let ju = self.kernel_times_u0(x);
        (ju - self.u0.value(x) - t * ju) * (-t).exp()
    }

    fn kinks(&self, _t: f64) -> Vec<f64> {
        self.u0.kinks()
    }
}

/// Checks the linear subsolution and extracts the constant `C` of
/// `v(1, x) ≥ C J(x)`, recorded as constant `C`.
pub fn check_linear_subsolution(
    kernel: &KernelSpec,
    u0: &InitialShape,
    samples: &SampleGrid,
    quad_tol: f64,
) -> Result<CertificateReport, CertificateError> {
    let v = LinearSubsolution::new(kernel, u0)?;
    let residuals = evaluate_samples(&v, kernel, None, &samples.points, quad_tol)?;
    let mut report = CertificateReport::new("step1", quad_tol);
    for ((t, x), r) in samples.points.iter().zip(residuals) {
        report.samples.push(CertificateSample { t: *t, x: *x, residual: r, region: "linear", sense: Sense::AtMost });
    }
    let probe_min = probe_ratio_min(&v)?;
    report.constants.push(("probe_min".into(), probe_min));
    report.constants.push(("C".into(), 0.5 * probe_min.min(1.0)));
    Ok(report)
}

/// Minimum of `v(1, x) / J(x)` on a log-spaced probe grid in `[0, X]`,
/// where `X` stays inside the range where `J` is representable.
fn probe_ratio_min(v: &LinearSubsolution) -> Result<f64, CertificateError> {
    let kernel = &v.kernel;
    let x_max = kernel.inverse_tail(1e-250_f64.min(kernel.peak()))?.clamp(1.0, 1e6);
    let mut xs = vec![0.0];
    xs.extend(logspace(1e-2, x_max, 400));
    let ratios: Vec<f64> = xs.par_iter().map(|x| v.value(1.0, *x) / kernel.evaluate(*x)).collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0 && min.is_finite()) {
        return Err(CertificateError::Construction(format!("probe minimum of v(1,x)/J(x) is {min}")));
    }
    Ok(min)
}

// ---------------------------------------------------------------- step 2

/// Subsolution `g(C J(x) e^{ρ1 t})` outside `ξ0(t)`, plateau `λ2` inside.
#[derive(Debug, Clone)]
pub struct Step2Subsolution {
    pub kernel: KernelSpec,
    pub epsilon: f64,
    pub rho1: f64,
    pub b: f64,
    pub delta: f64,
    pub m: f64,
    pub s0: f64,
    pub c: f64,
    pub kappa: f64,
    pub s1: f64,
    pub s2: f64,
    pub lambda2: f64,
    pub xi1: f64,
    pub eps_prime: f64,
}

impl Step2Subsolution {
    pub fn g(&self, s: f64) -> f64 {
        s - self.b * s.powf(1.0 + self.delta)
    }

    pub fn g_prime(&self, s: f64) -> f64 {
        1.0 - (1.0 + self.delta) * self.b * s.powf(self.delta)
    }

    /// Plateau edge: `C J(ξ0(t)) e^{ρ1 t} = s2`.
    pub fn xi0(&self, t: f64) -> f64 {
        let y = self.s2 / self.c * (-self.rho1 * t).exp();
        self.kernel.inverse_tail(y).unwrap_or(f64::NAN)
    }

    fn argument(&self, t: f64, x: f64) -> f64 {
        (self.c.ln() + self.kernel.ln_evaluate(x) + self.rho1 * t).exp()
    }

    fn constants(&self) -> Vec<(String, f64)> {
        [
            ("epsilon", self.epsilon),
            ("rho1", self.rho1),
            ("B", self.b),
            ("delta", self.delta),
            ("M", self.m),
            ("s0", self.s0),
            ("C", self.c),
            ("kappa", self.kappa),
            ("s1", self.s1),
            ("s2", self.s2),
            ("lambda2", self.lambda2),
            ("xi1", self.xi1),
            ("eps_prime", self.eps_prime),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
    }
}

impl SpaceTimeFunction for Step2Subsolution {
    fn value(&self, t: f64, x: f64) -> f64 {
        if x.abs() <= self.xi0(t) {
            self.lambda2
        } else {
            self.g(self.argument(t, x))
        }
    }

    fn time_derivative(&self, t: f64, x: f64) -> f64 {
        if x.abs() <= self.xi0(t) {
            0.0
        } else {
            let s = self.argument(t, x);
            self.g_prime(s) * self.rho1 * s
        }
    }

    fn kinks(&self, t: f64) -> Vec<f64> {
        let xi = self.xi0(t);
        let s = self.kernel.splice_radius();
        vec![-xi, xi, -s, s, 0.0]
    }
}

/// Smallest sampled `ξ` beyond which `|J'/J| ≤ target`.
fn ratio_threshold(kernel: &KernelSpec, target: f64) -> Result<f64, CertificateError> {
    let start = kernel.splice_radius().max(1e-6) * (1.0 + 1e-12);
    let mut end = start.max(1.0);
    while kernel.log_derivative_ratio(end)? > target {
        end *= 2.0;
        if end > 1e300 {
            return Err(CertificateError::Construction(format!(
                "kernel log-derivative ratio never falls below {target:e}; the kernel is not fat-tailed"
            )));
        }
    }
    let xs = logspace(start, end * 1e3, 4000);
    let last_bad = xs.iter().rposition(|x| kernel.log_derivative_ratio(*x).map_or(true, |r| r > target));
    let (mut lo, mut hi) = match last_bad {
        None => return Ok(start),
        Some(i) => (xs[i], xs[i + 1]),
    };
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if kernel.log_derivative_ratio(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Builds the Step-2 constants from `ε`, the KPP envelope of `f` and the
/// constant `C` of the linear subsolution.
pub fn build_step2_subsolution(
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    epsilon: f64,
    c: f64,
) -> Result<Step2Subsolution, CertificateError> {
    let fp = reaction.fprime0();
    if !(epsilon > 0.0 && epsilon < fp) {
        return Err(CertificateError::InvalidParameter(format!(
            "epsilon must lie in (0, f'(0) = {fp}), got {epsilon}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(CertificateError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if !kernel.classify().exponentially_unbounded {
        return Err(CertificateError::Construction("kernel is exponentially bounded".into()));
    }
    let env = reaction.kpp_envelope_params();
    let (m, delta, s0) = (env.m, env.delta, env.s0);
    let rho1 = fp - epsilon / 2.0;
    let (_, first_moment) = kernel.mass_and_first_moment()?;
    // ε' ∫_0^∞ J(z) z dz = ε/2 with ∫_0^∞ = first_moment / 2
    let eps_prime = epsilon / first_moment;
    let xi1 = ratio_threshold(kernel, eps_prime / 2.0)?;
    let kappa = c * kernel.evaluate(xi1);
    if !(kappa > f64::MIN_POSITIVE) {
        return Err(CertificateError::Construction(format!(
            "J(xi1) underflows at xi1 = {xi1:e}; the plateau level is not representable"
        )));
    }
    let s1 = s0.min(kappa);
    let b =
        s1.powf(-delta).max(m / (rho1 * delta)).max(m * (delta / (1.0 + delta)).powf(delta) / ((1.0 + delta) * rho1));
    let s2 = ((1.0 + delta) * b).powf(-1.0 / delta);
    let lambda2 = delta / (1.0 + delta) * s2;
    Ok(Step2Subsolution { kernel: *kernel, epsilon, rho1, b, delta, m, s0, c, kappa, s1, s2, lambda2, xi1, eps_prime })
}

pub fn check_step2_subsolution(
    sub: &Step2Subsolution,
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    samples: &SampleGrid,
    quad_tol: f64,
) -> Result<CertificateReport, CertificateError> {
    let residuals = evaluate_samples(sub, kernel, Some(reaction), &samples.points, quad_tol)?;
    let mut report = CertificateReport::new("step2", quad_tol);
    report.constants = sub.constants();
    for ((t, x), r) in samples.points.iter().zip(residuals) {
        let region = if x.abs() <= sub.xi0(*t) { "plateau" } else { "outer" };
        report.samples.push(CertificateSample { t: *t, x: *x, residual: r, region, sense: Sense::AtMost });
    }
    Ok(report)
}

/// Sample grid scaled to the plateau edge: at each time, `x = 0` plus
/// log-spaced points from `0.05 ξ0(t)` to `20 ξ0(t)`.
pub fn step2_sample_grid(sub: &Step2Subsolution, times: &[f64], per_time: usize) -> SampleGrid {
    let mut points = Vec::new();
    for t in times {
        let xi = sub.xi0(*t);
        points.push((*t, 0.0));
        for x in logspace(0.05 * xi, 20.0 * xi, per_time) {
            points.push((*t, x));
        }
    }
    SampleGrid { points }
}

// ---------------------------------------------------------------- hyp 1

/// Concave profile `φ` with `φ(0) = 0`, linear on `[0, σ - τ]` and equal to
/// `(ε0 - 1) ln J(x + τ)` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiProfile {
    pub kernel: KernelSpec,
    pub sigma: f64,
    pub tau: f64,
    pub epsilon0: f64,
    pub slope: f64,
}

impl PhiProfile {
    /// Uses `σ` and `ε0` from the kernel classification and the smallest
    /// `τ ∈ [0, σ]` for which the linear extension keeps `φ` concave.
    pub fn new(kernel: &KernelSpec) -> Result<Self, CertificateError> {
        let report = kernel.classify();
        if !report.hyp1.holds {
            return Err(CertificateError::HypothesisNotSatisfied(format!(
                "the {} kernel does not satisfy the monotone log-derivative hypothesis",
                kernel.family().name()
            )));
        }
        let sigma = report.hyp1.sigma;
        let epsilon0 = report.hyp1.epsilon0;
        let g = -kernel.ln_evaluate(sigma);
        let g_prime = kernel.log_derivative_ratio(sigma * (1.0 + 1e-12))?;
        // chord slope g(σ)/(σ-τ) must dominate g'(σ)
        let tau = (sigma - g / g_prime).max(0.0);
        let junction = sigma - tau;
        let slope = (1.0 - epsilon0) * g / junction;
        Ok(PhiProfile { kernel: *kernel, sigma, tau, epsilon0, slope })
    }

    pub fn junction(&self) -> f64 {
        self.sigma - self.tau
    }

    /// `φ(|x|)`.
    pub fn phi(&self, x: f64) -> f64 {
        let r = x.abs();
        if r <= self.junction() {
            self.slope * r
        } else {
            (self.epsilon0 - 1.0) * self.kernel.ln_evaluate(r + self.tau)
        }
    }

    /// `e^{-φ(|x|)}`.
    pub fn phi_hat(&self, x: f64) -> f64 {
        (-self.phi(x)).exp()
    }

    /// `∫ J(y) e^{φ(|y|)} dy`.
    pub fn weighted_integral(&self, tol: Tolerance) -> Result<f64, CertificateError> {
        let f = |y: f64| (self.kernel.ln_evaluate(y) + self.phi(y)).exp();
        let mut cuts = vec![0.0, self.junction(), self.sigma];
        let s = self.kernel.splice_radius();
        if s > 0.0 {
            cuts.push(s);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += integrate_graded(f, w[0], w[1], GRADE_H0, tol)?.value;
        }
        total += crate::quadrature::integrate_upper_tail(f, cuts[cuts.len() - 1], tol)?.value;
        Ok(2.0 * total)
    }

    /// Smallest `y ≥ 0` with `φ(y) ≥ level`.
    fn level_crossing(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = self.junction().max(1.0);
        while self.phi(hi) < level {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if self.phi(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `min(φ̂(x)/φ̂(σ1) e^{ρ0 t}, 1)`.
#[derive(Debug, Clone)]
pub struct Hyp1Supersolution {
    pub profile: PhiProfile,
    pub integral: f64,
    pub r: f64,
    pub rho0: f64,
    pub sigma1: f64,
}

impl Hyp1Supersolution {
    fn exponent(&self, t: f64, x: f64) -> f64 {
        self.profile.phi(self.sigma1) - self.profile.phi(x) + self.rho0 * t
    }

    fn plateau_edge(&self, t: f64) -> f64 {
        self.profile.level_crossing(self.profile.phi(self.sigma1) + self.rho0 * t)
    }

    fn constants(&self) -> Vec<(String, f64)> {
        vec![
            ("sigma".into(), self.profile.sigma),
            ("tau".into(), self.profile.tau),
            ("epsilon0".into(), self.profile.epsilon0),
            ("integral".into(), self.integral),
            ("r".into(), self.r),
            ("rho0".into(), self.rho0),
            ("sigma1".into(), self.sigma1),
        ]
    }
}

impl SpaceTimeFunction for Hyp1Supersolution {
    fn value(&self, t: f64, x: f64) -> f64 {
        self.exponent(t, x).min(0.0).exp()
    }

    fn time_derivative(&self, t: f64, x: f64) -> f64 {
        let e = self.exponent(t, x);
        if e < 0.0 {
            self.rho0 * e.exp()
        } else {
            0.0
        }
    }

    fn kinks(&self, t: f64) -> Vec<f64> {
        let j = self.profile.junction();
        let y = self.plateau_edge(t);
        let s = self.profile.kernel.splice_radius();
        vec![0.0, -j, j, -y, y, -s, s]
    }
}

pub fn build_hyp1_supersolution(
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    u0_support: f64,
) -> Result<Hyp1Supersolution, CertificateError> {
    let profile = PhiProfile::new(kernel)?;
    let integral = profile.weighted_integral(Tolerance::new(0.0, 1e-12))?;
    let r = reaction.sup_per_capita_rate();
    let rho0 = integral.max(1.0) - 1.0 + r;
    Ok(Hyp1Supersolution { profile, integral, r, rho0, sigma1: u0_support })
}

pub fn check_hyp1_supersolution(
    sup: &Hyp1Supersolution,
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    samples: &SampleGrid,
    bound_points: &[f64],
    quad_tol: f64,
) -> Result<CertificateReport, CertificateError> {
    let residuals = evaluate_samples(sup, kernel, Some(reaction), &samples.points, quad_tol)?;
    let mut report = CertificateReport::new("hyp1", quad_tol);
    report.constants = sup.constants();
    for ((t, x), r) in samples.points.iter().zip(residuals) {
        let region = if sup.value(*t, *x) < 1.0 { "below_one" } else { "at_one" };
        report.samples.push(CertificateSample { t: *t, x: *x, residual: r, region, sense: Sense::AtLeast });
    }
    // (J∗φ̂)(x) ≤ φ̂(x) ∫ J/φ̂
    let p = sup.profile;
    let tol = quad_tolerance(quad_tol);
    let j = p.junction();
    let kinks = [0.0, -j, j];
    let bounds: Result<Vec<f64>, QuadError> = bound_points
        .par_iter()
        .map(|x| Ok(p.phi_hat(*x) * sup.integral - convolve_at(kernel, |y| p.phi_hat(y), *x, &kinks, tol)?))
        .collect();
    for (x, b) in bound_points.iter().zip(bounds?) {
        report.samples.push(CertificateSample {
            t: 0.0,
            x: *x,
            residual: b,
            region: "kernel_bound",
            sense: Sense::AtLeast,
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------- hyp 2

/// `(J∗J)(x) / J(x)`, evaluated in log space so that it stays finite where
/// `J(x)` underflows.
pub fn self_convolution_ratio(kernel: &KernelSpec, x: f64, tol: Tolerance) -> Result<f64, QuadError> {
    let lx = kernel.ln_evaluate(x);
    let f = |y: f64| (kernel.ln_evaluate(x - y) + kernel.ln_evaluate(y) - lx).exp();
    let mut points = vec![0.0, x, 0.5 * x];
    let s = kernel.splice_radius();
    if s > 0.0 {
        points.extend([-s, s, x - s, x + s]);
    }
    Ok(integrate_real_line(f, &points, GRADE_H0, tol)?.value)
}

/// `K = sup (J∗J)/J - 1` over a log-spaced grid of `[0, 1e6]`, refined by
/// golden-section search around the best grid point.
pub fn hyp2_constant(kernel: &KernelSpec) -> Result<f64, CertificateError> {
    let tol = Tolerance::new(0.0, 1e-12);
    let mut xs = vec![0.0];
    xs.extend(logspace(1e-2, 1e6, 321));
    let ratios: Result<Vec<f64>, QuadError> = xs.par_iter().map(|x| self_convolution_ratio(kernel, *x, tol)).collect();
    let ratios = ratios?;
    let (best, _) = ratios.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(xs.len() - 1)];
    let mut err = None;
    let (_, refined) = golden_section_max(
        |x| match self_convolution_ratio(kernel, x, tol) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        1e-10,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok((refined.max(ratios[best]) - 1.0).max(0.0))
}

/// `min(J(x)/J(σ1) e^{ρ0 t}, 1)`.
#[derive(Debug, Clone)]
pub struct Hyp2Supersolution {
    pub kernel: KernelSpec,
    pub k: f64,
    pub r: f64,
    pub rho0: f64,
    pub sigma1: f64,
}

impl Hyp2Supersolution {
    fn exponent(&self, t: f64, x: f64) -> f64 {
        self.kernel.ln_evaluate(x) - self.kernel.ln_evaluate(self.sigma1) + self.rho0 * t
    }

    fn constants(&self) -> Vec<(String, f64)> {
        vec![("K".into(), self.k), ("r".into(), self.r), ("rho0".into(), self.rho0), ("sigma1".into(), self.sigma1)]
    }
}

impl SpaceTimeFunction for Hyp2Supersolution {
    fn value(&self, t: f64, x: f64) -> f64 {
        self.exponent(t, x).min(0.0).exp()
    }

    fn time_derivative(&self, t: f64, x: f64) -> f64 {
        let e = self.exponent(t, x);
        if e < 0.0 {
            self.rho0 * e.exp()
        } else {
            0.0
        }
    }

    fn kinks(&self, t: f64) -> Vec<f64> {
        let y = (self.kernel.ln_evaluate(self.sigma1) - self.rho0 * t).exp();
        let edge = self.kernel.inverse_tail(y.min(self.kernel.peak())).unwrap_or(0.0);
        let s = self.kernel.splice_radius();
        vec![0.0, -edge, edge, -s, s]
    }
}

pub fn build_hyp2_supersolution(
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    u0_support: f64,
) -> Result<Hyp2Supersolution, CertificateError> {
    if !kernel.classify().hyp2.holds {
        return Err(CertificateError::HypothesisNotSatisfied(format!(
            "the {} kernel does not satisfy the O(1/|x|) log-derivative hypothesis",
            kernel.family().name()
        )));
    }
    let k = hyp2_constant(kernel)?;
    let r = reaction.sup_per_capita_rate();
    let mut sigma1 = u0_support;
    if kernel.evaluate(sigma1) > 1.0 {
        sigma1 = kernel.inverse_tail(1.0)?;
    }
    Ok(Hyp2Supersolution { kernel: *kernel, k, r, rho0: r + k, sigma1 })
}

pub fn check_hyp2_supersolution(
    sup: &Hyp2Supersolution,
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    samples: &SampleGrid,
    bound_points: &[f64],
    quad_tol: f64,
) -> Result<CertificateReport, CertificateError> {
    let residuals = evaluate_samples(sup, kernel, Some(reaction), &samples.points, quad_tol)?;
    let mut report = CertificateReport::new("hyp2", quad_tol);
    report.constants = sup.constants();
    for ((t, x), r) in samples.points.iter().zip(residuals) {
        let region = if sup.value(*t, *x) < 1.0 { "below_one" } else { "at_one" };
        report.samples.push(CertificateSample { t: *t, x: *x, residual: r, region, sense: Sense::AtLeast });
    }
    let tol = Tolerance::new(0.0, 1e-12);
    let ratios: Result<Vec<f64>, QuadError> =
        bound_points.par_iter().map(|x| self_convolution_ratio(kernel, *x, tol)).collect();
    for (x, q) in bound_points.iter().zip(ratios?) {
        report.samples.push(CertificateSample {
            t: 0.0,
            x: *x,
            residual: 1.0 + sup.k - q,
            region: "kernel_bound",
            sense: Sense::AtLeast,
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------- suite

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    Step1,
    Step2,
    Hyp1,
    Hyp2,
}

impl Construction {
    pub const ALL: [Construction; 4] =
        [Construction::Step1, Construction::Step2, Construction::Hyp1, Construction::Hyp2];

    pub fn name(&self) -> &'static str {
        match self {
            Construction::Step1 => "step1",
            Construction::Step2 => "step2",
            Construction::Hyp1 => "hyp1",
            Construction::Hyp2 => "hyp2",
        }
    }
}

impl std::str::FromStr for Construction {
    type Err = CertificateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Construction::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CertificateError::InvalidParameter(format!("unknown construction {s:?}")))
    }
}

/// Constructions whose hypotheses the kernel satisfies.
pub fn applicable_constructions(kernel: &KernelSpec) -> Vec<Construction> {
    let report = kernel.classify();
    let mut out = vec![Construction::Step1];
    if report.exponentially_unbounded {
        out.push(Construction::Step2);
    }
    if report.hyp1.holds {
        out.push(Construction::Hyp1);
    }
    if report.hyp2.holds {
        out.push(Construction::Hyp2);
    }
    out
}

fn default_step2_epsilon() -> f64 {
    0.5
}
fn default_quad_tol() -> f64 {
    1e-8
}
fn default_sample_count() -> usize {
    20
}
fn default_sample_t_max() -> f64 {
    5.0
}
fn default_sample_x_max() -> f64 {
    1e3
}
fn default_bound_points() -> usize {
    50
}

/// Sampling and tolerance settings of a certificate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteOptions {
    /// `ε` of the Step-2 construction.
    #[serde(default = "default_step2_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_sample_count")]
    pub t_samples: usize,
    #[serde(default = "default_sample_count")]
    pub x_samples: usize,
    #[serde(default = "default_sample_t_max")]
    pub t_max: f64,
    /// Outer end of the log-spaced `x` samples.
    #[serde(default = "default_sample_x_max")]
    pub x_max: f64,
    /// Points for the kernel inequalities of the supersolutions.
    #[serde(default = "default_bound_points")]
    pub bound_points: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            epsilon: default_step2_epsilon(),
            quad_tol: default_quad_tol(),
            t_samples: default_sample_count(),
            x_samples: default_sample_count(),
            t_max: default_sample_t_max(),
            x_max: default_sample_x_max(),
            bound_points: default_bound_points(),
        }
    }
}

impl SuiteOptions {
    /// `t` linear in `[0, t_max]`; `x = 0` plus log-spaced points up to `x_max`.
    pub fn sample_grid(&self) -> SampleGrid {
        let times = linspace(0.0, self.t_max, self.t_samples);
        let mut xs = vec![0.0];
        xs.extend(logspace(0.1, self.x_max, self.x_samples.saturating_sub(1).max(1)));
        SampleGrid::product(&times, &xs)
    }

    fn bound_grid(&self) -> Vec<f64> {
        logspace(0.1, 100.0 * self.x_max, self.bound_points.max(2))
    }
}

/// Runs the requested constructions in order. Step 2 takes `C` from the
/// Step-1 probe.
pub fn run_suite(
    kernel: &KernelSpec,
    reaction: &ReactionSpec,
    u0: &InitialShape,
    constructions: &[Construction],
    opts: &SuiteOptions,
) -> Result<Vec<CertificateReport>, CertificateError> {
    let grid = opts.sample_grid();
    let mut c_const = None;
    let mut out = Vec::new();
    for c in constructions {
        let report = match c {
            Construction::Step1 => {
                let rep = check_linear_subsolution(kernel, u0, &grid, opts.quad_tol)?;
                c_const = rep.constant("C");
                rep
            }
            Construction::Step2 => {
                let c = match c_const {
                    Some(c) => c,
                    None => 0.5 * probe_ratio_min(&LinearSubsolution::new(kernel, u0)?)?.min(1.0),
                };
                let sub = build_step2_subsolution(kernel, reaction, opts.epsilon, c)?;
                let g = step2_sample_grid(
                    &sub,
                    &linspace(0.0, opts.t_max, opts.t_samples),
                    opts.x_samples.saturating_sub(1).max(1),
                );
                check_step2_subsolution(&sub, kernel, reaction, &g, opts.quad_tol)?
            }
            Construction::Hyp1 => {
                let sup = build_hyp1_supersolution(kernel, reaction, u0.support_radius())?;
                check_hyp1_supersolution(&sup, kernel, reaction, &grid, &opts.bound_grid(), opts.quad_tol)?
            }
            Construction::Hyp2 => {
                let sup = build_hyp2_supersolution(kernel, reaction, u0.support_radius())?;
                check_hyp2_supersolution(&sup, kernel, reaction, &grid, &opts.bound_grid(), opts.quad_tol)?
            }
        };
        out.push(report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::catalog::*;
    use crate::reaction::ReactionFamily;
    use approx::assert_relative_eq;

    fn k(f: crate::kernels::KernelFamily) -> KernelSpec {
        KernelSpec::new(f).unwrap()
    }

    fn logistic() -> ReactionSpec {
        ReactionSpec::new(ReactionFamily::Logistic).unwrap()
    }

    struct One;
    impl SpaceTimeFunction for One {
        fn value(&self, _t: f64, _x: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn constant_one_has_zero_residual() {
        for f in [LAPLACE_UNIT, STRETCHED_SQRT, ALGEBRAIC_CUBIC, LOG_SUBLINEAR_UNIT] {
            let r = residual(&One, &k(f), Some(&logistic()), 0.0, 3.0, 1e-9).unwrap();
            assert!(r.abs() < 1e-10, "{f:?}: {r}");
        }
    }

    #[test]
    fn linear_subsolution_vanishes_at_time_zero() {
        let kern = k(LAPLACE_UNIT);
        let v = LinearSubsolution::new(&kern, &InitialShape::Bump { radius: 10.0 }).unwrap();
        for x in [0.0, 5.0, 12.0] {
            let r = residual(&v, &kern, None, 0.0, x, 1e-9).unwrap();
            assert!(r.abs() < 1e-12, "x = {x}: {r}");
        }
    }

    #[test]
    fn laplace_j_times_bump_closed_form() {
        // (1/2)∫ e^{-|y|}(1 - y²/100) dy over [-10, 10] at x = 0
        let kern = k(LAPLACE_UNIT);
        let v = LinearSubsolution::new(&kern, &InitialShape::Bump { radius: 10.0 }).unwrap();
        let e10 = (-10.0f64).exp();
        // ∫_0^10 e^{-y}(1 - y²/100) dy = (1 - e^{-10}) - (2 - e^{-10}(100 + 20 + 2))/100
        let half = (1.0 - e10) - (2.0 - e10 * 122.0) / 100.0;
        assert_relative_eq!(v.kernel_times_u0(0.0), half, max_relative = 1e-12);
    }

    #[test]
    fn step2_constants_for_reference_kernel() {
        let kern = k(STRETCHED_SQRT);
        let sub = build_step2_subsolution(&kern, &logistic(), 0.5, 0.5).unwrap();
        assert_eq!(sub.rho1, 0.75);
        // ∫_0^∞ z e^{-√z}/4 dz = 3, so ε' = 0.25 / 3
        assert_relative_eq!(sub.eps_prime, 1.0 / 12.0, max_relative = 1e-12);
        // |J'/J| = 1/(2√x) = ε'/2 at x = 144
        assert_relative_eq!(sub.xi1, 144.0, max_relative = 1e-9);
        assert_relative_eq!(sub.s2, 1.0 / (2.0 * sub.b), max_relative = 1e-14);
        assert_relative_eq!(sub.lambda2, 0.5 / (2.0 * sub.b), max_relative = 1e-14);
        assert!(sub.s2 < sub.s1 && sub.s1 <= sub.s0);
        assert!(sub.g_prime(sub.s2).abs() < 1e-12);
        assert_relative_eq!(sub.c * kern.evaluate(sub.xi0(0.0)), sub.s2, max_relative = 1e-10);
        assert!(sub.xi0(1.0) > sub.xi0(0.0));
    }

    #[test]
    fn step2_rejects_bad_inputs() {
        let r = logistic();
        assert!(build_step2_subsolution(&k(LAPLACE_UNIT), &r, 0.5, 0.5).is_err());
        assert!(build_step2_subsolution(&k(STRETCHED_SQRT), &r, 1.0, 0.5).is_err());
        assert!(build_step2_subsolution(&k(STRETCHED_SQRT), &r, 0.5, 0.0).is_err());
    }

    #[test]
    fn phi_profile_properties() {
        for f in [STRETCHED_SQRT, ALGEBRAIC_CUBIC, LOG_SUBLINEAR_UNIT] {
            let p = PhiProfile::new(&k(f)).unwrap();
            assert_eq!(p.phi(0.0), 0.0);
            assert!((0.0..=p.sigma).contains(&p.tau));
            // continuity at the junction
            let j = p.junction();
            assert!((p.phi(j) - p.phi(j * (1.0 + 1e-12))).abs() < 1e-9);
            let xs = linspace(0.0, 50.0 * p.sigma, 2001);
            for w in xs.windows(3) {
                assert!(p.phi(w[0]) - 2.0 * p.phi(w[1]) + p.phi(w[2]) <= 1e-10);
                assert!(p.phi(w[1]) >= p.phi(w[0]));
            }
            for &x in xs.iter().step_by(97) {
                for &y in xs.iter().step_by(89).filter(|y| **y >= x) {
                    assert!(p.phi(y) - p.phi(x) <= p.phi(y - x) + 1e-10);
                }
            }
        }
    }

    #[test]
    fn phi_requires_hypothesis() {
        assert!(matches!(PhiProfile::new(&k(LAPLACE_UNIT)), Err(CertificateError::HypothesisNotSatisfied(_))));
    }

    #[test]
    fn hyp2_ratio_at_zero_is_l2_norm_over_peak() {
        // ∫ (1+|y|)^{-6} dy = 2/5, J(0) = 1
        let kern = k(ALGEBRAIC_CUBIC);
        let q = self_convolution_ratio(&kern, 0.0, Tolerance::new(0.0, 1e-12)).unwrap();
        assert_relative_eq!(q, 0.4, max_relative = 1e-11);
    }

    #[test]
    fn hyp2_ratio_approaches_two_far_out() {
        let kern = k(ALGEBRAIC_CUBIC);
        let q = self_convolution_ratio(&kern, 1e6, Tolerance::new(0.0, 1e-12)).unwrap();
        assert!((q - 2.0).abs() < 1e-3, "{q}");
        let bound = 1.0 + (101.0f64 / 51.0).powi(3);
        let q = self_convolution_ratio(&kern, 100.0, Tolerance::new(0.0, 1e-12)).unwrap();
        assert!(q <= bound);
    }

    #[test]
    fn report_verdict_follows_samples() {
        let mut r = CertificateReport::new("x", 1e-8);
        r.samples.push(CertificateSample { t: 0.0, x: 0.0, residual: -1.0, region: "a", sense: Sense::AtMost });
        assert!(r.verdict());
        r.samples.push(CertificateSample { t: 0.0, x: 1.0, residual: -1e-7, region: "a", sense: Sense::AtLeast });
        assert!(!r.verdict());
        assert_eq!(r.worst().unwrap().x, 1.0);
    }
}
