//! Dispersal kernels: the four built-in families, normalization to unit mass,
//! tail and moment helpers, and classification against the fat-tail
//! hypotheses used by the envelope theorems.
//!
//! Every family is given by a formula valid for large `|x|`. Inside
//! `splice_radius` the density is held at the formula value at the splice,
//! which keeps `J` even, continuous and nonincreasing in `|x|`. The user
//! constant `C` is kept as given and a separate multiplier brings the total
//! mass to one.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};
use thiserror::Error;

use crate::quadrature::{integrate, integrate_upper_tail, QuadError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("value {y:e} is outside (0, J(0)] with J(0) = {peak:e}")]
    OutOfRange { y: f64, peak: f64 },
    #[error("x = {x} lies inside the splice region |x| <= {splice}")]
    Domain { x: f64, splice: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Family formulas, written for `|x|` beyond the splice radius.
///
/// * `LogSublinear`: `C exp(-α|x| / ln|x|)`
/// * `StretchedExp`: `C exp(-β|x|^α)`, `0 < α < 1`
/// * `Algebraic`: `C (1 + |x|)^(-α)`, `α > 2`
/// * `Laplace`: `C exp(-rate |x|)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    LogSublinear { alpha: f64, c: f64 },
    StretchedExp { alpha: f64, beta: f64, c: f64 },
    Algebraic { alpha: f64, c: f64 },
    Laplace { rate: f64, c: f64 },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::LogSublinear { .. } => "log_sublinear",
            KernelFamily::StretchedExp { .. } => "stretched_exp",
            KernelFamily::Algebraic { .. } => "algebraic",
            KernelFamily::Laplace { .. } => "laplace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp1Report {
    pub holds: bool,
    /// Start of the region where `|J'/J|` is nonincreasing and `J < 1`.
    pub sigma: f64,
    pub epsilon0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2Report {
    pub holds: bool,
    /// Bound on `|x| |J'(x)/J(x)|`; infinite when the hypothesis fails.
    pub ratio_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisReport {
    pub exponentially_unbounded: bool,
    pub hyp1: Hyp1Report,
    pub hyp2: Hyp2Report,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    splice_radius: f64,
    core_value: f64,
    normalization: f64,
}

fn positive(name: &str, v: f64) -> Result<(), KernelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("{name} must be finite and positive, got {v}")))
    }
}

const TAIL_TOL: Tolerance = Tolerance::new(0.0, 1e-13);

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Result<Self, KernelError> {
        let splice_radius = match family {
            KernelFamily::LogSublinear { alpha, c } => {
                positive("alpha", alpha)?;
                positive("C", c)?;
                std::f64::consts::E * std::f64::consts::E
            }
            KernelFamily::StretchedExp { alpha, beta, c } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
                positive("C", c)?;
                if alpha >= 1.0 {
                    return Err(KernelError::InvalidParameter(format!(
                        "stretched exponent alpha must lie in (0, 1), got {alpha}"
                    )));
                }
                0.0
            }
            KernelFamily::Algebraic { alpha, c } => {
                positive("alpha", alpha)?;
                positive("C", c)?;
                if alpha <= 2.0 {
                    return Err(KernelError::Divergent(format!(
                        "algebraic kernel needs alpha > 2 for a finite first moment, got {alpha}"
                    )));
                }
                0.0
            }
            KernelFamily::Laplace { rate, c } => {
                positive("rate", rate)?;
                positive("C", c)?;
                0.0
            }
        };
        let mut spec = KernelSpec { family, splice_radius, core_value: 0.0, normalization: 1.0 };
        let raw_core = spec.raw(splice_radius);
        let raw_mass = 2.0 * (splice_radius * raw_core + spec.raw_tail(splice_radius)?);
        spec.normalization = 1.0 / raw_mass;
        spec.core_value = spec.normalization * raw_core;
        Ok(spec)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn splice_radius(&self) -> f64 {
        self.splice_radius
    }

    pub fn core_value(&self) -> f64 {
        self.core_value
    }

    /// Multiplier applied to the family formula so that the mass is one.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `J(0)`, the maximum of the kernel.
    pub fn peak(&self) -> f64 {
        self.core_value
    }

    fn raw(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::LogSublinear { alpha, c } => c * (-alpha * r / r.ln()).exp(),
            KernelFamily::StretchedExp { alpha, beta, c } => c * (-beta * r.powf(alpha)).exp(),
            KernelFamily::Algebraic { alpha, c } => c * (1.0 + r).powf(-alpha),
            KernelFamily::Laplace { rate, c } => c * (-rate * r).exp(),
        }
    }

    fn ln_raw(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::LogSublinear { alpha, c } => c.ln() - alpha * r / r.ln(),
            KernelFamily::StretchedExp { alpha, beta, c } => c.ln() - beta * r.powf(alpha),
            KernelFamily::Algebraic { alpha, c } => c.ln() - alpha * (1.0 + r).ln(),
            KernelFamily::Laplace { rate, c } => c.ln() - rate * r,
        }
    }

    /// `∫_a^∞` of the unnormalized formula, `a ≥ splice_radius`.
    fn raw_tail(&self, a: f64) -> Result<f64, KernelError> {
        Ok(match self.family {
            KernelFamily::LogSublinear { .. } => integrate_upper_tail(|x| self.raw(x), a, TAIL_TOL)?.value,
            KernelFamily::StretchedExp { alpha, beta, c } => {
                let s = 1.0 / alpha;
                let q = if a > 0.0 { gamma_ur(s, beta * a.powf(alpha)) } else { 1.0 };
                c * gamma(s) * q / (alpha * beta.powf(s))
            }
            KernelFamily::Algebraic { alpha, c } => c * (1.0 + a).powf(1.0 - alpha) / (alpha - 1.0),
            KernelFamily::Laplace { rate, c } => c * (-rate * a).exp() / rate,
        })
    }

    /// `∫_a^∞ x·J_raw(x) dx`, `a ≥ splice_radius`.
    fn raw_first_moment_tail(&self, a: f64) -> Result<f64, KernelError> {
        Ok(match self.family {
            KernelFamily::LogSublinear { .. } => integrate_upper_tail(|x| x * self.raw(x), a, TAIL_TOL)?.value,
            KernelFamily::StretchedExp { alpha, beta, c } => {
                let s = 2.0 / alpha;
                let q = if a > 0.0 { gamma_ur(s, beta * a.powf(alpha)) } else { 1.0 };
                c * gamma(s) * q / (alpha * beta.powf(s))
            }
            KernelFamily::Algebraic { alpha, c } => {
                let b = 1.0 + a;
                c * (b.powf(2.0 - alpha) / (alpha - 2.0) - b.powf(1.0 - alpha) / (alpha - 1.0))
            }
            KernelFamily::Laplace { rate, c } => c * (-rate * a).exp() * (a / rate + 1.0 / (rate * rate)),
        })
    }

    /// `J(x)`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let r = x.abs();
        if r <= self.splice_radius {
            self.core_value
        } else {
            self.normalization * self.raw(r)
        }
    }

    /// `ln J(x)`, usable far beyond the range where `J` underflows.
    pub fn ln_evaluate(&self, x: f64) -> f64 {
        let r = x.abs().max(self.splice_radius);
        self.normalization.ln() + self.ln_raw(r)
    }

    /// `∫_a^∞ J` for `a ≥ 0`; for negative `a` the complement is returned.
    pub fn tail_mass(&self, a: f64) -> Result<f64, KernelError> {
        if a < 0.0 {
            return Ok(1.0 - self.tail_mass(-a)?);
        }
        let s = self.splice_radius;
        if a < s {
            Ok(self.core_value * (s - a) + self.normalization * self.raw_tail(s)?)
        } else {
            Ok(self.normalization * self.raw_tail(a)?)
        }
    }

    /// `∫_a^b J` for `0 ≤ a ≤ b`, computed directly on the interval.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64, KernelError> {
        debug_assert!(0.0 <= a && a <= b);
        let s = self.splice_radius;
        let tol = Tolerance::new(0.0, 1e-13);
        let mut total = 0.0;
        if a < s {
            total += self.core_value * (b.min(s) - a);
        }
        let lo = a.max(s);
        if b > lo {
            total += integrate(|x| self.evaluate(x), lo, b, tol)?.value;
        }
        Ok(total)
    }

    /// `(∫ J, ∫ |x| J)` from closed forms per family.
    pub fn mass_and_first_moment(&self) -> Result<(f64, f64), KernelError> {
        let s = self.splice_radius;
        let mass = 2.0 * (self.core_value * s + self.normalization * self.raw_tail(s)?);
        let moment = 2.0 * (self.core_value * s * s / 2.0 + self.normalization * self.raw_first_moment_tail(s)?);
        if !moment.is_finite() {
            return Err(KernelError::Divergent("first moment is infinite".into()));
        }
        Ok((mass, moment))
    }

    /// The unique `x ≥ 0` with `J(x) = y`; `0` when `y = J(0)`.
    pub fn inverse_tail(&self, y: f64) -> Result<f64, KernelError> {
        let peak = self.core_value;
        if !(y > 0.0 && y <= peak) {
            return Err(KernelError::OutOfRange { y, peak });
        }
        if y == peak {
            return Ok(0.0);
        }
        self.inverse_ln_tail(y.ln())
    }

    /// The `x ≥ 0` with `ln J(x) = ln_y`, for levels below the `f64` range;
    /// `0` when `ln_y ≥ ln J(0)`.
    pub fn inverse_ln_tail(&self, ln_y: f64) -> Result<f64, KernelError> {
        if ln_y.is_nan() {
            return Err(KernelError::OutOfRange { y: f64::NAN, peak: self.core_value });
        }
        if ln_y >= self.core_value.ln() {
            return Ok(0.0);
        }
        // log of the target for the unnormalized formula
        let ln_target = ln_y - self.normalization.ln();
        let x = match self.family {
            KernelFamily::StretchedExp { alpha, beta, c } => ((c.ln() - ln_target) / beta).powf(1.0 / alpha),
            KernelFamily::Algebraic { alpha, c } => ((c.ln() - ln_target) / alpha).exp() - 1.0,
            KernelFamily::Laplace { rate, c } => (c.ln() - ln_target) / rate,
            KernelFamily::LogSublinear { .. } => self.bisect_inverse(ln_target),
        };
        Ok(x.max(0.0))
    }

    fn bisect_inverse(&self, ln_target: f64) -> f64 {
        let mut lo = self.splice_radius;
        let mut hi = (2.0 * lo).max(1.0);
        while self.ln_raw(hi) >= ln_target {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if self.ln_raw(mid) >= ln_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `|J'(x)/J(x)|` from the family formula; only defined beyond the splice.
    pub fn log_derivative_ratio(&self, x: f64) -> Result<f64, KernelError> {
        let r = x.abs();
        if r <= self.splice_radius || r == 0.0 {
            return Err(KernelError::Domain { x, splice: self.splice_radius });
        }
        Ok(match self.family {
            KernelFamily::LogSublinear { alpha, .. } => {
                let l = r.ln();
                alpha * (l - 1.0) / (l * l)
            }
            KernelFamily::StretchedExp { alpha, beta, .. } => alpha * beta * r.powf(alpha - 1.0),
            KernelFamily::Algebraic { alpha, .. } => alpha / (1.0 + r),
            KernelFamily::Laplace { rate, .. } => rate,
        })
    }

    /// Analytic classification against the fat-tail hypotheses.
    pub fn classify(&self) -> HypothesisReport {
        let (unbounded, epsilon0, hyp2) = match self.family {
            KernelFamily::LogSublinear { .. } => (true, 0.5, None),
            KernelFamily::StretchedExp { .. } => (true, 0.5, None),
            KernelFamily::Algebraic { alpha, .. } => (true, 0.5 * (1.0 + 1.0 / alpha), Some(alpha)),
            KernelFamily::Laplace { .. } => (false, 0.5, None),
        };
        // the ratio is nonincreasing beyond max(splice, 1) for every fat-tailed family
        let mut sigma = self.splice_radius.max(1.0);
        if self.evaluate(sigma) >= 1.0 {
            let at_one = self.inverse_tail(1.0).unwrap_or(sigma);
            sigma = sigma.max(at_one * (1.0 + 1e-6) + 1e-9);
        }
        HypothesisReport {
            exponentially_unbounded: unbounded,
            hyp1: Hyp1Report { holds: unbounded, sigma, epsilon0 },
            hyp2: Hyp2Report { holds: hyp2.is_some(), ratio_bound: hyp2.unwrap_or(f64::INFINITY) },
        }
    }

    /// Restriction to `[-A, A]` carrying mass `1 - eps`, renormalized.
    pub fn truncate(&self, eps: f64) -> Result<TruncatedKernel, KernelError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(KernelError::InvalidParameter(format!("truncation eps must lie in (0, 1), got {eps}")));
        }
        let half = 0.5 * eps;
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.tail_mass(hi)? > half {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-13 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid)? > half {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a_eps = 0.5 * (lo + hi);
        Ok(TruncatedKernel { parent: *self, eps, a_eps, d_eps: 1.0 - eps })
    }

    /// `∫ J(z) e^{ηz} dz` over the whole line.
    pub fn exponential_moment(&self, eta: f64) -> Result<f64, KernelError> {
        if !(eta >= 0.0) {
            return Err(KernelError::InvalidParameter(format!("eta must be nonnegative, got {eta}")));
        }
        if eta == 0.0 {
            return Ok(self.mass_and_first_moment()?.0);
        }
        match self.family {
            KernelFamily::Laplace { rate, c } if eta < rate => {
                Ok(2.0 * self.normalization * c * rate / (rate * rate - eta * eta))
            }
            _ => Err(KernelError::Divergent(format!(
                "exponential moment at eta = {eta} is infinite for the {} kernel",
                self.family.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedKernel {
    parent: KernelSpec,
    eps: f64,
    a_eps: f64,
    d_eps: f64,
}

impl TruncatedKernel {
    pub fn parent(&self) -> &KernelSpec {
        &self.parent
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn a_eps(&self) -> f64 {
        self.a_eps
    }

    pub fn d_eps(&self) -> f64 {
        self.d_eps
    }

    /// `J_ε(x) = J(x) 1_{|x| ≤ A} / D`.
    pub fn evaluate(&self, x: f64) -> f64 {
        if x.abs() <= self.a_eps {
            self.parent.evaluate(x) / self.d_eps
        } else {
            0.0
        }
    }

    /// `∫ J_ε(z) e^{ηz} dz`.
    pub fn exponential_moment(&self, eta: f64) -> Result<f64, KernelError> {
        if !(eta >= 0.0) {
            return Err(KernelError::InvalidParameter(format!("eta must be nonnegative, got {eta}")));
        }
        let k = &self.parent;
        let f = |z: f64| k.evaluate(z) * (eta * z).cosh();
        let tol = Tolerance::new(0.0, 1e-13);
        let s = k.splice_radius().min(self.a_eps);
        let mut total = integrate(f, 0.0, s, tol)?.value;
        total += integrate(f, s, self.a_eps, tol)?.value;
        Ok(2.0 * total / self.d_eps)
    }
}

/// Kernels whose weighted moment `D ∫ J e^{ηz} dz` enters the minimal-speed
/// formula; `D = 1` for untruncated kernels.
pub trait DispersalMoment {
    fn weighted_moment(&self, eta: f64) -> Result<f64, KernelError>;
}

impl DispersalMoment for KernelSpec {
    fn weighted_moment(&self, eta: f64) -> Result<f64, KernelError> {
        self.exponential_moment(eta)
    }
}

impl DispersalMoment for TruncatedKernel {
    fn weighted_moment(&self, eta: f64) -> Result<f64, KernelError> {
        Ok(self.d_eps * self.exponential_moment(eta)?)
    }
}

/// Built-in kernels used by the reference experiments.
pub mod catalog {
    use super::KernelFamily;

    /// `(1/4) e^{-√|x|}`.
    pub const STRETCHED_SQRT: KernelFamily = KernelFamily::StretchedExp { alpha: 0.5, beta: 1.0, c: 0.25 };
    /// `(1 + |x|)^{-3}`.
    pub const ALGEBRAIC_CUBIC: KernelFamily = KernelFamily::Algebraic { alpha: 3.0, c: 1.0 };
    /// `(1/2) e^{-|x|}`.
    pub const LAPLACE_UNIT: KernelFamily = KernelFamily::Laplace { rate: 1.0, c: 0.5 };
    /// `e^{-|x| / ln|x|}` (renormalized).
    pub const LOG_SUBLINEAR_UNIT: KernelFamily = KernelFamily::LogSublinear { alpha: 1.0, c: 1.0 };
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;
    use approx::assert_relative_eq;

    fn k(f: KernelFamily) -> KernelSpec {
        KernelSpec::new(f).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(k(LAPLACE_UNIT).evaluate(0.0), 0.5);
        assert_relative_eq!(k(STRETCHED_SQRT).evaluate(4.0), 0.25 * (-2.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(k(ALGEBRAIC_CUBIC).evaluate(1.0), 0.125, max_relative = 1e-14);
    }

    #[test]
    fn reference_kernels_need_no_rescaling() {
        for f in [STRETCHED_SQRT, ALGEBRAIC_CUBIC, LAPLACE_UNIT] {
            assert_relative_eq!(k(f).normalization(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn masses_and_moments() {
        let (m, m1) = k(ALGEBRAIC_CUBIC).mass_and_first_moment().unwrap();
        assert_relative_eq!(m, 1.0, max_relative = 1e-12);
        assert_relative_eq!(m1, 1.0, max_relative = 1e-12);
        let (m, m1) = k(STRETCHED_SQRT).mass_and_first_moment().unwrap();
        assert_relative_eq!(m, 1.0, max_relative = 1e-12);
        // 2 * (1/4) * ∫ x e^{-√x} dx = (1/2) * 2Γ(4) = 6
        assert_relative_eq!(m1, 6.0, max_relative = 1e-12);
        let (m, m1) = k(LAPLACE_UNIT).mass_and_first_moment().unwrap();
        assert_relative_eq!(m, 1.0, max_relative = 1e-14);
        assert_relative_eq!(m1, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn log_sublinear_mass_matches_direct_quadrature() {
        let ker = k(LOG_SUBLINEAR_UNIT);
        let s = ker.splice_radius();
        let core = 2.0 * s * ker.evaluate(0.0);
        let tail = 2.0 * integrate_upper_tail(|x| ker.evaluate(x), s, Tolerance::relative(1e-13)).unwrap().value;
        assert_relative_eq!(core + tail, 1.0, max_relative = 1e-10);
        assert_relative_eq!(ker.mass_and_first_moment().unwrap().0, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn divergent_and_invalid_parameters() {
        assert!(matches!(
            KernelSpec::new(KernelFamily::Algebraic { alpha: 2.0, c: 1.0 }),
            Err(KernelError::Divergent(_))
        ));
        assert!(KernelSpec::new(KernelFamily::StretchedExp { alpha: 1.0, beta: 1.0, c: 1.0 }).is_err());
        assert!(KernelSpec::new(KernelFamily::Laplace { rate: -1.0, c: 1.0 }).is_err());
        assert!(KernelSpec::new(KernelFamily::LogSublinear { alpha: 1.0, c: f64::NAN }).is_err());
    }

    #[test]
    fn inverse_tail_examples() {
        let x = k(STRETCHED_SQRT).inverse_tail((-10.0f64).exp()).unwrap();
        assert_relative_eq!(x, (10.0 - 4.0f64.ln()).powi(2), max_relative = 1e-12);
        assert_relative_eq!(k(LAPLACE_UNIT).inverse_tail(0.25).unwrap(), 2.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(k(ALGEBRAIC_CUBIC).inverse_tail(1.0 / 64.0).unwrap(), 3.0, max_relative = 1e-12);
        assert_eq!(k(LAPLACE_UNIT).inverse_tail(0.5).unwrap(), 0.0);
        assert!(k(LAPLACE_UNIT).inverse_tail(0.6).is_err());
        assert!(k(LAPLACE_UNIT).inverse_tail(0.0).is_err());
    }

    #[test]
    fn log_sublinear_inverse_round_trip() {
        let ker = k(LOG_SUBLINEAR_UNIT);
        for y in [ker.peak() * 0.5, 1e-5, 1e-40] {
            let x = ker.inverse_tail(y).unwrap();
            assert_relative_eq!(ker.evaluate(x), y, max_relative = 1e-9);
        }
    }

    #[test]
    fn log_derivative_examples() {
        assert_eq!(k(LAPLACE_UNIT).log_derivative_ratio(3.0).unwrap(), 1.0);
        assert_relative_eq!(k(STRETCHED_SQRT).log_derivative_ratio(4.0).unwrap(), 0.25, max_relative = 1e-14);
        assert_relative_eq!(k(ALGEBRAIC_CUBIC).log_derivative_ratio(2.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!(matches!(k(LOG_SUBLINEAR_UNIT).log_derivative_ratio(3.0), Err(KernelError::Domain { .. })));
    }

    #[test]
    fn log_derivative_matches_finite_difference() {
        for f in [STRETCHED_SQRT, ALGEBRAIC_CUBIC, LAPLACE_UNIT, LOG_SUBLINEAR_UNIT] {
            let ker = k(f);
            for x in [12.0, 50.0, 400.0] {
                let h = 1e-5 * x;
                let fd = -(ker.ln_evaluate(x + h) - ker.ln_evaluate(x - h)) / (2.0 * h);
                assert_relative_eq!(ker.log_derivative_ratio(x).unwrap(), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn classification_examples() {
        let r = k(STRETCHED_SQRT).classify();
        assert!(r.exponentially_unbounded && r.hyp1.holds && !r.hyp2.holds);
        let r = k(ALGEBRAIC_CUBIC).classify();
        assert!(r.exponentially_unbounded && r.hyp1.holds && r.hyp2.holds);
        assert_relative_eq!(r.hyp1.epsilon0, 2.0 / 3.0);
        assert_eq!(r.hyp2.ratio_bound, 3.0);
        let r = k(LAPLACE_UNIT).classify();
        assert!(!r.exponentially_unbounded && !r.hyp1.holds && !r.hyp2.holds);
        let r = k(LOG_SUBLINEAR_UNIT).classify();
        assert!(r.exponentially_unbounded && r.hyp1.holds && !r.hyp2.holds);
    }

    #[test]
    fn hyp1_sigma_has_monotone_ratio_and_small_kernel() {
        for f in [STRETCHED_SQRT, ALGEBRAIC_CUBIC, LOG_SUBLINEAR_UNIT] {
            let ker = k(f);
            let sigma = ker.classify().hyp1.sigma;
            assert!(ker.evaluate(sigma) < 1.0);
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let x = sigma * (1.0 + 0.05 * i as f64) + 1e-9;
                let r = ker.log_derivative_ratio(x).unwrap();
                assert!(r <= prev + 1e-15);
                prev = r;
            }
        }
    }

    #[test]
    fn truncate_examples() {
        let t = k(LAPLACE_UNIT).truncate((-2.0f64).exp()).unwrap();
        assert_relative_eq!(t.a_eps(), 2.0, max_relative = 1e-10);
        let t = k(ALGEBRAIC_CUBIC).truncate(0.25).unwrap();
        assert_relative_eq!(t.a_eps(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(t.d_eps(), 0.75);
        let t = k(STRETCHED_SQRT).truncate(1.0 - 1e-9).unwrap();
        assert!(t.a_eps() < 1e-6);
        assert!(k(LAPLACE_UNIT).truncate(1.0).is_err());
    }

    #[test]
    fn truncated_mass_is_one() {
        for f in [STRETCHED_SQRT, ALGEBRAIC_CUBIC, LAPLACE_UNIT, LOG_SUBLINEAR_UNIT] {
            let t = k(f).truncate(0.3).unwrap();
            assert_relative_eq!(t.exponential_moment(0.0).unwrap(), 1.0, max_relative = 1e-10);
            let window = 1.0 - 2.0 * k(f).tail_mass(t.a_eps()).unwrap();
            assert!((window - t.d_eps()).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_moment_examples() {
        let l = k(LAPLACE_UNIT);
        assert_relative_eq!(l.exponential_moment(0.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(l.exponential_moment(0.5).unwrap(), 4.0 / 3.0, max_relative = 1e-14);
        assert!(matches!(l.exponential_moment(1.0), Err(KernelError::Divergent(_))));
        assert!(matches!(k(ALGEBRAIC_CUBIC).exponential_moment(0.1), Err(KernelError::Divergent(_))));
    }

    #[test]
    fn truncated_laplace_moment_closed_form() {
        // ∫_{-A}^{A} (1/2)e^{-|z|} cosh(ηz) dz in closed form
        let t = k(LAPLACE_UNIT).truncate(0.2).unwrap();
        let a = t.a_eps();
        let eta: f64 = 0.7;
        let half = |r: f64| (1.0 - (-r * a).exp()) / r;
        let exact = 0.5 * (half(1.0 - eta) + half(1.0 + eta));
        assert_relative_eq!(t.d_eps() * t.exponential_moment(eta).unwrap(), exact, max_relative = 1e-12);
    }

    #[test]
    fn tails_agree_with_quadrature() {
        for f in [STRETCHED_SQRT, ALGEBRAIC_CUBIC, LAPLACE_UNIT, LOG_SUBLINEAR_UNIT] {
            let ker = k(f);
            for a in [0.0, 0.3, 5.0, 80.0, 900.0] {
                let q = if a < ker.splice_radius() {
                    ker.core_value() * (ker.splice_radius() - a)
                        + integrate_upper_tail(|x| ker.evaluate(x), ker.splice_radius(), Tolerance::relative(1e-13))
                            .unwrap()
                            .value
                } else {
                    integrate_upper_tail(|x| ker.evaluate(x), a, Tolerance::relative(1e-13)).unwrap().value
                };
                assert_relative_eq!(ker.tail_mass(a).unwrap(), q, max_relative = 1e-10);
            }
        }
    }
}
