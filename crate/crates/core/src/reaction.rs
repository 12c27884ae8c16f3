//! Monostable nonlinearities `f` with the analytic constants used by the
//! theorems: `f'(0)`, the per-capita supremum `r = sup f(s)/s`, the KPP
//! envelope `f(s) ≥ f'(0)s - M s^{1+δ}` on `[0, s0]`, and `max |f'|`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReactionError {
    #[error("invalid reaction parameter: {0}")]
    InvalidParameter(String),
    #[error("density {s} is outside [0, 1] beyond the tolerance band")]
    Domain { s: f64 },
    #[error("KPP envelope (M = {m}, delta = {delta}, s0 = {s0}) fails at s = {s}")]
    EnvelopeVerification { m: f64, delta: f64, s0: f64, s: f64 },
}

/// Tolerated excursion outside `[0, 1]` when evaluating `f`.
pub const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionFamily {
    /// `s(1 - s)`
    Logistic,
    /// `s(1 - s)(1 + a s)`
    WeakAllee { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KppEnvelope {
    pub m: f64,
    pub delta: f64,
    pub s0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionSpec {
    family: ReactionFamily,
    fprime0: f64,
    r_sup: f64,
    kpp: KppEnvelope,
    max_abs_fprime: f64,
}

const ENVELOPE_GRID: usize = 10_000;

impl ReactionSpec {
    pub fn new(family: ReactionFamily) -> Result<Self, ReactionError> {
        let (r_sup, max_abs_fprime) = match family {
            ReactionFamily::Logistic => (1.0, 1.0),
            ReactionFamily::WeakAllee { a } => {
                if !(a.is_finite() && a > 0.0) {
                    return Err(ReactionError::InvalidParameter(format!("a must be finite and positive, got {a}")));
                }
                // (1-s)(1+as) has its vertex at s = (a-1)/(2a)
                let r = if a > 1.0 { 1.0 + (a - 1.0).powi(2) / (4.0 * a) } else { 1.0 };
                // f'(s) = 1 + 2(a-1)s - 3a s^2; endpoints and vertex s = (a-1)/(3a)
                let mut m: f64 = 1.0f64.max(1.0 + a);
                let v = (a - 1.0) / (3.0 * a);
                if (0.0..=1.0).contains(&v) {
                    m = m.max((1.0 + (a - 1.0).powi(2) / (3.0 * a)).abs());
                }
                (r, m)
            }
        };
        let spec = ReactionSpec {
            family,
            fprime0: 1.0,
            r_sup,
            kpp: KppEnvelope { m: 1.0, delta: 1.0, s0: 0.5 },
            max_abs_fprime,
        };
        spec.verify_envelope(&spec.kpp)?;
        Ok(spec)
    }

    pub fn family(&self) -> ReactionFamily {
        self.family
    }

    pub fn fprime0(&self) -> f64 {
        self.fprime0
    }

    /// `sup_{(0,1]} f(s)/s`.
    pub fn sup_per_capita_rate(&self) -> f64 {
        self.r_sup
    }

    pub fn kpp_envelope_params(&self) -> KppEnvelope {
        self.kpp
    }

    /// `max_{[0,1]} |f'|`.
    pub fn max_abs_fprime(&self) -> f64 {
        self.max_abs_fprime
    }

    /// `f(s)` without range checks, for hot loops.
    #[inline]
    pub fn f(&self, s: f64) -> f64 {
        match self.family {
            ReactionFamily::Logistic => s * (1.0 - s),
            ReactionFamily::WeakAllee { a } => s * (1.0 - s) * (1.0 + a * s),
        }
    }

    /// `f(s)` for `s ∈ [-1e-8, 1 + 1e-8]`.
    pub fn evaluate_f(&self, s: f64) -> Result<f64, ReactionError> {
        if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&s) {
            return Err(ReactionError::Domain { s });
        }
        Ok(self.f(s))
    }

    pub fn fprime(&self, s: f64) -> f64 {
        match self.family {
            ReactionFamily::Logistic => 1.0 - 2.0 * s,
            ReactionFamily::WeakAllee { a } => 1.0 + 2.0 * (a - 1.0) * s - 3.0 * a * s * s,
        }
    }

    /// Checks `f(s) ≥ f'(0)s - M s^{1+δ}` on a uniform grid of `[0, s0]`.
    pub fn verify_envelope(&self, env: &KppEnvelope) -> Result<(), ReactionError> {
        for i in 0..=ENVELOPE_GRID {
            let s = env.s0 * i as f64 / ENVELOPE_GRID as f64;
            let lower = self.fprime0 * s - env.m * s.powf(1.0 + env.delta);
            if self.f(s) < lower - 1e-12 {
                return Err(ReactionError::EnvelopeVerification { m: env.m, delta: env.delta, s0: env.s0, s });
            }
        }
        Ok(())
    }
}
