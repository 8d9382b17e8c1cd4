//! Rate parameters and the elementary birth-death kernels.
//!
//! Every law in this crate is a function of the transformed rates
//! `(lambda, mu)` under complete sampling. [`RawParams`] carries the
//! per-species rates together with the extant sampling probability and maps
//! onto [`Params`] through [`transform_params`].
//!
//! The kernels are evaluated through the stable forms
//!
//! ```text
//! em = 1 - exp(-(lambda - mu) s)            (via expm1)
//! D  = (lambda - mu) + mu * em              (= lambda - mu exp(-(lambda - mu) s))
//! p0 = em / D
//! p1 = (lambda - mu)^2 (1 - em) / D^2
//! ```
//!
//! which have no subtractive cancellation as `mu -> lambda` or `s -> 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative width of the band around `mu == lambda` handled by the critical
/// formulas, and around `mu == 0` reported as [`Regime::Yule`].
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-8;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ParamError {
    #[error("speciation rate must be positive and finite, got {0}")]
    NonPositiveLambda(f64),
    #[error("extinction rate must be non-negative and finite, got {0}")]
    NegativeMu(f64),
    #[error("sampling probability must lie in (0, 1], got {0}")]
    SamplingOutOfRange(f64),
    #[error("extinction rate {mu} exceeds speciation rate {lambda}")]
    MuExceedsLambda { lambda: f64, mu: f64 },
    #[error("critical tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("{name} must be {expected}, got {value}")]
    Domain {
        name: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("leaf count must be at least {min}, got {n}")]
    TooFewLeaves { n: u64, min: u64 },
}

/// Per-species rates with incomplete extant sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub lambda_hat: f64,
    pub mu_hat: f64,
    pub f: f64,
}

impl RawParams {
    pub fn new(lambda_hat: f64, mu_hat: f64, f: f64) -> Result<Self, ParamError> {
        if !(lambda_hat > 0.0 && lambda_hat.is_finite()) {
            return Err(ParamError::NonPositiveLambda(lambda_hat));
        }
        if !(mu_hat >= 0.0 && mu_hat.is_finite()) {
            return Err(ParamError::NegativeMu(mu_hat));
        }
        if !(f > 0.0 && f <= 1.0) {
            return Err(ParamError::SamplingOutOfRange(f));
        }
        if mu_hat > lambda_hat {
            return Err(ParamError::MuExceedsLambda {
                lambda: lambda_hat,
                mu: mu_hat,
            });
        }
        Ok(Self {
            lambda_hat,
            mu_hat,
            f,
        })
    }

    pub fn yule(lambda_hat: f64) -> Result<Self, ParamError> {
        Self::new(lambda_hat, 0.0, 1.0)
    }
}

/// Which closed-form branch applies to a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `mu < lambda` and `mu` not within tolerance of zero.
    Subcritical,
    /// `|lambda - mu| <= critical_tol`.
    Critical,
    /// `|mu| <= critical_tol`: pure birth.
    Yule,
}

/// Transformed rates under complete sampling.
///
/// `mu` may be negative: the transformation of an incompletely sampled
/// process yields `mu < 0` whenever `mu_hat < lambda_hat (1 - f)`. All kernels
/// remain valid there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda: f64,
    pub mu: f64,
    pub critical_tol: f64,
}

impl Params {
    /// Builds parameters with the default tolerance `1e-8 * lambda`.
    pub fn new(lambda: f64, mu: f64) -> Result<Self, ParamError> {
        Self::with_tol(lambda, mu, DEFAULT_CRITICAL_TOL * lambda)
    }

    pub fn with_tol(lambda: f64, mu: f64, critical_tol: f64) -> Result<Self, ParamError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ParamError::NonPositiveLambda(lambda));
        }
        if !mu.is_finite() {
            return Err(ParamError::NegativeMu(mu));
        }
        if !(critical_tol > 0.0 && critical_tol.is_finite()) {
            return Err(ParamError::BadTolerance(critical_tol));
        }
        // Rounding in the raw -> transformed map may push mu a hair above lambda.
        if mu > lambda + critical_tol {
            return Err(ParamError::MuExceedsLambda { lambda, mu });
        }
        Ok(Self {
            lambda,
            mu: mu.min(lambda),
            critical_tol,
        })
    }

    pub fn yule(lambda: f64) -> Result<Self, ParamError> {
        Self::new(lambda, 0.0)
    }

    /// Net diversification rate `lambda - mu`.
    pub fn net_rate(&self) -> f64 {
        self.lambda - self.mu
    }

    pub fn regime(&self) -> Regime {
        if self.net_rate().abs() <= self.critical_tol {
            Regime::Critical
        } else if self.mu.abs() <= self.critical_tol {
            Regime::Yule
        } else {
            Regime::Subcritical
        }
    }

    pub fn is_yule(&self) -> bool {
        self.regime() == Regime::Yule
    }

    /// Evaluates all kernel quantities at `s` sharing one exponential.
    pub fn kernel(&self, s: f64) -> Kernel {
        Kernel::eval(self, s)
    }
}

/// Maps sampled rates onto complete-sampling rates:
/// `lambda = f lambda_hat`, `mu = mu_hat - lambda_hat (1 - f)`.
pub fn transform_params(raw: &RawParams) -> Result<Params, ParamError> {
    let raw = RawParams::new(raw.lambda_hat, raw.mu_hat, raw.f)?;
    let lambda = raw.f * raw.lambda_hat;
    let mu = raw.mu_hat - raw.lambda_hat * (1.0 - raw.f);
    Params::new(lambda, mu)
}

/// Kernel values at one time point.
///
/// Besides `p0` and `p1` this carries the complements `1 - lambda p0` and
/// `1 - mu p0` in their cancellation-free forms, since the conditioned laws
/// take logarithms and powers of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub p0: f64,
    pub p1: f64,
    /// `lambda * p0`, in `[0, 1)`.
    pub lambda_p0: f64,
    /// `1 - lambda * p0`.
    pub one_minus_lambda_p0: f64,
    /// `1 - mu * p0`.
    pub one_minus_mu_p0: f64,
}

impl Kernel {
    fn eval(p: &Params, s: f64) -> Self {
        let lambda = p.lambda;
        match p.regime() {
            Regime::Critical => {
                let d = 1.0 + lambda * s;
                let p0 = s / d;
                Self {
                    p0,
                    p1: 1.0 / (d * d),
                    lambda_p0: lambda * p0,
                    one_minus_lambda_p0: 1.0 / d,
                    one_minus_mu_p0: 1.0 / d,
                }
            }
            Regime::Subcritical | Regime::Yule => {
                let r = p.net_rate();
                let em = -(-r * s).exp_m1();
                let e = 1.0 - em;
                let d = r + p.mu * em;
                let p0 = em / d;
                Self {
                    p0,
                    p1: r * r * e / (d * d),
                    lambda_p0: lambda * p0,
                    one_minus_lambda_p0: r * e / d,
                    one_minus_mu_p0: r / d,
                }
            }
        }
    }
}

/// `p0(s)`: `mu * p0(s)` is the probability a lineage leaves no descendants
/// after time `s`.
pub fn p0(s: f64, p: &Params) -> f64 {
    p.kernel(s).p0
}

/// `p1(s)`: probability a lineage leaves exactly one descendant after time `s`.
pub fn p1(s: f64, p: &Params) -> f64 {
    p.kernel(s).p1
}

/// Inverse of `p0` on `[0, 1/lambda)`: the time `s` with `p0(s) = q`.
pub fn p0_inverse(q: f64, p: &Params) -> f64 {
    let lq = p.lambda * q;
    match p.regime() {
        Regime::Critical => q / (1.0 - lq),
        Regime::Subcritical | Regime::Yule => {
            let r = p.net_rate();
            (r * q / (1.0 - lq)).ln_1p() / r
        }
    }
}

/// Probability that a reconstructed tree whose root lies at `x1` has exactly
/// `n` extant descendants.
pub fn prob_n_given_age(n: u64, x1: f64, p: &Params) -> Result<f64, ParamError> {
    if n < 2 {
        return Err(ParamError::TooFewLeaves { n, min: 2 });
    }
    check_positive("x1", x1)?;
    let k = p.kernel(x1);
    let ratio = k.p1 / k.one_minus_mu_p0;
    let log_geom = (n - 2) as f64 * k.lambda_p0.ln();
    Ok((n - 1) as f64 * ratio * ratio * log_geom.exp())
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::Domain {
            name,
            expected: "positive and finite",
            value,
        })
    }
}

pub(crate) fn check_nonneg(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value >= 0.0 && !value.is_nan() {
        Ok(())
    } else {
        Err(ParamError::Domain {
            name,
            expected: "non-negative",
            value,
        })
    }
}
