//! Diversity (total branch length) of pure-birth trees.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use super::{check_leaf_count, require_yule, LawError, MixedDist};
use crate::kernel::{check_nonneg, check_positive, Params};

/// Gamma density with shape `n - 1` and rate `lambda`, evaluated in log space.
pub fn diversity_pdf_given_n(d: f64, n: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    check_nonneg("d", d)?;
    Ok(gamma_density(d, n, p.lambda))
}

fn gamma_density(d: f64, n: u64, lambda: f64) -> f64 {
    let shape = (n - 1) as f64;
    if d == 0.0 {
        return if n == 2 { lambda } else { 0.0 };
    }
    (shape * lambda.ln() - lambda * d + (shape - 1.0) * d.ln() - ln_gamma(shape)).exp()
}

/// `(n - 1) / lambda`.
pub fn diversity_mean_given_n(n: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    Ok((n - 1) as f64 / p.lambda)
}

/// `(n - 1) / lambda^2`.
pub fn diversity_variance_given_n(n: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    Ok((n - 1) as f64 / (p.lambda * p.lambda))
}

pub fn diversity_dist_given_n(n: u64, p: &Params) -> Result<MixedDist, LawError> {
    let mean = diversity_mean_given_n(n, p)?;
    let var = diversity_variance_given_n(n, p)?;
    let lambda = p.lambda;
    let shape = (n - 1) as f64;
    Ok(MixedDist::new(
        format!("diversity | n={n} (lambda={lambda})"),
        f64::INFINITY,
        0.0,
        move |d| gamma_density(d, n, lambda),
        move |d| gamma_lr(shape, lambda * d),
    )
    .with_decay_scale(mean)
    .with_moments(mean, var))
}

/// `(1 - e^{-u}) / u`, equal to one at `u = 0`.
fn phi(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        -(-u).exp_m1() / u
    }
}

/// Moment generating function of the diversity given `n` and `x1`:
/// `e^{2 x1 s} (lambda (1 - e^{(s - lambda) x1}) / ((lambda - s)(1 - e^{-lambda x1})))^(n-2)`
/// for `s < lambda`.
pub fn diversity_mgf_given_n_age(s: f64, n: u64, x1: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    check_positive("x1", x1)?;
    let lambda = p.lambda;
    if !(s < lambda) {
        return Err(LawError::MgfDomain { s, lambda });
    }
    // (1 - e^{(s - lambda) x1}) / (lambda - s) = x1 phi((lambda - s) x1)
    let per_time = lambda * x1 * phi((lambda - s) * x1) / -(-lambda * x1).exp_m1();
    Ok((2.0 * x1 * s + (n - 2) as f64 * per_time.ln()).exp())
}

/// `2 x1 + (n - 2) (1/lambda - x1 / (e^{lambda x1} - 1))`, the derivative of
/// the MGF at zero.
pub fn diversity_mean_given_n_age(n: u64, x1: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    check_positive("x1", x1)?;
    let lambda = p.lambda;
    let per_time = 1.0 / lambda - x1 / (lambda * x1).exp_m1();
    Ok(2.0 * x1 + (n - 2) as f64 * per_time)
}

/// `(2 / lambda)(e^{lambda x1} - 1)`.
pub fn diversity_mean_given_age(x1: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_positive("x1", x1)?;
    Ok(2.0 * (p.lambda * x1).exp_m1() / p.lambda)
}
