//! Root-edge laws of pure-birth trees and the hypoexponential waiting times
//! they are built from.

use super::{check_leaf_count, require_yule, LawError, MixedDist};
use crate::kernel::{check_nonneg, check_positive, Params};
use crate::quadrature::{integrate_to_infinity, QuadratureConfig};

/// Largest `k` accepted by [`hypoexp_pdf_series`].
pub const HYPOEXP_SERIES_K_CAP: u64 = 60;

fn check_hypoexp_k(k: u64) -> Result<(), LawError> {
    if k < 2 {
        return Err(LawError::IndexOutOfRange {
            name: "k",
            value: k,
            lo: 2,
            hi: u64::MAX,
        });
    }
    Ok(())
}

/// Density of `I_k = X_2 + ... + X_k` with `X_i ~ Exp(i lambda)` independent.
///
/// The alternating binomial sum collapses to
/// `k (k - 1) lambda e^{-2 lambda t} (1 - e^{-lambda t})^(k-2)`, which is
/// evaluated directly and has no cancellation for any `k`.
pub fn hypoexp_pdf(t: f64, k: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_hypoexp_k(k)?;
    check_nonneg("t", t)?;
    Ok(hypoexp_density(t, k, p.lambda))
}

fn hypoexp_density(t: f64, k: u64, lambda: f64) -> f64 {
    let one_minus_y = -(-lambda * t).exp_m1();
    let kf = k as f64;
    let log = (kf * (kf - 1.0) * lambda).ln() - 2.0 * lambda * t;
    if k == 2 {
        log.exp()
    } else if one_minus_y == 0.0 {
        0.0
    } else {
        (log + (kf - 2.0) * one_minus_y.ln()).exp()
    }
}

/// The same density evaluated term by term as the alternating series
/// `k (k - 1) sum_{i=2..k} lambda (-e^{-lambda t})^i C(k-2, i-2)` with
/// compensated summation.
///
/// Fails with [`LawError::PrecisionLoss`] when `k` exceeds `k_cap` or when the
/// condition number of the sum leaves fewer than eight reliable digits.
pub fn hypoexp_pdf_series(t: f64, k: u64, p: &Params, k_cap: u64) -> Result<f64, LawError> {
    require_yule(p)?;
    check_hypoexp_k(k)?;
    check_nonneg("t", t)?;
    if k > k_cap {
        return Err(LawError::PrecisionLoss {
            k,
            cap: k_cap,
            rel_err: f64::INFINITY,
        });
    }
    let x = -(-p.lambda * t).exp();
    let m = k - 2;
    let mut binom = 1.0f64;
    let mut pow = x * x;
    let (mut sum, mut comp, mut abs_sum) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..=m {
        let term = binom * pow;
        abs_sum += term.abs();
        // Neumaier summation
        let next = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - next) + term;
        } else {
            comp += (term - next) + sum;
        }
        sum = next;
        binom = binom * (m - j) as f64 / (j + 1) as f64;
        pow *= x;
    }
    let total = sum + comp;
    let rel_err = if total == 0.0 {
        f64::INFINITY
    } else {
        abs_sum / total.abs() * f64::EPSILON * (m + 1) as f64
    };
    if rel_err > 1e-8 && abs_sum > 0.0 {
        return Err(LawError::PrecisionLoss {
            k,
            cap: k_cap,
            rel_err,
        });
    }
    let kf = k as f64;
    Ok(kf * (kf - 1.0) * p.lambda * total)
}

/// CDF of `I_k`: `(1-y)^k + k y (1-y)^(k-1)` with `y = e^{-lambda t}`.
pub fn hypoexp_cdf(t: f64, k: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_hypoexp_k(k)?;
    check_nonneg("t", t)?;
    Ok(hypoexp_cdf_unchecked(t, k, p.lambda))
}

fn hypoexp_cdf_unchecked(t: f64, k: u64, lambda: f64) -> f64 {
    let y = (-lambda * t).exp();
    let c = -(-lambda * t).exp_m1();
    let kf = k as f64;
    c.powi(k as i32 - 1) * (c + kf * y)
}

/// `sum_{i=2..k} 1 / (i lambda)`.
pub fn hypoexp_mean(k: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_hypoexp_k(k)?;
    Ok((2..=k).map(|i| 1.0 / (i as f64 * p.lambda)).sum())
}

pub fn hypoexp_dist(k: u64, p: &Params) -> Result<MixedDist, LawError> {
    let mean = hypoexp_mean(k, p)?;
    let lambda = p.lambda;
    let var: f64 = (2..=k).map(|i| 1.0 / (i as f64 * lambda).powi(2)).sum();
    Ok(MixedDist::new(
        format!("hypoexponential k={k} (lambda={lambda})"),
        f64::INFINITY,
        0.0,
        move |t| hypoexp_density(t, k, lambda),
        move |t| hypoexp_cdf_unchecked(t, k, lambda),
    )
    .with_decay_scale(mean)
    .with_moments(mean, var))
}

/// Density of a uniformly chosen root edge of a pure-birth tree with `n`
/// leaves: `lambda e^{-lambda t} (1 - (1 - e^{-lambda t})^(n-2) (1 - n e^{-lambda t}))`.
pub fn root_edge_pdf_given_n(t: f64, n: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    check_nonneg("t", t)?;
    Ok(root_pdf(t, n, p.lambda))
}

fn root_pdf(t: f64, n: u64, lambda: f64) -> f64 {
    let y = (-lambda * t).exp();
    let c = -(-lambda * t).exp_m1();
    let nf = n as f64;
    lambda * y * (1.0 - c.powi(n as i32 - 2) * (1.0 - nf * y))
}

/// `(1 - y) (1 + y (1 - y)^(n-2))` with `y = e^{-lambda t}`.
pub fn root_edge_cdf_given_n(t: f64, n: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    check_nonneg("t", t)?;
    Ok(root_cdf(t, n, p.lambda))
}

fn root_cdf(t: f64, n: u64, lambda: f64) -> f64 {
    let y = (-lambda * t).exp();
    let c = -(-lambda * t).exp_m1();
    c * (1.0 + y * c.powi(n as i32 - 2))
}

/// `(1 - 1/n) / lambda`.
pub fn root_edge_mean_given_n(n: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    Ok((1.0 - 1.0 / n as f64) / p.lambda)
}

pub fn root_edge_dist_given_n(n: u64, p: &Params) -> Result<MixedDist, LawError> {
    let mean = root_edge_mean_given_n(n, p)?;
    let lambda = p.lambda;
    let nf = n as f64;
    // E[L^2] = 2 int t P(L > t) dt = 2/lambda^2 (1 - H_n / n)
    let harmonic: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
    let second = 2.0 / (lambda * lambda) * (1.0 - harmonic / nf);
    Ok(MixedDist::new(
        format!("root edge | n={n} (lambda={lambda})"),
        f64::INFINITY,
        0.0,
        move |t| root_pdf(t, n, lambda),
        move |t| root_cdf(t, n, lambda),
    )
    .with_decay_scale(1.0 / lambda)
    .with_moments(mean, second - mean * mean))
}

/// Survival of a uniformly chosen root edge given only the root age `x1`:
/// `e^{-lambda l}` below `x1` and zero from `x1` on.
pub fn root_edge_survival_given_age(l: f64, x1: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_nonneg("l", l)?;
    check_positive("x1", x1)?;
    Ok(if l >= x1 { 0.0 } else { (-p.lambda * l).exp() })
}

/// `(1 - e^{-lambda x1}) / lambda`.
pub fn root_edge_mean_given_age(x1: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_positive("x1", x1)?;
    Ok(-(-p.lambda * x1).exp_m1() / p.lambda)
}

/// `1 - alpha` for `alpha = (1 - e^{-lambda (t - l)}) / (1 - e^{-lambda t})`,
/// written as `expm1(lambda l) / expm1(lambda t)`.
fn one_minus_alpha(l: f64, t: f64, lambda: f64) -> f64 {
    (lambda * l).exp_m1() / (lambda * t).exp_m1()
}

/// Probability that the initial edge of a pure-birth tree grown for time `t`
/// from one lineage exceeds `l`, given `k` lineages at time `t`: `alpha^(k-1)`.
pub fn initial_edge_survival(l: f64, t: f64, k: u64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_nonneg("l", l)?;
    check_positive("t", t)?;
    if k < 1 {
        return Err(LawError::IndexOutOfRange {
            name: "k",
            value: k,
            lo: 1,
            hi: u64::MAX,
        });
    }
    if l >= t {
        return Ok(0.0);
    }
    if k == 1 {
        return Ok(1.0);
    }
    let delta = one_minus_alpha(l, t, p.lambda);
    Ok(((k - 1) as f64 * (-delta).ln_1p()).exp())
}

/// Survival of a uniformly chosen root edge given `n` leaves and root age
/// `x1`: `(1 - alpha^(n-1)) / ((n - 1)(1 - alpha))` for `l <= x1`, else zero.
///
/// Evaluated as `-expm1((n-1) ln1p(-delta)) / ((n-1) delta)` with
/// `delta = 1 - alpha`, which tends to one without cancellation as `l -> 0`.
pub fn root_edge_survival_given_n_age(l: f64, n: u64, x1: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_leaf_count(n, 2)?;
    check_nonneg("l", l)?;
    check_positive("x1", x1)?;
    if l > x1 {
        return Ok(0.0);
    }
    let m = (n - 1) as f64;
    let delta = one_minus_alpha(l, x1, p.lambda).min(1.0);
    if delta == 0.0 {
        return Ok(1.0);
    }
    if delta == 1.0 {
        return Ok(1.0 / m);
    }
    Ok(-(m * (-delta).ln_1p()).exp_m1() / (m * delta))
}

/// `c = int_0^inf (1 - e^{-x}) / (x (2 + x)) dx`, the limiting mean root-edge
/// length (in units of `1/lambda`) when `lambda` is set to `ln(n/2) / x1` and
/// `n -> inf`.
pub fn root_edge_limit_constant(cfg: &QuadratureConfig) -> Result<f64, LawError> {
    let integrand = |x: f64| {
        if x == 0.0 {
            0.5
        } else {
            -(-x).exp_m1() / x / (2.0 + x)
        }
    };
    Ok(integrate_to_infinity(integrand, 0.0, 2.0, cfg)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;

    fn yule(lambda: f64) -> Params {
        Params::yule(lambda).unwrap()
    }

    /// Partial-fraction form `sum_i i lambda e^{-i lambda t} prod_{j != i} j / (j - i)`,
    /// returned together with the sum of absolute terms.
    fn hypoexp_partial_fractions(t: f64, k: u64, lambda: f64) -> (f64, f64) {
        (2..=k)
            .map(|i| {
                let prod: f64 = (2..=k)
                    .filter(|&j| j != i)
                    .map(|j| j as f64 / (j as f64 - i as f64))
                    .product();
                i as f64 * lambda * (-(i as f64) * lambda * t).exp() * prod
            })
            .fold((0.0, 0.0), |(s, a), x| (s + x, a + x.abs()))
    }

    #[test]
    fn hypoexp_k2_is_exponential() {
        let p = yule(1.3);
        for t in [0.0, 0.4, 2.0] {
            assert_relative_eq!(hypoexp_pdf(t, 2, &p).unwrap(), 2.6 * (-2.6 * t).exp(), max_relative = 1e-14);
        }
        assert!(hypoexp_pdf(0.1, 1, &p).is_err());
        assert!(hypoexp_pdf(0.1, 3, &Params::new(1.0, 0.5).unwrap()).is_err());
    }

    #[test]
    fn hypoexp_forms_agree() {
        let p = yule(1.0);
        for k in 2..=12 {
            for t in [0.3, 1.0, 2.5] {
                let direct = hypoexp_pdf(t, k, &p).unwrap();
                let (pf, scale) = hypoexp_partial_fractions(t, k, 1.0);
                assert!((direct - pf).abs() <= 1e-13 * scale + 1e-12 * direct, "k={k} t={t}: {direct} vs {pf}");
                match hypoexp_pdf_series(t, k, &p, HYPOEXP_SERIES_K_CAP) {
                    Ok(series) => assert_relative_eq!(direct, series, max_relative = 1e-8),
                    Err(e) => assert!(k > 6, "k={k} t={t}: {e}"),
                }
            }
        }
    }

    #[test]
    fn hypoexp_series_reports_precision_loss() {
        let p = yule(1.0);
        assert!(matches!(
            hypoexp_pdf_series(0.1, 61, &p, HYPOEXP_SERIES_K_CAP),
            Err(LawError::PrecisionLoss { .. })
        ));
        // near t = 0 the alternating sum cancels catastrophically
        assert!(matches!(
            hypoexp_pdf_series(0.01, 60, &p, HYPOEXP_SERIES_K_CAP),
            Err(LawError::PrecisionLoss { .. })
        ));
        // the collapsed form stays finite and non-negative there
        let v = hypoexp_pdf(0.01, 60, &p).unwrap();
        assert!(v >= 0.0 && v.is_finite());
    }

    #[test]
    fn hypoexp_normalisation_and_mean() {
        let cfg = QuadratureConfig::tight();
        let p = yule(1.0);
        assert_relative_eq!(hypoexp_mean(5, &p).unwrap(), 0.5 + 1.0 / 3.0 + 0.25 + 0.2, epsilon = 1e-15);
        for k in [2, 3, 10, 30, 60, 200] {
            let d = hypoexp_dist(k, &p).unwrap();
            let mass = d.total_mass(&cfg).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "k={k}: {mass}");
            let mean = d.raw_moment(1, &cfg).unwrap();
            assert_relative_eq!(mean, hypoexp_mean(k, &p).unwrap(), max_relative = 1e-8);
            assert_relative_eq!(d.continuous_cdf(1.3), integrate(|t| d.density(t), 0.0, 1.3, &cfg).unwrap().value, epsilon = 1e-10);
        }
    }

    #[test]
    fn root_edge_given_n() {
        let p = yule(1.0);
        for t in [0.0, 0.5, 3.0] {
            assert_relative_eq!(root_edge_pdf_given_n(t, 2, &p).unwrap(), 2.0 * (-2.0 * t).exp(), max_relative = 1e-14);
        }
        assert_relative_eq!(root_edge_mean_given_n(4, &p).unwrap(), 0.75, epsilon = 1e-15);
        let cfg = QuadratureConfig::tight();
        for n in [2, 3, 4, 10, 100] {
            let d = root_edge_dist_given_n(n, &p).unwrap();
            assert!((d.total_mass(&cfg).unwrap() - 1.0).abs() < 1e-8);
            assert_relative_eq!(d.raw_moment(1, &cfg).unwrap(), root_edge_mean_given_n(n, &p).unwrap(), max_relative = 1e-9);
            assert_relative_eq!(d.variance(&cfg).unwrap(), {
                let m1 = d.raw_moment(1, &cfg).unwrap();
                d.raw_moment(2, &cfg).unwrap() - m1 * m1
            }, max_relative = 1e-8);
            assert_relative_eq!(root_edge_cdf_given_n(0.7, n, &p).unwrap(), integrate(|t| d.density(t), 0.0, 0.7, &cfg).unwrap().value, epsilon = 1e-10);
        }
        assert!(root_edge_pdf_given_n(0.1, 4, &Params::new(1.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn root_edge_is_mixture_of_short_and_long() {
        // the long root edge ends at speciation k with probability 1/C(k,2) for
        // 2 < k < n and survives to the present with probability 2/(n-1)
        let p = yule(1.0);
        let n = 7u64;
        for t in [0.2f64, 0.9, 2.0] {
            let short = 2.0 * (-2.0 * t).exp();
            let mut long = 0.0;
            for k in 3..n {
                long += hypoexp_pdf(t, k, &p).unwrap() * 2.0 / (k * (k - 1)) as f64;
            }
            long += hypoexp_pdf(t, n, &p).unwrap() * 2.0 / (n - 1) as f64;
            assert_relative_eq!(root_edge_pdf_given_n(t, n, &p).unwrap(), 0.5 * (short + long), max_relative = 1e-12);
        }
    }

    #[test]
    fn root_edge_given_age() {
        let p = yule(1.0);
        assert_eq!(root_edge_survival_given_age(0.0, 1.0, &p).unwrap(), 1.0);
        assert_eq!(root_edge_survival_given_age(1.0, 1.0, &p).unwrap(), 0.0);
        assert_relative_eq!(root_edge_survival_given_age(0.5, 1.0, &p).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        let cfg = QuadratureConfig::tight();
        let integral = integrate(|l| root_edge_survival_given_age(l, 1.0, &p).unwrap(), 0.0, 1.0, &cfg).unwrap().value;
        assert_relative_eq!(integral, root_edge_mean_given_age(1.0, &p).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn initial_edge() {
        let p = yule(1.0);
        assert_eq!(initial_edge_survival(0.9, 1.0, 1, &p).unwrap(), 1.0);
        assert_relative_eq!(initial_edge_survival(0.0, 1.0, 5, &p).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(initial_edge_survival(1.0, 1.0, 3, &p).unwrap(), 0.0);
        let alpha: f64 = (1.0 - (-0.5f64).exp()) / (1.0 - (-1f64).exp());
        assert_relative_eq!(initial_edge_survival(0.5, 1.0, 2, &p).unwrap(), alpha, max_relative = 1e-14);
        assert!((alpha - 0.622_46).abs() < 1e-5);
        assert!(initial_edge_survival(0.5, 1.0, 0, &p).is_err());
    }

    #[test]
    fn root_edge_given_n_age() {
        let p = yule(1.0);
        assert_eq!(root_edge_survival_given_n_age(0.0, 6, 2.0, &p).unwrap(), 1.0);
        for l in [0.1, 1.0, 1.9] {
            assert_relative_eq!(root_edge_survival_given_n_age(l, 2, 2.0, &p).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_eq!(root_edge_survival_given_n_age(2.1, 6, 2.0, &p).unwrap(), 0.0);
        // geometric-sum oracle, and the average of initial-edge survivals over k
        for n in [3u64, 6, 40] {
            let mut prev = 1.0;
            for i in 0..=40 {
                let l = 2.0 * i as f64 / 40.0;
                let v = root_edge_survival_given_n_age(l, n, 2.0, &p).unwrap();
                let delta = one_minus_alpha(l, 2.0, 1.0);
                let alpha = 1.0 - delta;
                let geometric: f64 = (0..n - 1).map(|k| alpha.powi(k as i32)).sum::<f64>() / (n - 1) as f64;
                assert_relative_eq!(v, geometric, max_relative = 1e-12);
                let avg: f64 = (1..n).map(|k| initial_edge_survival(l, 2.0, k, &p).unwrap()).sum::<f64>()
                    / (n - 1) as f64;
                if l < 2.0 {
                    assert_relative_eq!(v, avg, max_relative = 1e-12);
                }
                assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
                prev = v;
            }
        }
    }

    #[test]
    fn root_edge_asymptotic_form() {
        let n = 1_000_000u64;
        let x1 = 1.0;
        let lambda = (n as f64 / 2.0).ln() / x1;
        let p = yule(lambda);
        for i in 1..50 {
            let l = x1 * i as f64 / 50.0;
            let exact = root_edge_survival_given_n_age(l, n, x1, &p).unwrap();
            let w = 2.0 * (lambda * l).exp_m1();
            let asym = -(-w).exp_m1() / w;
            assert!(((exact - asym) / asym).abs() < 1e-3, "l={l}: {exact} vs {asym}");
        }
    }

    #[test]
    fn limit_constant() {
        let cfg = QuadratureConfig::tight();
        let c = root_edge_limit_constant(&cfg).unwrap();
        assert!((c - 0.8158).abs() < 5e-4);
        assert_relative_eq!(c, 0.815_845_731_174_850_4, max_relative = 1e-10);
        let doubled = root_edge_limit_constant(&QuadratureConfig {
            max_subdivisions: 2 * cfg.max_subdivisions,
            ..cfg
        })
        .unwrap();
        assert!((c - doubled).abs() < 1e-8);
    }
}
