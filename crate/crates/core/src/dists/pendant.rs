//! Pendant and interior edge lengths.

use super::{check_leaf_count, require_yule, LawError, MixedDist};
use crate::kernel::{check_nonneg, check_positive, Kernel, Params, Regime};
use crate::quadrature::QuadratureConfig;

/// Below this value of `lambda p0(x1)` the `h` coefficients and the atom of
/// the age-conditioned pendant law are summed as power series.
const SERIES_SWITCH: f64 = 0.05;

/// Relative distance from `mu = 0` and `mu = lambda` inside which the
/// closed-form pendant mean given `(n, x1)` is replaced by quadrature.
const CLOSED_MEAN_GUARD: f64 = 1e-4;

/// Probability that a uniformly chosen leaf hangs off the `k`-th speciation
/// event: `2k / (n (n - 1))`.
pub fn leaf_adjacency_prob(k: u64, n: u64) -> Result<f64, LawError> {
    check_leaf_count(n, 2)?;
    if k < 1 || k > n - 1 {
        return Err(LawError::IndexOutOfRange {
            name: "k",
            value: k,
            lo: 1,
            hi: n - 1,
        });
    }
    Ok(2.0 * k as f64 / (n as f64 * (n - 1) as f64))
}

/// Density of a random pendant edge length given `n` leaves. It does not
/// depend on `n`.
pub fn pendant_pdf_given_n(s: f64, p: &Params) -> Result<f64, LawError> {
    check_nonneg("s", s)?;
    Ok(pendant_given_n_density(&p.kernel(s), p))
}

fn pendant_given_n_density(k: &Kernel, p: &Params) -> f64 {
    2.0 * p.lambda * k.p1 * k.one_minus_lambda_p0
}

/// `1 - (1 - lambda p0(s))^2`.
pub fn pendant_cdf_given_n(s: f64, p: &Params) -> Result<f64, LawError> {
    check_nonneg("s", s)?;
    let c = p.kernel(s).one_minus_lambda_p0;
    Ok(1.0 - c * c)
}

/// Mean pendant length given `n`: `(mu + (lambda - mu) ln(1 - mu/lambda)) / mu^2`.
pub fn pendant_mean_given_n(p: &Params) -> f64 {
    if p.regime() == Regime::Critical {
        return 1.0 / p.lambda;
    }
    let x = p.mu / p.lambda;
    if x.abs() < 1e-3 {
        // (x + (1-x) ln(1-x)) / x^2 = sum_j x^j / ((j+1)(j+2))
        let mut sum = 0.0;
        let mut term = 1.0;
        for j in 0..12 {
            sum += term / ((j + 1) * (j + 2)) as f64;
            term *= x;
        }
        sum / p.lambda
    } else {
        (p.mu + p.net_rate() * (-x).ln_1p()) / (p.mu * p.mu)
    }
}

pub fn pendant_dist_given_n(p: &Params) -> MixedDist {
    let p = *p;
    let mean = pendant_mean_given_n(&p);
    MixedDist::new(
        format!("pendant | n (lambda={}, mu={})", p.lambda, p.mu),
        f64::INFINITY,
        0.0,
        move |s| pendant_given_n_density(&p.kernel(s), &p),
        move |s| {
            let c = p.kernel(s).one_minus_lambda_p0;
            1.0 - c * c
        },
    )
    .with_decay_scale(mean)
}

/// Density of a random interior edge length in a pure-birth tree given `n`:
/// exponential with rate `2 lambda`.
pub fn interior_pdf_yule(s: f64, p: &Params) -> Result<f64, LawError> {
    require_yule(p)?;
    check_nonneg("s", s)?;
    let rate = 2.0 * p.lambda;
    Ok(rate * (-rate * s).exp())
}

pub fn interior_dist_yule(p: &Params) -> Result<MixedDist, LawError> {
    require_yule(p)?;
    let rate = 2.0 * p.lambda;
    Ok(MixedDist::new(
        format!("interior | n (lambda={})", p.lambda),
        f64::INFINITY,
        0.0,
        move |s| rate * (-rate * s).exp(),
        move |s| -(-rate * s).exp_m1(),
    )
    .with_decay_scale(1.0 / rate)
    .with_moments(1.0 / rate, 1.0 / (rate * rate)))
}

/// Pendant length given `n` leaves and root age `x1`: a density on `(0, x1)`
/// plus an atom of weight `2 / (n (n - 1))` at `x1` (leaves attached to the
/// root).
pub fn pendant_dist_given_n_age(n: u64, x1: f64, p: &Params) -> Result<MixedDist, LawError> {
    check_leaf_count(n, 2)?;
    check_positive("x1", x1)?;
    let name = format!("pendant | n={n}, x1={x1} (lambda={}, mu={})", p.lambda, p.mu);
    if n == 2 {
        return Ok(MixedDist::point_mass(name, x1));
    }
    let p = *p;
    let nf = n as f64;
    let p0_x1 = p.kernel(x1).p0;
    let scale = 2.0 * (nf - 2.0) / (nf * (nf - 1.0));
    let atom = 2.0 / (nf * (nf - 1.0));
    Ok(MixedDist::new(
        name,
        x1,
        atom,
        move |s| {
            let k = p.kernel(s);
            let g = k.p0 / p0_x1;
            scale * k.p1 / p0_x1 * ((nf - 1.0) - (nf - 3.0) * g)
        },
        move |s| {
            let g = (p.kernel(s).p0 / p0_x1).min(1.0);
            scale * ((nf - 1.0) * g - 0.5 * (nf - 3.0) * g * g)
        },
    ))
}

/// Mean pendant length given `n` and `x1`.
///
/// Closed forms are used for `mu = lambda` and for `mu` away from both `0` and
/// `lambda`; in the guard bands around those points the `1/mu^2`-type terms
/// cancel badly and the mean is integrated from the density instead.
pub fn pendant_mean_given_n_age(n: u64, x1: f64, p: &Params) -> Result<f64, LawError> {
    check_leaf_count(n, 2)?;
    check_positive("x1", x1)?;
    if n == 2 {
        return Ok(x1);
    }
    let guard = CLOSED_MEAN_GUARD * p.lambda;
    let value = match p.regime() {
        Regime::Critical => pendant_mean_critical(n, x1, p.lambda),
        _ if p.mu.abs() > guard && p.net_rate() > guard => pendant_mean_subcritical(n, x1, p),
        _ => f64::NAN,
    };
    if value.is_finite() {
        return Ok(value);
    }
    let d = pendant_dist_given_n_age(n, x1, p)?;
    Ok(d.raw_moment(1, &QuadratureConfig::tight())?)
}

fn pendant_mean_subcritical(n: u64, x1: f64, p: &Params) -> f64 {
    let (lambda, mu) = (p.lambda, p.mu);
    let nf = n as f64;
    let r = p.net_rate();
    let k = p.kernel(x1);
    let em = -(-r * x1).exp_m1();
    let e = 1.0 - em;
    // lambda - mu e^{-r x1}
    let denom = r + mu * em;
    let lm = lambda * mu;
    let c = (nf - 3.0) * k.p0 / lm * denom
        - x1 * k.p1 * denom / (lambda * lambda) * (4.0 / r * denom - e * (nf + 1.0))
        - k.one_minus_mu_p0.ln() / (lm * lm)
            * (e * mu * (-4.0 * mu - (nf + 1.0) * r) - lambda * (-4.0 * lambda + (nf + 1.0) * r));
    (2.0 * x1 + (nf - 2.0) / (k.p0 * em) * c) / ((nf - 1.0) * nf)
}

fn pendant_mean_critical(n: u64, x1: f64, lambda: f64) -> f64 {
    let nf = n as f64;
    let p0 = x1 / (1.0 + lambda * x1);
    let inner = (nf - 7.0) * x1
        + (nf + 1.0) * p0
        + (6.0 - 2.0 * nf + 4.0 * lambda * x1) / lambda * (lambda * x1).ln_1p();
    (2.0 * x1 + (nf - 2.0) / (x1 * p0 * lambda * lambda) * inner) / ((nf - 1.0) * nf)
}

/// `h(k, x1) = sum_{n >= 3} ((n - 2) / n) (n - k) q^(n-2)` with `q = lambda p0(x1)`,
/// evaluated in closed form:
/// `((k+1) q - k) / (1-q)^2 - 2k ln(1-q) / q^2 - 2k / q`.
///
/// `one_minus_q` is passed separately so callers can supply it without
/// cancellation.
pub fn h_coefficient(k: f64, q: f64, one_minus_q: f64) -> f64 {
    if q < SERIES_SWITCH {
        let mut sum = 0.0;
        let mut pow = q;
        let mut n = 3u32;
        loop {
            let nf = n as f64;
            let term = (nf - 2.0) / nf * (nf - k) * pow;
            sum += term;
            if pow < 1e-18 {
                break;
            }
            pow *= q;
            n += 1;
        }
        sum
    } else {
        ((k + 1.0) * q - k) / (one_minus_q * one_minus_q)
            - 2.0 * k * one_minus_q.ln() / (q * q)
            - 2.0 * k / q
    }
}

/// `-(ln(1 - q) + q) / q^2`.
fn log_remainder(q: f64, one_minus_q: f64) -> f64 {
    if q < SERIES_SWITCH {
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut m = 2u32;
        while pow > 1e-18 {
            sum += pow / m as f64;
            pow *= q;
            m += 1;
        }
        sum
    } else {
        -(one_minus_q.ln() + q) / (q * q)
    }
}

/// Weight of the atom at `x1` of the pendant law given root age `x1`.
pub fn pendant_atom_given_age(x1: f64, p: &Params) -> Result<f64, LawError> {
    check_positive("x1", x1)?;
    Ok(atom_given_age(&p.kernel(x1)))
}

fn atom_given_age(k: &Kernel) -> f64 {
    let ratio = k.p1 / k.one_minus_mu_p0;
    2.0 * log_remainder(k.lambda_p0, k.one_minus_lambda_p0) * ratio * ratio
}

/// Pendant length given only the root age `x1`: the mixture over `n` of the
/// `(n, x1)` laws weighted by the probability of `n` leaves.
pub fn pendant_dist_given_age(x1: f64, p: &Params) -> Result<MixedDist, LawError> {
    check_positive("x1", x1)?;
    let p = *p;
    let kx = p.kernel(x1);
    let (q, cq) = (kx.lambda_p0, kx.one_minus_lambda_p0);
    let h1 = h_coefficient(1.0, q, cq);
    let h3 = h_coefficient(3.0, q, cq);
    let lead = 2.0 * kx.p1 * kx.p1 / (kx.p0 * kx.one_minus_mu_p0 * kx.one_minus_mu_p0);
    let p0_x1 = kx.p0;
    Ok(MixedDist::new(
        format!("pendant | x1={x1} (lambda={}, mu={})", p.lambda, p.mu),
        x1,
        atom_given_age(&kx),
        move |s| {
            let k = p.kernel(s);
            lead * k.p1 * (h1 - k.p0 / p0_x1 * h3)
        },
        move |s| {
            let g = (p.kernel(s).p0 / p0_x1).min(1.0);
            lead * p0_x1 * (g * h1 - 0.5 * g * g * h3)
        },
    ))
}

/// Mean pendant length given `x1`, by quadrature of [`pendant_dist_given_age`].
pub fn pendant_mean_given_age(x1: f64, p: &Params) -> Result<f64, LawError> {
    let d = pendant_dist_given_age(x1, p)?;
    Ok(d.raw_moment(1, &QuadratureConfig::tight())?)
}

/// Truncated mixture `sum_{n=2..=n_max} p_n(x1) * law(n, x1)` used to
/// cross-check the age-conditioned law.
#[cfg(test)]
pub(crate) fn mixture_density_given_age(s: f64, x1: f64, p: &Params, n_max: u64) -> f64 {
    (3..=n_max)
        .map(|n| {
            let w = crate::kernel::prob_n_given_age(n, x1, p).unwrap();
            w * pendant_dist_given_n_age(n, x1, p).unwrap().density(s)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::prob_n_given_age;
    use crate::quadrature::{integrate, integrate_to_infinity};
    use approx::assert_relative_eq;

    fn regime_grid() -> Vec<Params> {
        vec![
            Params::yule(1.0).unwrap(),
            Params::new(1.0, 0.5).unwrap(),
            Params::new(1.0, 0.3).unwrap(),
            Params::new(1.0, 1.0).unwrap(),
            Params::new(2.0, 1.999).unwrap(),
            Params::new(1.0, -0.5).unwrap(),
        ]
    }

    #[test]
    fn adjacency_probabilities() {
        assert_relative_eq!(leaf_adjacency_prob(2, 3).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        let total: f64 = (1..10).map(|k| leaf_adjacency_prob(k, 10).unwrap()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        assert!(leaf_adjacency_prob(0, 4).is_err());
        assert!(leaf_adjacency_prob(4, 4).is_err());
    }

    /// Enumerates every sequence of coalescences on `n` labelled lineages and
    /// records, for leaf 0, the event (counted from the root) it joins at.
    fn enumerate_adjacency(n: usize) -> Vec<f64> {
        fn recurse(groups: Vec<Vec<usize>>, weight: f64, out: &mut [f64]) {
            let m = groups.len();
            if m == 1 {
                return;
            }
            let pairs = (m * (m - 1) / 2) as f64;
            for i in 0..m {
                for j in (i + 1)..m {
                    // the event merging m lineages into m-1 is speciation number m-1
                    let event = m - 1;
                    let involves_leaf0 =
                        (groups[i] == [0usize]) || (groups[j] == [0usize]);
                    if involves_leaf0 {
                        out[event] += weight / pairs;
                    }
                    let mut next: Vec<Vec<usize>> = groups
                        .iter()
                        .enumerate()
                        .filter(|(idx, _)| *idx != i && *idx != j)
                        .map(|(_, g)| g.clone())
                        .collect();
                    let mut merged = groups[i].clone();
                    merged.extend(&groups[j]);
                    next.push(merged);
                    recurse(next, weight / pairs, out);
                }
            }
        }
        let mut out = vec![0.0; n];
        recurse((0..n).map(|i| vec![i]).collect(), 1.0, &mut out);
        out
    }

    #[test]
    fn adjacency_matches_enumeration() {
        for n in 2..=6usize {
            let probs = enumerate_adjacency(n);
            for (k, &prob) in probs.iter().enumerate().take(n).skip(1) {
                let formula = leaf_adjacency_prob(k as u64, n as u64).unwrap();
                assert_relative_eq!(prob, formula, epsilon = 1e-12);
            }
        }
        assert_relative_eq!(enumerate_adjacency(4)[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn yule_pendant_is_exponential() {
        let p = Params::yule(1.0).unwrap();
        for s in [0.0, 0.3, 1.0, 4.0] {
            assert_relative_eq!(pendant_pdf_given_n(s, &p).unwrap(), 2.0 * (-2.0 * s).exp(), max_relative = 1e-14);
        }
        assert_relative_eq!(pendant_mean_given_n(&p), 0.5, epsilon = 1e-15);
        let p = Params::new(1.0, 0.5).unwrap();
        assert_relative_eq!(pendant_pdf_given_n(0.0, &p).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn pendant_given_n_normalises_and_means_match_quadrature() {
        let cfg = QuadratureConfig::tight();
        for p in regime_grid() {
            let d = pendant_dist_given_n(&p);
            let mass = integrate_to_infinity(|s| pendant_pdf_given_n(s, &p).unwrap(), 0.0, 1.0, &cfg)
                .unwrap()
                .value;
            assert!((mass - 1.0).abs() < 1e-8, "mu={}: {mass}", p.mu);
            let mean = d.raw_moment(1, &cfg).unwrap();
            let closed = pendant_mean_given_n(&p);
            assert!(((mean - closed) / closed).abs() < 1e-6, "mu={}: {mean} vs {closed}", p.mu);
            assert_relative_eq!(d.continuous_cdf(0.8), integrate(|s| d.density(s), 0.0, 0.8, &cfg).unwrap().value, epsilon = 1e-10);
        }
    }

    #[test]
    fn pendant_mean_given_n_reference_values() {
        let p = Params::new(1.0, 0.5).unwrap();
        // 2 - 2 ln 2
        assert_relative_eq!(pendant_mean_given_n(&p), 2.0 - 2.0 * 2f64.ln(), max_relative = 1e-14);
        assert!((pendant_mean_given_n(&p) - 0.613_705_6).abs() < 1e-7);
        assert_eq!(pendant_mean_given_n(&Params::new(1.0, 1.0).unwrap()), 1.0);
        let near = Params::with_tol(1.0, 1.0 - 1e-6, 1e-12).unwrap();
        assert!((pendant_mean_given_n(&near) - 1.0).abs() < 1e-4);
        // series and closed form meet smoothly at the switch
        let a = pendant_mean_given_n(&Params::new(1.0, 0.999e-3).unwrap());
        let b = pendant_mean_given_n(&Params::new(1.0, 1.001e-3).unwrap());
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn n_independence() {
        // the given-n law has no n argument; the value is shared across n by construction
        let p = Params::new(1.0, 0.3).unwrap();
        let d = pendant_dist_given_n(&p);
        for s in [0.1, 1.0] {
            assert_eq!(d.density(s), pendant_pdf_given_n(s, &p).unwrap());
        }
    }

    #[test]
    fn interior_law() {
        let p = Params::yule(1.0).unwrap();
        assert_eq!(interior_pdf_yule(0.0, &p).unwrap(), 2.0);
        let d = interior_dist_yule(&p).unwrap();
        assert_relative_eq!(d.raw_moment(1, &QuadratureConfig::tight()).unwrap(), 0.5, epsilon = 1e-12);
        assert!(matches!(
            interior_pdf_yule(0.0, &Params::new(1.0, 0.2).unwrap()),
            Err(LawError::RequiresYule { .. })
        ));
    }

    #[test]
    fn given_n_age_small_cases() {
        let p = Params::new(1.0, 0.3).unwrap();
        let d = pendant_dist_given_n_age(3, 2.0, &p).unwrap();
        assert_relative_eq!(d.atom_weight(), 1.0 / 3.0, epsilon = 1e-15);
        for s in [0.2, 1.0, 1.9] {
            let g = crate::dists::speciation_kernel(s, 2.0, &p).unwrap().density;
            assert_relative_eq!(d.density(s), 2.0 / 3.0 * g, max_relative = 1e-14);
        }
        let cfg = QuadratureConfig::tight();
        assert!((d.total_mass(&cfg).unwrap() - 1.0).abs() < 1e-10);

        let two = pendant_dist_given_n_age(2, 2.0, &p).unwrap();
        assert_eq!(two.atom_weight(), 1.0);
        assert_eq!(two.density(1.0), 0.0);
        assert!(pendant_dist_given_n_age(1, 2.0, &p).is_err());

        let five = pendant_dist_given_n_age(5, 2.0, &p).unwrap();
        assert!((five.total_mass(&cfg).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn given_n_age_matches_adjacency_mixture() {
        // sum over k of v(k) f_{n,k}(s) reproduces the continuous part
        let p = Params::new(1.0, 0.4).unwrap();
        let (n, x1) = (7u64, 1.5);
        let d = pendant_dist_given_n_age(n, x1, &p).unwrap();
        for s in [0.05, 0.4, 1.2] {
            let mix: f64 = (2..n)
                .map(|k| {
                    leaf_adjacency_prob(k, n).unwrap()
                        * crate::dists::speciation_time_pdf(s, k, n, x1, &p).unwrap()
                })
                .sum();
            assert_relative_eq!(d.density(s), mix, max_relative = 1e-12);
        }
    }

    #[test]
    fn given_n_age_means_match_quadrature() {
        let cfg = QuadratureConfig::tight();
        let cases = [
            (5, 2.0, 1.0, 0.5),
            (5, 2.0, 1.0, 1.0),
            (3, 2.0, 1.0, 0.3),
            (6, 1.0, 2.0, 1.5),
            (10, 3.0, 1.0, 0.9),
            (5, 2.0, 1.0, -0.5),
            (8, 3.0, 1.5, 1.5),
            (5, 2.0, 1.0, 0.0),
            (5, 2.0, 1.0, 0.99995),
        ];
        for (n, x1, lambda, mu) in cases {
            let p = Params::new(lambda, mu).unwrap();
            let closed = pendant_mean_given_n_age(n, x1, &p).unwrap();
            let quad = pendant_dist_given_n_age(n, x1, &p).unwrap().raw_moment(1, &cfg).unwrap();
            assert!(((closed - quad) / quad).abs() < 1e-6, "{n} {x1} {lambda} {mu}: {closed} vs {quad}");
        }
        // high-precision reference values
        let p = Params::new(1.0, 0.5).unwrap();
        assert_relative_eq!(pendant_mean_given_n_age(5, 2.0, &p).unwrap(), 0.724_415_909_880_559_8, max_relative = 1e-12);
        let p = Params::new(1.0, 1.0).unwrap();
        assert_relative_eq!(pendant_mean_given_n_age(5, 2.0, &p).unwrap(), 0.694_375_529_900_649_4, max_relative = 1e-12);
        assert_eq!(pendant_mean_given_n_age(2, 1.7, &p).unwrap(), 1.7);
    }

    #[test]
    fn h_coefficient_matches_defining_series() {
        for (lambda, mu, x1) in [(1.0, 0.4, 1.5), (1.0, 0.0, 0.01), (1.0, 0.9, 4.0)] {
            let p = Params::new(lambda, mu).unwrap();
            let k = p.kernel(x1);
            for kk in [1.0, 3.0] {
                let series: f64 = (3..20_000u32)
                    .map(|n| {
                        let nf = n as f64;
                        (nf - 2.0) / nf * (nf - kk) * k.lambda_p0.powi(n as i32 - 2)
                    })
                    .sum();
                let closed = h_coefficient(kk, k.lambda_p0, k.one_minus_lambda_p0);
                assert!((closed - series).abs() < 1e-8 * series.abs().max(1.0), "{closed} vs {series}");
            }
        }
        // reference value at (1, 0.4, 1.5)
        let k = Params::new(1.0, 0.4).unwrap().kernel(1.5);
        assert_relative_eq!(h_coefficient(1.0, k.lambda_p0, k.one_minus_lambda_p0), 7.007_203_570_751_209, max_relative = 1e-12);
        assert_relative_eq!(h_coefficient(3.0, k.lambda_p0, k.one_minus_lambda_p0), 4.320_482_330_069_092, max_relative = 1e-12);
        // both branches agree at the switch point
        let q = SERIES_SWITCH;
        let closed = ((1.0 + 1.0) * q - 1.0) / ((1.0 - q) * (1.0 - q)) - 2.0 * (1.0 - q).ln() / (q * q) - 2.0 / q;
        assert!((h_coefficient(1.0, q * (1.0 - 1e-12), 1.0 - q) - closed).abs() < 1e-9);
    }

    #[test]
    fn given_age_mixture_identity() {
        for (lambda, mu, x1) in [(1.0, 0.4, 1.5), (1.0, 0.0, 1.0), (2.0, 1.0, 0.7)] {
            let p = Params::new(lambda, mu).unwrap();
            let d = pendant_dist_given_age(x1, &p).unwrap();
            for i in 0..50 {
                let s = x1 * (i as f64 + 0.5) / 50.0;
                let mix = mixture_density_given_age(s, x1, &p, 500);
                assert!((d.density(s) - mix).abs() < 1e-6, "s={s}: {} vs {mix}", d.density(s));
            }
            let atom_mix: f64 = (2..=2000)
                .map(|n| prob_n_given_age(n, x1, &p).unwrap() * 2.0 / (n * (n - 1)) as f64)
                .sum();
            assert!((d.atom_weight() - atom_mix).abs() < 1e-8);
        }
    }

    #[test]
    fn given_age_normalises() {
        let cfg = QuadratureConfig::tight();
        for p in regime_grid() {
            for x1 in [0.01, 0.5, 1.5, 6.0] {
                let d = pendant_dist_given_age(x1, &p).unwrap();
                let mass = d.total_mass(&cfg).unwrap();
                assert!((mass - 1.0).abs() < 1e-8, "mu={} x1={x1}: {mass}", p.mu);
                assert!((d.continuous_cdf(x1 * 0.999_999_999) + d.atom_weight() - 1.0).abs() < 1e-8);
            }
        }
    }
}
