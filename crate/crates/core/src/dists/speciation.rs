//! Laws of speciation times in a tree with `n` leaves and root age `x1`.
//!
//! Conditional on `n` and `x1`, the `n - 2` non-root speciation times are the
//! order statistics of i.i.d. draws with density `g(s|x1) = p1(s) / p0(x1)` and
//! CDF `G(s|x1) = p0(s) / p0(x1)` on `(0, x1)`.

use statrs::function::beta::beta_reg;
use statrs::function::factorial::ln_binomial;

use super::{check_leaf_count, LawError, MixedDist};
use crate::kernel::{check_positive, p0_inverse, Params};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciationKernel {
    /// `g(s|x1)`
    pub density: f64,
    /// `G(s|x1)`
    pub cdf: f64,
}

pub fn speciation_kernel(s: f64, x1: f64, p: &Params) -> Result<SpeciationKernel, LawError> {
    check_positive("x1", x1)?;
    if !(0.0..=x1).contains(&s) {
        return Err(LawError::OutsideSupport { s, end: x1 });
    }
    Ok(kernel_unchecked(s, p.kernel(x1).p0, p))
}

fn kernel_unchecked(s: f64, p0_x1: f64, p: &Params) -> SpeciationKernel {
    let k = p.kernel(s);
    SpeciationKernel {
        density: k.p1 / p0_x1,
        cdf: (k.p0 / p0_x1).min(1.0),
    }
}

/// Solves `G(s|x1) = y` for `y` in `[0, 1]`.
pub fn speciation_time_inverse_cdf(y: f64, x1: f64, p: &Params) -> f64 {
    if y >= 1.0 {
        return x1;
    }
    let q = y * p.kernel(x1).p0;
    p0_inverse(q, p).clamp(0.0, x1)
}

fn check_rank(k: u64, n: u64) -> Result<(), LawError> {
    check_leaf_count(n, 3)?;
    if k < 2 || k > n - 1 {
        return Err(LawError::IndexOutOfRange {
            name: "k",
            value: k,
            lo: 2,
            hi: n - 1,
        });
    }
    Ok(())
}

fn order_stat_density(g: SpeciationKernel, k: u64, n: u64) -> f64 {
    if g.density == 0.0 {
        return 0.0;
    }
    let (hi, lo) = ((n - k - 1) as i32, (k - 2) as i32);
    let log_coef = ((n - 2) as f64).ln() + ln_binomial(n - 3, k - 2);
    let pow = |x: f64, e: i32| if e == 0 { 1.0 } else { x.powi(e) };
    log_coef.exp() * pow(g.cdf, hi) * pow(1.0 - g.cdf, lo) * g.density
}

/// Density of the time of the `k`-th speciation event (`k = 2..n-1`, counted
/// from the root) given `n` leaves and root age `x1`.
pub fn speciation_time_pdf(s: f64, k: u64, n: u64, x1: f64, p: &Params) -> Result<f64, LawError> {
    check_rank(k, n)?;
    let g = speciation_kernel(s, x1, p)?;
    Ok(order_stat_density(g, k, n))
}

/// [`speciation_time_pdf`] as a distribution; its CDF is the regularized
/// incomplete beta `I_G(n - k, k - 1)`.
pub fn speciation_time_dist(k: u64, n: u64, x1: f64, p: &Params) -> Result<MixedDist, LawError> {
    check_rank(k, n)?;
    check_positive("x1", x1)?;
    let p = *p;
    let p0_x1 = p.kernel(x1).p0;
    let (a, b) = ((n - k) as f64, (k - 1) as f64);
    Ok(MixedDist::new(
        format!("speciation time k={k} | n={n}, x1={x1}"),
        x1,
        0.0,
        move |s| order_stat_density(kernel_unchecked(s, p0_x1, &p), k, n),
        move |s| beta_reg(a, b, kernel_unchecked(s, p0_x1, &p).cdf),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadratureConfig};
    use approx::assert_relative_eq;

    fn grid_params() -> Vec<Params> {
        vec![
            Params::yule(1.0).unwrap(),
            Params::new(1.0, 0.4).unwrap(),
            Params::new(1.0, 1.0).unwrap(),
            Params::new(2.0, -0.5).unwrap(),
        ]
    }

    #[test]
    fn kernel_endpoints() {
        for p in grid_params() {
            let x1 = 1.7;
            let end = speciation_kernel(x1, x1, &p).unwrap();
            assert_relative_eq!(end.cdf, 1.0, epsilon = 1e-15);
            let start = speciation_kernel(0.0, x1, &p).unwrap();
            assert_eq!(start.cdf, 0.0);
            assert_relative_eq!(start.density, 1.0 / p.kernel(x1).p0, max_relative = 1e-14);
        }
        let p = Params::yule(1.0).unwrap();
        assert!(speciation_kernel(2.0, 1.0, &p).is_err());
    }

    #[test]
    fn kernel_density_is_cdf_derivative() {
        for p in grid_params() {
            let x1 = 2.0;
            for i in 1..20 {
                let s = x1 * i as f64 / 20.0;
                let h = 1e-5;
                let fd = (speciation_kernel(s + h, x1, &p).unwrap().cdf
                    - speciation_kernel(s - h, x1, &p).unwrap().cdf)
                    / (2.0 * h);
                let g = speciation_kernel(s, x1, &p).unwrap().density;
                assert!(((fd - g) / g).abs() < 1e-6, "s={s}: fd={fd} g={g}");
            }
        }
    }

    #[test]
    fn inverse_cdf_round_trip() {
        for p in grid_params() {
            let x1 = 1.5;
            for i in 0..=50 {
                let y = i as f64 / 50.0;
                let s = speciation_time_inverse_cdf(y, x1, &p);
                let back = speciation_kernel(s, x1, &p).unwrap().cdf;
                assert!((back - y).abs() < 1e-12, "y={y} back={back}");
            }
        }
    }

    #[test]
    fn three_leaves_reduces_to_kernel() {
        let p = Params::new(1.0, 0.3).unwrap();
        for s in [0.1, 0.7, 1.9] {
            let f = speciation_time_pdf(s, 2, 3, 2.0, &p).unwrap();
            assert_relative_eq!(f, speciation_kernel(s, 2.0, &p).unwrap().density, max_relative = 1e-14);
        }
    }

    #[test]
    fn rank_validation() {
        let p = Params::yule(1.0).unwrap();
        assert!(speciation_time_pdf(0.5, 1, 5, 1.0, &p).is_err());
        assert!(speciation_time_pdf(0.5, 5, 5, 1.0, &p).is_err());
        assert!(speciation_time_pdf(0.5, 2, 2, 1.0, &p).is_err());
    }

    #[test]
    fn order_statistic_densities_normalise() {
        let cfg = QuadratureConfig::tight();
        let p = Params::new(1.0, 0.4).unwrap();
        let r = integrate(|s| speciation_time_pdf(s, 3, 6, 2.0, &p).unwrap(), 0.0, 2.0, &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
        for p in grid_params() {
            for n in [3, 4, 9] {
                for k in 2..n {
                    let d = speciation_time_dist(k, n, 1.3, &p).unwrap();
                    let mass = d.total_mass(&cfg).unwrap();
                    assert!((mass - 1.0).abs() < 1e-8, "n={n} k={k}: {mass}");
                    // closed CDF agrees with quadrature of the density
                    let q = integrate(|s| d.density(s), 0.0, 0.6, &cfg).unwrap().value;
                    assert_relative_eq!(d.continuous_cdf(0.6), q, epsilon = 1e-10);
                }
            }
        }
    }
}
