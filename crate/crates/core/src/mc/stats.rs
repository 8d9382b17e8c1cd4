use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `sup |F_n - F|` for sorted `xs`. Both sides are compared at every
/// distinct draw and just below it, so `F` may itself have jumps.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let m = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut lo = 0;
    while lo < xs.len() {
        let x = xs[lo];
        let hi = lo + xs[lo..].partition_point(|&v| v <= x);
        d = d
            .max((hi as f64 / m - cdf(x)).abs())
            .max((lo as f64 / m - cdf(x.next_down())).abs());
        lo = hi;
    }
    d
}

/// Tail of the Kolmogorov distribution,
/// `Q(t) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 t^2)`.
pub fn kolmogorov_survival(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev = 0.0f64;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * 2.0 * (-2.0 * jf * jf * t * t).exp();
        sum += term;
        if term.abs() <= 1e-10 * prev.abs() || term.abs() <= 1e-16 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        prev = term;
        sign = -sign;
    }
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleKs {
    pub stat: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test on sorted samples. Ties are handled by
/// stepping both ECDFs past each distinct value; with discrete data the
/// asymptotic p-value is conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TwoSampleKs {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let sq = ne.sqrt();
    TwoSampleKs {
        stat: d,
        p_value: kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub stat: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson goodness of fit. `probs` must sum to one. Neighbouring categories
/// are pooled left to right until each bin expects at least `min_expected`
/// counts; a short remainder joins the last bin.
pub fn chi_square_gof(counts: &[u64], probs: &[f64], min_expected: f64) -> ChiSquare {
    assert_eq!(counts.len(), probs.len());
    let total: u64 = counts.iter().sum();
    let total = total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        obs += c as f64;
        exp += p * total;
        if exp >= min_expected {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
    }
    let stat: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).expect("positive dof").sf(stat)
    };
    ChiSquare {
        stat,
        dof,
        p_value,
        bins: bins.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_sample_statistic() {
        let xs = [0.1, 0.4, 0.7];
        // against the uniform CDF the largest gap is 1 - 0.7 just after the last point
        assert_relative_eq!(ks_one_sample(&xs, |x| x), 0.3, epsilon = 1e-15);
        // against its own ECDF the statistic vanishes
        let ys = [1.0, 2.0, 3.0, 4.0];
        let own = |x: f64| ys.iter().filter(|&&y| y <= x).count() as f64 / 4.0;
        assert_eq!(ks_one_sample(&ys, own), 0.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the Kolmogorov distribution
        assert_relative_eq!(kolmogorov_survival(1.0), 0.269_999_671_677_862, epsilon = 1e-10);
        assert_relative_eq!(kolmogorov_survival(1.628), 0.010_0, epsilon = 2e-4);
        assert_eq!(kolmogorov_survival(0.1), 1.0);
        assert!(kolmogorov_survival(3.0) < 1e-7);
    }

    #[test]
    fn two_sample_handles_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let t = ks_two_sample(&a, &a);
        assert_eq!(t.stat, 0.0);
        assert_eq!(t.p_value, 1.0);
        let b = [4.0, 5.0, 6.0, 7.0];
        assert_eq!(ks_two_sample(&a, &b).stat, 1.0);
        let c = [1.0, 2.0, 2.0, 2.0];
        assert_relative_eq!(ks_two_sample(&a, &c).stat, 0.25);
    }

    #[test]
    fn chi_square_pools_sparse_bins() {
        let probs = [0.5, 0.3, 0.15, 0.03, 0.01, 0.01];
        let counts = [50, 30, 15, 3, 1, 1];
        let r = chi_square_gof(&counts, &probs, 5.0);
        // the last three categories share a bin
        assert_eq!(r.bins, 4);
        assert!(r.stat.abs() < 1e-12);
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-12);
        let skewed = chi_square_gof(&[80, 10, 5, 3, 1, 1], &probs, 5.0);
        assert!(skewed.p_value < 1e-6);
    }
}
