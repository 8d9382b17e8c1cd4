use serde::{Deserialize, Serialize};

use super::stats::ks_one_sample;
use super::{EmpiricalDist, McError};
use crate::dists::MixedDist;
use crate::quadrature::QuadratureConfig;

/// One-sample KS critical value coefficient at the 1% level.
pub const KS_COEFF_99: f64 = 1.63;
/// Two-sided normal quantile for a 99% interval.
pub const Z_99: f64 = 2.576;
/// Moment checks pass within this many standard errors.
pub const MOMENT_SE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsCheck {
    pub stat: f64,
    pub threshold: f64,
    /// Number of draws in the continuous part the statistic is taken over.
    pub n: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    /// 1 compares means, 2 compares variances.
    pub order: u32,
    pub analytic: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub location: f64,
    pub analytic_mass: f64,
    pub empirical_fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// Any other scalar criterion, e.g. a p-value or a numerical error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
    pub pass: bool,
}

impl Metric {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: Bound::AtMost,
            limit,
            pass: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: Bound::AtLeast,
            limit,
            pass: value >= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub check: String,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub ks: Option<KsCheck>,
    pub moments: Vec<MomentCheck>,
    pub atom: Option<AtomCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<Metric>,
    pub wall_time_s: f64,
    pub verdict: Verdict,
}

impl ComparisonReport {
    pub fn new(check: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            n_samples: 0,
            seed: None,
            ks: None,
            moments: Vec::new(),
            atom: None,
            metrics: Vec::new(),
            wall_time_s: 0.0,
            verdict: Verdict::Pass,
        }
    }

    pub fn with_metric(mut self, m: Metric) -> Self {
        self.metrics.push(m);
        self.refresh_verdict();
        self
    }

    /// Recomputes the verdict from the recorded checks.
    pub fn refresh_verdict(&mut self) {
        let ok = self.ks.as_ref().is_none_or(|k| k.pass)
            && self.moments.iter().all(|m| m.pass)
            && self.atom.as_ref().is_none_or(|a| a.pass)
            && self.metrics.iter().all(|m| m.pass);
        self.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// One human-readable line.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(k) = &self.ks {
            parts.push(format!("KS {:.5} (limit {:.5})", k.stat, k.threshold));
        }
        for m in &self.moments {
            let what = if m.order == 1 { "mean" } else { "variance" };
            parts.push(format!(
                "{what} {:.6} vs {:.6} ({:.2} SE)",
                m.empirical,
                m.analytic,
                (m.empirical - m.analytic).abs() / m.standard_error.max(f64::MIN_POSITIVE)
            ));
        }
        if let Some(a) = &self.atom {
            parts.push(format!(
                "atom {:.5} in [{:.5}, {:.5}]",
                a.empirical_fraction, a.ci_low, a.ci_high
            ));
        }
        for m in &self.metrics {
            let op = match m.bound {
                Bound::AtMost => "<=",
                Bound::AtLeast => ">=",
            };
            parts.push(format!("{} {:.3e} {op} {:.1e}", m.name, m.value, m.limit));
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {}", self.check, parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub ks: bool,
    /// Moment orders to compare: 1 for the mean, 2 for the variance.
    pub moments: Vec<u32>,
    pub quadrature: QuadratureConfig,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            ks: true,
            moments: vec![1],
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl CompareOptions {
    pub fn ks_only() -> Self {
        Self {
            moments: Vec::new(),
            ..Self::default()
        }
    }

    pub fn moments(orders: &[u32]) -> Self {
        Self {
            ks: false,
            moments: orders.to_vec(),
            ..Self::default()
        }
    }
}

fn ks_check(continuous: &[f64], cdf: impl Fn(f64) -> f64) -> KsCheck {
    let stat = ks_one_sample(continuous, cdf);
    let threshold = KS_COEFF_99 / (continuous.len() as f64).sqrt();
    KsCheck {
        stat,
        threshold,
        n: continuous.len(),
        pass: stat < threshold,
    }
}

fn within(analytic: f64, empirical: f64, se: f64) -> bool {
    (analytic - empirical).abs() <= MOMENT_SE * se + 1e-12 * analytic.abs()
}

pub(crate) fn mean_check(emp: &EmpiricalDist, analytic: f64) -> MomentCheck {
    let se = (emp.variance() / emp.n_samples() as f64).sqrt();
    let empirical = emp.mean();
    MomentCheck {
        order: 1,
        analytic,
        empirical,
        standard_error: se,
        pass: within(analytic, empirical, se),
    }
}

fn variance_check(emp: &EmpiricalDist, analytic: f64) -> MomentCheck {
    let n = emp.n_samples() as f64;
    let m2 = emp.central_moment(2);
    let m4 = emp.central_moment(4);
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    let empirical = emp.variance();
    MomentCheck {
        order: 2,
        analytic,
        empirical,
        standard_error: se,
        pass: within(analytic, empirical, se),
    }
}

/// Compares draws with a law. The KS statistic is taken over the draws off
/// the atom against the renormalised continuous CDF; the atom fraction is
/// checked against a 99% binomial interval around the analytic mass.
pub fn compare(emp: &EmpiricalDist, law: &MixedDist, opts: &CompareOptions) -> Result<ComparisonReport, McError> {
    let mut report = ComparisonReport::new(law.name());
    report.n_samples = emp.n_samples();
    let n = emp.n_samples() as f64;
    if law.has_atom() || emp.atom_at().is_some() {
        let a = law.atom_weight();
        let half = Z_99 * (a * (1.0 - a) / n).sqrt();
        let frac = emp.atom_fraction();
        report.atom = Some(AtomCheck {
            location: emp.atom_at().unwrap_or(law.support_end()),
            analytic_mass: a,
            empirical_fraction: frac,
            ci_low: a - half,
            ci_high: a + half,
            pass: (frac - a).abs() <= half,
        });
    }
    if opts.ks {
        let cont = emp.continuous();
        if !cont.is_empty() {
            report.ks = Some(ks_check(&cont, |s| law.conditional_continuous_cdf(s)));
        } else if law.atom_weight() < 1.0 {
            // draws missing from the continuous part entirely is a failure
            report.ks = Some(KsCheck {
                stat: 1.0,
                threshold: 0.0,
                n: 0,
                pass: false,
            });
        }
    }
    for &order in &opts.moments {
        let check = match order {
            1 => mean_check(emp, law.mean(&opts.quadrature)?),
            2 => variance_check(emp, law.variance(&opts.quadrature)?),
            _ => continue,
        };
        report.moments.push(check);
    }
    report.refresh_verdict();
    Ok(report)
}

/// One-sample KS of all draws against an arbitrary continuous CDF.
pub fn compare_cdf(name: &str, emp: &EmpiricalDist, cdf: impl Fn(f64) -> f64) -> ComparisonReport {
    let mut report = ComparisonReport::new(name);
    report.n_samples = emp.n_samples();
    report.ks = Some(ks_check(emp.samples(), cdf));
    report.refresh_verdict();
    report
}

/// Mean of the draws against a known expectation.
pub fn compare_mean(name: &str, emp: &EmpiricalDist, analytic: f64) -> ComparisonReport {
    let mut report = ComparisonReport::new(name);
    report.n_samples = emp.n_samples();
    report.moments.push(mean_check(emp, analytic));
    report.refresh_verdict();
    report
}
