use std::fmt;
use std::sync::Arc;

use crate::quadrature::{integrate, integrate_to_infinity, QuadError, QuadratureConfig};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A law on `[0, support_end]` made of a continuous density on
/// `(0, support_end)` plus an optional point mass at `support_end`.
///
/// `support_end` is `+inf` for laws without an age bound; such laws carry no
/// atom. The continuous CDF is supplied in closed form alongside the density so
/// that goodness-of-fit checks never depend on quadrature.
#[derive(Clone)]
pub struct MixedDist {
    name: String,
    support_end: f64,
    atom_weight: f64,
    density: RealFn,
    continuous_cdf: RealFn,
    decay_scale: f64,
    moments: Option<(f64, f64)>,
}

impl fmt::Debug for MixedDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixedDist")
            .field("name", &self.name)
            .field("support_end", &self.support_end)
            .field("atom_weight", &self.atom_weight)
            .field("moments", &self.moments)
            .finish()
    }
}

impl MixedDist {
    /// `density` and `continuous_cdf` are only queried on `(0, support_end)`.
    pub fn new<D, C>(
        name: impl Into<String>,
        support_end: f64,
        atom_weight: f64,
        density: D,
        continuous_cdf: C,
    ) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        debug_assert!(support_end > 0.0);
        debug_assert!((0.0..=1.0).contains(&atom_weight));
        debug_assert!(support_end.is_finite() || atom_weight == 0.0);
        Self {
            name: name.into(),
            support_end,
            atom_weight,
            density: Arc::new(density),
            continuous_cdf: Arc::new(continuous_cdf),
            decay_scale: 1.0,
            moments: None,
        }
    }

    /// A law that puts all of its mass at `at`.
    pub fn point_mass(name: impl Into<String>, at: f64) -> Self {
        Self::new(name, at, 1.0, |_| 0.0, |_| 0.0).with_moments(at, 0.0)
    }

    /// Length scale used when integrating over an unbounded support.
    pub fn with_decay_scale(mut self, scale: f64) -> Self {
        self.decay_scale = scale;
        self
    }

    /// Attaches closed-form mean and variance.
    pub fn with_moments(mut self, mean: f64, variance: f64) -> Self {
        self.moments = Some((mean, variance));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    pub fn atom_weight(&self) -> f64 {
        self.atom_weight
    }

    pub fn has_atom(&self) -> bool {
        self.atom_weight > 0.0
    }

    /// Continuous density; zero outside `(0, support_end)`.
    pub fn density(&self, s: f64) -> f64 {
        if s < 0.0 || s >= self.support_end {
            0.0
        } else {
            (self.density)(s)
        }
    }

    /// Mass of the continuous part on `[0, s]`.
    pub fn continuous_cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= self.support_end {
            1.0 - self.atom_weight
        } else {
            (self.continuous_cdf)(s)
        }
    }

    /// CDF of the continuous part renormalised to a probability law.
    pub fn conditional_continuous_cdf(&self, s: f64) -> f64 {
        let mass = 1.0 - self.atom_weight;
        if mass <= 0.0 {
            return if s >= self.support_end { 1.0 } else { 0.0 };
        }
        (self.continuous_cdf(s) / mass).clamp(0.0, 1.0)
    }

    /// Full CDF including the atom.
    pub fn cdf(&self, s: f64) -> f64 {
        if s >= self.support_end {
            1.0
        } else {
            self.continuous_cdf(s)
        }
    }

    /// `E[X^order]` by quadrature of the density plus the atom's contribution.
    pub fn raw_moment(&self, order: i32, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
        let atom_part = if self.has_atom() {
            self.atom_weight * self.support_end.powi(order)
        } else {
            0.0
        };
        if self.atom_weight >= 1.0 {
            return Ok(atom_part);
        }
        let integrand = |s: f64| s.powi(order) * self.density(s);
        let cont = if self.support_end.is_finite() {
            integrate(integrand, 0.0, self.support_end, cfg)?.value
        } else {
            integrate_to_infinity(integrand, 0.0, self.decay_scale, cfg)?.value
        };
        Ok(cont + atom_part)
    }

    /// Quadrature of the density plus the atom weight; should equal one.
    pub fn total_mass(&self, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
        self.raw_moment(0, cfg)
    }

    /// Closed-form mean when known, otherwise quadrature.
    pub fn mean(&self, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
        match self.moments {
            Some((m, _)) => Ok(m),
            None => self.raw_moment(1, cfg),
        }
    }

    pub fn variance(&self, cfg: &QuadratureConfig) -> Result<f64, QuadError> {
        match self.moments {
            Some((_, v)) => Ok(v),
            None => {
                let m1 = self.raw_moment(1, cfg)?;
                let m2 = self.raw_moment(2, cfg)?;
                Ok(m2 - m1 * m1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn truncated_with_atom() -> MixedDist {
        // Exp(1) on (0, 2) with the tail mass e^-2 placed at 2
        MixedDist::new("censored exp", 2.0, (-2f64).exp(), |s| (-s).exp(), |s| -(-s).exp_m1())
    }

    #[test]
    fn cdf_partitions_mass() {
        let d = truncated_with_atom();
        assert_eq!(d.cdf(-1.0), 0.0);
        assert_relative_eq!(d.continuous_cdf(2.0) + d.atom_weight(), 1.0, epsilon = 1e-15);
        assert_eq!(d.cdf(2.0), 1.0);
        assert_eq!(d.density(2.0), 0.0);
        assert_relative_eq!(d.conditional_continuous_cdf(1.999_999_999), 1.0, epsilon = 1e-8);
        let cfg = QuadratureConfig::tight();
        assert_relative_eq!(d.total_mass(&cfg).unwrap(), 1.0, epsilon = 1e-12);
        // censored mean: 1 - e^-2
        assert_relative_eq!(d.mean(&cfg).unwrap(), 1.0 - (-2f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn point_mass_is_degenerate() {
        let d = MixedDist::point_mass("fixed", 3.0);
        let cfg = QuadratureConfig::default();
        assert_eq!(d.total_mass(&cfg).unwrap(), 1.0);
        assert_eq!(d.mean(&cfg).unwrap(), 3.0);
        assert_eq!(d.conditional_continuous_cdf(1.0), 0.0);
        assert_eq!(d.cdf(3.0), 1.0);
    }

    #[test]
    fn unbounded_support_uses_mapped_quadrature() {
        let d = MixedDist::new("exp(2)", f64::INFINITY, 0.0, |s| 2.0 * (-2.0 * s).exp(), |s| {
            -(-2.0 * s).exp_m1()
        })
        .with_decay_scale(0.5);
        let cfg = QuadratureConfig::tight();
        assert_relative_eq!(d.raw_moment(1, &cfg).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(d.variance(&cfg).unwrap(), 0.25, epsilon = 1e-12);
    }
}
