//! Monte Carlo estimation and goodness-of-fit against the analytic laws.
//!
//! Replicates are split into fixed chunks of [`CHUNK`] trees. Chunk `c` draws
//! its trees from stream `2c` and its per-tree random choices (which pendant
//! edge, which root edge) from stream `2c + 1`, so results do not depend on
//! the number of worker threads, and the same trees are produced whatever
//! extractors are requested.

mod report;
mod stats;
mod suite;

pub use report::{
    compare, compare_cdf, compare_mean, AtomCheck, ComparisonReport, CompareOptions, KsCheck, Metric,
    MomentCheck, Verdict,
};
pub use stats::{chi_square_gof, kolmogorov_survival, ks_one_sample, ks_two_sample, ChiSquare, TwoSampleKs};
pub use suite::{verify_suite, SuiteConfig, CHECKS};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::LawError;
use crate::kernel::{Params, RawParams};
use crate::quadrature::QuadError;
use crate::sim::{self, RngStream, SimError};
use crate::tree::{tree_stats, ReconTree};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum McError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("at least {min} replicates are required, got {reps}")]
    TooFewReps { reps: usize, min: usize },
    #[error("samples are not sorted (first violation at index {index})")]
    Unsorted { index: usize },
    #[error("extractor {extractor} produced no values")]
    NoSamples { extractor: String },
    #[error("unknown check {name:?}; valid checks: {}", valid.join(", "))]
    UnknownCheck { name: String, valid: Vec<&'static str> },
}

impl From<crate::kernel::ParamError> for McError {
    fn from(e: crate::kernel::ParamError) -> Self {
        McError::Law(e.into())
    }
}

pub const MIN_REPS: usize = 1000;
pub const CHUNK: usize = 1024;
/// Atom candidates lie within `ATOM_RTOL * x1` of `x1`.
pub const ATOM_RTOL: f64 = 1e-9;

/// Sorted Monte Carlo draws, with the draws that sit on a declared atom
/// counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    samples: Vec<f64>,
    atom_at: Option<f64>,
    /// Index range of atom candidates inside `samples`.
    atom_range: (usize, usize),
}

impl EmpiricalDist {
    /// Sorts `samples`. NaN values are rejected by a panic since no extractor
    /// can produce them from a valid tree.
    pub fn new(mut samples: Vec<f64>, atom_at: Option<f64>) -> Self {
        assert!(samples.iter().all(|x| !x.is_nan()), "NaN sample");
        samples.sort_by(f64::total_cmp);
        Self::build(samples, atom_at)
    }

    pub fn from_sorted(samples: Vec<f64>, atom_at: Option<f64>) -> Result<Self, McError> {
        if let Some(i) = samples.windows(2).position(|w| !(w[0] <= w[1])) {
            return Err(McError::Unsorted { index: i + 1 });
        }
        Ok(Self::build(samples, atom_at))
    }

    fn build(samples: Vec<f64>, atom_at: Option<f64>) -> Self {
        let atom_range = match atom_at {
            Some(a) => {
                let eps = ATOM_RTOL * a.abs();
                let lo = samples.partition_point(|&x| x < a - eps);
                let hi = samples.partition_point(|&x| x <= a + eps);
                (lo, hi)
            }
            None => (0, 0),
        };
        Self {
            samples,
            atom_at,
            atom_range,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn atom_at(&self) -> Option<f64> {
        self.atom_at
    }

    pub fn atom_count(&self) -> usize {
        self.atom_range.1 - self.atom_range.0
    }

    pub fn atom_fraction(&self) -> f64 {
        self.atom_count() as f64 / self.n_samples() as f64
    }

    /// Draws that are not atom candidates, still sorted.
    pub fn continuous(&self) -> Vec<f64> {
        let (lo, hi) = self.atom_range;
        let mut out = Vec::with_capacity(self.samples.len() - (hi - lo));
        out.extend_from_slice(&self.samples[..lo]);
        out.extend_from_slice(&self.samples[hi..]);
        out
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.n_samples() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.n_samples() as f64;
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    }

    pub fn central_moment(&self, order: i32) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m).powi(order)).sum::<f64>() / self.n_samples() as f64
    }

    /// Fraction of draws `<= x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&v| v <= x) as f64 / self.n_samples() as f64
    }

    /// Counts in `bins` equal-width bins over `[lo, hi)`; draws outside are
    /// ignored.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<usize> {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &x in &self.samples {
            if x >= lo && x < hi {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        counts
    }
}

/// How trees are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    YuleGivenN { n: usize, params: Params },
    GivenNAge { n: usize, x1: f64, params: Params },
    GivenAge { x1: f64, params: Params },
    RejectionGivenAge { x1: f64, raw: RawParams, max_attempts: u64 },
}

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ReconTree, SimError> {
        match *self {
            Sampler::YuleGivenN { n, params } => sim::sample_yule_given_n(n, &params, rng),
            Sampler::GivenNAge { n, x1, params } => sim::sample_given_n_age(n, x1, &params, rng),
            Sampler::GivenAge { x1, params } => sim::sample_given_age(x1, &params, rng),
            Sampler::RejectionGivenAge { x1, raw, max_attempts } => {
                sim::sample_rejection_given_age(x1, &raw, max_attempts, rng).map(|s| s.tree)
            }
        }
    }

    /// Root age, when the sampler fixes it.
    pub fn age(&self) -> Option<f64> {
        match *self {
            Sampler::YuleGivenN { .. } => None,
            Sampler::GivenNAge { x1, .. } | Sampler::GivenAge { x1, .. } | Sampler::RejectionGivenAge { x1, .. } => {
                Some(x1)
            }
        }
    }
}

/// Scalar summary taken from each tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extractor {
    /// Length of a uniformly chosen pendant edge.
    RandomPendant,
    /// Length of a uniformly chosen interior edge; skipped for two leaves.
    RandomInterior,
    /// One of the two root edges, chosen by a fair coin.
    RandomRootEdge,
    /// Sum of all edge lengths.
    Diversity,
    LeafCount,
    MrcaAge,
    /// Time of the `k`-th speciation event counted from the root (`k >= 2`);
    /// skipped when the tree has fewer events.
    SpeciationTime { k: usize },
}

impl Extractor {
    pub fn name(&self) -> String {
        match self {
            Extractor::RandomPendant => "random_pendant".into(),
            Extractor::RandomInterior => "random_interior".into(),
            Extractor::RandomRootEdge => "random_root_edge".into(),
            Extractor::Diversity => "diversity".into(),
            Extractor::LeafCount => "leaf_count".into(),
            Extractor::MrcaAge => "mrca_age".into(),
            Extractor::SpeciationTime { k } => format!("speciation_time_{k}"),
        }
    }

    pub fn extract<R: Rng + ?Sized>(&self, tree: &ReconTree, rng: &mut R) -> Option<f64> {
        let stats = tree_stats(tree);
        self.extract_from(&stats, rng)
    }

    fn extract_from<R: Rng + ?Sized>(&self, s: &crate::tree::TreeStats, rng: &mut R) -> Option<f64> {
        match *self {
            Extractor::RandomPendant => s.pendant_lengths.choose(rng).copied(),
            Extractor::RandomInterior => s.interior_lengths.choose(rng).copied(),
            Extractor::RandomRootEdge => s.root_edge_lengths.choose(rng).copied(),
            Extractor::Diversity => Some(s.diversity),
            Extractor::LeafCount => Some(s.n as f64),
            Extractor::MrcaAge => Some(s.mrca_age),
            Extractor::SpeciationTime { k } => s.speciation_times.get(k.checked_sub(1)?).copied(),
        }
    }

    /// Location of the point mass this extractor can hit under `sampler`.
    pub fn atom_location(&self, sampler: &Sampler) -> Option<f64> {
        match self {
            Extractor::RandomPendant => sampler.age(),
            _ => None,
        }
    }
}

/// Draws `reps` trees and applies every extractor to each of them.
pub fn estimate_many(
    sampler: &Sampler,
    extractors: &[Extractor],
    reps: usize,
    seed: u64,
) -> Result<Vec<EmpiricalDist>, McError> {
    if reps < MIN_REPS {
        return Err(McError::TooFewReps { reps, min: MIN_REPS });
    }
    let chunks = reps.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = CHUNK.min(reps - c * CHUNK);
            let mut tree_rng = RngStream::new(seed, 2 * c as u64);
            let mut pick_rng = RngStream::new(seed, 2 * c as u64 + 1);
            let mut cols = vec![Vec::with_capacity(size); extractors.len()];
            for _ in 0..size {
                let tree = sampler.draw(&mut tree_rng)?;
                let stats = tree_stats(&tree);
                for (col, ex) in cols.iter_mut().zip(extractors) {
                    if let Some(v) = ex.extract_from(&stats, &mut pick_rng) {
                        col.push(v);
                    }
                }
            }
            Ok(cols)
        })
        .collect::<Result<_, McError>>()?;
    extractors
        .iter()
        .enumerate()
        .map(|(j, ex)| {
            let values: Vec<f64> = per_chunk.iter().flat_map(|cols| cols[j].iter().copied()).collect();
            if values.is_empty() {
                return Err(McError::NoSamples { extractor: ex.name() });
            }
            Ok(EmpiricalDist::new(values, ex.atom_location(sampler)))
        })
        .collect()
}

pub fn estimate(sampler: &Sampler, extractor: Extractor, reps: usize, seed: u64) -> Result<EmpiricalDist, McError> {
    Ok(estimate_many(sampler, &[extractor], reps, seed)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_basics() {
        let e = EmpiricalDist::new(vec![3.0, 1.0, 2.0, 2.0], None);
        assert_eq!(e.samples(), &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(e.mean(), 2.0);
        assert_eq!(e.ecdf(2.0), 0.75);
        assert_eq!(e.histogram(0.0, 4.0, 4), vec![0, 1, 2, 1]);
        assert!(matches!(
            EmpiricalDist::from_sorted(vec![1.0, 0.5], None),
            Err(McError::Unsorted { index: 1 })
        ));
    }

    #[test]
    fn atom_bucket() {
        let x1 = 2.0;
        let e = EmpiricalDist::new(vec![0.5, 2.0, 2.0 - 1e-12, 1.9, 2.0], Some(x1));
        assert_eq!(e.atom_count(), 3);
        assert_eq!(e.continuous(), vec![0.5, 1.9]);
    }

    #[test]
    fn two_leaf_extractors() {
        let params = Params::new(1.0, 0.5).unwrap();
        let sampler = Sampler::GivenNAge { n: 2, x1: 1.5, params };
        let out = estimate_many(&sampler, &[Extractor::Diversity, Extractor::RandomPendant], 1000, 1).unwrap();
        assert!(out[0].samples().iter().all(|&d| d == 3.0));
        assert_eq!(out[1].atom_count(), 1000);
        assert!(matches!(
            estimate(&sampler, Extractor::RandomInterior, 1000, 1),
            Err(McError::NoSamples { .. })
        ));
        assert!(matches!(estimate(&sampler, Extractor::Diversity, 999, 1), Err(McError::TooFewReps { .. })));
    }

    #[test]
    fn estimates_are_reproducible_across_extractor_sets() {
        let sampler = Sampler::YuleGivenN {
            n: 7,
            params: Params::yule(1.0).unwrap(),
        };
        let a = estimate(&sampler, Extractor::Diversity, 3000, 11).unwrap();
        let b = estimate_many(&sampler, &[Extractor::RandomPendant, Extractor::Diversity], 3000, 11).unwrap();
        assert_eq!(a, b[1]);
        let c = estimate(&sampler, Extractor::Diversity, 3000, 12).unwrap();
        assert_ne!(a, c);
    }
}
