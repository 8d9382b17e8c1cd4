//! Closed-form branch-length and diversity laws.
//!
//! Laws with a point mass are returned as [`MixedDist`]; the atom is carried as
//! an explicit weight at the end of the support, never as a numerical spike.

mod diversity;
mod mixed;
mod pendant;
mod root;
mod speciation;

pub use diversity::{
    diversity_dist_given_n, diversity_mean_given_age, diversity_mean_given_n,
    diversity_mean_given_n_age, diversity_mgf_given_n_age, diversity_pdf_given_n,
    diversity_variance_given_n,
};
pub use mixed::MixedDist;
pub use pendant::{
    h_coefficient, interior_dist_yule, interior_pdf_yule, leaf_adjacency_prob,
    pendant_atom_given_age, pendant_cdf_given_n, pendant_dist_given_age, pendant_dist_given_n,
    pendant_dist_given_n_age, pendant_mean_given_age, pendant_mean_given_n,
    pendant_mean_given_n_age, pendant_pdf_given_n,
};
pub use root::{
    hypoexp_cdf, hypoexp_dist, hypoexp_mean, hypoexp_pdf, hypoexp_pdf_series,
    initial_edge_survival, root_edge_cdf_given_n, root_edge_dist_given_n,
    root_edge_limit_constant, root_edge_mean_given_age, root_edge_mean_given_n,
    root_edge_pdf_given_n, root_edge_survival_given_age, root_edge_survival_given_n_age,
    HYPOEXP_SERIES_K_CAP,
};
pub use speciation::{
    speciation_kernel, speciation_time_dist, speciation_time_inverse_cdf, speciation_time_pdf,
    SpeciationKernel,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{check_positive, ParamError, Params};
use crate::quadrature::QuadError;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LawError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("this law is only available for the pure-birth model (mu = 0), got mu = {mu}")]
    RequiresYule { mu: f64 },
    #[error("index {name} = {value} outside [{lo}, {hi}]")]
    IndexOutOfRange {
        name: &'static str,
        value: u64,
        lo: u64,
        hi: u64,
    },
    #[error("time {s} lies outside the support [0, {end}]")]
    OutsideSupport { s: f64, end: f64 },
    #[error("moment generating function requires s < lambda (s = {s}, lambda = {lambda})")]
    MgfDomain { s: f64, lambda: f64 },
    #[error("alternating series for k = {k} loses precision (cap {cap}, estimated relative error {rel_err:e})")]
    PrecisionLoss { k: u64, cap: u64, rel_err: f64 },
}

/// Conditioning of the reconstructed tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// `n` extant species.
    GivenN { n: u64 },
    /// `n` extant species and root age `x1`.
    GivenNAndAge { n: u64, x1: f64 },
    /// Root age `x1`.
    GivenAge { x1: f64 },
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ParamError> {
        match *self {
            Scenario::GivenN { n } => check_leaf_count(n, 2),
            Scenario::GivenNAndAge { n, x1 } => {
                check_leaf_count(n, 2)?;
                check_positive("x1", x1)
            }
            Scenario::GivenAge { x1 } => check_positive("x1", x1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::GivenN { .. } => "given-n",
            Scenario::GivenNAndAge { .. } => "given-n-age",
            Scenario::GivenAge { .. } => "given-age",
        }
    }
}

pub(crate) fn check_leaf_count(n: u64, min: u64) -> Result<(), ParamError> {
    if n < min {
        Err(ParamError::TooFewLeaves { n, min })
    } else {
        Ok(())
    }
}

pub(crate) fn require_yule(p: &Params) -> Result<(), LawError> {
    if p.is_yule() {
        Ok(())
    } else {
        Err(LawError::RequiresYule { mu: p.mu })
    }
}
