//! Branch-length and diversity laws of reconstructed birth-death trees.
//!
//! The crate has three layers:
//!
//! * [`kernel`] and [`dists`]: closed-form densities, survival functions,
//!   means and moment generating functions for pendant, interior and root
//!   edges and for the total branch length, under conditioning on the leaf
//!   count, the root age, or both.
//! * [`tree`] and [`sim`]: a reconstructed-tree model with Newick I/O,
//!   forward birth-death simulation with incomplete sampling, and exact
//!   samplers for each conditioning.
//! * [`mc`]: Monte Carlo estimation and goodness-of-fit reports that check
//!   every analytic law against the samplers.

pub mod cli;
pub mod dists;
pub mod kernel;
pub mod mc;
pub mod quadrature;
pub mod sim;
pub mod tree;

pub use kernel::{transform_params, Params, RawParams, Regime};
