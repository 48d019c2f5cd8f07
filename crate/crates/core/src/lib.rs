//! Multiscale flatness and doubling statistics for weighted point clouds.
//!
//! A [`WeightedCloud`] stands in for a Radon measure: each sample carries the
//! n-dimensional mass of the surface patch it represents. On top of that the
//! crate computes doubling ratios, density estimates, moment vectors and
//! forms, the flatness functionals θ, β and β̃₂, and runs the multiscale
//! normal-frame cascade with its exponent ledger.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod doubling;
pub mod error;
pub mod fit;
pub mod flatness;
pub mod generators;
pub mod geometry;
pub mod io;
mod kdtree;
pub mod measure;
pub mod moments;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{AffinePlane, SymmetricForm};
pub use measure::{Ball, CloudMeta, GroundTruth, WeightedCloud};
