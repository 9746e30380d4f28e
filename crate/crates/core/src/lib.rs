//! Estimation of source attribution percentages from non-negative
//! multipollutant concentration data.
//!
//! Row-normalized observations live on the probability simplex inside the
//! convex hull of the normalized source profiles. The estimator finds the
//! sample hull, picks the maximum-volume `K`-vertex subset as the profile
//! estimate, recovers mean source contributions through an affine right
//! inverse and combines both into the attribution matrix.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod geometry;
pub mod synthgen;

pub use error::{Error, Result, Stage};
