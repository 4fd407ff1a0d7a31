//! Optimal periodic dividend barriers for spectrally negative Lévy risk
//! processes with hyperexponential claims.
//!
//! Dividends may only be paid at the arrival times of an independent Poisson
//! clock with rate `r`. The crate computes the scale functions of the model in
//! closed form, selects the optimal periodic barrier `b*`, evaluates the
//! expected NPV of dividends for any barrier, certifies optimality on a grid
//! and cross-checks everything against Monte Carlo.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod config;
pub mod error;
pub mod expsum;
pub mod levy;
pub mod quad;
pub mod roots;
pub mod scale;
pub mod sim;
pub mod sweep;
pub mod value;
pub mod verify;

pub use barrier::{b_star, bar_b, h, positive_barrier_criterion, BarrierSolution};
pub use error::{PdkError, Result};
pub use levy::{JumpTerm, LevyModel, ProblemSpec, VariationClass};
pub use scale::{build_basis, phi, ScaleBasis, ScaleFunctions};
pub use value::{ClassicalValue, ValueFunction};
