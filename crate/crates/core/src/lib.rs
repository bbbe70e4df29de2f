//! Maximum-likelihood orbit recovery under finite orthogonal group actions.
//!
//! Observations are modeled as `Y = g·θ* + σ·ε` with `g` drawn from a finite
//! subgroup of `O(d)` and `ε ~ N(0, Id)`. This crate evaluates the resulting
//! likelihood landscape: empirical and population risks with their derivatives,
//! the high-noise series expansion, invariant-coordinate charts, the EM/GD/AGD
//! optimizers, Fisher-information spectra, and the phase-space analysis of
//! multi-reference alignment.
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature to use the
//! platform math library instead of `libm`.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` guards deliberately reject NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cumulants;
pub mod error;
pub mod fd;
pub mod groups;
pub mod landscape;
pub mod linalg;
pub mod model;
pub mod mra;
pub mod optim;
pub mod reparam;
pub mod rng;
pub mod risk;
pub mod series;
pub mod sum;

mod math;

pub use error::{Error, Result};
pub use groups::GroupAction;
pub use linalg::Mat;
pub use model::Dataset;
