//! Semi-supervised adversarial training with margin-based interpolation,
//! at desk scale: a small reverse-mode autodiff engine, MLP classifiers,
//! ℓ∞ PGD, margin-controlled interpolated adversarial examples, global
//! budget schedules and the semi-supervised outer objectives.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attack;
pub mod cli;
pub mod data;
pub mod error;
pub mod evalx;
pub mod interpolate;
pub mod io;
pub mod model;
pub mod schedule;
pub mod semisup;
pub mod tensor;

pub use error::{Error, Result};
