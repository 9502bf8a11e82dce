//! Covariant least-squares re-fitting (CLEAR) for restoration estimators.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] and [`operators`]: dense signals, degradation and analysis operators.
//! * [`closed_form`]: thresholding, Tikhonov and constrained least squares.
//! * [`primal_dual`]: Chambolle-Pock for ℓ1 / ℓ1-ℓ2 analysis with a jointly
//!   differentiated iteration.
//! * [`nlm`]: block-wise non-local means and its directional derivative.
//! * [`refit`]: the re-fitting constructions and boosting baselines.
//! * [`experiments`]: degradations, metrics, phantoms, sweeps and the
//!   statistical validation harness.
//! * [`io`]: PGM and text grid formats.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod closed_form;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nlm;
pub mod operators;
pub mod primal_dual;
pub mod refit;

pub use error::{Error, Result};
pub use grid::{Grid, VectorField};
pub use operators::LinearMap;
