//! Post-processing for posterior samples of factor loadings.
//!
//! Samples of an unconstrained loadings matrix `L` are only identified up to
//! `L -> L P` for orthogonal `P`. The pipeline here removes that freedom in
//! three steps:
//!
//! 1. [`varimax::orthogonalize_chain`] rotates every sample to its Varimax
//!    representative, leaving only column order and sign ambiguous;
//! 2. [`pivot::select_pivot`] picks the sample with the (lower) median
//!    condition number as the reference;
//! 3. [`align::align_chain`] greedily matches each sample's columns, with
//!    signs, to the pivot's columns.
//!
//! [`align::match_align`] runs all three. The [`factor_model`] module produces
//! chains to test on, and [`diagnostics`] measures how well a chain was
//! aligned.

pub mod align;
mod assignment;
pub mod diagnostics;
mod error;
pub mod factor_model;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod oracle;
mod parallel;
pub mod pivot;
pub mod report;
pub mod sim;
pub mod varimax;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use matrix::{apply_signed_permutation, frobenius_norm, Chain, LoadingsMatrix, Matrix, Sign, SignedPermutation};
pub use parallel::with_threads;
