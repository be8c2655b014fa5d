//! Recovery of radial potentials from semiclassical Schrödinger spectra.
//!
//! The pipeline runs from eigenvalue lists of `-h^2 Δ + V` at several `h`
//! to trace invariants, through Abel inversion to sublevel volumes, and on
//! to the radial profile and radiality certificates.

// `!(x > 0.0)` and friends are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abel;
pub mod curve;
pub mod error;
pub mod flowlines;
pub mod interp;
pub mod isotonic;
mod par;
pub mod pipeline;
pub mod potentials;
pub mod reconstruct;
pub mod spectra;
pub mod traces;

pub use curve::{Curve, UniformGrid};
pub use error::{Error, Result};
pub use par::is_parallel;
