//! Blind extraction of BPSK and circular linearly modulated sources from
//! convolutive array mixtures with unknown baud rates and carrier offsets.
//!
//! The crate is organised bottom-up:
//!
//! * [`sigmodel`] builds symbol streams and samples root-raised-cosine
//!   sources at arbitrary (non-integer) oversampling ratios.
//! * [`channel`] draws multipath array channels and mixes sources.
//! * [`cyclostats`] estimates cyclic / non-conjugate cyclic correlations and
//!   detects the significant non-conjugate cyclic frequencies.
//! * [`costs`] holds the Godard (constant modulus) cost, its modified
//!   variant that subtracts non-conjugate cyclic correlations, their
//!   gradients and a steepest-descent minimizer.
//! * [`variational`] computes the infima of the continuous-time functionals
//!   that govern separability and checks the sufficient conditions.
//! * [`deflation`] extracts the sources one after the other.
//! * [`eval`] scores separators (SINR, SER, Wiener baseline).
//! * [`experiment`] drives Monte-Carlo experiments and writes CSV tables.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod costs;
pub mod cyclostats;
pub mod deflation;
mod error;
pub mod eval;
pub mod experiment;
mod lsq;
pub mod sigmodel;
pub mod variational;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex sample type used throughout the crate.
pub type C64 = Complex64;

/// A scalar complex discrete-time sequence.
pub type ComplexSequence = Vec<C64>;
