//! Out-of-time-order correlators around the hyperbolic fixed point of the
//! two-site Bose-Hubbard model.
//!
//! The crate combines three views of the same dynamics:
//!
//! * exact quantum propagation in the fixed-`N` Fock basis ([`hilbert`],
//!   [`propagate`]),
//! * the classical mean-field limit and its closed-form separatrix solution
//!   ([`meanfield`], [`separatrix`]),
//! * phase-space methods: Husimi densities and truncated-Wigner sampling
//!   ([`phasespace`]).
//!
//! [`analysis`] fits growth rates in the double-rate and single-rate windows
//! and locates the kink between them.

// `!(a < b)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod meanfield;
pub mod phasespace;
pub mod propagate;
pub mod separatrix;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;
