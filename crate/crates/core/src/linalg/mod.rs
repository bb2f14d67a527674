//! Numerical kernels shared by the propagators and the separatrix analytics.

pub mod bessel;
pub mod quadrature;
pub mod tridiag;

pub use bessel::bessel_j_sequence;
pub use quadrature::GaussLegendre;
pub use tridiag::{SymTridiagonal, TridiagonalEigen};
