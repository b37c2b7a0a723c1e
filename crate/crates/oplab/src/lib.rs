//! A numerical laboratory for orthogonal polynomials on the real line:
//! recurrence-coefficient families, Gauss quadrature through tridiagonal
//! eigendecomposition, Christoffel-Darboux kernels and their averaging
//! operators, a spectral classifier for periodically modulated coefficient
//! sequences, and sampling of the associated orthogonal polynomial
//! ensembles.
//!
//! Everything is plain `f64` numerics with explicit, pinned tolerances.
//! Computations that can exceed floating-point range run in a log-scaled
//! representation (see [`scaled`]); operations that cannot meet a request
//! honestly refuse with a structured [`error::Error`] rather than degrade.

pub mod error;
pub mod improper;
pub mod jacobi;
pub mod kernel;
pub mod nevai;
pub mod numerics;
pub mod ope;
pub mod quadrature;
pub mod scaled;
pub mod spectral;

pub use error::{Error, Result};
