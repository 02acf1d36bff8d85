//! Numerical verification of CR foliations of fibered manifolds M ⊂ S × ℂ^m
//! by CR leaves, with leaf tracing and a Riemann-Hilbert normalizer layer.

pub mod cli;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod involutivity;
pub mod linalg;
pub mod rh;
pub mod tracer;

pub use error::{Error, Result};
