//! Matrix-free discontinuous Galerkin residual assembly built on
//! sum-factorized tensor contractions, with planned SIMD vectorization of the
//! per-cell kernels (loop fusion across quantities, circular loop splitting
//! across lanes, and hybrids of both) and a benchmark harness around it.

pub mod basis;
pub mod bench;
pub mod dg;
pub mod error;
pub mod scalar;
pub mod simd_exec;
pub mod strategy;
pub mod sumfact;
pub mod tensor;
pub mod vecplan;

pub use error::{Error, Result};
pub use scalar::Scalar;
