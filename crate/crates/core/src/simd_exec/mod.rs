//! Execution of vectorized kernels on lane-width value bundles.
//!
//! Lane bundles are `[S; W]` arrays operated on elementwise; the contraction
//! and quadrature loops are monomorphized over the width `W ∈ {1, 2, 4, 8}`
//! so the compiler sees fixed-size inner loops it can map onto hardware
//! vectors. Width 1 runs the same code paths and serves as the scalar
//! reference configuration.
//!
//! The three pieces mirror the three stages of a sum-factorized integration
//! kernel:
//!
//! * [`exec_stage1`] — evaluation kernels: scalar coefficient tensors in,
//!   lane-interleaved point-value tensors out;
//! * [`quadrature_loop`] — walks the flat quadrature index space in blocks
//!   of `W` points, register-transposing each group's interleaved data into
//!   per-quantity vectors, applying the per-point integrand, and shuffling
//!   the results back into each output group's interleaved layout;
//! * [`exec_stage3`] — test-multiply kernels: interleaved point contributions
//!   in, accumulation into one or two scalar residual tensors out, with an
//!   intra-register reduction over fused quantities and slices.

mod contract;
mod quadloop;
mod registers;

pub use contract::{exec_stage1, exec_stage3, ContractionScratch};
pub use quadloop::{quadrature_loop, PointKernel, MAX_QUANTITIES};
pub use registers::{accumulate_reduce, transpose_registers, transpose_registers_inverse};
