//! The vectorized quadrature point loop.
//!
//! Integration kernels evaluate their integrand pointwise between the two
//! contraction stages. The loop below walks the flat quadrature index space
//! in blocks of `W` points. Every stage-1 group contributes `slots`
//! consecutive width-`W` vectors per block; a register transposition turns
//! them into per-quantity vectors holding `W` consecutive points. After the
//! pointwise evaluation, the inverse shuffle restores each stage-3 group's
//! interleaved layout and the block is stored back.
//!
//! Because interleaved allocations are padded to full blocks, the final
//! partial block reads and writes real storage past the logical region —
//! no tail loop is needed and the values there are never used.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simd_exec::registers::{transpose_registers, transpose_registers_inverse, MAX_REGISTERS};
use crate::tensor::InterleavedTensor;
use crate::vecplan::VectorizedKernel;

/// Upper bound on distinct point quantities an integrand may consume or
/// produce (values and gradients of both cells adjacent to a facet fit
/// comfortably).
pub const MAX_QUANTITIES: usize = 16;

/// Pointwise integrand evaluation over `W` quadrature points at a time.
///
/// `u[q]` holds input quantity q at the block's points; the implementation
/// fills `r[q]` for every output quantity. `first_point` is the flat index
/// of lane 0, for looking up precomputed per-point data (weights,
/// coefficients); tables must be padded to full blocks.
pub trait PointKernel<S: Scalar> {
    fn num_inputs(&self) -> usize;
    fn num_outputs(&self) -> usize;
    fn eval<const W: usize>(&self, first_point: usize, u: &[[S; W]], r: &mut [[S; W]]);
}

/// Runs the pointwise stage over all `num_points` flat quadrature indices:
/// shuffles each stage-1 group's data to quantity-major form, evaluates the
/// integrand, and shuffles the results into the stage-3 groups' tensors.
///
/// Quantity indices are taken from each group member's `quantity` field;
/// stage-1 padding slots are skipped on load, stage-3 padding slots store a
/// replica of their quantity's register (discarded later by the reduction).
pub fn quadrature_loop<S: Scalar, const W: usize, K: PointKernel<S>>(
    num_points: usize,
    stage1: &[(&VectorizedKernel, &InterleavedTensor<S>)],
    stage3: &mut [(&VectorizedKernel, &mut InterleavedTensor<S>)],
    kernel: &K,
) -> Result<()> {
    let blocks = num_points.div_ceil(W);
    let num_in = kernel.num_inputs();
    let num_out = kernel.num_outputs();
    if num_in > MAX_QUANTITIES || num_out > MAX_QUANTITIES {
        return Err(Error::InvalidArgument(
            "point kernel exceeds the supported quantity count".into(),
        ));
    }
    for (vk, tensor) in stage1.iter() {
        validate_group::<S, W>(vk, tensor, blocks, num_in)?;
    }
    for (vk, tensor) in stage3.iter() {
        validate_group::<S, W>(vk, tensor, blocks, num_out)?;
    }

    let zero = [S::zero(); W];
    let mut u = [zero; MAX_QUANTITIES];
    let mut r = [zero; MAX_QUANTITIES];
    let mut regs = [zero; MAX_REGISTERS];

    for b in 0..blocks {
        for (vk, tensor) in stage1.iter() {
            let data = tensor.padded_data();
            if vk.width == 1 && W > 1 {
                // Scalar-fallback group inside a vectorized loop: its flat
                // 1-lane data is already in quadrature order, so the block's
                // register is W contiguous scalars — no shuffle needed.
                let mut reg = [S::zero(); W];
                reg.copy_from_slice(&data[b * W..(b + 1) * W]);
                u[vk.slot_quantity(0)] = reg;
                continue;
            }
            let slots = vk.slots();
            let base = b * slots * W;
            for (v, reg) in regs.iter_mut().enumerate().take(slots) {
                reg.copy_from_slice(&data[base + v * W..base + (v + 1) * W]);
            }
            transpose_registers(&mut regs[..slots], vk.s);
            for slot in 0..slots {
                if !vk.slot_is_padding(slot) {
                    u[vk.slot_quantity(slot)] = regs[slot];
                }
            }
        }

        kernel.eval(b * W, &u[..num_in], &mut r[..num_out]);

        for (vk, tensor) in stage3.iter_mut() {
            let data = tensor.padded_data_mut();
            if vk.width == 1 && W > 1 {
                data[b * W..(b + 1) * W].copy_from_slice(&r[vk.slot_quantity(0)]);
                continue;
            }
            let slots = vk.slots();
            for slot in 0..slots {
                regs[slot] = r[vk.slot_quantity(slot)];
            }
            transpose_registers_inverse(&mut regs[..slots], vk.s);
            let base = b * slots * W;
            for (v, reg) in regs.iter().enumerate().take(slots) {
                data[base + v * W..base + (v + 1) * W].copy_from_slice(reg);
            }
        }
    }
    Ok(())
}

fn validate_group<S: Scalar, const W: usize>(
    vk: &VectorizedKernel,
    tensor: &InterleavedTensor<S>,
    blocks: usize,
    quantity_count: usize,
) -> Result<()> {
    // Groups either match the loop width or are scalar fallbacks whose flat
    // data is consumed in contiguous runs of W points per block.
    let scalar_fallback = vk.width == 1 && W > 1;
    if (vk.width != W && !scalar_fallback) || tensor.lanes() != vk.width {
        return Err(Error::InvalidWidth(vk.width));
    }
    let needed = if scalar_fallback {
        blocks * W
    } else {
        blocks * vk.slots() * W
    };
    if tensor.padded_data().len() < needed {
        return Err(Error::DimensionMismatch {
            expected: needed,
            got: tensor.padded_data().len(),
        });
    }
    for slot in 0..vk.slots() {
        if vk.slot_quantity(slot) >= quantity_count {
            return Err(Error::InvalidArgument(format!(
                "kernel quantity {} out of range for the point kernel",
                vk.slot_quantity(slot)
            )));
        }
    }
    Ok(())
}
