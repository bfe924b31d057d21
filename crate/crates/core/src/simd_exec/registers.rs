//! In-register shuffles and the intra-register reduction.

use std::ops::Range;

use crate::scalar::Scalar;
use crate::tensor::InterleavedTensor;

/// Maximum number of registers a shuffle touches (one per quantity slot; a
/// group never has more slots than the widest supported register has lanes).
pub(crate) const MAX_REGISTERS: usize = 8;

/// Transposes `regs.len()` width-`W` registers holding interleaved
/// quantity data into per-quantity registers:
/// `out[t][k] = in[k / s][t * s + k % s]`.
///
/// Register `t` afterwards holds quantity slot t at `W` consecutive flat
/// quadrature indices. Requires `regs.len() * s == W`. The map is an
/// involution — applying it twice restores the input — so the inverse
/// shuffle is the same operation.
pub fn transpose_registers<S: Copy, const W: usize>(regs: &mut [[S; W]], s: usize) {
    let count = regs.len();
    debug_assert_eq!(count * s, W, "register count times slices must equal width");
    debug_assert!(count <= MAX_REGISTERS);
    if count <= 1 {
        return;
    }
    let mut tmp = [[regs[0][0]; W]; MAX_REGISTERS];
    tmp[..count].copy_from_slice(regs);
    for t in 0..count {
        for k in 0..W {
            regs[t][k] = tmp[k / s][t * s + k % s];
        }
    }
}

/// The inverse of [`transpose_registers`]. The shuffle is an involution, so
/// this is the same permutation; the alias keeps call sites readable where
/// the direction (quantity-major back to interleaved) matters.
#[inline]
pub fn transpose_registers_inverse<S: Copy, const W: usize>(regs: &mut [[S; W]], s: usize) {
    transpose_registers(regs, s);
}

/// Accumulates a test-multiply group's interleaved output into a scalar
/// residual tensor: `target[p] += Σ_{ℓ ∈ lanes} src(p, ℓ)`.
///
/// The lane range selects the live lanes feeding this target — both fused
/// quantities' contributions and partial sums from slices are summed, while
/// idle padding lanes stay excluded.
pub fn accumulate_reduce<S: Scalar>(
    src: &InterleavedTensor<S>,
    lanes: Range<usize>,
    target: &mut [S],
) {
    assert!(!lanes.is_empty() && lanes.end <= src.lanes());
    assert_eq!(target.len(), src.elements());
    let w = src.lanes();
    let data = src.padded_data();
    for (p, out) in target.iter_mut().enumerate() {
        let base = p * w;
        let mut acc = data[base + lanes.start];
        for l in lanes.start + 1..lanes.end {
            acc += data[base + l];
        }
        *out += acc;
    }
}

/// Same reduction over a register-row buffer (the final contraction scratch
/// of `exec_stage3`), avoiding a round trip through an interleaved tensor.
pub(crate) fn reduce_rows<S: Scalar, const W: usize>(
    rows: &[[S; W]],
    lanes: Range<usize>,
    target: &mut [S],
) {
    debug_assert!(!lanes.is_empty() && lanes.end <= W);
    debug_assert_eq!(target.len(), rows.len());
    for (out, row) in target.iter_mut().zip(rows) {
        let mut acc = row[lanes.start];
        for l in lanes.start + 1..lanes.end {
            acc += row[l];
        }
        *out += acc;
    }
}
