//! Vectorized sum-factorized contractions for the evaluation and
//! test-multiply stages.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simd_exec::registers::reduce_rows;
use crate::sumfact::Stage;
use crate::tensor::InterleavedTensor;
use crate::vecplan::{StackedMatrix, VectorizedKernel};

/// Reusable ping-pong buffers for the intermediate tensors of a contraction
/// chain, so per-cell kernel execution does not allocate.
pub struct ContractionScratch<S, const W: usize> {
    a: Vec<[S; W]>,
    b: Vec<[S; W]>,
}

impl<S: Scalar, const W: usize> ContractionScratch<S, W> {
    pub fn new() -> Self {
        ContractionScratch {
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    fn ensure(&mut self, len: usize) {
        if self.a.len() < len {
            self.a.resize(len, [S::zero(); W]);
        }
        if self.b.len() < len {
            self.b.resize(len, [S::zero(); W]);
        }
    }
}

impl<S: Scalar, const W: usize> Default for ContractionScratch<S, W> {
    fn default() -> Self {
        Self::new()
    }
}

/// Where a contraction step writes: an intermediate register-row buffer or,
/// for the final step of stage 1, the interleaved output's flat storage.
enum Dst<'a, S, const W: usize> {
    Rows(&'a mut [[S; W]]),
    Flat(&'a mut [S]),
}

impl<S: Scalar, const W: usize> Dst<'_, S, W> {
    #[inline]
    fn write(&mut self, p: usize, value: [S; W]) {
        match self {
            Dst::Rows(rows) => rows[p] = value,
            Dst::Flat(flat) => {
                let chunk = &mut flat[p * W..(p + 1) * W];
                for (dst, v) in chunk.iter_mut().zip(value.iter()) {
                    *dst = *v;
                }
            }
        }
    }
}

/// One contraction step over direction k with lane-interleaved input rows:
/// `out[i·rest + r] = Σ_j M(i,j) · in[r·in_e + j]` elementwise per lane.
fn step_rows<S: Scalar, const W: usize>(
    matrix: &StackedMatrix,
    input: &[[S; W]],
    mut dst: Dst<'_, S, W>,
    rest: usize,
) {
    let in_e = matrix.cols;
    let out_e = matrix.rows;
    for r in 0..rest {
        let row = &input[r * in_e..(r + 1) * in_e];
        for i in 0..out_e {
            let mut acc = [S::zero(); W];
            for (j, xv) in row.iter().enumerate() {
                let lanes = matrix.lane_vector(i, j);
                for l in 0..W {
                    acc[l] = S::from_f64(lanes[l]).mul_add_acc(xv[l], acc[l]);
                }
            }
            dst.write(i * rest + r, acc);
        }
    }
}

/// The direction-0 step of stage 1, which reads one or two scalar
/// coefficient tensors and broadcasts each loaded element across the lanes
/// of its input half.
fn step_broadcast<S: Scalar, const W: usize>(
    matrix: &StackedMatrix,
    inputs: &[&[S]],
    mut dst: Dst<'_, S, W>,
    rest: usize,
) {
    let in_e = matrix.cols;
    let out_e = matrix.rows;
    let half = W / inputs.len();
    for r in 0..rest {
        for i in 0..out_e {
            let mut acc = [S::zero(); W];
            for j in 0..in_e {
                let lanes = matrix.lane_vector(i, j);
                if inputs.len() == 1 {
                    let xv = inputs[0][r * in_e + j];
                    for l in 0..W {
                        acc[l] = S::from_f64(lanes[l]).mul_add_acc(xv, acc[l]);
                    }
                } else {
                    let x0 = inputs[0][r * in_e + j];
                    let x1 = inputs[1][r * in_e + j];
                    for l in 0..half {
                        acc[l] = S::from_f64(lanes[l]).mul_add_acc(x0, acc[l]);
                    }
                    for l in half..W {
                        acc[l] = S::from_f64(lanes[l]).mul_add_acc(x1, acc[l]);
                    }
                }
            }
            dst.write(i * rest + r, acc);
        }
    }
}

fn check_width<S>(vk: &VectorizedKernel, w: usize) -> Result<()> {
    if vk.width != w {
        return Err(Error::InvalidWidth(vk.width));
    }
    Ok(())
}

/// Runs an evaluation-stage vectorized kernel: contracts the scalar
/// coefficient tensor(s) with the stacked per-direction matrices and writes
/// the lane-interleaved point values into `out`.
///
/// `inputs` holds one flat coefficient tensor per input half (facet kernels
/// evaluating two cells pass two). Elements beyond the logical region of
/// `out` are left untouched.
pub fn exec_stage1<S: Scalar, const W: usize>(
    vk: &VectorizedKernel,
    inputs: &[&[S]],
    out: &mut InterleavedTensor<S>,
    scratch: &mut ContractionScratch<S, W>,
) -> Result<()> {
    check_width::<S>(vk, W)?;
    if vk.stage != Stage::Evaluation {
        return Err(Error::InvalidArgument(
            "exec_stage1 requires an evaluation-stage kernel".into(),
        ));
    }
    if inputs.len() != vk.num_inputs {
        return Err(Error::DimensionMismatch {
            expected: vk.num_inputs,
            got: inputs.len(),
        });
    }
    let in_e = vk.lane_in_extents();
    let out_e = vk.lane_out_extents();
    let in_len: usize = in_e.iter().product();
    for input in inputs {
        if input.len() != in_len {
            return Err(Error::DimensionMismatch {
                expected: in_len,
                got: input.len(),
            });
        }
    }
    if out.lanes() != W || out.dims() != out_e.as_slice() {
        return Err(Error::DimensionMismatch {
            expected: out_e.iter().product::<usize>() * W,
            got: out.elements() * out.lanes(),
        });
    }

    let d = vk.d();
    let max_len = intermediate_capacity(&in_e, &out_e);
    scratch.ensure(max_len);

    let mut size = in_len;
    let mut current_in_a = true;
    for k in 0..d {
        let rest = size / in_e[k];
        let next = rest * out_e[k];
        let last = k == d - 1;
        // Split borrows of the two scratch halves around the destination.
        let (src_rows, dst_rows) = if current_in_a {
            let (a, b) = (&mut scratch.a, &mut scratch.b);
            (a.as_slice(), b.as_mut_slice())
        } else {
            let (a, b) = (&mut scratch.b, &mut scratch.a);
            (a.as_slice(), b.as_mut_slice())
        };
        let dst = if last {
            Dst::Flat(out.padded_data_mut())
        } else {
            Dst::Rows(dst_rows)
        };
        if k == 0 {
            step_broadcast(&vk.stacked[0], inputs, dst, rest);
        } else {
            step_rows(&vk.stacked[k], src_rows, dst, rest);
        }
        if !last {
            current_in_a = !current_in_a;
        }
        size = next;
    }
    Ok(())
}

/// Runs a test-multiply-stage vectorized kernel: contracts the interleaved
/// point contributions with the transposed stacked matrices And accumulates
/// the lane-reduced results into one scalar residual tensor per target.
pub fn exec_stage3<S: Scalar, const W: usize>(
    vk: &VectorizedKernel,
    input: &InterleavedTensor<S>,
    targets: &mut [&mut [S]],
    scratch: &mut ContractionScratch<S, W>,
) -> Result<()> {
    check_width::<S>(vk, W)?;
    if vk.stage != Stage::TestMultiply {
        return Err(Error::InvalidArgument(
            "exec_stage3 requires a test-multiply-stage kernel".into(),
        ));
    }
    if targets.len() != vk.num_inputs {
        return Err(Error::DimensionMismatch {
            expected: vk.num_inputs,
            got: targets.len(),
        });
    }
    let in_e = vk.lane_in_extents();
    let out_e = vk.lane_out_extents();
    let in_len: usize = in_e.iter().product();
    let out_len: usize = out_e.iter().product();
    if input.lanes() != W || input.dims() != in_e.as_slice() {
        return Err(Error::DimensionMismatch {
            expected: in_len * W,
            got: input.elements() * input.lanes(),
        });
    }
    for target in targets.iter() {
        if target.len() != out_len {
            return Err(Error::DimensionMismatch {
                expected: out_len,
                got: target.len(),
            });
        }
    }

    let d = vk.d();
    let max_len = intermediate_capacity(&in_e, &out_e).max(in_len);
    scratch.ensure(max_len);

    // Gather the logical region of the interleaved input into register rows.
    let data = input.padded_data();
    for p in 0..in_len {
        let mut row = [S::zero(); W];
        row.copy_from_slice(&data[p * W..(p + 1) * W]);
        scratch.a[p] = row;
    }

    let mut size = in_len;
    let mut current_in_a = true;
    for k in 0..d {
        let rest = size / in_e[k];
        let next = rest * out_e[k];
        let (src_rows, dst_rows) = if current_in_a {
            let (a, b) = (&mut scratch.a, &mut scratch.b);
            (a.as_slice(), b.as_mut_slice())
        } else {
            let (a, b) = (&mut scratch.b, &mut scratch.a);
            (a.as_slice(), b.as_mut_slice())
        };
        step_rows(&vk.stacked[k], src_rows, Dst::Rows(dst_rows), rest);
        current_in_a = !current_in_a;
        size = next;
    }

    let result = if current_in_a {
        &scratch.a[..out_len]
    } else {
        &scratch.b[..out_len]
    };
    for (h, target) in targets.iter_mut().enumerate() {
        reduce_rows(result, vk.live_lane_range(h), target);
    }
    Ok(())
}

/// Largest intermediate row count across the contraction chain.
fn intermediate_capacity(in_e: &[usize], out_e: &[usize]) -> usize {
    let d = in_e.len();
    let mut size: usize = in_e.iter().product();
    let mut max = size;
    for k in 0..d {
        size = size / in_e[k] * out_e[k];
        max = max.max(size);
    }
    max
}
