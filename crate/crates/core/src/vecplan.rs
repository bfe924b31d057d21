//! Construction of vectorized kernels from groups of scalar sum factorization
//! kernels.
//!
//! Two mechanisms, freely combined, map kernels onto SIMD lanes:
//!
//! * loop fusion: f kernels over the same index space run in f lanes, their
//!   per-direction matrices stacked entry-interleaved so one lane vector holds
//!   entry (i, j) of every member;
//! * circular loop splitting: one kernel's direction-0 matrix is cut into s
//!   slices, slice r keeping rows `p * s + r`. Under the index-0-fastest
//!   flattening, interleaving the slice results reproduces the unsliced
//!   result bit for bit, so the slices can run side by side in s lanes and
//!   their output needs no reordering at all.
//!
//! A vectorized kernel may also draw members from two distinct tensors (facet
//! integrals evaluate both neighboring cells at once); the first tensor fills
//! the lower lane half, the second the upper half. Groups shorter than their
//! lane capacity replicate their last member into the idle lanes; the results
//! there are computed and discarded, and the cost model charges full flops.

use crate::basis::KernelMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sumfact::{Stage, SumfactKernelSpec, TensorId};
use crate::tensor::{interleave, Tensor};

/// Lane-interleaved stack of equally sized matrices: the lane vector for
/// entry (i, j) holds that entry of every stacked matrix contiguously.
#[derive(Debug, Clone)]
pub struct StackedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub lanes: usize,
    pub data: Vec<f64>,
    /// True when every lane holds the same matrix, so a scalar load plus
    /// broadcast could replace the full lane-vector load.
    pub broadcast: bool,
}

impl StackedMatrix {
    /// Contiguous lane vector of entry (i, j).
    #[inline]
    pub fn lane_vector(&self, i: usize, j: usize) -> &[f64] {
        let base = (i * self.cols + j) * self.lanes;
        &self.data[base..base + self.lanes]
    }
}

/// Interleaves equally sized matrices into one lane-indexed stack.
pub fn stack_matrices(matrices: &[&KernelMatrix]) -> Result<StackedMatrix> {
    if matrices.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let rows = matrices[0].rows;
    let cols = matrices[0].cols;
    for m in matrices {
        if m.rows != rows || m.cols != cols {
            return Err(Error::MixedBounds);
        }
    }
    let lanes = matrices.len();
    let mut data = vec![0.0; rows * cols * lanes];
    for (l, m) in matrices.iter().enumerate() {
        for i in 0..rows {
            for j in 0..cols {
                data[(i * cols + j) * lanes + l] = m.get(i, j);
            }
        }
    }
    let broadcast = matrices
        .iter()
        .all(|m| m.entries == matrices[0].entries);
    Ok(StackedMatrix {
        rows,
        cols,
        lanes,
        data,
        broadcast,
    })
}

/// Cuts a matrix into s circular row slices; slice r keeps rows
/// `p * s + r` for `p = 0 .. rows/s`. Requires `s` to divide the row count.
pub fn slice_matrix_circular(matrix: &KernelMatrix, s: usize) -> Result<Vec<KernelMatrix>> {
    if s == 0 || matrix.rows % s != 0 {
        return Err(Error::NotDivisible {
            what: "matrix row count",
            value: matrix.rows,
            divisor: s,
        });
    }
    let sub_rows = matrix.rows / s;
    Ok((0..s)
        .map(|r| {
            let mut entries = Vec::with_capacity(sub_rows * matrix.cols);
            for p in 0..sub_rows {
                entries.extend_from_slice(matrix.row(p * s + r));
            }
            KernelMatrix {
                rows: sub_rows,
                cols: matrix.cols,
                entries,
                kind: matrix.kind,
            }
        })
        .collect())
}

/// Checks the flattening identity behind circular splitting: cutting
/// direction 0 of `tensor` into s circular slices and lane-interleaving them
/// reproduces the flat data bitwise.
pub fn vec_identity_check<S: Scalar>(tensor: &Tensor<S>, s: usize) -> Result<bool> {
    let d0 = tensor.dims()[0];
    if s == 0 || d0 % s != 0 {
        return Err(Error::NotDivisible {
            what: "direction-0 extent",
            value: d0,
            divisor: s,
        });
    }
    let mut slice_dims = tensor.dims().to_vec();
    slice_dims[0] = d0 / s;
    let rest: usize = tensor.dims()[1..].iter().product();
    let slices: Vec<Tensor<S>> = (0..s)
        .map(|r| {
            let mut data = Vec::with_capacity((d0 / s) * rest);
            for block in 0..rest {
                for p in 0..d0 / s {
                    data.push(tensor.data()[block * d0 + p * s + r]);
                }
            }
            Tensor::from_data(&slice_dims, data).unwrap()
        })
        .collect();
    let refs: Vec<&Tensor<S>> = slices.iter().collect();
    let inter = interleave(&refs)?;
    let elements = inter.elements() * s;
    Ok(inter.padded_data()[..elements] == tensor.data()[..elements])
}

/// A group of sum factorization kernels mapped onto the lanes of one SIMD
/// register, fixed f (fused quantities per input tensor), s (circular slices)
/// and 1 or 2 input tensors with `f * s * num_inputs = width`. Lane
/// `slot * s + r` runs slice r of quantity slot; slices of one kernel always
/// occupy adjacent lanes, and the second tensor's quantities occupy the upper
/// lane half.
#[derive(Debug, Clone)]
pub struct VectorizedKernel {
    pub members: Vec<SumfactKernelSpec>,
    pub f: usize,
    pub s: usize,
    pub num_inputs: usize,
    pub width: usize,
    /// Quantity slots, `f * num_inputs` in total; idle slots replicate the
    /// last live member of their half.
    pub slot_member: Vec<usize>,
    /// Live member count per input half.
    pub live_counts: Vec<usize>,
    pub padding_lanes: usize,
    /// Tensor each half reads (stage 1) or accumulates into (stage 3).
    pub tensor_ids: Vec<TensorId>,
    pub stage: Stage,
    /// Per-direction stacks in operational orientation: already transposed
    /// for test-multiply kernels, direction 0 sliced.
    pub stacked: Vec<StackedMatrix>,
}

fn transpose_matrix(m: &KernelMatrix) -> KernelMatrix {
    let mut entries = vec![0.0; m.rows * m.cols];
    for i in 0..m.rows {
        for j in 0..m.cols {
            entries[j * m.rows + i] = m.get(i, j);
        }
    }
    KernelMatrix {
        rows: m.cols,
        cols: m.rows,
        entries,
        kind: m.kind,
    }
}

/// Builds a vectorized kernel from its live members.
///
/// Members must be pairwise parallelizable (same stage, same bounds, same
/// facet normal direction), touch exactly `num_inputs` distinct tensors with
/// at most f members each, and direction 0 must have a point count divisible
/// by s. Members are grouped by tensor in order of first appearance; the
/// first tensor's quantities fill the lower lane half.
pub fn build_vectorized_kernel(
    members: Vec<SumfactKernelSpec>,
    f: usize,
    s: usize,
    num_inputs: usize,
) -> Result<VectorizedKernel> {
    if members.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let width = f * s * num_inputs;
    if !(f.is_power_of_two() && s.is_power_of_two() && (num_inputs == 1 || num_inputs == 2)) {
        return Err(Error::LaneCapacity {
            f,
            s,
            num_inputs,
            width,
        });
    }
    if !matches!(width, 1 | 2 | 4 | 8) {
        return Err(Error::InvalidWidth(width));
    }
    for m in &members[1..] {
        if m.stage != members[0].stage
            || m.point_extents() != members[0].point_extents()
            || m.dof_extents() != members[0].dof_extents()
        {
            return Err(Error::MixedBounds);
        }
        if !m.parallelizable_with(&members[0]) {
            return Err(Error::MixedEmbedding);
        }
    }

    // Partition by tensor id, order of first appearance.
    let mut ids: Vec<TensorId> = Vec::new();
    for m in &members {
        if !ids.contains(&m.tensor_id) {
            ids.push(m.tensor_id);
        }
    }
    if ids.len() > 2 {
        return Err(Error::TooManyInputs(ids.len()));
    }
    if ids.len() != num_inputs {
        return Err(Error::LaneCapacity {
            f,
            s,
            num_inputs,
            width,
        });
    }
    let mut ordered: Vec<SumfactKernelSpec> = Vec::with_capacity(members.len());
    let mut live_counts = Vec::with_capacity(ids.len());
    for id in &ids {
        let before = ordered.len();
        for m in &members {
            if m.tensor_id == *id {
                ordered.push(m.clone());
            }
        }
        let count = ordered.len() - before;
        if count > f {
            return Err(Error::GroupOverflow {
                members: count,
                f,
            });
        }
        live_counts.push(count);
    }

    let m0 = ordered[0].point_extents()[0];
    if m0 % s != 0 {
        return Err(Error::NotDivisible {
            what: "direction-0 point count",
            value: m0,
            divisor: s,
        });
    }

    // Quantity slots: f per half; idle slots replicate the half's last member.
    let slots = f * num_inputs;
    let mut slot_member = Vec::with_capacity(slots);
    let mut member_base = 0;
    for &count in &live_counts {
        for t in 0..f {
            slot_member.push(member_base + t.min(count - 1));
        }
        member_base += count;
    }
    let live_total: usize = live_counts.iter().sum();
    let padding_lanes = (slots - live_total) * s;

    // Per-direction stacks in operational orientation.
    let d = ordered[0].d();
    let stage = ordered[0].stage;
    let mut stacked = Vec::with_capacity(d);
    for k in 0..d {
        let mut lane_mats: Vec<KernelMatrix> = Vec::with_capacity(width);
        for &mi in &slot_member {
            let member = &ordered[mi];
            if k == 0 {
                let slices = slice_matrix_circular(&member.matrices[0], s)?;
                for slice in slices {
                    lane_mats.push(match stage {
                        Stage::Evaluation => slice,
                        Stage::TestMultiply => transpose_matrix(&slice),
                    });
                }
            } else {
                let mat = match stage {
                    Stage::Evaluation => member.matrices[k].clone(),
                    Stage::TestMultiply => transpose_matrix(&member.matrices[k]),
                };
                for _ in 0..s {
                    lane_mats.push(mat.clone());
                }
            }
        }
        let refs: Vec<&KernelMatrix> = lane_mats.iter().collect();
        stacked.push(stack_matrices(&refs)?);
    }

    Ok(VectorizedKernel {
        members: ordered,
        f,
        s,
        num_inputs,
        width,
        slot_member,
        live_counts,
        padding_lanes,
        tensor_ids: ids,
        stage,
        stacked,
    })
}

impl VectorizedKernel {
    pub fn d(&self) -> usize {
        self.stacked.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.width == 1
    }

    /// Total quantity slots (f per input half).
    pub fn slots(&self) -> usize {
        self.slot_member.len()
    }

    /// Per-lane output extents of the contraction pass: direction 0 carries
    /// only its slice of the index space.
    pub fn lane_out_extents(&self) -> Vec<usize> {
        self.stacked.iter().map(|m| m.rows).collect()
    }

    /// Per-lane input extents of the contraction pass.
    pub fn lane_in_extents(&self) -> Vec<usize> {
        self.stacked.iter().map(|m| m.cols).collect()
    }

    /// Quantity index computed in a slot.
    pub fn slot_quantity(&self, slot: usize) -> usize {
        self.members[self.slot_member[slot]].quantity
    }

    /// Whether a slot is an idle (padding) slot.
    pub fn slot_is_padding(&self, slot: usize) -> bool {
        let half = slot / self.f;
        let t = slot % self.f;
        t >= self.live_counts[half]
    }

    /// Lane range carrying quantities of input half `h`, padding included.
    pub fn half_lane_range(&self, h: usize) -> std::ops::Range<usize> {
        h * self.f * self.s..(h + 1) * self.f * self.s
    }

    /// Lane ranges of live (non-padding) slots of half `h`.
    pub fn live_lane_range(&self, h: usize) -> std::ops::Range<usize> {
        let start = h * self.f * self.s;
        start..start + self.live_counts[h] * self.s
    }
}
