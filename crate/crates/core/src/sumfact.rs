//! Sum-factorized application of Kronecker-product operators.
//!
//! A d-dimensional basis evaluation `(A_{d-1} x .. x A_0) x` is factored into
//! d successive one-direction contractions. Each contraction multiplies one
//! per-direction matrix against the matricized tensor and rotates the axis
//! order so the next direction to contract becomes the fastest-varying one;
//! after d steps the axes are back in natural order. Direction 0 is always
//! contracted first, which fixes the operation count to
//! `2 * sum_k prod_{i<=k} m_i * prod_{j>=k} n_j`.

use crate::basis::KernelMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Where a kernel sits in the three-part cell algorithm: evaluating trial
/// quantities at quadrature points, or multiplying integrated point values by
/// test functions (the transposed pass that accumulates into the residual).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Evaluation,
    TestMultiply,
}

/// Identifies the flat tensor a kernel touches: the coefficient block it
/// reads (evaluation) or the residual block it accumulates into (test
/// multiply). Kernels sharing an id may be fused onto shared lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(pub usize);

/// Face a kernel is restricted to, for kernels of facet integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaceEmbedding {
    pub normal_direction: usize,
    pub side: crate::basis::FaceSide,
}

/// Complete description of one sum factorization kernel: one matrix per
/// direction, the stage, the tensor it reads or writes, and the quantity it
/// computes (an index the surrounding integration kernel assigns, e.g.
/// "value" or "reference derivative along direction 1").
#[derive(Debug, Clone)]
pub struct SumfactKernelSpec {
    pub matrices: Vec<KernelMatrix>,
    pub stage: Stage,
    pub tensor_id: TensorId,
    pub quantity: usize,
    pub embedding: Option<FaceEmbedding>,
}

impl SumfactKernelSpec {
    pub fn d(&self) -> usize {
        self.matrices.len()
    }

    /// Quadrature-side extents (matrix rows per direction).
    pub fn point_extents(&self) -> Vec<usize> {
        self.matrices.iter().map(|m| m.rows).collect()
    }

    /// Coefficient-side extents (matrix columns per direction).
    pub fn dof_extents(&self) -> Vec<usize> {
        self.matrices.iter().map(|m| m.cols).collect()
    }

    pub fn in_extents(&self) -> Vec<usize> {
        match self.stage {
            Stage::Evaluation => self.dof_extents(),
            Stage::TestMultiply => self.point_extents(),
        }
    }

    pub fn out_extents(&self) -> Vec<usize> {
        match self.stage {
            Stage::Evaluation => self.point_extents(),
            Stage::TestMultiply => self.dof_extents(),
        }
    }

    /// Operation count of one scalar application of this kernel.
    pub fn flops(&self) -> u64 {
        flop_cost(&self.out_extents(), &self.in_extents())
    }

    /// Two kernels can share lanes of one vectorized kernel when their index
    /// spaces agree: same stage, same bounds and, for facet kernels, the same
    /// normal direction (the side may differ; each lane carries its own
    /// matrices anyway).
    pub fn parallelizable_with(&self, other: &SumfactKernelSpec) -> bool {
        self.stage == other.stage
            && self.point_extents() == other.point_extents()
            && self.dof_extents() == other.dof_extents()
            && self.embedding.map(|e| e.normal_direction)
                == other.embedding.map(|e| e.normal_direction)
    }

    fn validate(&self) -> Result<()> {
        if self.matrices.is_empty() {
            return Err(Error::InvalidArgument(
                "kernel needs at least one direction matrix".into(),
            ));
        }
        Ok(())
    }
}

/// Operations needed to apply a sum-factorized kernel with output extents `m`
/// and input extents `n`, contracting direction 0 first:
/// `2 * sum_{k=0}^{d-1} prod_{i=0}^{k} m_i * prod_{j=k}^{d-1} n_j`.
pub fn flop_cost(m: &[usize], n: &[usize]) -> u64 {
    assert_eq!(m.len(), n.len());
    let d = m.len();
    let mut total: u64 = 0;
    for k in 0..d {
        let mut term: u64 = 1;
        for mi in &m[..=k] {
            term *= *mi as u64;
        }
        for nj in &n[k..] {
            term *= *nj as u64;
        }
        total += term;
    }
    2 * total
}

/// Relative growth of the direction-0 point count when it is padded up to the
/// next multiple of the lane width: `ceil(m0/w) * w / m0`.
pub fn quadrature_increase_factor(m0: usize, w: usize) -> f64 {
    assert!(m0 > 0 && w > 0);
    (m0.div_ceil(w) * w) as f64 / m0 as f64
}

/// One contraction step: `output[i * rest + r] = sum_j entry(i, j) * input[r * in_e + j]`,
/// where `entry` reads the matrix plainly or transposed. Writing the result
/// with stride `rest` is the axis rotation that makes the next direction to
/// contract the fastest-varying one.
fn contract_step<S: Scalar>(
    matrix: &KernelMatrix,
    transposed: bool,
    input: &[S],
    output: &mut [S],
    in_e: usize,
    out_e: usize,
    rest: usize,
    accumulate: bool,
) {
    debug_assert!(input.len() >= rest * in_e);
    debug_assert!(output.len() >= rest * out_e);
    for r in 0..rest {
        let row = &input[r * in_e..(r + 1) * in_e];
        for i in 0..out_e {
            let mut acc = S::zero();
            if transposed {
                for (j, &xj) in row.iter().enumerate() {
                    acc = S::from_f64(matrix.get(j, i)).mul_add_acc(xj, acc);
                }
            } else {
                for (j, &xj) in row.iter().enumerate() {
                    acc = S::from_f64(matrix.get(i, j)).mul_add_acc(xj, acc);
                }
            }
            if accumulate {
                output[i * rest + r] += acc;
            } else {
                output[i * rest + r] = acc;
            }
        }
    }
}

fn apply_steps<S: Scalar>(
    spec: &SumfactKernelSpec,
    x: &[S],
    out: &mut [S],
    accumulate_final: bool,
) -> Result<()> {
    spec.validate()?;
    let d = spec.d();
    let in_ext = spec.in_extents();
    let out_ext = spec.out_extents();
    let transposed = spec.stage == Stage::TestMultiply;
    let in_len: usize = in_ext.iter().product();
    let out_len: usize = out_ext.iter().product();
    if x.len() != in_len {
        return Err(Error::DimensionMismatch {
            expected: in_len,
            got: x.len(),
        });
    }
    if out.len() != out_len {
        return Err(Error::DimensionMismatch {
            expected: out_len,
            got: out.len(),
        });
    }

    let mut scratch_a: Vec<S> = Vec::new();
    let mut scratch_b: Vec<S> = Vec::new();
    let mut size = in_len;
    for k in 0..d {
        let rest = size / in_ext[k];
        let next_size = rest * out_ext[k];
        let last = k == d - 1;
        if last {
            if k == 0 {
                contract_step(
                    &spec.matrices[k],
                    transposed,
                    x,
                    out,
                    in_ext[k],
                    out_ext[k],
                    rest,
                    accumulate_final,
                );
            } else {
                contract_step(
                    &spec.matrices[k],
                    transposed,
                    &scratch_a,
                    out,
                    in_ext[k],
                    out_ext[k],
                    rest,
                    accumulate_final,
                );
            }
        } else {
            scratch_b.clear();
            scratch_b.resize(next_size, S::zero());
            if k == 0 {
                contract_step(
                    &spec.matrices[k],
                    transposed,
                    x,
                    &mut scratch_b,
                    in_ext[k],
                    out_ext[k],
                    rest,
                    false,
                );
            } else {
                contract_step(
                    &spec.matrices[k],
                    transposed,
                    &scratch_a,
                    &mut scratch_b,
                    in_ext[k],
                    out_ext[k],
                    rest,
                    false,
                );
            }
            std::mem::swap(&mut scratch_a, &mut scratch_b);
        }
        size = next_size;
    }
    Ok(())
}

/// Applies the kernel to a flat coefficient (or point value) tensor and
/// returns the result in natural axis order.
pub fn sumfact_apply<S: Scalar>(spec: &SumfactKernelSpec, x: &Tensor<S>) -> Result<Tensor<S>> {
    if x.dims() != spec.in_extents().as_slice() {
        return Err(Error::DimensionMismatch {
            expected: spec.in_extents().iter().product(),
            got: x.len(),
        });
    }
    let mut out = Tensor::zeros(&spec.out_extents());
    apply_steps(spec, x.data(), out.data_mut(), false)?;
    Ok(out)
}

/// Applies the kernel and adds the result onto `target`; the accumulation
/// happens only at the final write-back, as test-multiply kernels require.
pub fn sumfact_apply_accumulate<S: Scalar>(
    spec: &SumfactKernelSpec,
    x: &[S],
    target: &mut [S],
) -> Result<()> {
    apply_steps(spec, x, target, true)
}
