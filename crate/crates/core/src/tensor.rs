//! Dense tensors in the flattening convention used by every kernel: index 0
//! varies fastest, so `offset(i0, .., i_{d-1}) = i0 + dims0*(i1 + dims1*(i2 + ..))`.
//! This is the one layout under which slicing direction 0 circularly and
//! interleaving the slices reproduces the flat tensor bit for bit.

use crate::basis::KernelMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat multi-dimensional array over the scalar type `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S = f64> {
    dims: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![S::zero(); len],
        }
    }

    pub fn from_data(dims: &[usize], data: Vec<S>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: data.len(),
            });
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Flat offset of a multi-index; index 0 has stride 1.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for k in (0..idx.len()).rev() {
            debug_assert!(idx[k] < self.dims[k]);
            off = off * self.dims[k] + idx[k];
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: S) {
        let off = self.offset(idx);
        self.data[off] = value;
    }
}

/// Walks all multi-indices of `dims` in flat (index 0 fastest) order.
pub fn for_each_index(dims: &[usize], mut visit: impl FnMut(&[usize])) {
    let len: usize = dims.iter().product();
    if dims.is_empty() || len == 0 {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..len {
        visit(&idx);
        for k in 0..dims.len() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Reference Kronecker-product application, one matrix per direction:
/// `out[i] = sum_j (prod_k A_k[i_k, j_k]) x[j]`.
///
/// Cost is the full product of all extents; this exists as the independent
/// oracle the factorized kernels are checked against, not for production use.
pub fn kronecker_apply_naive<S: Scalar>(
    matrices: &[KernelMatrix],
    x: &Tensor<S>,
) -> Result<Tensor<S>> {
    if matrices.len() != x.dims().len() {
        return Err(Error::DimensionMismatch {
            expected: x.dims().len(),
            got: matrices.len(),
        });
    }
    for (k, m) in matrices.iter().enumerate() {
        if m.cols != x.dims()[k] {
            return Err(Error::DimensionMismatch {
                expected: x.dims()[k],
                got: m.cols,
            });
        }
    }
    let out_dims: Vec<usize> = matrices.iter().map(|m| m.rows).collect();
    let mut out = Tensor::zeros(&out_dims);
    for_each_index(&out_dims, |i| {
        let mut acc = S::zero();
        for_each_index(x.dims(), |j| {
            let mut factor = 1.0;
            for k in 0..matrices.len() {
                factor *= matrices[k].get(i[k], j[k]);
            }
            acc = S::from_f64(factor).mul_add_acc(x.get(j), acc);
        });
        let off = out.offset(i);
        out.data_mut()[off] = acc;
    });
    Ok(out)
}

/// Number of scalars an interleaved allocation reserves: the logical size
/// `lanes * prod(dims)` rounded up to a multiple of `lanes * 8`, so a block
/// loop over the widest supported lane count can read and write whole final
/// blocks without a tail loop.
pub fn padded_scalar_len(element_count: usize, lanes: usize) -> usize {
    lanes * element_count.div_ceil(8) * 8
}

/// Lane-interleaved tensor: scalar for element `idx` in lane `l` lives at
/// `data[idx * lanes + l]`. The buffer is at least `padded_len` long; the
/// region past `lanes * prod(dims)` up to `padded_len` is scratch that block
/// loops may touch, anything beyond `padded_len` is never accessed.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedTensor<S = f64> {
    dims: Vec<usize>,
    lanes: usize,
    padded_len: usize,
    data: Vec<S>,
}

impl<S: Scalar> InterleavedTensor<S> {
    pub fn zeros(dims: &[usize], lanes: usize) -> Self {
        let elements: usize = dims.iter().product();
        let padded_len = padded_scalar_len(elements, lanes);
        InterleavedTensor {
            dims: dims.to_vec(),
            lanes,
            padded_len,
            data: vec![S::zero(); padded_len],
        }
    }

    /// Wraps an existing buffer, which may be longer than the padded length;
    /// the excess is left untouched by all kernels (tests plant canaries there).
    pub fn from_parts(dims: &[usize], lanes: usize, data: Vec<S>) -> Result<Self> {
        let elements: usize = dims.iter().product();
        let padded_len = padded_scalar_len(elements, lanes);
        if data.len() < padded_len {
            return Err(Error::DimensionMismatch {
                expected: padded_len,
                got: data.len(),
            });
        }
        Ok(InterleavedTensor {
            dims: dims.to_vec(),
            lanes,
            padded_len,
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    /// Elements per lane (product of dims).
    pub fn elements(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    /// The addressable region: logical data plus block-loop scratch.
    pub fn padded_data(&self) -> &[S] {
        &self.data[..self.padded_len]
    }

    pub fn padded_data_mut(&mut self) -> &mut [S] {
        let padded = self.padded_len;
        &mut self.data[..padded]
    }

    /// Full backing buffer including any canary region past `padded_len`.
    pub fn raw_data(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, element: usize, lane: usize) -> S {
        debug_assert!(element < self.elements());
        debug_assert!(lane < self.lanes);
        self.data[element * self.lanes + lane]
    }

    pub fn set(&mut self, element: usize, lane: usize, value: S) {
        debug_assert!(element < self.elements());
        debug_assert!(lane < self.lanes);
        self.data[element * self.lanes + lane] = value;
    }
}

/// Interleaves equally shaped flat tensors; tensor `l` fills lane `l`.
pub fn interleave<S: Scalar>(tensors: &[&Tensor<S>]) -> Result<InterleavedTensor<S>> {
    if tensors.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let dims = tensors[0].dims().to_vec();
    for t in tensors {
        if t.dims() != dims.as_slice() {
            return Err(Error::MixedBounds);
        }
    }
    let lanes = tensors.len();
    let mut out = InterleavedTensor::zeros(&dims, lanes);
    for (l, t) in tensors.iter().enumerate() {
        for (idx, &v) in t.data().iter().enumerate() {
            out.data[idx * lanes + l] = v;
        }
    }
    Ok(out)
}

/// Splits an interleaved tensor back into one flat tensor per lane.
pub fn deinterleave<S: Scalar>(interleaved: &InterleavedTensor<S>) -> Vec<Tensor<S>> {
    let lanes = interleaved.lanes;
    let elements = interleaved.elements();
    (0..lanes)
        .map(|l| {
            let data: Vec<S> = (0..elements)
                .map(|idx| interleaved.data[idx * lanes + l])
                .collect();
            Tensor {
                dims: interleaved.dims.clone(),
                data,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::MatrixKind;

    fn ident(n: usize) -> KernelMatrix {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        KernelMatrix::new(n, n, entries, MatrixKind::Evaluation).unwrap()
    }

    #[test]
    fn offset_follows_first_index_fastest() {
        let t: Tensor<f64> = Tensor::zeros(&[2, 3]);
        assert_eq!(t.offset(&[0, 0]), 0);
        assert_eq!(t.offset(&[1, 0]), 1);
        assert_eq!(t.offset(&[0, 1]), 2);
        assert_eq!(t.offset(&[1, 2]), 5);
    }

    #[test]
    fn offset_three_dims() {
        let t: Tensor<f64> = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.offset(&[1, 2, 3]), 1 + 2 * (2 + 3 * 3));
    }

    #[test]
    fn kronecker_with_identity_matrices_is_identity() {
        let x = Tensor::from_data(&[2, 3], (0..6).map(|v| v as f64 + 0.25).collect()).unwrap();
        let out = kronecker_apply_naive(&[ident(2), ident(3)], &x).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn kronecker_all_ones_sums_everything() {
        let ones = KernelMatrix::new(1, 2, vec![1.0, 1.0], MatrixKind::Evaluation).unwrap();
        let x = Tensor::from_data(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = kronecker_apply_naive(&[ones.clone(), ones], &x).unwrap();
        assert_eq!(out.dims(), &[1, 1]);
        assert!((out.data()[0] - 10.0).abs() < 1e-15);
    }

    #[test]
    fn kronecker_rejects_wrong_rank() {
        let x: Tensor<f64> = Tensor::zeros(&[2, 2]);
        assert!(kronecker_apply_naive(&[ident(2)], &x).is_err());
    }

    #[test]
    fn padded_len_rounds_to_lane_multiple_of_eight() {
        assert_eq!(padded_scalar_len(27, 4), 128);
        assert_eq!(padded_scalar_len(8, 4), 32);
        assert_eq!(padded_scalar_len(1, 1), 8);
        assert_eq!(padded_scalar_len(64, 8), 512);
        assert_eq!(padded_scalar_len(9, 2), 32);
    }

    #[test]
    fn interleave_deinterleave_round_trip() {
        let a = Tensor::from_data(&[3, 2], (0..6).map(|v| v as f64).collect()).unwrap();
        let b = Tensor::from_data(&[3, 2], (0..6).map(|v| v as f64 * 10.0).collect()).unwrap();
        let c = Tensor::from_data(&[3, 2], (0..6).map(|v| -(v as f64)).collect()).unwrap();
        let inter = interleave(&[&a, &b, &c]).unwrap();
        assert_eq!(inter.lanes(), 3);
        assert_eq!(inter.get(4, 1), 40.0);
        let back = deinterleave(&inter);
        assert_eq!(back[0], a);
        assert_eq!(back[1], b);
        assert_eq!(back[2], c);
    }

    #[test]
    fn interleave_rejects_mixed_shapes() {
        let a: Tensor<f64> = Tensor::zeros(&[2, 2]);
        let b: Tensor<f64> = Tensor::zeros(&[2, 3]);
        assert!(interleave(&[&a, &b]).is_err());
    }

    #[test]
    fn from_parts_keeps_canary_region() {
        let mut data = vec![0.0; padded_scalar_len(5, 2) + 4];
        let canary_from = padded_scalar_len(5, 2);
        for v in &mut data[canary_from..] {
            *v = 7.5;
        }
        let t = InterleavedTensor::from_parts(&[5], 2, data).unwrap();
        assert_eq!(t.padded_len(), canary_from);
        assert!(t.raw_data()[canary_from..].iter().all(|&v| v == 7.5));
    }
}
