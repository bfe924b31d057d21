//! Sum-factorization kernel sets and pointwise integrands for the
//! diffusion-reaction operator.
//!
//! Every integral is driven by the same machinery: stage-1 kernels evaluate
//! the trial function's value and reference gradient at quadrature points,
//! a pointwise operation combines them with precomputed coefficient tables,
//! and stage-3 kernels multiply by test functions and accumulate into
//! residual blocks.
//!
//! Quantity numbering is shared between the two stages of an integral. For
//! cell integrals, quantity 0 is the value and quantity `1 + i` the
//! reference derivative along direction `i`. Facet integrals view the two
//! adjacent cells as separate inputs: quantities `0..=d` belong to the cell
//! on the lower side of the facet normal, `d+1..=2d+1` to the upper cell.

use crate::basis::{
    derivative_matrix, evaluation_matrix, face_derivative_matrix, face_restriction_matrix,
    gauss_legendre, Basis1D, FaceSide, KernelMatrix,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simd_exec::PointKernel;
use crate::sumfact::{FaceEmbedding, Stage, SumfactKernelSpec, TensorId};
use crate::tensor::padded_scalar_len;

use super::problem::ProblemDataRef;

/// Quantity index of the trial value for the cell on the given facet half
/// (0 = lower/minus, 1 = upper/plus); cell integrals use half 0.
pub fn value_quantity(dim: usize, half: usize) -> usize {
    half * (dim + 1)
}

/// Quantity index of the reference derivative along `direction`.
pub fn grad_quantity(dim: usize, half: usize, direction: usize) -> usize {
    half * (dim + 1) + 1 + direction
}

fn tensor_rules(tuple: &[usize]) -> Result<Vec<crate::basis::QuadratureRule1D>> {
    tuple.iter().map(|&m| gauss_legendre(m)).collect()
}

/// Builds the `2 (d + 1)` kernels of a cell integral at the given
/// per-direction point counts: one evaluation and one test-multiply kernel
/// for the value and for each derivative direction. All kernels read from
/// (respectively accumulate into) tensor 0, the cell's coefficient block.
pub fn volume_kernel_set(
    dim: usize,
    degree: usize,
    tuple: &[usize],
) -> Result<Vec<SumfactKernelSpec>> {
    if tuple.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: tuple.len(),
        });
    }
    let basis = Basis1D::equidistant(degree);
    let rules = tensor_rules(tuple)?;
    let eval: Vec<KernelMatrix> = rules.iter().map(|r| evaluation_matrix(&basis, r)).collect();
    let deriv: Vec<KernelMatrix> = rules.iter().map(|r| derivative_matrix(&basis, r)).collect();

    let mut kernels = Vec::with_capacity(2 * (dim + 1));
    for stage in [Stage::Evaluation, Stage::TestMultiply] {
        for quantity in 0..=dim {
            let matrices: Vec<KernelMatrix> = (0..dim)
                .map(|dir| {
                    if quantity == 1 + dir {
                        deriv[dir].clone()
                    } else {
                        eval[dir].clone()
                    }
                })
                .collect();
            kernels.push(SumfactKernelSpec {
                matrices,
                stage,
                tensor_id: TensorId(0),
                quantity,
                embedding: None,
            });
        }
    }
    Ok(kernels)
}

/// Builds the `4 (d + 1)` kernels of an interior facet integral with normal
/// along `normal`: traces and tangential derivatives of both adjacent
/// cells. The cell on the lower side of the normal contributes through its
/// upper face and tensor 0; the upper cell through its lower face and
/// tensor 1. `tuple` holds the per-direction point counts with a collapsed
/// entry (1) at `normal`.
pub fn interior_facet_kernel_set(
    dim: usize,
    degree: usize,
    tuple: &[usize],
    normal: usize,
) -> Result<Vec<SumfactKernelSpec>> {
    validate_facet_tuple(dim, tuple, normal)?;
    let basis = Basis1D::equidistant(degree);
    let mut kernels = Vec::with_capacity(4 * (dim + 1));
    for stage in [Stage::Evaluation, Stage::TestMultiply] {
        for (half, face) in [(0usize, FaceSide::Upper), (1, FaceSide::Lower)] {
            push_facet_side_kernels(
                &mut kernels,
                &basis,
                dim,
                tuple,
                normal,
                face,
                stage,
                TensorId(half),
                half * (dim + 1),
            )?;
        }
    }
    Ok(kernels)
}

/// Builds the `2 (d + 1)` kernels of a Dirichlet boundary facet integral:
/// the trace and tangential derivatives of the single adjacent cell, seen
/// through the face that lies on the domain boundary.
pub fn boundary_facet_kernel_set(
    dim: usize,
    degree: usize,
    tuple: &[usize],
    normal: usize,
    side: FaceSide,
) -> Result<Vec<SumfactKernelSpec>> {
    validate_facet_tuple(dim, tuple, normal)?;
    let basis = Basis1D::equidistant(degree);
    let mut kernels = Vec::with_capacity(2 * (dim + 1));
    for stage in [Stage::Evaluation, Stage::TestMultiply] {
        push_facet_side_kernels(
            &mut kernels, &basis, dim, tuple, normal, side, stage, TensorId(0), 0,
        )?;
    }
    Ok(kernels)
}

fn validate_facet_tuple(dim: usize, tuple: &[usize], normal: usize) -> Result<()> {
    if tuple.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: tuple.len(),
        });
    }
    if normal >= dim {
        return Err(Error::InvalidArgument(format!(
            "facet normal direction {normal} out of range for dimension {dim}"
        )));
    }
    if tuple[normal] != 1 {
        return Err(Error::InvalidArgument(format!(
            "facet point tuple must be collapsed along the normal, got {} points",
            tuple[normal]
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn push_facet_side_kernels(
    kernels: &mut Vec<SumfactKernelSpec>,
    basis: &Basis1D,
    dim: usize,
    tuple: &[usize],
    normal: usize,
    face: FaceSide,
    stage: Stage,
    tensor_id: TensorId,
    quantity_base: usize,
) -> Result<()> {
    let embedding = Some(FaceEmbedding {
        normal_direction: normal,
        side: face,
    });
    // One kernel for the trace value plus one per derivative direction.
    for role in 0..=dim {
        let matrices: Vec<KernelMatrix> = (0..dim)
            .map(|dir| -> Result<KernelMatrix> {
                let derivative_dir = role >= 1 && dir == role - 1;
                if dir == normal {
                    Ok(if derivative_dir {
                        face_derivative_matrix(basis, face)
                    } else {
                        face_restriction_matrix(basis, face)
                    })
                } else {
                    let rule = gauss_legendre(tuple[dir])?;
                    Ok(if derivative_dir {
                        derivative_matrix(basis, &rule)
                    } else {
                        evaluation_matrix(basis, &rule)
                    })
                }
            })
            .collect::<Result<_>>()?;
        kernels.push(SumfactKernelSpec {
            matrices,
            stage,
            tensor_id,
            quantity: quantity_base + role,
            embedding,
        });
    }
    Ok(())
}

/// Maps flat quadrature indices (direction 0 fastest) to per-direction
/// reference coordinates and weight products. Collapsed directions hold a
/// single fixed coordinate with weight one.
pub struct PointGrid {
    pub tuple: Vec<usize>,
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl PointGrid {
    pub fn volume(tuple: &[usize]) -> Result<Self> {
        let rules = tensor_rules(tuple)?;
        Ok(PointGrid {
            tuple: tuple.to_vec(),
            nodes: rules.iter().map(|r| r.points.clone()).collect(),
            weights: rules.iter().map(|r| r.weights.clone()).collect(),
        })
    }

    /// Facet grid seen from one adjacent cell: the normal direction is
    /// pinned to that cell's face coordinate.
    pub fn facet(tuple: &[usize], normal: usize, face: FaceSide) -> Result<Self> {
        let mut nodes = Vec::with_capacity(tuple.len());
        let mut weights = Vec::with_capacity(tuple.len());
        for (dir, &m) in tuple.iter().enumerate() {
            if dir == normal {
                nodes.push(vec![face.coordinate()]);
                weights.push(vec![1.0]);
            } else {
                let rule = gauss_legendre(m)?;
                nodes.push(rule.points);
                weights.push(rule.weights);
            }
        }
        Ok(PointGrid {
            tuple: tuple.to_vec(),
            nodes,
            weights,
        })
    }

    pub fn num_points(&self) -> usize {
        self.tuple.iter().product()
    }

    /// Reference coordinates and quadrature weight of flat point `q`.
    pub fn decode(&self, q: usize) -> ([f64; 3], f64) {
        let mut coords = [0.0; 3];
        let mut weight = 1.0;
        let mut rest = q;
        for dir in 0..self.tuple.len() {
            let idx = rest % self.tuple[dir];
            rest /= self.tuple[dir];
            coords[dir] = self.nodes[dir][idx];
            weight *= self.weights[dir][idx];
        }
        (coords, weight)
    }
}

fn padded_points(num_points: usize) -> usize {
    padded_scalar_len(num_points, 1)
}

/// Per-cell coefficient tables for the cell integrand, padded to full
/// blocks so vector lanes past the last point read zeros.
pub struct VolumeTables {
    dim: usize,
    padded: usize,
    /// `w_q h^d` — measure of the mapped quadrature point.
    mass: Vec<f64>,
    /// Reaction coefficient at the point.
    reaction: Vec<f64>,
    /// Source term at the point (zero when the operator action is applied).
    source: Vec<f64>,
    /// `w_q h^{d-2} K_ij(x_q)`, laid out as `d * d` tables of stride
    /// `padded`.
    diffusion: Vec<f64>,
}

impl VolumeTables {
    pub fn new(dim: usize, num_points: usize) -> Self {
        let padded = padded_points(num_points);
        VolumeTables {
            dim,
            padded,
            mass: vec![0.0; padded],
            reaction: vec![0.0; padded],
            source: vec![0.0; padded],
            diffusion: vec![0.0; dim * dim * padded],
        }
    }

    /// Fills the live entries for one cell; padding stays zero.
    pub fn fill(&mut self, problem: &ProblemDataRef<'_>, grid: &PointGrid, corner: [f64; 3], h: f64) {
        let d = self.dim;
        let hd = h.powi(d as i32);
        let hgrad = h.powi(d as i32 - 2);
        for q in 0..grid.num_points() {
            let (reference, w) = grid.decode(q);
            let mut x = [0.0; 3];
            for i in 0..d {
                x[i] = corner[i] + h * reference[i];
            }
            let k = problem.diffusion(&x);
            self.mass[q] = w * hd;
            self.reaction[q] = problem.reaction(&x);
            self.source[q] = problem.source(&x);
            for i in 0..d {
                for j in 0..d {
                    self.diffusion[(i * d + j) * self.padded + q] = w * hgrad * k[i][j];
                }
            }
        }
    }

    fn diffusion_at(&self, i: usize, j: usize, q: usize) -> f64 {
        self.diffusion[(i * self.dim + j) * self.padded + q]
    }
}

/// The cell integrand: reaction and source against the test value, the
/// diffusive flux against test gradients.
pub struct VolumePointOp<'a> {
    pub tables: &'a VolumeTables,
}

impl<S: Scalar> PointKernel<S> for VolumePointOp<'_> {
    fn num_inputs(&self) -> usize {
        self.tables.dim + 1
    }
    fn num_outputs(&self) -> usize {
        self.tables.dim + 1
    }
    fn eval<const W: usize>(&self, first_point: usize, u: &[[S; W]], r: &mut [[S; W]]) {
        let d = self.tables.dim;
        for l in 0..W {
            let q = first_point + l;
            let mass = S::from_f64(self.tables.mass[q]);
            let c = S::from_f64(self.tables.reaction[q]);
            let f = S::from_f64(self.tables.source[q]);
            r[0][l] = mass * (c * u[0][l] - f);
            for i in 0..d {
                let mut acc = S::zero();
                for j in 0..d {
                    let kij = S::from_f64(self.tables.diffusion_at(i, j, q));
                    acc = kij.mul_add_acc(u[1 + j][l], acc);
                }
                r[1 + i][l] = acc;
            }
        }
    }
}

/// Per-facet coefficient tables for the interior penalty integrand.
///
/// With the facet normal pointing from the lower to the upper cell, the
/// integrand couples the jump (lower minus upper trace), the average
/// normal flux and the penalty term; the consistency terms distribute the
/// jump onto both cells' test gradients with a factor `theta = -1`
/// (symmetric interior penalty).
pub struct FacetTables {
    dim: usize,
    padded: usize,
    /// `w_q h^{d-1}` — facet measure.
    weight: Vec<f64>,
    /// `w_q h^{d-1} gamma` — penalty prefactor.
    penalty: Vec<f64>,
    /// `1/2 K_{nu j}(x_q) / h` per derivative j, stride `padded`; the flux
    /// average contribution of each side.
    flux_lower: Vec<f64>,
    flux_upper: Vec<f64>,
    /// `theta w_q h^{d-1} 1/2 K_{nu j}(x_q) / h` per derivative j; the
    /// consistency coefficient on each side's test gradient.
    grad_lower: Vec<f64>,
    grad_upper: Vec<f64>,
}

impl FacetTables {
    pub fn new(dim: usize, num_points: usize) -> Self {
        let padded = padded_points(num_points);
        FacetTables {
            dim,
            padded,
            weight: vec![0.0; padded],
            penalty: vec![0.0; padded],
            flux_lower: vec![0.0; dim * padded],
            flux_upper: vec![0.0; dim * padded],
            grad_lower: vec![0.0; dim * padded],
            grad_upper: vec![0.0; dim * padded],
        }
    }

    /// Fills the tables for the facet whose lower adjacent cell has the
    /// given corner; `grid` must be the facet grid seen from that cell
    /// (upper face pinned).
    #[allow(clippy::too_many_arguments)]
    pub fn fill(
        &mut self,
        problem: &ProblemDataRef<'_>,
        grid: &PointGrid,
        corner: [f64; 3],
        h: f64,
        normal: usize,
        gamma: f64,
    ) {
        let d = self.dim;
        let theta = -1.0;
        let hf = h.powi(d as i32 - 1);
        let inv_h = 1.0 / h;
        for q in 0..grid.num_points() {
            let (reference, w) = grid.decode(q);
            let mut x = [0.0; 3];
            for i in 0..d {
                x[i] = corner[i] + h * reference[i];
            }
            let k = problem.diffusion(&x);
            let wf = w * hf;
            self.weight[q] = wf;
            self.penalty[q] = wf * gamma;
            for j in 0..d {
                // The diffusion tensor is single-valued on the facet, so
                // both sides share the same half-flux coefficients.
                let half_flux = 0.5 * k[normal][j] * inv_h;
                self.flux_lower[j * self.padded + q] = half_flux;
                self.flux_upper[j * self.padded + q] = half_flux;
                let consistency = theta * wf * half_flux;
                self.grad_lower[j * self.padded + q] = consistency;
                self.grad_upper[j * self.padded + q] = consistency;
            }
        }
    }
}

/// The interior facet integrand acting on traces of both adjacent cells.
pub struct FacetPointOp<'a> {
    pub tables: &'a FacetTables,
}

impl<S: Scalar> PointKernel<S> for FacetPointOp<'_> {
    fn num_inputs(&self) -> usize {
        2 * (self.tables.dim + 1)
    }
    fn num_outputs(&self) -> usize {
        2 * (self.tables.dim + 1)
    }
    fn eval<const W: usize>(&self, first_point: usize, u: &[[S; W]], r: &mut [[S; W]]) {
        let d = self.tables.dim;
        let padded = self.tables.padded;
        for l in 0..W {
            let q = first_point + l;
            let jump = u[0][l] - u[d + 1][l];
            let mut avg = S::zero();
            for j in 0..d {
                let cl = S::from_f64(self.tables.flux_lower[j * padded + q]);
                let cu = S::from_f64(self.tables.flux_upper[j * padded + q]);
                avg = cl.mul_add_acc(u[1 + j][l], avg);
                avg = cu.mul_add_acc(u[d + 2 + j][l], avg);
            }
            let weighted_avg = S::from_f64(self.tables.weight[q]) * avg;
            let penalty_jump = S::from_f64(self.tables.penalty[q]) * jump;
            r[0][l] = penalty_jump - weighted_avg;
            r[d + 1][l] = weighted_avg - penalty_jump;
            for j in 0..d {
                let gl = S::from_f64(self.tables.grad_lower[j * padded + q]);
                let gu = S::from_f64(self.tables.grad_upper[j * padded + q]);
                r[1 + j][l] = gl * jump;
                r[d + 2 + j][l] = gu * jump;
            }
        }
    }
}

/// Per-facet coefficient tables for the Dirichlet boundary integrand
/// (Nitsche-type enforcement consistent with the interior penalty terms).
pub struct BoundaryTables {
    dim: usize,
    padded: usize,
    weight: Vec<f64>,
    penalty: Vec<f64>,
    /// `sigma K_{nu j}(x_q) / h`: the outward normal flux coefficients,
    /// where `sigma` is the sign of the outward normal along the facet
    /// normal axis.
    flux: Vec<f64>,
    /// `theta w_q h^{d-1} sigma K_{nu j}(x_q) / h` on the test gradient.
    grad: Vec<f64>,
    /// Dirichlet data at the point (zero for the operator action).
    dirichlet: Vec<f64>,
}

impl BoundaryTables {
    pub fn new(dim: usize, num_points: usize) -> Self {
        let padded = padded_points(num_points);
        BoundaryTables {
            dim,
            padded,
            weight: vec![0.0; padded],
            penalty: vec![0.0; padded],
            flux: vec![0.0; dim * padded],
            grad: vec![0.0; dim * padded],
            dirichlet: vec![0.0; padded],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn fill(
        &mut self,
        problem: &ProblemDataRef<'_>,
        grid: &PointGrid,
        corner: [f64; 3],
        h: f64,
        normal: usize,
        side: FaceSide,
        gamma: f64,
    ) {
        let d = self.dim;
        let theta = -1.0;
        let hf = h.powi(d as i32 - 1);
        let inv_h = 1.0 / h;
        let sigma = match side {
            FaceSide::Lower => -1.0,
            FaceSide::Upper => 1.0,
        };
        for q in 0..grid.num_points() {
            let (reference, w) = grid.decode(q);
            let mut x = [0.0; 3];
            for i in 0..d {
                x[i] = corner[i] + h * reference[i];
            }
            let k = problem.diffusion(&x);
            let wf = w * hf;
            self.weight[q] = wf;
            self.penalty[q] = wf * gamma;
            self.dirichlet[q] = problem.dirichlet(&x);
            for j in 0..d {
                let flux = sigma * k[normal][j] * inv_h;
                self.flux[j * self.padded + q] = flux;
                self.grad[j * self.padded + q] = theta * wf * flux;
            }
        }
    }
}

/// The boundary facet integrand: penalized trace mismatch against the test
/// value, trace mismatch against the test flux, and the outward flux
/// against the test value.
pub struct BoundaryPointOp<'a> {
    pub tables: &'a BoundaryTables,
}

impl<S: Scalar> PointKernel<S> for BoundaryPointOp<'_> {
    fn num_inputs(&self) -> usize {
        self.tables.dim + 1
    }
    fn num_outputs(&self) -> usize {
        self.tables.dim + 1
    }
    fn eval<const W: usize>(&self, first_point: usize, u: &[[S; W]], r: &mut [[S; W]]) {
        let d = self.tables.dim;
        let padded = self.tables.padded;
        for l in 0..W {
            let q = first_point + l;
            let mismatch = u[0][l] - S::from_f64(self.tables.dirichlet[q]);
            let mut flux = S::zero();
            for j in 0..d {
                let c = S::from_f64(self.tables.flux[j * padded + q]);
                flux = c.mul_add_acc(u[1 + j][l], flux);
            }
            let weighted_flux = S::from_f64(self.tables.weight[q]) * flux;
            let penalty_mismatch = S::from_f64(self.tables.penalty[q]) * mismatch;
            r[0][l] = penalty_mismatch - weighted_flux;
            for j in 0..d {
                let g = S::from_f64(self.tables.grad[j * padded + q]);
                r[1 + j][l] = g * mismatch;
            }
        }
    }
}
