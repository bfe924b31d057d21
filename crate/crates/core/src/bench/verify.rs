//! Self-checks behind the `verify` subcommand: the fast core of the
//! correctness suite, runnable from an installed binary without the test
//! harness.
//!
//! Four families of checks run, each against an implementation-independent
//! reference: sum-factorized kernels against dense Kronecker application,
//! lane interleaving against its closed-form index identity, vectorized
//! residual plans against the forced-scalar path, and the full operator
//! against a polynomial the discretization must reproduce exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{KernelMatrix, MatrixKind};
use crate::dg::assemble::{apply_residual, interpolate, plan_operator, ApplyOptions, PlanChoice};
use crate::dg::problem::ProblemData;
use crate::dg::GridConfig;
use crate::error::Result;
use crate::strategy::{CostModel, ForcedStrategy};
use crate::sumfact::{sumfact_apply, Stage, SumfactKernelSpec, TensorId};
use crate::tensor::{deinterleave, interleave, kronecker_apply_naive, Tensor};
use crate::vecplan::vec_identity_check;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Human-readable summary, e.g. the worst error observed.
    pub detail: String,
}

/// Run the whole suite. Failed checks are reported in the returned list,
/// not as an `Err`; errors signal that a check could not even run.
pub fn run_verification(seed: u64) -> Result<Vec<VerifyCheck>> {
    Ok(vec![
        check_kernels_against_dense(seed)?,
        check_lane_identity(seed ^ 0x5eed)?,
        check_strategies_against_scalar(seed ^ 0xface)?,
        check_polynomial_reproduction()?,
    ])
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> KernelMatrix {
    let entries = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    KernelMatrix::new(rows, cols, entries, MatrixKind::Evaluation).expect("sized entries")
}

fn transposed(m: &KernelMatrix) -> KernelMatrix {
    let mut entries = vec![0.0; m.entries.len()];
    for i in 0..m.rows {
        for j in 0..m.cols {
            entries[j * m.rows + i] = m.get(i, j);
        }
    }
    KernelMatrix::new(m.cols, m.rows, entries, m.kind).expect("transposed entries")
}

/// Sum-factorized application against dense Kronecker-product application
/// on random matrices, both contraction directions.
fn check_kernels_against_dense(seed: u64) -> Result<VerifyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let d = 2 + case % 2;
        let stage = if case % 4 < 2 {
            Stage::Evaluation
        } else {
            Stage::TestMultiply
        };
        let matrices: Vec<KernelMatrix> = (0..d)
            .map(|_| {
                let rows = rng.gen_range(1..=5);
                let cols = rng.gen_range(2..=5);
                random_matrix(&mut rng, rows, cols)
            })
            .collect();
        let spec = SumfactKernelSpec {
            matrices,
            stage,
            tensor_id: TensorId(0),
            quantity: 0,
            embedding: None,
        };
        let in_extents = spec.in_extents();
        let data: Vec<f64> = (0..in_extents.iter().product::<usize>())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let x = Tensor::from_data(&in_extents, data)?;
        let fast = sumfact_apply(&spec, &x)?;
        // The test-multiply stage contracts with the transposed matrices,
        // so the dense reference gets them transposed explicitly.
        let dense_matrices: Vec<KernelMatrix> = match stage {
            Stage::Evaluation => spec.matrices.clone(),
            Stage::TestMultiply => spec.matrices.iter().map(transposed).collect(),
        };
        let dense = kronecker_apply_naive(&dense_matrices, &x)?;
        let scale = max_abs(dense.data()).max(1.0);
        worst = worst.max(max_abs_diff(fast.data(), dense.data()) / scale);
    }
    Ok(VerifyCheck {
        name: "kernel-vs-dense",
        passed: worst <= 1e-13,
        detail: format!("20 random kernels, worst relative error {worst:.2e}"),
    })
}

/// Interleave/deinterleave round trips and the closed-form lane identity
/// on random tensor shapes.
fn check_lane_identity(seed: u64) -> Result<VerifyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut cases = 0usize;
    let random_tensor = |rng: &mut ChaCha8Rng, dims: &[usize]| {
        let data: Vec<f64> = (0..dims.iter().product::<usize>())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Tensor::from_data(dims, data)
    };
    for _ in 0..10 {
        // Circular direction-0 slicing must agree with its closed-form
        // index map.
        for s in [2usize, 4, 8] {
            let d0 = s * rng.gen_range(1..=3);
            let dims = [d0, rng.gen_range(1..=4), rng.gen_range(1..=4)];
            let tensor = random_tensor(&mut rng, &dims)?;
            cases += 1;
            if !vec_identity_check(&tensor, s)? {
                failures += 1;
            }
        }
        // Lane packing must round-trip bitwise.
        for lanes in [2usize, 4, 8] {
            let dims = [
                rng.gen_range(1..=5),
                rng.gen_range(1..=4),
                rng.gen_range(1..=4),
            ];
            let members: Vec<Tensor<f64>> = (0..lanes)
                .map(|_| random_tensor(&mut rng, &dims))
                .collect::<Result<_>>()?;
            let refs: Vec<&Tensor<f64>> = members.iter().collect();
            let packed = interleave(&refs)?;
            let back = deinterleave(&packed);
            cases += 1;
            let bitwise_equal = members.iter().zip(&back).all(|(a, b)| {
                a.data()
                    .iter()
                    .zip(b.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            });
            if !bitwise_equal {
                failures += 1;
            }
        }
    }
    Ok(VerifyCheck {
        name: "lane-identity",
        passed: failures == 0,
        detail: format!("{cases} interleavings checked, {failures} mismatches"),
    })
}

/// Vectorized residual plans against the forced-scalar plan on a small
/// grid with spatially varying coefficients.
fn check_strategies_against_scalar(seed: u64) -> Result<VerifyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = GridConfig::new(2, 2, 2)?.with_quad_points(4)?;
    let problem = ProblemData::varying(2);
    let dofs = grid.total_dofs();
    let u: Vec<f64> = (0..dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let scalar_plan = plan_operator(&grid, 1, &PlanChoice::Forced(ForcedStrategy::Scalar))?;
    let mut reference = vec![0.0; dofs];
    apply_residual(
        &scalar_plan,
        &problem,
        &u,
        &mut reference,
        ApplyOptions::default(),
    )?;
    let scale = max_abs(&reference).max(1.0);

    let mut worst = 0.0f64;
    let choices: [(usize, PlanChoice); 3] = [
        (4, PlanChoice::Forced(ForcedStrategy::Fuse)),
        (4, PlanChoice::Auto(CostModel::heuristic_default())),
        (8, PlanChoice::Forced(ForcedStrategy::Fuse)),
    ];
    for (width, choice) in &choices {
        let plan = plan_operator(&grid, *width, choice)?;
        let mut out = vec![0.0; dofs];
        apply_residual(&plan, &problem, &u, &mut out, ApplyOptions::default())?;
        worst = worst.max(max_abs_diff(&out, &reference) / scale);
    }
    Ok(VerifyCheck {
        name: "strategy-vs-scalar",
        passed: worst <= 1e-12,
        detail: format!(
            "{} vectorized plans against scalar, worst relative error {worst:.2e}",
            choices.len()
        ),
    })
}

/// The interpolant of the manufactured quadratic solution must have a
/// (numerically) vanishing residual once the quadrature integrates the
/// integrands exactly.
fn check_polynomial_reproduction() -> Result<VerifyCheck> {
    let mut worst = 0.0f64;
    for dim in [2usize, 3] {
        let degree = 2;
        let grid = GridConfig::new(dim, 2, degree)?.with_quad_points(degree + 2)?;
        let problem = ProblemData::manufactured(dim);
        let u = interpolate(&grid, &|x| (problem.dirichlet)(x));
        let plan = plan_operator(&grid, 1, &PlanChoice::Forced(ForcedStrategy::Scalar))?;
        let mut out = vec![0.0; grid.total_dofs()];
        apply_residual(&plan, &problem, &u, &mut out, ApplyOptions::default())?;
        let scale = grid.penalty() * grid.h().powi(dim as i32) * max_abs(&u).max(1.0);
        worst = worst.max(max_abs(&out) / scale);
    }
    Ok(VerifyCheck {
        name: "polynomial-reproduction",
        passed: worst <= 1e-10,
        detail: format!("2D and 3D manufactured interpolants, worst scaled residual {worst:.2e}"),
    })
}
