//! Shared fixtures for the integration suite, built deliberately without
//! the library's fast paths: basis functions are evaluated through the
//! plain Lagrange product formula and residuals are assembled by direct
//! summation over every degree of freedom at every quadrature point. Slow,
//! but an independent reference for the sum-factorized machinery.

// Each integration test binary compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sumfact_dg::basis::gauss_legendre;
use sumfact_dg::dg::problem::ProblemData;
use sumfact_dg::dg::GridConfig;

pub fn random_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Maximum absolute difference, relative to the larger vector's magnitude
/// (floored at 1 so near-zero references stay meaningful).
pub fn rel_inf_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "comparing vectors of different lengths");
    let scale = max_abs(a).max(max_abs(b)).max(1.0);
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
        / scale
}

/// Lagrange cardinal function `i` on the given nodes, by the product
/// formula.
pub fn lagrange_value(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut value = 1.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j != i {
            value *= (x - xj) / (nodes[i] - xj);
        }
    }
    value
}

/// Derivative of the Lagrange cardinal function, by the sum-of-products
/// formula.
pub fn lagrange_derivative(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    for (l, &xl) in nodes.iter().enumerate() {
        if l == i {
            continue;
        }
        let mut term = 1.0 / (nodes[i] - xl);
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i && j != l {
                term *= (x - xj) / (nodes[i] - xj);
            }
        }
        sum += term;
    }
    sum
}

pub fn equidistant_nodes(degree: usize) -> Vec<f64> {
    (0..=degree)
        .map(|j| j as f64 / degree.max(1) as f64)
        .collect()
}

/// Per-direction basis values and derivatives at one reference point.
struct PointTables {
    values: Vec<Vec<f64>>,
    derivatives: Vec<Vec<f64>>,
}

impl PointTables {
    fn at(nodes: &[f64], dim: usize, point: &[f64; 3]) -> Self {
        let per_dir = nodes.len();
        let mut values = vec![vec![0.0; per_dir]; dim];
        let mut derivatives = vec![vec![0.0; per_dir]; dim];
        for dir in 0..dim {
            for i in 0..per_dir {
                values[dir][i] = lagrange_value(nodes, i, point[dir]);
                derivatives[dir][i] = lagrange_derivative(nodes, i, point[dir]);
            }
        }
        PointTables {
            values,
            derivatives,
        }
    }

    /// Value of local shape function `local` (direction-0 index fastest).
    fn shape(&self, dim: usize, per_dir: usize, local: usize) -> f64 {
        let mut rest = local;
        let mut value = 1.0;
        for dir in 0..dim {
            value *= self.values[dir][rest % per_dir];
            rest /= per_dir;
        }
        value
    }

    /// Reference gradient component `axis` of local shape function `local`.
    fn shape_derivative(&self, dim: usize, per_dir: usize, local: usize, axis: usize) -> f64 {
        let mut rest = local;
        let mut value = 1.0;
        for dir in 0..dim {
            let idx = rest % per_dir;
            value *= if dir == axis {
                self.derivatives[dir][idx]
            } else {
                self.values[dir][idx]
            };
            rest /= per_dir;
        }
        value
    }

    /// Trial-function value and reference gradient from a cell's
    /// coefficients.
    fn evaluate(&self, dim: usize, per_dir: usize, coeffs: &[f64]) -> (f64, [f64; 3]) {
        let mut value = 0.0;
        let mut gradient = [0.0; 3];
        for (local, &c) in coeffs.iter().enumerate() {
            value += c * self.shape(dim, per_dir, local);
            for axis in 0..dim {
                gradient[axis] += c * self.shape_derivative(dim, per_dir, local, axis);
            }
        }
        (value, gradient)
    }
}

/// Iterate a multi-index over `extents[..dim]`, direction 0 fastest.
fn for_each_point(extents: &[usize], mut body: impl FnMut(&[usize; 3])) {
    let dim = extents.len();
    let total: usize = extents.iter().product();
    for flat in 0..total {
        let mut idx = [0usize; 3];
        let mut rest = flat;
        for (dir, &e) in extents.iter().enumerate().take(dim) {
            idx[dir] = rest % e;
            rest /= e;
        }
        body(&idx);
    }
}

/// Direct interior-penalty residual assembly: symmetric interior penalty
/// with penalty `3 k (k + d - 1) / h`, facet normals pointing from the
/// lower to the upper cell, and Dirichlet data imposed weakly on the whole
/// boundary of the unit box. Every trace and gradient is evaluated by
/// dense summation over the cell's coefficients.
pub fn reference_residual(
    grid: &GridConfig,
    problem: &ProblemData,
    u: &[f64],
    drop_inhomogeneity: bool,
) -> Vec<f64> {
    let dim = grid.dim;
    let degree = grid.degree;
    let n = grid.cells_per_dim;
    let m = grid.quad_points;
    let h = grid.h();
    let per_dir = degree + 1;
    let block = grid.dofs_per_cell();
    let nodes = equidistant_nodes(degree);
    let rule = gauss_legendre(m).expect("quadrature rule");
    let gamma = 3.0 * degree as f64 * (degree + dim - 1) as f64 / h;
    let theta = -1.0;

    assert_eq!(u.len(), grid.total_dofs());
    let mut residual = vec![0.0; u.len()];

    let cell_corner = |cell: usize| -> ([usize; 3], [f64; 3]) {
        let mut coords = [0usize; 3];
        let mut rest = cell;
        for c in coords.iter_mut().take(dim) {
            *c = rest % n;
            rest /= n;
        }
        let mut corner = [0.0; 3];
        for dir in 0..dim {
            corner[dir] = coords[dir] as f64 * h;
        }
        (coords, corner)
    };

    // Volume terms: reaction/source mass and the diffusion bilinear form.
    let volume_extents: Vec<usize> = vec![m; dim];
    for cell in 0..grid.num_cells() {
        let (_, corner) = cell_corner(cell);
        let coeffs = &u[cell * block..(cell + 1) * block];
        for_each_point(&volume_extents, |q| {
            let mut reference = [0.0; 3];
            let mut weight = 1.0;
            for dir in 0..dim {
                reference[dir] = rule.points[q[dir]];
                weight *= rule.weights[q[dir]];
            }
            let mut x = [0.0; 3];
            for dir in 0..dim {
                x[dir] = corner[dir] + h * reference[dir];
            }
            let tables = PointTables::at(&nodes, dim, &reference);
            let (value, gradient) = tables.evaluate(dim, per_dir, coeffs);
            let diffusion = (problem.diffusion)(&x);
            let reaction = (problem.reaction)(&x);
            let source = if drop_inhomogeneity {
                0.0
            } else {
                (problem.source)(&x)
            };
            let mass = weight * h.powi(dim as i32) * (reaction * value - source);
            let stiffness_scale = weight * h.powi(dim as i32 - 2);
            for local in 0..block {
                let mut entry = mass * tables.shape(dim, per_dir, local);
                for axis in 0..dim {
                    let test_derivative = tables.shape_derivative(dim, per_dir, local, axis);
                    for j in 0..dim {
                        entry += stiffness_scale * diffusion[axis][j] * gradient[j]
                            * test_derivative;
                    }
                }
                residual[cell * block + local] += entry;
            }
        });
    }

    // Interior facets: consistency, adjointness and penalty, with the
    // normal oriented from the lower cell to the upper cell.
    for normal in 0..dim {
        let stride: usize = n.pow(normal as u32);
        let mut facet_extents = vec![m; dim];
        facet_extents[normal] = 1;
        for lower_cell in 0..grid.num_cells() {
            let (coords, corner) = cell_corner(lower_cell);
            if coords[normal] == n - 1 {
                continue;
            }
            let upper_cell = lower_cell + stride;
            let lower = &u[lower_cell * block..(lower_cell + 1) * block];
            let upper = &u[upper_cell * block..(upper_cell + 1) * block];
            for_each_point(&facet_extents, |q| {
                let mut weight = 1.0;
                let mut lower_ref = [0.0; 3];
                for dir in 0..dim {
                    if dir == normal {
                        lower_ref[dir] = 1.0;
                    } else {
                        lower_ref[dir] = rule.points[q[dir]];
                        weight *= rule.weights[q[dir]];
                    }
                }
                let mut upper_ref = lower_ref;
                upper_ref[normal] = 0.0;
                let mut x = [0.0; 3];
                for dir in 0..dim {
                    x[dir] = corner[dir] + h * lower_ref[dir];
                }
                let ds = weight * h.powi(dim as i32 - 1);
                let diffusion = (problem.diffusion)(&x);
                let lower_tables = PointTables::at(&nodes, dim, &lower_ref);
                let upper_tables = PointTables::at(&nodes, dim, &upper_ref);
                let (lower_value, lower_gradient) =
                    lower_tables.evaluate(dim, per_dir, lower);
                let (upper_value, upper_gradient) =
                    upper_tables.evaluate(dim, per_dir, upper);
                let jump = lower_value - upper_value;
                let mut mean_flux = 0.0;
                for j in 0..dim {
                    mean_flux += 0.5 * diffusion[normal][j]
                        * (lower_gradient[j] + upper_gradient[j])
                        / h;
                }
                for local in 0..block {
                    let phi = lower_tables.shape(dim, per_dir, local);
                    let mut test_flux = 0.0;
                    for j in 0..dim {
                        test_flux += 0.5 * diffusion[normal][j]
                            * lower_tables.shape_derivative(dim, per_dir, local, j)
                            / h;
                    }
                    residual[lower_cell * block + local] +=
                        ds * (gamma * jump * phi - mean_flux * phi + theta * test_flux * jump);

                    let phi = upper_tables.shape(dim, per_dir, local);
                    let mut test_flux = 0.0;
                    for j in 0..dim {
                        test_flux += 0.5 * diffusion[normal][j]
                            * upper_tables.shape_derivative(dim, per_dir, local, j)
                            / h;
                    }
                    residual[upper_cell * block + local] +=
                        ds * (-gamma * jump * phi + mean_flux * phi + theta * test_flux * jump);
                }
            });
        }
    }

    // Boundary facets: Nitsche terms against the Dirichlet data, outward
    // normal `sigma * e_normal`.
    for normal in 0..dim {
        for (layer, sigma, trace) in [(0usize, -1.0f64, 0.0f64), (n - 1, 1.0, 1.0)] {
            let mut facet_extents = vec![m; dim];
            facet_extents[normal] = 1;
            for cell in 0..grid.num_cells() {
                let (coords, corner) = cell_corner(cell);
                if coords[normal] != layer {
                    continue;
                }
                let coeffs = &u[cell * block..(cell + 1) * block];
                for_each_point(&facet_extents, |q| {
                    let mut weight = 1.0;
                    let mut reference = [0.0; 3];
                    for dir in 0..dim {
                        if dir == normal {
                            reference[dir] = trace;
                        } else {
                            reference[dir] = rule.points[q[dir]];
                            weight *= rule.weights[q[dir]];
                        }
                    }
                    let mut x = [0.0; 3];
                    for dir in 0..dim {
                        x[dir] = corner[dir] + h * reference[dir];
                    }
                    let ds = weight * h.powi(dim as i32 - 1);
                    let diffusion = (problem.diffusion)(&x);
                    let dirichlet = if drop_inhomogeneity {
                        0.0
                    } else {
                        (problem.dirichlet)(&x)
                    };
                    let tables = PointTables::at(&nodes, dim, &reference);
                    let (value, gradient) = tables.evaluate(dim, per_dir, coeffs);
                    let mismatch = value - dirichlet;
                    let mut flux = 0.0;
                    for j in 0..dim {
                        flux += sigma * diffusion[normal][j] * gradient[j] / h;
                    }
                    for local in 0..block {
                        let phi = tables.shape(dim, per_dir, local);
                        let mut test_flux = 0.0;
                        for j in 0..dim {
                            test_flux += sigma * diffusion[normal][j]
                                * tables.shape_derivative(dim, per_dir, local, j)
                                / h;
                        }
                        residual[cell * block + local] += ds
                            * (gamma * mismatch * phi - flux * phi
                                + theta * test_flux * mismatch);
                    }
                });
            }
        }
    }

    residual
}
