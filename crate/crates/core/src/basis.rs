//! 1D building blocks for tensor-product elements: Gauss-Legendre rules on
//! the unit interval and Lagrange bases on equidistant nodes, exported as the
//! small dense per-direction matrices the contraction kernels consume.

use crate::error::{Error, Result};

/// Gauss-Legendre rule on [0, 1]. `order` is the highest polynomial degree
/// integrated exactly, i.e. `2 * points.len() - 1`.
#[derive(Debug, Clone)]
pub struct QuadratureRule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

/// Lagrange basis of the given degree on equidistant nodes in [0, 1],
/// evaluated through the barycentric form.
#[derive(Debug, Clone)]
pub struct Basis1D {
    pub degree: usize,
    pub nodes: Vec<f64>,
    bary_weights: Vec<f64>,
}

/// What a per-direction matrix holds. The distinction only matters for
/// diagnostics and sanity checks; the contraction code treats all kinds alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Evaluation,
    Derivative,
    FaceRestriction,
}

/// Dense row-major matrix mapping 1D coefficients to values at 1D points.
/// Rows index points, columns index basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
    pub kind: MatrixKind,
}

impl KernelMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>, kind: MatrixKind) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(KernelMatrix {
            rows,
            cols,
            entries,
            kind,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    /// Row slice, handy for tests and stacking.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }
}

/// Which end of the unit interval a face matrix samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceSide {
    Lower,
    Upper,
}

impl FaceSide {
    pub fn coordinate(self) -> f64 {
        match self {
            FaceSide::Lower => 0.0,
            FaceSide::Upper => 1.0,
        }
    }
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Legendre polynomial P_m and its derivative at t (on [-1, 1]), via the
/// three-term recurrence.
fn legendre_with_derivative(m: usize, t: f64) -> (f64, f64) {
    if m == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = t;
    for k in 1..m {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * t * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = (m as f64) * (t * p - p_prev) / (t * t - 1.0);
    (p, dp)
}

/// Gauss-Legendre rule with `m` points on [0, 1].
///
/// Roots of P_m are found by Newton iteration from the Chebyshev-based
/// initial guess; each root converges quadratically and is polished to
/// |update| <= 1e-15 within 100 iterations.
pub fn gauss_legendre(m: usize) -> Result<QuadratureRule1D> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "quadrature rule needs at least one point".into(),
        ));
    }
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(m, t);
            let delta = p / dp;
            t -= delta;
            if delta.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InvalidArgument(format!(
                "Newton iteration for Gauss-Legendre point {i} of {m} did not converge"
            )));
        }
        let (_, dp) = legendre_with_derivative(m, t);
        // Map [-1,1] -> [0,1]: both point and weight shrink by 2.
        points.push(0.5 * (1.0 + t));
        weights.push(1.0 / ((1.0 - t * t) * dp * dp));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let points: Vec<f64> = perm.iter().map(|&i| points[i]).collect();
    let weights: Vec<f64> = perm.iter().map(|&i| weights[i]).collect();
    Ok(QuadratureRule1D {
        points,
        weights,
        order: 2 * m - 1,
    })
}

impl Basis1D {
    /// Lagrange basis on the `degree + 1` equidistant nodes j / degree
    /// (a single node at 0.5 for degree 0).
    pub fn equidistant(degree: usize) -> Self {
        let nodes: Vec<f64> = if degree == 0 {
            vec![0.5]
        } else {
            (0..=degree).map(|j| j as f64 / degree as f64).collect()
        };
        let n = nodes.len();
        let mut bary = vec![0.0; n];
        for j in 0..n {
            let mut w = 1.0;
            for l in 0..n {
                if l != j {
                    w *= nodes[j] - nodes[l];
                }
            }
            bary[j] = 1.0 / w;
        }
        Basis1D {
            degree,
            nodes,
            bary_weights: bary,
        }
    }

    pub fn num_functions(&self) -> usize {
        self.nodes.len()
    }

    fn node_index(&self, x: f64) -> Option<usize> {
        self.nodes
            .iter()
            .position(|&xj| x == xj || (x - xj).abs() < 1e-14)
    }

    /// Values of all basis functions at x, written into `out`.
    pub fn values_at(&self, x: f64, out: &mut [f64]) {
        let n = self.num_functions();
        debug_assert_eq!(out.len(), n);
        if let Some(k) = self.node_index(x) {
            out.fill(0.0);
            out[k] = 1.0;
            return;
        }
        // Barycentric second form: l_j(x) = (w_j/(x-x_j)) / sum_l w_l/(x-x_l).
        let mut denom = 0.0;
        for j in 0..n {
            out[j] = self.bary_weights[j] / (x - self.nodes[j]);
            denom += out[j];
        }
        for v in out.iter_mut() {
            *v /= denom;
        }
    }

    /// First derivatives of all basis functions at x, written into `out`.
    pub fn derivatives_at(&self, x: f64, out: &mut [f64]) {
        let n = self.num_functions();
        debug_assert_eq!(out.len(), n);
        if n == 1 {
            out[0] = 0.0;
            return;
        }
        if let Some(k) = self.node_index(x) {
            // Differentiation-matrix row at a node; the diagonal entry closes
            // the zero row sum.
            let mut diag = 0.0;
            for j in 0..n {
                if j != k {
                    let d = (self.bary_weights[j] / self.bary_weights[k])
                        / (self.nodes[k] - self.nodes[j]);
                    out[j] = d;
                    diag -= d;
                }
            }
            out[k] = diag;
            return;
        }
        let mut values = vec![0.0; n];
        self.values_at(x, &mut values);
        let sum_all: f64 = self.nodes.iter().map(|&xl| 1.0 / (x - xl)).sum();
        for j in 0..n {
            out[j] = values[j] * (sum_all - 1.0 / (x - self.nodes[j]));
        }
    }
}

/// Basis values at the rule's points: entry (i, j) = l_j(xi_i).
pub fn evaluation_matrix(basis: &Basis1D, rule: &QuadratureRule1D) -> KernelMatrix {
    let n = basis.num_functions();
    let mut entries = vec![0.0; rule.points.len() * n];
    for (i, &x) in rule.points.iter().enumerate() {
        basis.values_at(x, &mut entries[i * n..(i + 1) * n]);
    }
    KernelMatrix {
        rows: rule.points.len(),
        cols: n,
        entries,
        kind: MatrixKind::Evaluation,
    }
}

/// Basis derivatives at the rule's points: entry (i, j) = l_j'(xi_i).
pub fn derivative_matrix(basis: &Basis1D, rule: &QuadratureRule1D) -> KernelMatrix {
    let n = basis.num_functions();
    let mut entries = vec![0.0; rule.points.len() * n];
    for (i, &x) in rule.points.iter().enumerate() {
        basis.derivatives_at(x, &mut entries[i * n..(i + 1) * n]);
    }
    KernelMatrix {
        rows: rule.points.len(),
        cols: n,
        entries,
        kind: MatrixKind::Derivative,
    }
}

/// Single-row matrix of basis values at a face coordinate (0 or 1).
pub fn face_restriction_matrix(basis: &Basis1D, side: FaceSide) -> KernelMatrix {
    let n = basis.num_functions();
    let mut entries = vec![0.0; n];
    basis.values_at(side.coordinate(), &mut entries);
    KernelMatrix {
        rows: 1,
        cols: n,
        entries,
        kind: MatrixKind::FaceRestriction,
    }
}

/// Single-row matrix of basis derivatives at a face coordinate (0 or 1).
pub fn face_derivative_matrix(basis: &Basis1D, side: FaceSide) -> KernelMatrix {
    let n = basis.num_functions();
    let mut entries = vec![0.0; n];
    basis.derivatives_at(side.coordinate(), &mut entries);
    KernelMatrix {
        rows: 1,
        cols: n,
        entries,
        kind: MatrixKind::Derivative,
    }
}
