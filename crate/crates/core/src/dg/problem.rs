//! Coefficient data for the diffusion-reaction operator.

/// Spatially varying coefficients of `-div(K grad u) + c u = f` with
/// Dirichlet boundary data `g`. Coordinates are passed as a 3-vector whose
/// trailing entries are zero in 2D; diffusion tensors use the upper-left
/// `dim x dim` block.
pub struct ProblemData {
    pub dim: usize,
    pub diffusion: Box<dyn Fn(&[f64; 3]) -> [[f64; 3]; 3] + Send + Sync>,
    pub reaction: Box<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>,
    pub source: Box<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>,
    pub dirichlet: Box<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>,
}

impl ProblemData {
    /// A problem whose exact solution is known in closed form:
    /// `u(x) = |x|^2` solves the equation with `K = x x^T + I`,
    /// `c = 2 (d + 2)` and `f = -2 d`, with matching Dirichlet data.
    ///
    /// `div(K grad u) = div(2 x (|x|^2 + 1)) = 2 (d + 2) |x|^2 + 2 d`, so
    /// `-div(K grad u) + c u = -2 d` everywhere.
    pub fn manufactured(dim: usize) -> Self {
        let c = 2.0 * (dim as f64 + 2.0);
        let f = -2.0 * dim as f64;
        ProblemData {
            dim,
            diffusion: Box::new(move |x| {
                let mut k = [[0.0; 3]; 3];
                for (i, row) in k.iter_mut().enumerate().take(dim) {
                    for (j, entry) in row.iter_mut().enumerate().take(dim) {
                        *entry = x[i] * x[j] + if i == j { 1.0 } else { 0.0 };
                    }
                }
                k
            }),
            reaction: Box::new(move |_| c),
            source: Box::new(move |_| f),
            dirichlet: Box::new(move |x| x.iter().map(|v| v * v).sum()),
        }
    }

    /// Smoothly varying symmetric positive definite coefficients with
    /// non-trivial off-diagonal entries, an oscillating source and
    /// inhomogeneous boundary data; used to exercise the operator away
    /// from any special structure.
    pub fn varying(dim: usize) -> Self {
        ProblemData {
            dim,
            diffusion: Box::new(move |x| {
                let mut k = [[0.0; 3]; 3];
                for (i, row) in k.iter_mut().enumerate().take(dim) {
                    for (j, entry) in row.iter_mut().enumerate().take(dim) {
                        if i == j {
                            // Diagonal dominance keeps the tensor positive
                            // definite for any point in the unit cube.
                            *entry = 2.0 + (x[i] * 3.1).sin() * 0.5;
                        } else {
                            *entry = 0.25 * ((x[i] + 2.0 * x[j]).cos());
                        }
                    }
                }
                // Symmetrize the off-diagonal part.
                for i in 0..dim {
                    for j in (i + 1)..dim {
                        let avg = 0.5 * (k[i][j] + k[j][i]);
                        k[i][j] = avg;
                        k[j][i] = avg;
                    }
                }
                k
            }),
            reaction: Box::new(|x| 1.5 + x[0] * x[1]),
            source: Box::new(|x| (7.0 * x[0]).sin() * (3.0 * x[1]).cos() + x[2]),
            dirichlet: Box::new(|x| 1.0 + x[0] - 0.5 * x[1] + 0.25 * x[2] * x[2]),
        }
    }

    /// The same coefficients with source and Dirichlet data dropped;
    /// applying the residual of this problem is the linear operator action.
    pub fn without_inhomogeneity(&self) -> ProblemDataRef<'_> {
        ProblemDataRef {
            inner: self,
            drop_inhomogeneity: true,
        }
    }
}

/// Borrowing view of problem data with optional suppression of the source
/// and boundary terms.
pub struct ProblemDataRef<'a> {
    pub inner: &'a ProblemData,
    pub drop_inhomogeneity: bool,
}

impl<'a> ProblemDataRef<'a> {
    pub fn full(inner: &'a ProblemData) -> Self {
        ProblemDataRef {
            inner,
            drop_inhomogeneity: false,
        }
    }

    pub fn diffusion(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        (self.inner.diffusion)(x)
    }

    pub fn reaction(&self, x: &[f64; 3]) -> f64 {
        (self.inner.reaction)(x)
    }

    pub fn source(&self, x: &[f64; 3]) -> f64 {
        if self.drop_inhomogeneity {
            0.0
        } else {
            (self.inner.source)(x)
        }
    }

    pub fn dirichlet(&self, x: &[f64; 3]) -> f64 {
        if self.drop_inhomogeneity {
            0.0
        } else {
            (self.inner.dirichlet)(x)
        }
    }
}
