//! A discontinuous Galerkin diffusion-reaction operator on a uniform
//! Cartesian grid of the unit square/cube.
//!
//! The operator is the interior-penalty discretization of
//! `-div(K grad u) + c u = f` with Dirichlet data `g`, applied matrix-free:
//! per cell and per facet, trial coefficients are evaluated at quadrature
//! points by sum-factorized kernels, a pointwise integrand combines them
//! with coefficient tables, and sum-factorized test multiplication
//! accumulates the residual.

pub mod assemble;
pub mod kernels;
pub mod problem;

use crate::error::{Error, Result};

/// Uniform grid and discretization parameters: `cells_per_dim` cells in
/// each of `dim` directions on the unit domain, tensor-product Lagrange
/// polynomials of the given degree, and a default quadrature point count
/// per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    pub dim: usize,
    pub cells_per_dim: usize,
    pub degree: usize,
    pub quad_points: usize,
}

impl GridConfig {
    pub fn new(dim: usize, cells_per_dim: usize, degree: usize) -> Result<Self> {
        let config = GridConfig {
            dim,
            cells_per_dim,
            degree,
            quad_points: degree + 1,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_quad_points(mut self, quad_points: usize) -> Result<Self> {
        self.quad_points = quad_points;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.cells_per_dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 cells per direction, got {}",
                self.cells_per_dim
            )));
        }
        if self.degree < 1 {
            return Err(Error::InvalidArgument("degree must be at least 1".into()));
        }
        if self.quad_points < 1 {
            return Err(Error::InvalidArgument(
                "need at least one quadrature point per direction".into(),
            ));
        }
        Ok(())
    }

    /// Mesh width of the uniform grid.
    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_dim as f64
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_dim.pow(self.dim as u32)
    }

    pub fn dofs_per_cell(&self) -> usize {
        (self.degree + 1).pow(self.dim as u32)
    }

    pub fn total_dofs(&self) -> usize {
        self.num_cells() * self.dofs_per_cell()
    }

    /// Interior penalty coefficient for facets of this grid.
    pub fn penalty(&self) -> f64 {
        penalty_factor(self.degree, self.dim, self.h())
    }

    /// Decodes a flat cell index (direction 0 fastest) into per-direction
    /// cell coordinates.
    pub fn cell_coords(&self, flat: usize) -> [usize; 3] {
        let n = self.cells_per_dim;
        let mut coords = [0usize; 3];
        let mut rest = flat;
        for coord in coords.iter_mut().take(self.dim) {
            *coord = rest % n;
            rest /= n;
        }
        coords
    }

    /// Stride of one cell step along `direction` in the flat cell index.
    pub fn cell_stride(&self, direction: usize) -> usize {
        self.cells_per_dim.pow(direction as u32)
    }
}

/// Interior penalty coefficient `3 k (k + d - 1) |F| / min |T|`, which on a
/// uniform grid of width `h` reduces to `3 k (k + d - 1) / h`.
pub fn penalty_factor(degree: usize, dim: usize, h: f64) -> f64 {
    3.0 * degree as f64 * (degree + dim - 1) as f64 / h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_matches_closed_forms() {
        // Linear elements in 3D: 3 * 1 * 3 = 9, divided by h.
        let h = 0.25;
        assert_eq!(penalty_factor(1, 3, h), 9.0 / h);
        // Quadratic elements in 3D on a 4-cell grid: 3 * 2 * 4 * 4 = 96.
        assert_eq!(penalty_factor(2, 3, 0.25), 96.0);
    }

    #[test]
    fn grid_config_counts_cells_and_dofs() {
        let grid = GridConfig::new(3, 4, 2).unwrap();
        assert_eq!(grid.num_cells(), 64);
        assert_eq!(grid.dofs_per_cell(), 27);
        assert_eq!(grid.total_dofs(), 64 * 27);
        assert_eq!(grid.quad_points, 3);
        assert_eq!(grid.h(), 0.25);
    }

    #[test]
    fn cell_coordinates_use_direction_zero_fastest() {
        let grid = GridConfig::new(2, 4, 1).unwrap();
        assert_eq!(grid.cell_coords(0)[..2], [0, 0]);
        assert_eq!(grid.cell_coords(1)[..2], [1, 0]);
        assert_eq!(grid.cell_coords(4)[..2], [0, 1]);
        assert_eq!(grid.cell_coords(7)[..2], [3, 1]);
        assert_eq!(grid.cell_stride(0), 1);
        assert_eq!(grid.cell_stride(1), 4);
    }

    #[test]
    fn grid_config_rejects_unsupported_shapes() {
        assert!(GridConfig::new(1, 4, 1).is_err());
        assert!(GridConfig::new(4, 4, 1).is_err());
        assert!(GridConfig::new(3, 1, 1).is_err());
        assert!(GridConfig::new(3, 4, 0).is_err());
        assert!(GridConfig::new(3, 4, 1).unwrap().with_quad_points(0).is_err());
    }
}
