//! Convex geometry and linear algebra primitives: intrinsic projection,
//! hull vertex identification, simplex volumes, max-volume subset search
//! and the affine right inverse.

mod affine;
mod hull;
mod projection;
mod volume;

pub use affine::{affine_right_inverse, AffineInverse, RANK_DEFICIENT_RATIO};
pub use hull::{hull_vertices, HULL_DIM_MAX};
pub use projection::{intrinsic_projection, ProjectionBasis};
pub use volume::{
    binomial, max_volume_exhaustive, max_volume_greedy, simplex_log_volume,
    simplex_log_volume_rows, VertexSubset, DEFAULT_EXHAUSTIVE_BUDGET, DEFAULT_MAX_SWEEPS,
    SWAP_IMPROVEMENT,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n` points in `d` dimensions, one point per row. All coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "point cloud must be non-empty, got {}x{}",
                points.nrows(),
                points.ncols()
            )));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % points.nrows(), pos / points.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate at ({r}, {c})"
            )));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from row slices of equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != d) {
            return Err(Error::InvalidInput("rows have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i].as_ref()[j]))
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.points
    }

    /// Copy of row `i` as a vector.
    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    /// Row-major copy of all coordinates, convenient for tight inner loops.
    pub(crate) fn row_major(&self) -> Vec<f64> {
        let (n, d) = self.points.shape();
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                out.push(self.points[(i, j)]);
            }
        }
        out
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let d = self.dim();
        PointCloud {
            points: DMatrix::from_fn(indices.len(), d, |i, j| self.points[(indices[i], j)]),
        }
    }
}
