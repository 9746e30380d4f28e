use nalgebra::{DMatrix, DVector, SVD};

use super::PointCloud;
use crate::error::{Error, Result};

/// Affine chart of a row-stochastic cloud: `z = (y[..J-1] - mean_offset) * basis`.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    /// Column means of the first `J - 1` coordinates.
    pub mean_offset: DVector<f64>,
    /// `(J - 1) x r_B` with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Every singular value of the centered cloud, descending.
    pub singular_values: Vec<f64>,
}

impl ProjectionBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Sum of the singular values that the basis drops.
    pub fn discarded_mass(&self) -> f64 {
        self.singular_values[self.rank()..].iter().sum()
    }

    /// Projects additional row-stochastic points into the same chart.
    pub fn project(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.mean_offset.len();
        let mut centered = rows.columns(0, d).into_owned();
        for mut row in centered.row_iter_mut() {
            row -= self.mean_offset.transpose();
        }
        centered * &self.basis
    }
}

/// Centers the first `J - 1` columns of a row-stochastic cloud and projects
/// it onto its leading right singular vectors.
///
/// The rank is the number of singular values above `n * eps * sigma_1`,
/// capped at `rank_cap`. Dropping the last column loses nothing because it
/// is determined by the others on the simplex.
pub fn intrinsic_projection(
    ystar: &PointCloud,
    rank_cap: usize,
) -> Result<(ProjectionBasis, PointCloud)> {
    let (n, j) = (ystar.n(), ystar.dim());
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "intrinsic projection needs at least 2 points, got {n}"
        )));
    }
    if j < 2 {
        return Err(Error::InvalidInput(
            "intrinsic projection needs at least 2 coordinates".into(),
        ));
    }
    if rank_cap == 0 {
        return Err(Error::InvalidInput("rank_cap must be at least 1".into()));
    }
    let y = ystar.points();
    for (i, row) in y.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "row {i} sums to {s}, expected 1"
            )));
        }
    }

    let d = j - 1;
    let reduced = y.columns(0, d);
    let mean_offset: DVector<f64> = reduced.row_mean().transpose();
    let mut centered = reduced.into_owned();
    for mut row in centered.row_iter_mut() {
        row -= mean_offset.transpose();
    }

    let svd = SVD::new(centered.clone(), false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

    let sigma_1 = singular_values[0];
    if !(sigma_1 > 0.0) {
        return Err(Error::DegenerateCloud(
            "all rows are identical; centered cloud has rank 0".into(),
        ));
    }
    let threshold = n as f64 * f64::EPSILON * sigma_1;
    let numeric_rank = singular_values.iter().filter(|&&s| s > threshold).count();
    let rank = numeric_rank.min(rank_cap);

    let basis = DMatrix::from_fn(d, rank, |r, c| v_t[(order[c], r)]);
    let z = &centered * &basis;
    Ok((
        ProjectionBasis {
            mean_offset,
            basis,
            singular_values,
        },
        PointCloud::new(z)?,
    ))
}
