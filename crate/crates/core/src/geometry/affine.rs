use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `sigma_min / sigma_max` of the augmented profile matrix below which the
/// inverse is flagged as rank deficient.
pub const RANK_DEFICIENT_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AffineInverse {
    /// `(J + 1) x K`.
    pub matrix: DMatrix<f64>,
    /// `sigma_min / sigma_max` of `[H* | 1]`.
    pub conditioning: f64,
}

impl AffineInverse {
    pub fn rank_deficient(&self) -> bool {
        self.conditioning < RANK_DEFICIENT_RATIO
    }
}

/// `R = H_aug^T (H_aug H_aug^T)^+` with `H_aug = [H* | 1_K]`.
///
/// Computed as the Moore-Penrose inverse of `H_aug` from its SVD, which is
/// the same matrix without squaring the condition number. A rank-deficient
/// `H_aug` still yields the pseudoinverse; callers check
/// [`AffineInverse::rank_deficient`].
pub fn affine_right_inverse(h_star: &DMatrix<f64>) -> Result<AffineInverse> {
    let (k, j) = h_star.shape();
    if k == 0 || j == 0 {
        return Err(Error::InvalidInput("empty profile matrix".into()));
    }
    for (r, row) in h_star.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "profile row {r} has negative or non-finite entries"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "profile row {r} sums to {s}, expected 1"
            )));
        }
    }
    let aug = DMatrix::from_fn(k, j + 1, |r, c| if c < j { h_star[(r, c)] } else { 1.0 });
    let svd = aug.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let cutoff = (j + 1) as f64 * f64::EPSILON * s_max;
    let matrix = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(AffineInverse {
        matrix,
        conditioning: if s_max > 0.0 { s_min / s_max } else { 0.0 },
    })
}
