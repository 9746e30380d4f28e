use nalgebra::{DMatrix, DVector};

use super::{
    default_source_labels, AttributionMatrix, ConcentrationMatrix, EstimatorConfig, MeanMethod,
    RowNormalizedData, Warning,
};
use crate::error::{Error, Result};
use crate::geometry::affine_right_inverse;

/// Mean source contributions `m~` in concentration-sum units.
///
/// Both methods average over all `n` rows of `Y`; dropped zero rows count
/// as records with zero emissions.
pub fn estimate_mu_tilde(
    y: &ConcentrationMatrix,
    data: &RowNormalizedData,
    h_star: &DMatrix<f64>,
    cfg: &EstimatorConfig,
) -> Result<(DVector<f64>, Vec<Warning>)> {
    let (k, j) = h_star.shape();
    if j != y.j() {
        return Err(Error::ShapeMismatch {
            expected: (k, y.j()),
            found: (k, j),
        });
    }
    let inverse = affine_right_inverse(h_star)?;
    let mut warnings = Vec::new();
    if inverse.rank_deficient() {
        warnings.push(Warning::RankDeficient {
            conditioning: inverse.conditioning,
        });
    }
    let r = &inverse.matrix;
    let n = y.n() as f64;

    let m = match cfg.mean_method {
        MeanMethod::Affine => {
            let col_means: DVector<f64> = y.values().row_mean().transpose();
            let total = col_means.sum();
            let mut augmented = DVector::zeros(j + 1);
            augmented.rows_mut(0, j).copy_from(&col_means);
            augmented[j] = total;
            let mut m = r.transpose() * augmented;
            let negative: Vec<usize> = (0..k).filter(|&i| m[i] < 0.0).collect();
            if !negative.is_empty() {
                negative.iter().for_each(|&i| m[i] = 0.0);
                warnings.push(Warning::NegativeMeanClipped { sources: negative });
            }
            m
        }
        MeanMethod::ClippedWeights => {
            let rows = data.ystar.nrows();
            let augmented =
                DMatrix::from_fn(rows, j + 1, |i, c| if c < j { data.ystar[(i, c)] } else { 1.0 });
            let mut weights = augmented * r;
            let mut m = DVector::zeros(k);
            for (i, mut row) in weights.row_iter_mut().enumerate() {
                row.apply(|w| *w = w.max(cfg.epsilon_clip));
                let s = row.sum();
                for c in 0..k {
                    m[c] += data.row_sums[i] * row[c] / s;
                }
            }
            m / n
        }
    };
    Ok((m, warnings))
}

/// `phi_kj = m_k H*_kj / sum_l m_l H*_lj`.
pub fn compute_phi(m_tilde: &DVector<f64>, h_star: &DMatrix<f64>) -> Result<AttributionMatrix> {
    let (k, j) = h_star.shape();
    if m_tilde.len() != k {
        return Err(Error::ShapeMismatch {
            expected: (k, 1),
            found: (m_tilde.len(), 1),
        });
    }
    if m_tilde.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || !m_tilde.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidInput(
            "mean contributions must be non-negative with a positive entry".into(),
        ));
    }
    let mut phi = DMatrix::zeros(k, j);
    for c in 0..j {
        let denom: f64 = (0..k).map(|l| m_tilde[l] * h_star[(l, c)]).sum();
        if !(denom > 0.0) {
            return Err(Error::ZeroDenominator(c));
        }
        for l in 0..k {
            phi[(l, c)] = m_tilde[l] * h_star[(l, c)] / denom;
        }
    }
    Ok(AttributionMatrix::from_parts_unchecked(phi, default_source_labels(k)))
}
