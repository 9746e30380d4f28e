//! Row alignment, attribution error metrics, hull distance diagnostics and
//! the Monte Carlo convergence study.

mod hausdorff;
mod study;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub use hausdorff::{
    barycentric_grid, default_grid_resolution, hausdorff_to_polytope, min_norm_point,
    HausdorffResult,
};
pub use study::{
    convergence_study, run_replicate, summarize, Quantiles, ReplicateFailure, ReplicateOutcome,
    StudyDesign, StudyResult, StudySummary,
};

/// Largest `K` aligned by enumerating every permutation.
pub const BRUTE_FORCE_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    /// `permutation[k]` is the estimated row matched to true row `k`.
    pub permutation: Vec<usize>,
    pub total_sq_distance: f64,
}

impl AlignmentResult {
    /// Reorders the rows of an estimate into true-row order.
    pub fn apply(&self, estimate: &DMatrix<f64>) -> DMatrix<f64> {
        estimate.select_rows(&self.permutation)
    }

    pub fn apply_vec(&self, estimate: &[f64]) -> Vec<f64> {
        self.permutation.iter().map(|&p| estimate[p]).collect()
    }
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// `cost[(t, e)]`: squared distance between true row `t` and estimated row `e`.
fn squared_distance_cost(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> DMatrix<f64> {
    let k = truth.nrows();
    DMatrix::from_fn(k, k, |t, e| (truth.row(t) - estimate.row(e)).norm_squared())
}

fn permutation_cost(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(t, &e)| cost[(t, e)]).sum()
}

/// Row permutation of `phi_hat` minimizing the total squared distance to
/// `phi_true`. Ties go to the lexicographically smallest permutation when
/// `K <= 8`; larger problems use the Hungarian algorithm.
pub fn align_rows(phi_true: &DMatrix<f64>, phi_hat: &DMatrix<f64>) -> Result<AlignmentResult> {
    check_shapes(phi_true, phi_hat)?;
    let cost = squared_distance_cost(phi_true, phi_hat);
    let k = cost.nrows();
    let permutation = if k <= BRUTE_FORCE_MAX_K {
        brute_force_assignment(&cost)
    } else {
        hungarian(&cost)
    };
    Ok(AlignmentResult {
        total_sq_distance: permutation_cost(&cost, &permutation),
        permutation,
    })
}

/// Minimum-cost assignment by enumeration in lexicographic order.
pub fn brute_force_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let k = cost.nrows();
    let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
    for perm in (0..k).permutations(k) {
        let c = permutation_cost(cost, &perm);
        if c < best.0 {
            best = (c, perm);
        }
    }
    best.1
}

/// Minimum-cost assignment of rows to columns of a square cost matrix
/// (shortest augmenting paths with potentials). Returns `assignment[row]`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost[(r - 1, c - 1)] - u[r] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for c in 1..=n {
        assignment[owner[c] - 1] = c - 1;
    }
    assignment
}

/// Mean over sources of the row RMSE divided by the norm of the true row.
pub fn nrmse(phi_true: &DMatrix<f64>, phi_hat_aligned: &DMatrix<f64>) -> Result<f64> {
    check_shapes(phi_true, phi_hat_aligned)?;
    let (k, j) = phi_true.shape();
    let mut total = 0.0;
    for r in 0..k {
        let norm = phi_true.row(r).norm();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow(r));
        }
        let mse = (phi_true.row(r) - phi_hat_aligned.row(r)).norm_squared() / j as f64;
        total += mse.sqrt() / norm;
    }
    Ok(total / k as f64)
}

/// Normalized Frobenius distance `||Phi - Phi^||_F / ||Phi||_F`.
pub fn nfd(phi_true: &DMatrix<f64>, phi_hat_aligned: &DMatrix<f64>) -> Result<f64> {
    check_shapes(phi_true, phi_hat_aligned)?;
    let norm = phi_true.norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("true attribution matrix is zero".into()));
    }
    Ok((phi_true - phi_hat_aligned).norm() / norm)
}

/// Aligns `phi_hat` to `phi_true` and scores it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    pub alignment: AlignmentResult,
    pub nrmse: f64,
    pub nfd: f64,
}

pub fn score(phi_true: &DMatrix<f64>, phi_hat: &DMatrix<f64>) -> Result<Scores> {
    let alignment = align_rows(phi_true, phi_hat)?;
    let aligned = alignment.apply(phi_hat);
    Ok(Scores {
        nrmse: nrmse(phi_true, &aligned)?,
        nfd: nfd(phi_true, &aligned)?,
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 4, &[0.2, 0.5, 0.1, 0.6, 0.3, 0.25, 0.6, 0.1, 0.5, 0.25, 0.3, 0.3])
    }

    #[test]
    fn identical_rows_align_to_identity() {
        let a = align_rows(&sample(), &sample()).unwrap();
        assert_eq!(a.permutation, vec![0, 1, 2]);
        assert_eq!(a.total_sq_distance, 0.0);
    }

    #[test]
    fn swapped_rows_are_undone() {
        let phi = sample();
        let swapped = phi.select_rows(&[1, 0, 2]);
        let a = align_rows(&phi, &swapped).unwrap();
        assert_eq!(a.permutation, vec![1, 0, 2]);
        assert_eq!(a.total_sq_distance, 0.0);
        assert_eq!(a.apply(&swapped), phi);
    }

    #[test]
    fn ties_take_the_smallest_permutation() {
        let same = DMatrix::from_element(3, 2, 0.5);
        assert_eq!(align_rows(&same, &same).unwrap().permutation, vec![0, 1, 2]);
    }

    #[test]
    fn shape_mismatch() {
        let err = align_rows(&sample(), &DMatrix::zeros(2, 4)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn hungarian_small_cases() {
        let cost = DMatrix::from_row_slice(3, 3, &[4., 1., 3., 2., 0., 5., 3., 2., 2.]);
        assert_eq!(hungarian(&cost), vec![1, 0, 2]);
        assert_eq!(hungarian(&DMatrix::from_element(1, 1, 3.0)), vec![0]);
    }

    #[test]
    fn large_k_uses_assignment() {
        let k = 10;
        let phi = DMatrix::from_fn(k, 12, |r, c| ((r * 7 + c * 3) % 11) as f64 + r as f64);
        let perm: Vec<usize> = (0..k).rev().collect();
        let shuffled = phi.select_rows(&perm);
        let a = align_rows(&phi, &shuffled).unwrap();
        assert_eq!(a.permutation, perm);
        assert_eq!(a.total_sq_distance, 0.0);
    }

    #[test]
    fn metric_base_cases() {
        let phi = sample();
        assert_eq!(nrmse(&phi, &phi).unwrap(), 0.0);
        assert_eq!(nfd(&phi, &phi).unwrap(), 0.0);
        assert_eq!(nfd(&phi, &DMatrix::zeros(3, 4)).unwrap(), 1.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        let r = nrmse(&one, &DMatrix::from_element(1, 1, 0.9)).unwrap();
        assert!((r - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_true_row() {
        let mut phi = sample();
        phi.row_mut(2).fill(0.0);
        assert!(matches!(nrmse(&phi, &sample()), Err(Error::ZeroNormRow(2))));
    }
}
