use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::Warning;
use crate::geometry::{hull_vertices, intrinsic_projection, PointCloud};

const CONTAINMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HausdorffResult {
    /// Largest distance from a grid point of the reference polytope to the
    /// sample hull.
    pub distance: f64,
    pub grid_points: usize,
    pub sample_vertices: usize,
    pub warnings: Vec<Warning>,
}

/// 20 subdivisions per edge up to four vertices, 6 beyond.
pub fn default_grid_resolution(k: usize) -> usize {
    if k <= 4 {
        20
    } else {
        6
    }
}

/// Barycentric weights `b / resolution` for every composition `b` of
/// `resolution` into `k` non-negative parts, in lexicographic order.
pub fn barycentric_grid(k: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn fill(prefix: &mut Vec<usize>, left: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == k {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for part in 0..=left {
            prefix.push(part);
            fill(prefix, left - part, k, out);
            prefix.pop();
        }
    }
    if k == 0 {
        return Vec::new();
    }
    let mut parts = Vec::new();
    fill(&mut Vec::with_capacity(k), resolution, k, &mut parts);
    let res = resolution.max(1) as f64;
    parts
        .into_iter()
        .map(|b| b.into_iter().map(|x| x as f64 / res).collect())
        .collect()
}

/// Point of minimum Euclidean norm in the convex hull of the columns of
/// `points` (Wolfe's algorithm). Returns the point and its barycentric
/// weights.
pub fn min_norm_point(points: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let m = points.ncols();
    assert!(m > 0, "need at least one point");
    let sq: Vec<f64> = points.column_iter().map(|c| c.norm_squared()).collect();
    let scale = sq.iter().copied().fold(0.0, f64::max);
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let start = (0..m).min_by(|&a, &b| sq[a].total_cmp(&sq[b])).unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points.column(start).into_owned();

    'major: for _ in 0..(50 * m + 100) {
        let dots = points.tr_mul(&x);
        let (j, best) = dots
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap();
        if x.norm_squared() - best <= tol || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);
        loop {
            let Some(mu) = affine_minimizer(points, &active) else {
                active.pop();
                lambda.pop();
                break 'major;
            };
            if mu.iter().all(|&v| v > 0.0) {
                lambda = mu;
                x = combine(points, &active, &lambda);
                break;
            }
            let mut theta = 1.0f64;
            for (l, u) in lambda.iter().zip(&mu) {
                if *u <= 0.0 {
                    let denom = l - u;
                    theta = theta.min(if denom > 0.0 { l / denom } else { 0.0 });
                }
            }
            for (l, u) in lambda.iter_mut().zip(&mu) {
                *l += theta * (u - *l);
            }
            let mut keep = 0;
            for idx in 0..active.len() {
                if lambda[idx] > 1e-15 {
                    active[keep] = active[idx];
                    lambda[keep] = lambda[idx];
                    keep += 1;
                }
            }
            if keep == active.len() {
                // Drop the weakest weight so the inner loop makes progress.
                let weakest = (0..keep).min_by(|&a, &b| lambda[a].total_cmp(&lambda[b])).unwrap();
                active.remove(weakest);
                lambda.remove(weakest);
            } else {
                active.truncate(keep);
                lambda.truncate(keep);
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            x = combine(points, &active, &lambda);
        }
    }
    let mut weights = DVector::zeros(m);
    for (&i, &l) in active.iter().zip(&lambda) {
        weights[i] += l;
    }
    (x, weights)
}

fn combine(points: &DMatrix<f64>, active: &[usize], weights: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points.nrows());
    for (&i, &w) in active.iter().zip(weights) {
        x.axpy(w, &points.column(i), 1.0);
    }
    x
}

/// Weights `mu` with `sum mu = 1` minimizing `|P_S mu|` over the affine hull
/// of the active points.
fn affine_minimizer(points: &DMatrix<f64>, active: &[usize]) -> Option<Vec<f64>> {
    let s = active.len();
    let mut system = DMatrix::zeros(s + 1, s + 1);
    for a in 0..s {
        for b in a..s {
            let g = points.column(active[a]).dot(&points.column(active[b]));
            system[(a, b)] = g;
            system[(b, a)] = g;
        }
        system[(a, s)] = 1.0;
        system[(s, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = system.lu().solve(&rhs)?;
    let mu: Vec<f64> = sol.iter().take(s).copied().collect();
    if mu.iter().all(|v| v.is_finite()) {
        Some(mu)
    } else {
        None
    }
}

/// Euclidean distance from `q` to the convex hull of the rows of `vertices`.
pub(crate) fn distance_to_hull(vertices: &DMatrix<f64>, q: &[f64]) -> f64 {
    let shifted = DMatrix::from_fn(vertices.ncols(), vertices.nrows(), |c, r| vertices[(r, c)] - q[c]);
    min_norm_point(&shifted).0.norm()
}

fn check_simplex_rows(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < -1e-12) || (row.sum() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("{what} row {i} is not on the simplex")));
        }
    }
    Ok(())
}

/// Directed Hausdorff distance from `conv(H*)` to the hull of the rows of
/// `Y*`, approximated on a barycentric grid of `conv(H*)`.
pub fn hausdorff_to_polytope(
    ystar: &DMatrix<f64>,
    hstar: &DMatrix<f64>,
    resolution: Option<usize>,
) -> Result<HausdorffResult> {
    let (n, j) = ystar.shape();
    let k = hstar.nrows();
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("need at least one sample row and one vertex".into()));
    }
    if hstar.ncols() != j {
        return Err(Error::ShapeMismatch {
            expected: (k, j),
            found: hstar.shape(),
        });
    }
    check_simplex_rows(ystar, "sample")?;
    check_simplex_rows(hstar, "vertex")?;

    let mut warnings = Vec::new();
    let outside = ystar
        .row_iter()
        .map(|row| distance_to_hull(hstar, row.clone_owned().as_slice()))
        .fold(0.0, f64::max);
    if outside > CONTAINMENT_TOL {
        warnings.push(Warning::NotContained {
            max_distance: outside,
        });
    }

    let vertex_rows = sample_hull_rows(ystar, k);
    let vertices = ystar.select_rows(&vertex_rows);
    let grid = barycentric_grid(k, resolution.unwrap_or_else(|| default_grid_resolution(k)));
    let mut distance = 0.0f64;
    for weights in &grid {
        let mut q = vec![0.0; j];
        for (v, &w) in weights.iter().enumerate() {
            for c in 0..j {
                q[c] += w * hstar[(v, c)];
            }
        }
        distance = distance.max(distance_to_hull(&vertices, &q));
    }
    Ok(HausdorffResult {
        distance,
        grid_points: grid.len(),
        sample_vertices: vertex_rows.len(),
        warnings,
    })
}

/// Rows of `Y*` spanning its hull in the `(k - 1)`-dimensional intrinsic
/// projection; every row when the hull cannot be computed.
fn sample_hull_rows(ystar: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let all = || (0..ystar.nrows()).collect::<Vec<_>>();
    if ystar.nrows() < 2 {
        return all();
    }
    let Ok(cloud) = PointCloud::new(ystar.clone()) else {
        return all();
    };
    intrinsic_projection(&cloud, (k.max(2)) - 1)
        .and_then(|(_, z)| hull_vertices(&z))
        .unwrap_or_else(|_| all())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_and_order() {
        let g = barycentric_grid(3, 2);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(g[5], vec![1.0, 0.0, 0.0]);
        assert_eq!(barycentric_grid(3, 20).len(), 231);
        assert_eq!(barycentric_grid(1, 20), vec![vec![1.0]]);
    }

    #[test]
    fn min_norm_point_cases() {
        // Segment from (1, -1) to (1, 1): nearest point (1, 0).
        let p = DMatrix::from_column_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        let (x, w) = min_norm_point(&p);
        assert!((x - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14);
        // Origin inside a triangle.
        let p = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, -1.0, 1.0, -1.0, -1.0]);
        assert!(min_norm_point(&p).0.norm() < 1e-12);
        // Nearest point is a vertex.
        let p = DMatrix::from_column_slice(2, 3, &[1.0, 1.0, 2.0, 1.0, 1.0, 3.0]);
        let (x, _) = min_norm_point(&p);
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn zero_when_sample_contains_vertices() {
        let h = DMatrix::<f64>::identity(3, 3);
        let mut y = h.clone().insert_rows(3, 1, 0.0);
        y.row_mut(3).fill(1.0 / 3.0);
        let r = hausdorff_to_polytope(&y, &h, None).unwrap();
        assert!(r.distance < 1e-6, "{}", r.distance);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn centroid_sample_distance() {
        let h = DMatrix::<f64>::identity(3, 3);
        let y = DMatrix::from_element(1, 3, 1.0 / 3.0);
        let r = hausdorff_to_polytope(&y, &h, None).unwrap();
        assert!((r.distance - 6f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flags_points_outside() {
        let h = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.5, 0.5]);
        let r = hausdorff_to_polytope(&y, &h, None).unwrap();
        assert!(matches!(r.warnings[0], Warning::NotContained { .. }));
    }
}
