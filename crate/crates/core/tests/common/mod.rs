#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// L1 distance from `p` to the convex hull of `points`, by linear
/// programming.
pub fn lp_distance_to_hull(points: &[Vec<f64>], p: &[f64]) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let d = p.len();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let lambdas: Vec<_> = points.iter().map(|_| problem.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let plus: Vec<_> = (0..d).map(|_| problem.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let minus: Vec<_> = (0..d).map(|_| problem.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = lambdas.iter().map(|&v| (v, 1.0)).collect();
    problem.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    for c in 0..d {
        let mut row: Vec<_> = lambdas.iter().zip(points).map(|(&v, q)| (v, q[c])).collect();
        row.push((plus[c], -1.0));
        row.push((minus[c], 1.0));
        problem.add_constraint(&row, ComparisonOp::Eq, p[c]);
    }
    problem.solve().expect("feasible by construction").objective()
}

/// Extreme points by LP membership: a point is a vertex when it lies
/// outside the hull of all points that differ from it, and no earlier point
/// coincides with it.
pub fn brute_force_vertices(points: &[Vec<f64>], tol: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            if points[..i].iter().any(|q| q == &points[i]) {
                return false;
            }
            let others: Vec<Vec<f64>> =
                points.iter().filter(|q| *q != &points[i]).cloned().collect();
            lp_distance_to_hull(&others, &points[i]) > tol
        })
        .collect()
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// All permutations of `0..k` in lexicographic order.
pub fn lex_permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Brute-force row matching: `perm[t]` is the estimated row assigned to
/// true row `t`.
pub fn brute_force_align(truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::INFINITY);
    for perm in lex_permutations(truth.len()) {
        let mut total = 0.0;
        for (t, &e) in perm.iter().enumerate() {
            for c in 0..truth[t].len() {
                total += (truth[t][c] - estimate[e][c]).powi(2);
            }
        }
        if total < best.1 {
            best = (perm, total);
        }
    }
    best
}

pub fn scalar_nrmse(truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> f64 {
    let k = truth.len();
    let mut acc = 0.0;
    for r in 0..k {
        let j = truth[r].len();
        let mut se = 0.0;
        let mut norm = 0.0;
        for c in 0..j {
            se += (truth[r][c] - estimate[r][c]) * (truth[r][c] - estimate[r][c]);
            norm += truth[r][c] * truth[r][c];
        }
        acc += (se / j as f64).sqrt() / norm.sqrt();
    }
    acc / k as f64
}

pub fn scalar_nfd(truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in truth.iter().zip(estimate) {
        for (x, y) in a.iter().zip(b) {
            diff += (x - y) * (x - y);
            norm += x * x;
        }
    }
    (diff / norm).sqrt()
}

/// Random column-stochastic `k x j` matrix.
pub fn random_column_stochastic(rng: &mut ChaCha8Rng, k: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(k, j, |_, _| rng.random_range(0.01..1.0));
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    m
}

/// Random orthogonal matrix from the QR factor of a Gaussian-like matrix.
pub fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
