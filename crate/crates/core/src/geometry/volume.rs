use rayon::prelude::*;
use serde::Serialize;

use super::PointCloud;
use crate::error::{Error, Result};

pub const DEFAULT_EXHAUSTIVE_BUDGET: u64 = 2_000_000;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Minimum log-volume gain for the greedy search to accept a swap.
pub const SWAP_IMPROVEMENT: f64 = 1e-12;

/// A Gram-Schmidt step whose residual falls below this fraction of the edge
/// length marks the simplex as degenerate.
const DEGENERATE_STEP: f64 = 1e-13;

/// Chosen vertices and the log of their simplex volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexSubset {
    pub indices: Vec<usize>,
    pub log_volume: f64,
}

/// `C(m, k)`, saturating at `u128::MAX`.
pub fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Log of the `(K-1)`-dimensional volume of the simplex spanned by the rows
/// of `vertices`, or `-inf` when it is degenerate.
///
/// The volume is `sqrt(det(M^T M)) / (K-1)!` with `M` the edge vectors
/// `v_k - v_1`; the determinant is taken from a re-orthogonalized
/// Gram-Schmidt factorization of `M` rather than formed explicitly.
pub fn simplex_log_volume(vertices: &PointCloud) -> f64 {
    let d = vertices.dim();
    let flat = vertices.row_major();
    let rows: Vec<&[f64]> = flat.chunks(d).collect();
    simplex_log_volume_rows(&rows)
}

/// Slice-based variant of [`simplex_log_volume`].
pub fn simplex_log_volume_rows(vertices: &[&[f64]]) -> f64 {
    let k = vertices.len();
    if k <= 1 {
        return 0.0;
    }
    let d = vertices[0].len();
    if d < k - 1 {
        return f64::NEG_INFINITY;
    }
    let base = vertices[0];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    let mut log_det = 0.0;
    let mut sq_volume = 1.0;
    for v in &vertices[1..] {
        let mut e: Vec<f64> = v.iter().zip(base).map(|(a, b)| a - b).collect();
        let len = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&e).map(|(a, b)| a * b).sum();
                e.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let r = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(r > DEGENERATE_STEP * len) {
            return f64::NEG_INFINITY;
        }
        log_det += r.ln();
        sq_volume *= r * r;
        e.iter_mut().for_each(|x| *x /= r);
        basis.push(e);
    }
    // Squared volume at or below 1e-300 counts as zero; the product can
    // underflow long before the log does, so test the log when it does.
    if sq_volume == 0.0 {
        if 2.0 * log_det <= (1e-300f64).ln() {
            return f64::NEG_INFINITY;
        }
    } else if sq_volume <= 1e-300 {
        return f64::NEG_INFINITY;
    }
    log_det - ln_factorial(k - 1)
}

fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

fn subset_log_volume(rows: &[&[f64]], subset: &[usize]) -> f64 {
    let picked: Vec<&[f64]> = subset.iter().map(|&i| rows[i]).collect();
    simplex_log_volume_rows(&picked)
}

/// Advances `c` to the next `k`-combination of `0..m` in lexicographic
/// order, returning false after the last one.
fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Best subset among those whose first index is `first`. Strict improvement
/// keeps the lexicographically smallest maximizer.
fn best_with_first(rows: &[&[f64]], m: usize, k: usize, first: usize) -> Option<VertexSubset> {
    let mut c: Vec<usize> = (first..first + k).collect();
    let mut best: Option<VertexSubset> = None;
    loop {
        let v = subset_log_volume(rows, &c);
        if v > f64::NEG_INFINITY && best.as_ref().is_none_or(|b| v > b.log_volume) {
            best = Some(VertexSubset {
                indices: c.clone(),
                log_volume: v,
            });
        }
        if k == 1 || !next_combination(&mut c[1..], m) {
            break;
        }
    }
    best
}

/// Maximum-volume `K`-subset by enumerating every subset.
///
/// Work is split across rayon workers by first index; the reduction keeps
/// the lexicographically smallest tuple among equal volumes, so the result
/// does not depend on the number of workers.
pub fn max_volume_exhaustive(
    candidates: &PointCloud,
    k: usize,
    budget: u64,
) -> Result<VertexSubset> {
    let m = candidates.n();
    if k == 0 || m < k {
        return Err(Error::TooFewCandidates { found: m, needed: k });
    }
    let subsets = binomial(m, k);
    if subsets > budget as u128 {
        return Err(Error::BudgetExceeded { subsets, budget });
    }
    let d = candidates.dim();
    let flat = candidates.row_major();
    let rows: Vec<&[f64]> = flat.chunks(d).collect();

    let partials: Vec<Option<VertexSubset>> = (0..=m - k)
        .into_par_iter()
        .map(|first| best_with_first_checked(&rows, m, k, first))
        .collect();
    partials
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<VertexSubset>, s| match acc {
            Some(a) if a.log_volume >= s.log_volume => Some(a),
            _ => Some(s),
        })
        .ok_or(Error::AllDegenerate)
}

fn best_with_first_checked(
    rows: &[&[f64]],
    m: usize,
    k: usize,
    first: usize,
) -> Option<VertexSubset> {
    if k == 1 {
        return Some(VertexSubset {
            indices: vec![first],
            log_volume: 0.0,
        });
    }
    best_with_first(rows, m, k, first)
}

/// ATGP start: repeatedly pick the point whose homogeneous coordinates
/// `(z, 1)` have the largest residual after projecting out the span of the
/// points already picked. The lift makes the procedure affine, so `K`
/// points can be picked from an `(K-1)`-dimensional cloud.
fn atgp(rows: &[&[f64]], k: usize) -> Vec<usize> {
    let lift = |p: &[f64]| -> Vec<f64> {
        let mut v = p.to_vec();
        v.push(1.0);
        v
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    while picked.len() < k {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (i, p) in rows.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let mut v = lift(p);
            for _ in 0..2 {
                for q in &basis {
                    let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                }
            }
            let r = v.iter().map(|x| x * x).sum::<f64>();
            if best.as_ref().is_none_or(|b| r > b.1) {
                best = Some((i, r, v));
            }
        }
        let (i, r, mut v) = best.expect("m >= k guarantees a remaining point");
        picked.push(i);
        let r = r.sqrt();
        if r > 1e-14 {
            v.iter_mut().for_each(|x| *x /= r);
            basis.push(v);
        }
    }
    picked
}

/// N-FINDR style search: ATGP start, then sweeps that move each vertex to
/// the candidate that most increases the volume, accepting only gains above
/// [`SWAP_IMPROVEMENT`]. Returned indices are in vertex-slot order.
pub fn max_volume_greedy(
    candidates: &PointCloud,
    k: usize,
    max_sweeps: usize,
) -> Result<VertexSubset> {
    let m = candidates.n();
    if k == 0 || m < k {
        return Err(Error::TooFewCandidates { found: m, needed: k });
    }
    let d = candidates.dim();
    let flat = candidates.row_major();
    let rows: Vec<&[f64]> = flat.chunks(d).collect();

    let mut current = atgp(&rows, k);
    let mut volume = subset_log_volume(&rows, &current);
    for _ in 0..max_sweeps {
        let mut swapped = false;
        for slot in 0..k {
            let mut best: Option<(usize, f64)> = None;
            let mut trial = current.clone();
            for c in 0..m {
                if current.contains(&c) {
                    continue;
                }
                trial[slot] = c;
                let v = subset_log_volume(&rows, &trial);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            if let Some((c, v)) = best {
                if v > volume + SWAP_IMPROVEMENT || (volume == f64::NEG_INFINITY && v > volume) {
                    current[slot] = c;
                    volume = v;
                    swapped = true;
                }
            }
        }
        if !swapped {
            break;
        }
    }
    if volume == f64::NEG_INFINITY {
        return Err(Error::AllDegenerate);
    }
    Ok(VertexSubset {
        indices: current,
        log_volume: volume,
    })
}
