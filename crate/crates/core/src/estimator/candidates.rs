use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EstimatorConfig, RowNormalizedData, SearchStrategy, SearchUsed, Warning};
use crate::error::{Error, Result, Stage};
use crate::geometry::{
    binomial, hull_vertices, intrinsic_projection, max_volume_exhaustive, max_volume_greedy,
    PointCloud, VertexSubset,
};

const KMEANS_MAX_ITER: usize = 20;

/// Rows of `Y*` eligible as profile estimates.
#[derive(Debug, Clone)]
pub struct Candidates {
    /// Ascending indices into the rows of `Y*`.
    pub rows: Vec<usize>,
    /// `rows.len() x r_B` projected coordinates of the candidates.
    pub projected: DMatrix<f64>,
    pub r_b: usize,
    pub n_hull_vertices: usize,
    pub warnings: Vec<Warning>,
}

/// Intrinsic projection, hull vertices and optional k-means pruning.
pub fn extract_candidates(data: &RowNormalizedData, cfg: &EstimatorConfig) -> Result<Candidates> {
    let k = cfg.sources;
    let n = data.ystar.nrows();
    if n < k + 1 {
        return Err(Error::InvalidInput(format!(
            "{n} usable rows; at least K + 1 = {} are needed",
            k + 1
        )));
    }
    let ystar = PointCloud::new(data.ystar.clone())?;
    let (basis, z) = intrinsic_projection(&ystar, cfg.effective_rank_cap())?;
    let r_b = basis.rank();

    let mut warnings = Vec::new();
    let hull = match hull_vertices(&z) {
        Ok(v) => v,
        Err(Error::HullDimensionExceeded { dim, .. }) => {
            warnings.push(Warning::HullDimensionExceeded { dim });
            (0..n).collect()
        }
        Err(e) => return Err(e),
    };
    let n_hull_vertices = hull.len();

    let rows = match cfg.prune {
        Some(p) if hull.len() > p.cluster_count => {
            let pts = z.select(&hull);
            prune(pts.points(), p.cluster_count, p.seed)
                .into_iter()
                .map(|i| hull[i])
                .collect()
        }
        _ => hull,
    };
    if rows.len() < k {
        return Err(Error::TooFewCandidates {
            found: rows.len(),
            needed: k,
        });
    }
    let projected = z.select(&rows).into_inner();
    Ok(Candidates {
        rows,
        projected,
        r_b,
        n_hull_vertices,
        warnings,
    })
}

/// Seeded k-means++ then Lloyd iterations; keeps, per non-empty cluster, the
/// member farthest from the centroid of all points. Returns ascending
/// positions into `points`.
fn prune(points: &DMatrix<f64>, clusters: usize, seed: u64) -> Vec<usize> {
    let (m, d) = points.shape();
    let sq = |a: usize, c: &[f64]| -> f64 {
        (0..d).map(|j| (points[(a, j)] - c[j]).powi(2)).sum()
    };
    let row = |i: usize| -> Vec<f64> { points.row(i).iter().copied().collect() };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![row(rng.random_range(0..m))];
    let mut nearest: Vec<f64> = (0..m).map(|i| sq(i, &centers[0])).collect();
    while centers.len() < clusters.min(m) {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, w) in nearest.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        centers.push(row(pick));
        let c = centers.last().unwrap().clone();
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq(i, &c));
        }
    }

    let mut assign = vec![usize::MAX; m];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let best = (0..centers.len())
                .min_by(|&x, &y| sq(i, &centers[x]).total_cmp(&sq(i, &centers[y])))
                .unwrap();
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..m).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|&i| points[(i, j)]).sum::<f64>() / members.len() as f64;
            }
        }
    }

    let centroid: Vec<f64> = (0..d).map(|j| points.column(j).mean()).collect();
    let mut keep: Vec<usize> = (0..centers.len())
        .filter_map(|c| {
            (0..m)
                .filter(|&i| assign[i] == c)
                .max_by(|&a, &b| sq(a, &centroid).total_cmp(&sq(b, &centroid)).then(b.cmp(&a)))
        })
        .collect();
    keep.sort_unstable();
    keep
}

/// Max-volume `K`-subset of the candidates under the configured strategy.
pub fn select_vertices(
    candidates: &Candidates,
    cfg: &EstimatorConfig,
) -> Result<(VertexSubset, SearchUsed, Vec<Warning>)> {
    let k = cfg.sources;
    let pts = PointCloud::new(candidates.projected.clone())?;
    let subsets = binomial(pts.n(), k);
    let fits = subsets <= cfg.exhaustive_budget as u128;
    let mut warnings = Vec::new();
    let use_exhaustive = match cfg.search {
        SearchStrategy::Greedy => false,
        SearchStrategy::Auto => fits,
        SearchStrategy::Exhaustive => {
            if !fits {
                warnings.push(Warning::ExhaustiveBudgetExceeded {
                    subsets,
                    budget: cfg.exhaustive_budget,
                });
            }
            fits
        }
    };
    if use_exhaustive {
        let s = max_volume_exhaustive(&pts, k, cfg.exhaustive_budget)?;
        Ok((s, SearchUsed::Exhaustive, warnings))
    } else {
        let s = max_volume_greedy(&pts, k, cfg.max_sweeps)?;
        Ok((s, SearchUsed::Greedy, warnings))
    }
}

#[derive(Debug, Clone)]
pub struct HStarEstimate {
    /// `K x J` row-stochastic profile estimate.
    pub h_star: DMatrix<f64>,
    pub candidates: Candidates,
    /// Indices into `candidates.rows`.
    pub subset: VertexSubset,
    pub search_used: SearchUsed,
    pub warnings: Vec<Warning>,
}

/// Profile estimate: the `Y*` rows at the max-volume candidate subset.
///
/// With a single source there is no simplex to search; the estimate is the
/// pooled profile `sum(Y) / sum(r)`, which equals the common row of `Y*` on
/// noiseless data.
pub fn estimate_h_star(data: &RowNormalizedData, cfg: &EstimatorConfig) -> Result<HStarEstimate> {
    let j = data.ystar.ncols();
    if cfg.sources == 1 {
        let total: f64 = data.row_sums.sum();
        let pooled = DMatrix::from_fn(1, j, |_, c| {
            data.ystar
                .column(c)
                .iter()
                .zip(data.row_sums.iter())
                .map(|(y, r)| y * r)
                .sum::<f64>()
                / total
        });
        return Ok(HStarEstimate {
            h_star: pooled,
            candidates: Candidates {
                rows: Vec::new(),
                projected: DMatrix::zeros(0, 0),
                r_b: 0,
                n_hull_vertices: 0,
                warnings: Vec::new(),
            },
            subset: VertexSubset {
                indices: Vec::new(),
                log_volume: 0.0,
            },
            search_used: SearchUsed::Exhaustive,
            warnings: Vec::new(),
        });
    }

    let candidates = extract_candidates(data, cfg).map_err(|e| e.at(Stage::Candidates))?;
    let (subset, search_used, warnings) =
        select_vertices(&candidates, cfg).map_err(|e| e.at(Stage::VertexSearch))?;
    let h_star = DMatrix::from_fn(subset.indices.len(), j, |r, c| {
        data.ystar[(candidates.rows[subset.indices[r]], c)]
    });
    Ok(HStarEstimate {
        h_star,
        candidates,
        subset,
        search_used,
        warnings,
    })
}
