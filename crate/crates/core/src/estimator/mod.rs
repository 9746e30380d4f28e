//! End-to-end estimation of the attribution matrix from concentrations.
//!
//! `apportion` chains the stages: row normalization, hull candidate
//! extraction, max-volume vertex selection, mean contribution recovery and
//! the attribution formula. Each stage is public on its own.

mod candidates;
mod mean;

pub use candidates::{estimate_h_star, extract_candidates, select_vertices, Candidates, HStarEstimate};
pub use mean::{compute_phi, estimate_mu_tilde};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::geometry::{DEFAULT_EXHAUSTIVE_BUDGET, DEFAULT_MAX_SWEEPS};

/// Observed `n x J` non-negative concentrations with pollutant names.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMatrix {
    values: DMatrix<f64>,
    pollutant_names: Vec<String>,
}

impl ConcentrationMatrix {
    pub fn new(values: DMatrix<f64>, pollutant_names: Vec<String>) -> Result<Self> {
        let (n, j) = values.shape();
        if n == 0 || j == 0 {
            return Err(Error::InvalidInput("concentration matrix is empty".into()));
        }
        if pollutant_names.len() != j {
            return Err(Error::InvalidInput(format!(
                "{} pollutant names for {j} columns",
                pollutant_names.len()
            )));
        }
        for c in 0..j {
            let col = values.column(c);
            if let Some(r) = col.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "entry ({r}, {c}) is {}; concentrations must be finite and non-negative",
                    col[r]
                )));
            }
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidInput(format!(
                    "pollutant column {c} ({}) is entirely zero",
                    pollutant_names[c]
                )));
            }
        }
        Ok(Self {
            values,
            pollutant_names,
        })
    }

    /// Names the columns `p1..pJ`.
    pub fn with_default_names(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("p{j}")).collect();
        Self::new(values, names)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn pollutant_names(&self) -> &[String] {
        &self.pollutant_names
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn j(&self) -> usize {
        self.values.ncols()
    }

    /// Copy with column `j` multiplied by `scales[j]`.
    pub fn scale_columns(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.j() || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(
                "column scales must be J positive finite numbers".into(),
            ));
        }
        let mut values = self.values.clone();
        for (mut col, s) in values.column_iter_mut().zip(scales) {
            col *= *s;
        }
        Self::new(values, self.pollutant_names.clone())
    }
}

/// Rows of `Y` scaled onto the simplex, with the zero rows removed.
#[derive(Debug, Clone)]
pub struct RowNormalizedData {
    /// `n' x J`, each row sums to one.
    pub ystar: DMatrix<f64>,
    /// Original row totals of the kept rows.
    pub row_sums: DVector<f64>,
    /// `kept_rows[i]` is the row of `Y` that produced `ystar` row `i`.
    pub kept_rows: Vec<usize>,
    /// Row count of `Y` before dropping.
    pub total_rows: usize,
}

impl RowNormalizedData {
    pub fn dropped_rows(&self) -> Vec<usize> {
        let mut kept = self.kept_rows.iter().peekable();
        (0..self.total_rows)
            .filter(|r| {
                if kept.peek() == Some(&r) {
                    kept.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRowPolicy {
    #[default]
    Drop,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    Greedy,
    Exhaustive,
    /// Exhaustive when the subset count fits the budget, greedy otherwise.
    #[default]
    Auto,
}

/// The search that actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchUsed {
    Greedy,
    Exhaustive,
}

impl SearchUsed {
    pub fn label(self) -> &'static str {
        match self {
            SearchUsed::Greedy => "greedy",
            SearchUsed::Exhaustive => "exhaustive",
        }
    }
}

/// How the mean source contributions are recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMethod {
    /// `[mean(Y), mean(r)] R`, negative entries clipped to zero.
    #[default]
    Affine,
    /// Per-row weights `[Y*, 1] R`, floored at `epsilon_clip`, renormalized
    /// and averaged after rescaling by the row totals.
    ClippedWeights,
}

/// k-means pruning of hull candidates before the vertex search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Pruning {
    pub cluster_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorConfig {
    /// Number of sources `K`.
    pub sources: usize,
    pub search: SearchStrategy,
    pub prune: Option<Pruning>,
    pub epsilon_clip: f64,
    /// Defaults to `K - 1`.
    pub rank_cap: Option<usize>,
    pub exhaustive_budget: u64,
    pub max_sweeps: usize,
    pub mean_method: MeanMethod,
    pub zero_row_policy: ZeroRowPolicy,
}

impl EstimatorConfig {
    pub fn new(sources: usize) -> Self {
        Self {
            sources,
            search: SearchStrategy::Auto,
            prune: None,
            epsilon_clip: 1e-10,
            rank_cap: None,
            exhaustive_budget: DEFAULT_EXHAUSTIVE_BUDGET,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            mean_method: MeanMethod::Affine,
            zero_row_policy: ZeroRowPolicy::Drop,
        }
    }

    pub fn with_search(mut self, search: SearchStrategy) -> Self {
        self.search = search;
        self
    }

    pub fn with_mean_method(mut self, method: MeanMethod) -> Self {
        self.mean_method = method;
        self
    }

    pub fn with_pruning(mut self, cluster_count: usize, seed: u64) -> Self {
        self.prune = Some(Pruning {
            cluster_count,
            seed,
        });
        self
    }

    pub fn effective_rank_cap(&self) -> usize {
        self.rank_cap.unwrap_or(self.sources.saturating_sub(1)).max(1)
    }

    pub fn validate(&self, j: usize) -> Result<()> {
        let k = self.sources;
        if k < 1 || k >= j {
            return Err(Error::InvalidInput(format!(
                "need 1 <= K < J, got K = {k}, J = {j}"
            )));
        }
        if !(self.epsilon_clip > 0.0 && self.epsilon_clip <= 1e-3) {
            return Err(Error::InvalidInput(format!(
                "epsilon_clip must lie in (0, 1e-3], got {}",
                self.epsilon_clip
            )));
        }
        if self.rank_cap == Some(0) {
            return Err(Error::InvalidInput("rank_cap must be at least 1".into()));
        }
        if let Some(p) = self.prune {
            if p.cluster_count < k {
                return Err(Error::InvalidInput(format!(
                    "cluster_count {} is below K = {k}",
                    p.cluster_count
                )));
            }
        }
        Ok(())
    }
}

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    ZeroRowsDropped { count: usize },
    /// `sigma_min / sigma_max` of the augmented profile matrix.
    RankDeficient { conditioning: f64 },
    NegativeMeanClipped { sources: Vec<usize> },
    /// Exact hull skipped; every row became a candidate.
    HullDimensionExceeded { dim: usize },
    /// Requested exhaustive search fell back to greedy.
    ExhaustiveBudgetExceeded { subsets: u128, budget: u64 },
    /// Sample points farther than tolerance outside the reference polytope.
    NotContained { max_distance: f64 },
}

/// `K x J` column-stochastic attribution fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    values: DMatrix<f64>,
    source_labels: Vec<String>,
}

impl AttributionMatrix {
    /// Wraps `values`, checking column sums against `1 +- 1e-10` and the
    /// entry range.
    pub fn new(values: DMatrix<f64>, source_labels: Vec<String>) -> Result<Self> {
        if source_labels.len() != values.nrows() {
            return Err(Error::InvalidInput("one label per source row required".into()));
        }
        for (j, col) in values.column_iter().enumerate() {
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "attribution column {j} sums to {s}"
                )));
            }
            if col.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInput(format!(
                    "attribution column {j} has entries outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            values,
            source_labels,
        })
    }

    pub(crate) fn from_parts_unchecked(values: DMatrix<f64>, source_labels: Vec<String>) -> Self {
        Self {
            values,
            source_labels,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn source_labels(&self) -> &[String] {
        &self.source_labels
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

pub(crate) fn default_source_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("source_{i}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub r_b: usize,
    pub n_hull_vertices: usize,
    pub n_candidates_after_prune: usize,
    pub log_volume: f64,
    pub search_used: SearchUsed,
    /// Rows of `Y` selected as profile estimates, in source order.
    pub selected_rows: Vec<usize>,
    pub dropped_rows: Vec<usize>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct ApportionmentEstimate {
    /// `K x J`, row-stochastic.
    pub h_star_hat: DMatrix<f64>,
    pub m_tilde: DVector<f64>,
    pub phi_hat: AttributionMatrix,
    pub diagnostics: Diagnostics,
    /// Candidate rows and their projected coordinates, for plotting.
    pub candidates: Candidates,
}

/// Scales each row of `Y` to sum to one.
pub fn row_normalize(y: &ConcentrationMatrix, policy: ZeroRowPolicy) -> Result<RowNormalizedData> {
    let v = y.values();
    let sums: Vec<f64> = v.row_iter().map(|r| r.sum()).collect();
    if policy == ZeroRowPolicy::Error {
        if let Some(row) = sums.iter().position(|&s| s == 0.0) {
            return Err(Error::ZeroRow { row });
        }
    }
    let kept_rows: Vec<usize> = (0..y.n()).filter(|&i| sums[i] > 0.0).collect();
    if kept_rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let ystar = DMatrix::from_fn(kept_rows.len(), y.j(), |i, j| {
        let r = kept_rows[i];
        v[(r, j)] / sums[r]
    });
    Ok(RowNormalizedData {
        ystar,
        row_sums: DVector::from_iterator(kept_rows.len(), kept_rows.iter().map(|&r| sums[r])),
        kept_rows,
        total_rows: y.n(),
    })
}

/// Runs the full pipeline. Errors carry the stage they came from.
pub fn apportion(y: &ConcentrationMatrix, cfg: &EstimatorConfig) -> Result<ApportionmentEstimate> {
    cfg.validate(y.j())?;
    let data = row_normalize(y, cfg.zero_row_policy).map_err(|e| e.at(Stage::RowNormalize))?;
    let mut warnings = Vec::new();
    let dropped = data.dropped_rows();
    if !dropped.is_empty() {
        warnings.push(Warning::ZeroRowsDropped {
            count: dropped.len(),
        });
    }

    let h = estimate_h_star(&data, cfg)?;
    warnings.extend(h.candidates.warnings.iter().cloned());
    warnings.extend(h.warnings.iter().cloned());

    let (m_tilde, mean_warnings) =
        estimate_mu_tilde(y, &data, &h.h_star, cfg).map_err(|e| e.at(Stage::MeanEstimate))?;
    warnings.extend(mean_warnings);

    let phi_hat = compute_phi(&m_tilde, &h.h_star).map_err(|e| e.at(Stage::Attribution))?;

    let selected_rows = h
        .subset
        .indices
        .iter()
        .map(|&c| data.kept_rows[h.candidates.rows[c]])
        .collect();
    let diagnostics = Diagnostics {
        r_b: h.candidates.r_b,
        n_hull_vertices: h.candidates.n_hull_vertices,
        n_candidates_after_prune: h.candidates.rows.len(),
        log_volume: h.subset.log_volume,
        search_used: h.search_used,
        selected_rows,
        dropped_rows: dropped,
        warnings,
    };
    Ok(ApportionmentEstimate {
        h_star_hat: h.h_star,
        m_tilde,
        phi_hat,
        diagnostics,
        candidates: h.candidates,
    })
}
