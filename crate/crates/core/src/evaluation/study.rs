use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::score;
use crate::error::{Error, Result, Stage};
use crate::estimator::{apportion, EstimatorConfig, MeanMethod, SearchStrategy, SearchUsed};
use crate::synthgen::{make_ground_truth, GroundTruthOptions, Process, RngSpec};

/// One Monte Carlo design: every `(n, replicate)` pair draws its own
/// profiles, parameters and emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub process: Process,
    pub j: usize,
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub search: SearchStrategy,
    pub master_seed: u64,
    #[serde(default)]
    pub mean_method: MeanMethod,
}

impl StudyDesign {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.j {
            return Err(Error::InvalidInput(format!(
                "need 1 <= K < J, got K = {}, J = {}",
                self.k, self.j
            )));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidInput("n grid must be non-empty and positive".into()));
        }
        if self.n_grid.len() >= 1 << 12 || self.replicates >= 1 << 20 {
            return Err(Error::InvalidInput("design too large for the stream layout".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        Ok(())
    }

    /// Stream block of the `(n_index, replicate)` cell.
    pub fn rng(&self, n_index: usize, replicate: usize) -> RngSpec {
        RngSpec::replicate(self.master_seed, ((n_index as u64) << 20) | replicate as u64)
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig::new(self.k)
            .with_search(self.search)
            .with_mean_method(self.mean_method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub n: usize,
    pub replicate: usize,
    pub nrmse: f64,
    pub nfd: f64,
    pub runtime_seconds: f64,
    pub search_used: SearchUsed,
    #[serde(skip)]
    pub log_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub n: usize,
    pub replicate: usize,
    pub stage: String,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicateOutcome {
    Ok(MetricsRecord),
    Failed(ReplicateFailure),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyResult {
    /// Ordered by `n` (grid order), then replicate.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<ReplicateFailure>,
}

/// Generates, estimates and scores one cell of the design. Runtime covers
/// the estimator only.
pub fn run_replicate(design: &StudyDesign, n_index: usize, replicate: usize) -> ReplicateOutcome {
    let n = design.n_grid[n_index];
    let attempt = || -> Result<MetricsRecord> {
        let (y, truth) = make_ground_truth(
            n,
            design.j,
            design.k,
            design.process,
            design.rng(n_index, replicate),
            GroundTruthOptions::default(),
        )
        .map_err(|e| e.at(Stage::Simulation))?;
        let start = Instant::now();
        let est = apportion(&y, &design.estimator_config())?;
        let runtime_seconds = start.elapsed().as_secs_f64();
        let s = score(truth.phi_true.values(), est.phi_hat.values())
            .map_err(|e| e.at(Stage::Evaluation))?;
        Ok(MetricsRecord {
            n,
            replicate,
            nrmse: s.nrmse,
            nfd: s.nfd,
            runtime_seconds,
            search_used: est.diagnostics.search_used,
            log_volume: est.diagnostics.log_volume,
        })
    };
    match attempt() {
        Ok(r) => ReplicateOutcome::Ok(r),
        Err(e) => ReplicateOutcome::Failed(ReplicateFailure {
            n,
            replicate,
            stage: e.stage().map(|s| s.to_string()).unwrap_or_else(|| "config".into()),
            category: e.category().into(),
            message: e.root().to_string(),
        }),
    }
}

/// Runs every cell of the design on `workers` threads. Apart from
/// `runtime_seconds`, the result depends only on the design.
pub fn convergence_study(design: &StudyDesign, workers: usize) -> Result<StudyResult> {
    design.validate()?;
    let cells: Vec<(usize, usize)> = (0..design.n_grid.len())
        .flat_map(|i| (0..design.replicates).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, r)| run_replicate(design, i, r))
            .collect()
    });
    let mut result = StudyResult::default();
    for o in outcomes {
        match o {
            ReplicateOutcome::Ok(r) => result.records.push(r),
            ReplicateOutcome::Failed(f) => result.failures.push(f),
        }
    }
    Ok(result)
}

/// Median, quartiles and range (linear interpolation between order
/// statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            median: at(0.5),
            q1: at(0.25),
            q3: at(0.75),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub n: usize,
    pub count: usize,
    pub nrmse: Quantiles,
    pub nfd: Quantiles,
    pub runtime_seconds: Quantiles,
}

/// Per-`n` summaries in order of first appearance.
pub fn summarize(records: &[MetricsRecord]) -> Vec<StudySummary> {
    let mut ns: Vec<usize> = Vec::new();
    for r in records {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let group: Vec<&MetricsRecord> = records.iter().filter(|r| r.n == n).collect();
            let pick = |f: fn(&MetricsRecord) -> f64| {
                Quantiles::of(&group.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap()
            };
            StudySummary {
                n,
                count: group.len(),
                nrmse: pick(|r| r.nrmse),
                nfd: pick(|r| r.nfd),
                runtime_seconds: pick(|r| r.runtime_seconds),
            }
        })
        .collect()
}
