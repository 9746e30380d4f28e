//! Command-line surface: `simulate`, `estimate`, `evaluate` and
//! `convergence-study`.

mod io;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimator::{
    apportion, default_source_labels, EstimatorConfig, MeanMethod, SearchStrategy, ZeroRowPolicy,
};
use crate::evaluation::{convergence_study, score, summarize, Scores, StudyDesign};
use crate::synthgen::{make_ground_truth, GroundTruthOptions, Process, RngSpec};

pub use io::{format_f64, load_concentrations, read_matrix, write_json, write_matrix, write_records};

pub const WORKERS_ENV: &str = "APPORTION_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "apportion", version, about = "Source attribution from multipollutant concentration data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Estimate profiles and attribution fractions from a concentration CSV.
    Estimate(EstimateArgs),
    /// Score an estimated attribution matrix against the truth.
    Evaluate(EvaluateArgs),
    /// Monte Carlo study of estimation error across sample sizes.
    ConvergenceStudy(StudyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProcessArg {
    Ar1,
    Mixture,
}

impl From<ProcessArg> for Process {
    fn from(p: ProcessArg) -> Self {
        match p {
            ProcessArg::Ar1 => Process::Ar1,
            ProcessArg::Mixture => Process::Mixture,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SearchArg {
    Greedy,
    Exhaustive,
    Auto,
}

impl From<SearchArg> for SearchStrategy {
    fn from(s: SearchArg) -> Self {
        match s {
            SearchArg::Greedy => SearchStrategy::Greedy,
            SearchArg::Exhaustive => SearchStrategy::Exhaustive,
            SearchArg::Auto => SearchStrategy::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeanArg {
    Affine,
    ClippedWeights,
}

impl From<MeanArg> for MeanMethod {
    fn from(m: MeanArg) -> Self {
        match m {
            MeanArg::Affine => MeanMethod::Affine,
            MeanArg::ClippedWeights => MeanMethod::ClippedWeights,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ZeroRowsArg {
    Drop,
    Error,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "ar1")]
    pub process: ProcessArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "J")]
    pub j: usize,
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicate index selecting the stream block.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    /// Append one pure row per source.
    #[arg(long)]
    pub plant_corners: bool,
    /// Profile candidates (default 10 K).
    #[arg(long)]
    pub n_candidates: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub search: SearchArg,
    #[arg(long, value_enum, default_value = "affine")]
    pub mean_method: MeanArg,
    #[arg(long, value_enum, default_value = "drop")]
    pub zero_rows: ZeroRowsArg,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon_clip: f64,
    /// Projection rank cap (default K - 1).
    #[arg(long)]
    pub rank_cap: Option<usize>,
    #[arg(long, default_value_t = crate::geometry::DEFAULT_EXHAUSTIVE_BUDGET)]
    pub exhaustive_budget: u64,
    #[arg(long, default_value_t = crate::geometry::DEFAULT_MAX_SWEEPS)]
    pub max_sweeps: usize,
    /// Prune hull candidates to this many k-means clusters.
    #[arg(long)]
    pub prune_clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub prune_seed: u64,
}

impl EstimatorArgs {
    pub fn config(&self) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(self.k)
            .with_search(self.search.into())
            .with_mean_method(self.mean_method.into());
        if let Some(c) = self.prune_clusters {
            cfg = cfg.with_pruning(c, self.prune_seed);
        }
        cfg.epsilon_clip = self.epsilon_clip;
        cfg.rank_cap = self.rank_cap;
        cfg.exhaustive_budget = self.exhaustive_budget;
        cfg.max_sweeps = self.max_sweeps;
        cfg.zero_row_policy = match self.zero_rows {
            ZeroRowsArg::Drop => ZeroRowPolicy::Drop,
            ZeroRowsArg::Error => ZeroRowPolicy::Error,
        };
        cfg
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Concentration CSV with a header of pollutant names.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// True attribution matrix; aligns the outputs and writes metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, value_enum, default_value = "ar1")]
    pub process: ProcessArg,
    #[arg(long = "J", default_value_t = 8)]
    pub j: usize,
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 300, 1500, 10000, 100000, 500000])]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value = "greedy")]
    pub search: SearchArg,
    #[arg(long, value_enum, default_value = "affine")]
    pub mean_method: MeanArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

impl StudyArgs {
    pub fn design(&self) -> StudyDesign {
        StudyDesign {
            process: self.process.into(),
            j: self.j,
            k: self.k,
            n_grid: self.n_grid.clone(),
            replicates: self.replicates,
            search: self.search.into(),
            master_seed: self.seed,
            mean_method: self.mean_method.into(),
        }
    }
}

/// Parses the process arguments and runs the command. Errors go to stderr
/// as `<category>: <detail>`; the return value is the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("{}: {detail}", e.category());
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ConvergenceStudy(a) => study(a),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: C,
    files: Vec<&'a str>,
    /// The only field that varies between identical runs.
    created_unix_seconds: u64,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: C, files: Vec<&str>) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            files,
            created_unix_seconds: unix_seconds(),
        },
    )
}

fn column_vector(path: &Path, header: &str, labels: &[String], values: &[f64]) -> Result<()> {
    let m = DMatrix::from_column_slice(values.len(), 1, values);
    write_matrix(path, &[header.to_string()], &m, Some(labels))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let rng = RngSpec::replicate(a.seed, a.replicate);
    let options = GroundTruthOptions {
        plant_corners: a.plant_corners,
        n_candidates: a.n_candidates,
    };
    let (y, truth) = make_ground_truth(a.n, a.j, a.k, a.process.into(), rng, options)?;
    let sources = default_source_labels(a.k);
    let names = y.pollutant_names().to_vec();
    write_matrix(&a.out.join("Y.csv"), &names, y.values(), None)?;
    write_matrix(&a.out.join("W.csv"), &sources, &truth.w, None)?;
    write_matrix(&a.out.join("H.csv"), &names, &truth.h, Some(&sources))?;
    column_vector(&a.out.join("mu.csv"), "mu", &sources, truth.mu.as_slice())?;
    write_matrix(&a.out.join("phi_true.csv"), &names, truth.phi_true.values(), Some(&sources))?;
    write_matrix(
        &a.out.join("phi_sample.csv"),
        &names,
        truth.sample_phi()?.values(),
        Some(&sources),
    )?;
    let config = json!({
        "process": Process::from(a.process),
        "n": a.n,
        "J": a.j,
        "K": a.k,
        "seed": a.seed,
        "replicate": a.replicate,
        "rng": rng,
        "plant_corners": a.plant_corners,
        "n_candidates": a.n_candidates.unwrap_or(10 * a.k),
        "params": truth.params,
    });
    write_manifest(
        &a.out,
        "simulate",
        config,
        vec!["Y.csv", "W.csv", "H.csv", "mu.csv", "phi_true.csv", "phi_sample.csv"],
    )
}

fn metrics_rows(s: &Scores) -> Vec<Vec<String>> {
    let perm = s.alignment.permutation.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ");
    vec![vec![
        format_f64(s.nrmse),
        format_f64(s.nfd),
        format_f64(s.alignment.total_sq_distance),
        perm,
    ]]
}

const METRICS_HEADER: [&str; 4] = ["nrmse", "nfd", "total_sq_distance", "permutation"];

fn estimate(a: &EstimateArgs) -> Result<()> {
    let y = load_concentrations(&a.input)?;
    let truth = match &a.truth {
        Some(p) => Some(read_matrix(p, false)?.2),
        None => None,
    };
    let cfg = a.estimator.config();
    let est = apportion(&y, &cfg)?;
    prepare_out(&a.out)?;

    let names = y.pollutant_names().to_vec();
    let sources = default_source_labels(cfg.sources);
    let mut phi = est.phi_hat.values().clone();
    let mut h = est.h_star_hat.clone();
    let mut m = est.m_tilde.as_slice().to_vec();
    let mut selected = est.diagnostics.selected_rows.clone();
    let mut files = vec!["phi_hat.csv", "h_star_hat.csv", "m_tilde.csv", "diagnostics.json", "hull_scatter.csv"];
    if let Some(phi_true) = &truth {
        let s = score(phi_true, &phi)?;
        phi = s.alignment.apply(&phi);
        h = s.alignment.apply(&h);
        m = s.alignment.apply_vec(&m);
        selected = s.alignment.permutation.iter().map(|&p| selected[p]).collect();
        write_records(&a.out.join("metrics.csv"), &METRICS_HEADER, metrics_rows(&s))?;
        files.push("metrics.csv");
    }
    write_matrix(&a.out.join("phi_hat.csv"), &names, &phi, Some(&sources))?;
    write_matrix(&a.out.join("h_star_hat.csv"), &names, &h, Some(&sources))?;
    column_vector(&a.out.join("m_tilde.csv"), "m_tilde", &sources, &m)?;

    let mut diagnostics = est.diagnostics.clone();
    diagnostics.selected_rows = selected;
    write_json(
        &a.out.join("diagnostics.json"),
        &json!({ "config": cfg, "aligned_to_truth": truth.is_some(), "diagnostics": diagnostics }),
    )?;

    let c = &est.candidates;
    let data_rows: Vec<usize> = {
        let kept: Vec<usize> = (0..y.n()).filter(|&i| !est.diagnostics.dropped_rows.contains(&i)).collect();
        c.rows.iter().map(|&r| kept[r]).collect()
    };
    let mut header = vec!["row".to_string()];
    header.extend((1..=c.projected.ncols()).map(|d| format!("z{d}")));
    header.push("selected".into());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(
        &a.out.join("hull_scatter.csv"),
        &header_ref,
        data_rows.iter().enumerate().map(|(i, &row)| {
            let mut fields = vec![row.to_string()];
            fields.extend(c.projected.row(i).iter().map(|&v| format_f64(v)));
            fields.push((est.diagnostics.selected_rows.contains(&row) as u8).to_string());
            fields
        }),
    )
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let (names, labels, phi_true) = read_matrix(&a.truth, false)?;
    let (_, _, phi_hat) = read_matrix(&a.estimate, false)?;
    let s = score(&phi_true, &phi_hat)?;
    prepare_out(&a.out)?;
    write_records(&a.out.join("metrics.csv"), &METRICS_HEADER, metrics_rows(&s))?;
    let labels = if labels.len() == phi_true.nrows() {
        labels
    } else {
        default_source_labels(phi_true.nrows())
    };
    write_matrix(&a.out.join("phi_hat_aligned.csv"), &names, &s.alignment.apply(&phi_hat), Some(&labels))
}

fn study(a: &StudyArgs) -> Result<()> {
    let design = a.design();
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::InvalidInput("worker count must be positive".into()));
    }
    let result = convergence_study(&design, workers)?;
    prepare_out(&a.out)?;
    write_records(
        &a.out.join("metrics.csv"),
        &["n", "replicate", "nrmse", "nfd", "runtime_seconds", "search_used"],
        result.records.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.replicate.to_string(),
                format_f64(r.nrmse),
                format_f64(r.nfd),
                format_f64(r.runtime_seconds),
                r.search_used.label().to_string(),
            ]
        }),
    )?;
    let mut header = vec!["n".to_string(), "count".to_string()];
    for metric in ["nrmse", "nfd", "runtime_seconds"] {
        for stat in ["median", "q1", "q3", "min", "max"] {
            header.push(format!("{metric}_{stat}"));
        }
    }
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(
        &a.out.join("summary.csv"),
        &header_ref,
        summarize(&result.records).into_iter().map(|s| {
            let mut row = vec![s.n.to_string(), s.count.to_string()];
            for q in [s.nrmse, s.nfd, s.runtime_seconds] {
                row.extend([q.median, q.q1, q.q3, q.min, q.max].map(format_f64));
            }
            row
        }),
    )?;
    write_records(
        &a.out.join("failures.csv"),
        &["n", "replicate", "stage", "category", "message"],
        result.failures.iter().map(|f| {
            vec![
                f.n.to_string(),
                f.replicate.to_string(),
                f.stage.clone(),
                f.category.clone(),
                f.message.clone(),
            ]
        }),
    )?;
    write_manifest(
        &a.out,
        "convergence-study",
        json!({
            "design": design,
            "workers": workers,
            "records": result.records.len(),
            "failures": result.failures.len(),
        }),
        vec!["metrics.csv", "summary.csv", "failures.csv"],
    )
}
