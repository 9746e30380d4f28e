use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage an error was raised in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RowNormalize,
    Candidates,
    VertexSearch,
    MeanEstimate,
    Attribution,
    Simulation,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::RowNormalize => "row_normalize",
            Stage::Candidates => "candidates",
            Stage::VertexSearch => "vertex_search",
            Stage::MeanEstimate => "mean_estimate",
            Stage::Attribution => "attribution",
            Stage::Simulation => "simulation",
            Stage::Evaluation => "evaluation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("hull dimension {dim} exceeds the supported maximum of {max}")]
    HullDimensionExceeded { dim: usize, max: usize },

    #[error("{subsets} candidate subsets exceed the exhaustive budget of {budget}")]
    BudgetExceeded { subsets: u128, budget: u64 },

    #[error("every candidate subset spans a degenerate simplex")]
    AllDegenerate,

    #[error("row {row} has zero total concentration")]
    ZeroRow { row: usize },

    #[error("no rows with positive total concentration")]
    EmptyData,

    #[error("found {found} candidate vertices but {needed} sources were requested")]
    TooFewCandidates { found: usize, needed: usize },

    #[error("pollutant column {0} is not explained by any source")]
    ZeroDenominator(usize),

    #[error("true attribution row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: usize,
        reason: String,
    },

    #[error("negative value {value} at line {line}, column {column}")]
    NegativeValue { line: u64, column: usize, value: f64 },

    #[error("non-finite value at line {line}, column {column}")]
    NonFinite { line: u64, column: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Strips stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self.root() {
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateCloud(_) => "degenerate_cloud",
            Error::HullDimensionExceeded { .. } => "hull_dimension_exceeded",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::AllDegenerate => "all_degenerate",
            Error::ZeroRow { .. } => "zero_row",
            Error::EmptyData => "empty_data",
            Error::TooFewCandidates { .. } => "too_few_candidates",
            Error::ZeroDenominator(_) => "zero_denominator",
            Error::ZeroNormRow(_) => "zero_norm_row",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Parse { .. } => "parse_error",
            Error::NegativeValue { .. } => "negative_value",
            Error::NonFinite { .. } => "non_finite",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Stage { .. } => unreachable!("root() strips stage labels"),
        }
    }
}
