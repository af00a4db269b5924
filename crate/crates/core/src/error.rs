use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the surrogate-modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("non-uniform time step at row {row}: expected {expected} s, found {found} s")]
    NonUniformStep { row: usize, expected: f64, found: f64 },

    #[error("missing required channel {symbol} (column `{name}`)")]
    MissingChannel { symbol: String, name: String },

    #[error("duplicate channel `{0}`")]
    DuplicateChannel(String),

    #[error("channel length mismatch: `{name}` has {found} samples, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("empty slice [{t_start}, {t_end}]")]
    EmptySlice { t_start: f64, t_end: f64 },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("knots must be strictly increasing (violated at index {0})")]
    DuplicateKnot(usize),

    #[error("query point {t} outside spline span [{lo}, {hi}]")]
    OutsideSpan { t: f64, lo: f64, hi: f64 },

    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },

    #[error("no stable feasible point found (best spectral abscissa {best_margin:.3e} 1/s){}", column.map(|c| format!(" in column {c}")).unwrap_or_default())]
    Infeasible {
        best_margin: f64,
        best_candidate: Box<crate::lpvfit::ParamVector>,
        column: Option<usize>,
    },

    #[error("rank-deficient regressor (condition estimate {0:.3e})")]
    RankDeficient(f64),

    #[error("identified model is unstable (spectral radius {0:.6})")]
    UnstableModel(f64),

    #[error("rank collapse: singular value ratio {0:.3e}")]
    RankCollapse(f64),

    #[error("dt mismatch: model {model} s, input {input} s")]
    DtMismatch { model: f64, input: f64 },

    #[error("no test seeds: dataset has {n_seeds} seeds and {n_train} are used for training")]
    NoTestSeeds { n_seeds: usize, n_train: usize },

    #[error("all grid results are equal ({0})")]
    DegenerateSurface(f64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
