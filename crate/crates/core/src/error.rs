use std::path::PathBuf;

use thiserror::Error;

use crate::conic::VarId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lower bound {lo} exceeds upper bound {hi}")]
    BoundOrder { lo: f64, hi: f64 },

    #[error("binary variable bounds [{lo}, {hi}] are not inside [0, 1]")]
    BinaryBounds { lo: f64, hi: f64 },

    #[error("rotated cone needs at least one entry in x")]
    EmptyCone,

    #[error("variable {var} referenced but program has {num_vars} variables")]
    UnknownVar { var: VarId, num_vars: usize },

    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),

    #[error("continuous solve requested with {0} binary variables still present")]
    BinaryPresent(usize),

    #[error("enumeration guard: {count} binaries exceeds limit of {limit}")]
    TooManyBinaries { count: usize, limit: usize },

    #[error("network is not radial: {0}")]
    NotRadial(String),

    #[error("network case has no root bus")]
    MissingRoot,

    #[error("EV {ev} departs at slot {t_dep} beyond horizon {horizon}")]
    SessionOutOfHorizon { ev: usize, t_dep: usize, horizon: usize },

    #[error("EV {ev}: {reason}")]
    InvalidSession { ev: usize, reason: String },

    #[error("schema error in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("conic backend failure: {0}")]
    BackendFailure(String),

    #[error("trust-region sub-problem infeasible at every radius tried: {tried:?}")]
    InfeasibleAtAllDeltas { tried: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
