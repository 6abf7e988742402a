use mgplan_optim::{MpsError, SolverError};
use thiserror::Error;

use crate::instance::ValidationReport;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error("instance is already in per-unit")]
    AlreadyNormalized,
    #[error("instance is not in per-unit")]
    NotNormalized,
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("no days to cluster")]
    EmptyInput,
    #[error("k = {k} exceeds the number of days ({days})")]
    KTooLarge { k: usize, days: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("day {0} has a different length or non-finite values")]
    Ragged(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrequencyError {
    #[error("no committed unit provides inertia, damping or droop")]
    NoFrequencyResponse,
    #[error("overdamped response (zeta = {zeta}); closed-form nadir undefined")]
    OverdampedUnsupported { zeta: f64 },
    #[error("aggregate parameters out of range: {0}")]
    InvalidParams(String),
    #[error("simulated deviation diverged beyond 10 p.u.")]
    UnstableModel,
    #[error("time step must be in (0, 1 ms] and the horizon positive")]
    BadStep,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("exchange bound missing or invalid for slot {0}")]
    UnboundedExchange(usize),
    #[error("lower bound exceeds upper bound: {0}")]
    InfeasibleBounds(String),
    #[error("line rating must be positive")]
    DegenerateCapacity,
    #[error("polygon needs an even number of sides, at least 4 (got {0})")]
    BadPolygon(usize),
    #[error("block length {0} h does not divide the day")]
    BadBlock(usize),
    #[error("solution is not optimal")]
    NotOptimal,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error("master problem infeasible at iteration {0}")]
    MasterInfeasible(usize),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("i/o error on {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
    #[error("nothing to write")]
    Empty,
}
