use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("variable {name} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("duplicate name {0}")]
    DuplicateName(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("row {row} references unknown column {index}")]
    UnknownVariable { row: String, index: usize },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("node limit of {0} reached before any integer-feasible solution was found")]
    NodeLimitNoIncumbent(usize),
}

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("name {0:?} is longer than 255 characters")]
    NameTooLong(String),
    #[error("name {0:?} contains whitespace or is empty")]
    InvalidName(String),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
