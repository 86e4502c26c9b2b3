use thiserror::Error;

/// Errors raised by the core algorithms.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("vertex {0:?} is out of bounds")]
    OutOfBounds(Vec<usize>),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid update family: {0}")]
    Family(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("state space too large: {0}")]
    Capacity(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("illegal flip at step {index} (vertex {vertex})")]
    IllegalFlip { index: usize, vertex: usize },
    #[error("configuration repeats at step {0}")]
    RepeatedConfiguration(usize),
    #[error("chain hypothesis fails at region {0}")]
    ChainHypothesis(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
