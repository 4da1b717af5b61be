//! Crate-wide error type aggregating the per-subsystem errors.

use crate::bids::BidError;
use crate::linear::LinearError;
use crate::network::NetworkError;
use crate::rational::ParseRationalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Bid(#[from] BidError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("scenario {index}: {source}")]
    Scenario { index: usize, source: Box<Error> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Number(#[from] ParseRationalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (sup-norm residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },
    #[error("block subset enumeration needs {candidates} candidate sets, over the budget of {budget}; enable the greedy fallback or raise the budget")]
    EnumerationBudgetExceeded { candidates: u128, budget: u64 },
    #[error("clearing configuration is degenerate: {0}")]
    Singular(#[from] LinearError),
    #[error("solver produced an inconsistent fixed point: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Error)]
pub enum GameError {
    #[error("strategy space of size {size} exceeds the budget {budget}")]
    BudgetExceeded { size: u128, budget: u64 },
    #[error("payoff table is not a symmetric two-player table: {0}")]
    AsymmetricTable(String),
    #[error("no mixed equilibrium found by support enumeration (table may be degenerate)")]
    NoEquilibrium,
    #[error("weights must be strictly positive (weight {index} is not)")]
    NonPositiveWeight { index: usize },
    #[error("probabilities must be positive and sum to one")]
    BadProbabilities,
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

pub type Result<T> = std::result::Result<T, Error>;
