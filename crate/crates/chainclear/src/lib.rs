//! Clearing a network of interbank obligations two ways:
//!
//! * a centralized fixed-point benchmark with collateral and fractional
//!   recovery ([`centralized`]),
//! * a decentralized mechanism where miners greedily assemble fee-maximizing
//!   blocks of cash-verified payments ([`engine`]), together with a direct
//!   solver for the terminal net worths in the large-capacity regime
//!   ([`limit`]),
//!
//! plus optimal bidding over discrete fee grids: payoff tables, pure and
//! mixed Nash equilibria, fictitious play, and Pareto scalarized search
//! ([`games`]).
//!
//! All currency amounts are exact rationals; identical inputs produce
//! bit-identical results.

#![allow(clippy::result_large_err)]

pub mod bids;
pub mod centralized;
pub mod engine;
pub mod error;
pub mod games;
pub mod io;
pub mod limit;
pub mod linear;
pub mod network;
pub mod rational;
pub mod scenario;

pub use bids::{AtomMap, BidEntry, BidError, BidSchedule, FeeGrid, ResidualBids};
pub use centralized::{clearing_payments, net_worths_centralized, Bound, CentralClearing};
pub use engine::{
    advance, limiting_cash, run_chain, select_block, threshold_fee_block, Block, ChainState,
    ChainTrace, EngineConfig, Termination, TieBreak,
};
pub use error::{Error, GameError, Result, SolverError};
pub use games::{
    best_response, fictitious_play, local_optimality_check, pareto_coordinate_ascent,
    pareto_multi_start, pareto_objective, payoff_table, pure_nash_scan,
    symmetric_mixed_equilibrium, MixedEquilibrium, NodeStrategy, PayoffTable, StrategySpace,
};
pub use limit::{
    consistency_check, consistency_check_cash, solve_terminal, terminal_map,
    threshold_fee_terminal, uniqueness_check, ConsistencyReport, TerminalClearing,
};
pub use network::{
    validate, Discretization, FinancialNetwork, NetworkError, ValidationReport, Violation,
};
pub use rational::Rational;
pub use scenario::{
    expected_cash, weighted_objective, EvalConfig, Evaluator, ObjectiveSpec, Scenario, ScenarioSet,
    UtilityKind,
};
