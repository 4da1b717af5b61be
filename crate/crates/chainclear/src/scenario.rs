//! Finite stress scenarios over endowments and the expected-utility pipeline
//! shared by the Nash and Pareto formulations.

use crate::bids::BidSchedule;
use crate::engine::{limiting_cash, run_chain, EngineConfig};
use crate::error::{Error, GameError, Result};
use crate::limit::solve_terminal;
use crate::network::{positive_parts, FinancialNetwork};
use crate::rational::{rat, Rational};
use crate::Bound;
use num::{One, Signed, Zero};
use serde::Serialize;

/// One endowment draw with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub probability: Rational,
    pub cash: Vec<Rational>,
}

/// Finite probability distribution over endowment vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(GameError::BadProbabilities.into());
        }
        let total: Rational = scenarios.iter().map(|s| s.probability.clone()).sum();
        if !total.is_one() || scenarios.iter().any(|s| !s.probability.is_positive()) {
            return Err(GameError::BadProbabilities.into());
        }
        let dim = scenarios[0].cash.len();
        if scenarios.iter().any(|s| s.cash.len() != dim) {
            return Err(
                GameError::Dimensions("scenario cash vectors differ in length".into()).into(),
            );
        }
        Ok(Self { scenarios })
    }

    /// Degenerate set: the network's own endowment with probability one.
    pub fn degenerate(network: &FinancialNetwork) -> Self {
        Self {
            scenarios: vec![Scenario {
                probability: rat(1),
                cash: network.cash.clone(),
            }],
        }
    }
}

/// Per-node utility applied to terminal cash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// `u(z) = max(z, 0)`; terminal cash is already nonnegative, so this is
    /// risk-neutral on equity.
    PositivePart,
}

/// Scalarization weights (strictly positive) and the utility tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub utility: UtilityKind,
    pub weights: Vec<Rational>,
}

impl ObjectiveSpec {
    pub fn new(weights: Vec<Rational>) -> Result<Self> {
        if let Some(index) = weights.iter().position(|w| !w.is_positive()) {
            return Err(GameError::NonPositiveWeight { index }.into());
        }
        Ok(Self {
            utility: UtilityKind::PositivePart,
            weights,
        })
    }
}

/// Which terminal-cash computation backs an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Run the block engine to termination.
    Chain,
    /// Solve the terminal fixed point directly (large-capacity regime).
    Limit,
}

/// Solver knobs threaded through scenario evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub engine: EngineConfig,
    pub solver_max_iter: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            solver_max_iter: 10_000,
        }
    }
}

/// Terminal cash of every node in one deterministic world.
fn terminal_cash(
    network: &FinancialNetwork,
    bids: &BidSchedule,
    evaluator: Evaluator,
    cfg: &EvalConfig,
) -> Result<Vec<Rational>> {
    match evaluator {
        Evaluator::Chain => {
            let trace = run_chain(network, bids, &cfg.engine)?;
            Ok(limiting_cash(&trace).cash)
        }
        Evaluator::Limit => {
            let terminal = solve_terminal(network, bids, Bound::Greatest, cfg.solver_max_iter)?;
            Ok(positive_parts(&terminal.net_worths))
        }
    }
}

/// Probability-weighted terminal cash per node. Scenario endowments must
/// individually satisfy the initial-margin condition; failures are annotated
/// with the scenario index.
pub fn expected_cash(
    network: &FinancialNetwork,
    scenarios: &ScenarioSet,
    bids: &BidSchedule,
    evaluator: Evaluator,
    cfg: &EvalConfig,
) -> Result<Vec<Rational>> {
    let mut expected = vec![Rational::zero(); network.node_count()];
    for (index, scenario) in scenarios.scenarios.iter().enumerate() {
        let world = network
            .with_cash(scenario.cash.clone())
            .map_err(|e| Error::Scenario {
                index,
                source: Box::new(e.into()),
            })?;
        let cash = terminal_cash(&world, bids, evaluator, cfg).map_err(|e| Error::Scenario {
            index,
            source: Box::new(e),
        })?;
        for (acc, v) in expected.iter_mut().zip(cash) {
            *acc += &scenario.probability * v;
        }
    }
    Ok(expected)
}

/// Weighted sum of expected positive-part cash.
pub fn weighted_objective(expected: &[Rational], objective: &ObjectiveSpec) -> Result<Rational> {
    if expected.len() != objective.weights.len() {
        return Err(GameError::Dimensions(format!(
            "{} expected-cash entries but {} weights",
            expected.len(),
            objective.weights.len()
        ))
        .into());
    }
    let UtilityKind::PositivePart = objective.utility;
    Ok(expected
        .iter()
        .zip(&objective.weights)
        .map(|(v, w)| w * crate::rational::positive_part(v))
        .sum())
}
