//! Financial network model: banks, cash endowments, nominal liabilities, and
//! the collateral / recovery / fee parameters, plus admissibility validation.

use crate::rational::{positive_part, rat, Rational};
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("network must have at least one node")]
    Empty,
    #[error("liability matrix is not {n}x{n}")]
    BadDimensions { n: usize },
    #[error("cash vector length {got} does not match node count {n}")]
    BadCashLength { n: usize, got: usize },
    #[error("vector length {got} does not match node count {n}")]
    BadVectorLength { n: usize, got: usize },
    #[error("negative cash endowment at node {node}")]
    NegativeCash { node: usize },
    #[error("negative liability from {from} to {to}")]
    NegativeLiability { from: usize, to: usize },
    #[error("node {node} has a liability to itself")]
    SelfLiability { node: usize },
    #[error("parameter {name} must lie in [0, 1]")]
    ParameterRange { name: &'static str },
    #[error("block capacity must be positive")]
    ZeroCapacity,
    #[error("society node (index 0) must have no outgoing liabilities, found one to {to}")]
    SocietyOutgoing { to: usize },
    #[error("initial margin posting leaves node(s) {nodes:?} with negative cash")]
    NegativeInitialCash { nodes: Vec<usize> },
    #[error("discretization denominators must be positive")]
    ZeroDenominator,
}

/// Financial system: `n` nodes with cash `x_i`, nominal liabilities `L_ij`,
/// collateralization `mu`, centralized recovery rate `alpha`, rehypothecation
/// fee `f_R` on posted collateral, and per-block pair capacity.
///
/// When `society` is set, index 0 is an external claims aggregator with no
/// outgoing liabilities; it participates in clearing as an ordinary node.
#[derive(Debug, Clone, PartialEq)]
pub struct FinancialNetwork {
    pub cash: Vec<Rational>,
    pub liabilities: Vec<Vec<Rational>>,
    pub collateral_level: Rational,
    pub recovery_rate: Rational,
    pub rehypothecation_fee: Rational,
    pub block_capacity: usize,
    pub society: bool,
}

impl FinancialNetwork {
    pub fn new(
        cash: Vec<Rational>,
        liabilities: Vec<Vec<Rational>>,
        collateral_level: Rational,
        recovery_rate: Rational,
        rehypothecation_fee: Rational,
        block_capacity: usize,
        society: bool,
    ) -> Result<Self, NetworkError> {
        let network = Self {
            cash,
            liabilities,
            collateral_level,
            recovery_rate,
            rehypothecation_fee,
            block_capacity,
            society,
        };
        network.check_structure()?;
        Ok(network)
    }

    /// Structural admissibility: dimensions, sign constraints, parameter
    /// ranges, zero diagonal, and the society-node convention.
    pub fn check_structure(&self) -> Result<(), NetworkError> {
        let n = self.cash.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        if self.liabilities.len() != n || self.liabilities.iter().any(|row| row.len() != n) {
            return Err(NetworkError::BadDimensions { n });
        }
        if let Some(node) = self.cash.iter().position(|x| x.is_negative()) {
            return Err(NetworkError::NegativeCash { node });
        }
        for (from, row) in self.liabilities.iter().enumerate() {
            for (to, l) in row.iter().enumerate() {
                if l.is_negative() {
                    return Err(NetworkError::NegativeLiability { from, to });
                }
                if from == to && !l.is_zero() {
                    return Err(NetworkError::SelfLiability { node: from });
                }
                if self.society && from == 0 && !l.is_zero() {
                    return Err(NetworkError::SocietyOutgoing { to });
                }
            }
        }
        for (value, name) in [
            (&self.collateral_level, "mu"),
            (&self.recovery_rate, "alpha"),
            (&self.rehypothecation_fee, "f_R"),
        ] {
            if value.is_negative() || value > &rat(1) {
                return Err(NetworkError::ParameterRange { name });
            }
        }
        if self.block_capacity == 0 {
            return Err(NetworkError::ZeroCapacity);
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.cash.len()
    }

    /// Total nominal liabilities of node `i`.
    pub fn total_liabilities(&self, i: usize) -> Rational {
        self.liabilities[i].iter().sum()
    }

    /// Total nominal claims held by node `i`.
    pub fn total_claims(&self, i: usize) -> Rational {
        self.liabilities.iter().map(|row| &row[i]).sum()
    }

    /// Unsecured portion `(1 - mu) L_ij` of one obligation.
    pub fn unsecured(&self, from: usize, to: usize) -> Rational {
        (rat(1) - &self.collateral_level) * &self.liabilities[from][to]
    }

    /// Ordered pairs with a positive nominal obligation, lexicographically
    /// sorted by (payer, payee).
    pub fn obligation_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.node_count();
        let mut pairs = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if !self.liabilities[from][to].is_zero() {
                    pairs.push((from, to));
                }
            }
        }
        pairs
    }

    /// Relative liabilities: `pi_ij = L_ij / sum_k L_ik`, zero on rows with no
    /// obligations. Rows with a positive sum are stochastic.
    pub fn relative_liabilities(&self) -> Vec<Vec<Rational>> {
        self.liabilities
            .iter()
            .map(|row| {
                let total: Rational = row.iter().sum();
                if total.is_zero() {
                    vec![Rational::zero(); row.len()]
                } else {
                    row.iter().map(|l| l / &total).collect()
                }
            })
            .collect()
    }

    /// Cash after posting initial margins:
    /// `V_i^0 = x_i + mu * sum_j [(1 - f_R) L_ji - L_ij]`. May be negative
    /// when the margin assumption fails; see [`FinancialNetwork::initial_cash`].
    pub fn margin_adjusted_cash(&self) -> Vec<Rational> {
        let n = self.node_count();
        let margin_in = &self.collateral_level * (rat(1) - &self.rehypothecation_fee);
        (0..n)
            .map(|i| {
                &self.cash[i] + &margin_in * self.total_claims(i)
                    - &self.collateral_level * self.total_liabilities(i)
            })
            .collect()
    }

    /// Initial cash accounts `V^0`, failing if any node would go negative from
    /// posting its margins.
    pub fn initial_cash(&self) -> Result<Vec<Rational>, NetworkError> {
        let v0 = self.margin_adjusted_cash();
        let bad: Vec<usize> = v0
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_negative())
            .map(|(i, _)| i)
            .collect();
        if bad.is_empty() {
            Ok(v0)
        } else {
            Err(NetworkError::NegativeInitialCash { nodes: bad })
        }
    }

    /// Same network with a different endowment vector (stress scenarios).
    pub fn with_cash(&self, cash: Vec<Rational>) -> Result<Self, NetworkError> {
        if cash.len() != self.node_count() {
            return Err(NetworkError::BadCashLength {
                n: self.node_count(),
                got: cash.len(),
            });
        }
        Self::new(
            cash,
            self.liabilities.clone(),
            self.collateral_level.clone(),
            self.recovery_rate.clone(),
            self.rehypothecation_fee.clone(),
            self.block_capacity,
            self.society,
        )
    }

    /// Sum of positive parts of a node-indexed vector, restricted to bank
    /// nodes (excludes the society node when present).
    pub fn bank_indices(&self) -> std::ops::Range<usize> {
        if self.society {
            1..self.node_count()
        } else {
            0..self.node_count()
        }
    }

    /// No-default condition at zero fees:
    /// `x_i + sum_j [mu(1-f_R) + (1-mu)] L_ji - sum_j L_ij >= 0` for all i.
    /// When it holds, universal zero-fee bidding leaves every node solvent.
    pub fn default_free(&self) -> bool {
        let n = self.node_count();
        let recv = &self.collateral_level * (rat(1) - &self.rehypothecation_fee)
            + (rat(1) - &self.collateral_level);
        (0..n).all(|i| {
            let worth = &self.cash[i] + &recv * self.total_claims(i) - self.total_liabilities(i);
            !worth.is_negative()
        })
    }
}

/// Grid denominators: bids in multiples of `1/D`, fees in multiples of `1/F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discretization {
    pub bid_denominator: u64,
    pub fee_denominator: u64,
}

impl Discretization {
    pub fn new(bid_denominator: u64, fee_denominator: u64) -> Result<Self, NetworkError> {
        if bid_denominator == 0 || fee_denominator == 0 {
            return Err(NetworkError::ZeroDenominator);
        }
        Ok(Self {
            bid_denominator,
            fee_denominator,
        })
    }
}

/// One admissibility finding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    Structure {
        detail: String,
    },
    /// Initial margin posting drives node `node`'s cash negative.
    InitialMarginShortfall {
        node: usize,
    },
    /// `D (1 - mu) L_ij` is not an integer, so the unsecured obligation
    /// cannot be requested in whole bid units.
    OffGridObligation {
        from: usize,
        to: usize,
    },
}

/// Outcome of [`validate`]: structural findings plus the two admissibility
/// assumptions (margin solvency, bid-grid integrality).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub assumption1_ok: bool,
    pub assumption2_ok: bool,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks structural rules, margin solvency (no node defaults from posting
/// initial margins), and bid-grid integrality of every unsecured obligation.
pub fn validate(network: &FinancialNetwork, disc: &Discretization) -> ValidationReport {
    let mut violations = Vec::new();
    if let Err(e) = network.check_structure() {
        violations.push(Violation::Structure {
            detail: e.to_string(),
        });
        // Assumption checks need consistent dimensions.
        if matches!(
            e,
            NetworkError::Empty
                | NetworkError::BadDimensions { .. }
                | NetworkError::BadCashLength { .. }
        ) {
            return ValidationReport {
                violations,
                assumption1_ok: false,
                assumption2_ok: false,
            };
        }
    }

    let mut assumption1_ok = true;
    for (node, v) in network.margin_adjusted_cash().iter().enumerate() {
        if v.is_negative() {
            assumption1_ok = false;
            violations.push(Violation::InitialMarginShortfall { node });
        }
    }

    let mut assumption2_ok = true;
    let d = rat(disc.bid_denominator as i64);
    for (from, to) in network.obligation_pairs() {
        let scaled = &d * network.unsecured(from, to);
        if !scaled.denom().is_one() {
            assumption2_ok = false;
            violations.push(Violation::OffGridObligation { from, to });
        }
    }

    ValidationReport {
        violations,
        assumption1_ok,
        assumption2_ok,
    }
}

/// Positive parts of a vector.
pub fn positive_parts(values: &[Rational]) -> Vec<Rational> {
    values.iter().map(positive_part).collect()
}
