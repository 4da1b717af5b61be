//! Centralized clearing: the payment vector fixed point with collateral and
//! fractional recovery, used as the benchmark the decentralized mechanism is
//! compared against.
//!
//! The solver runs a monotone Picard iteration in floating point for
//! diagnostics, then re-solves the final default set by exact linear
//! elimination over rationals so golden comparisons carry no tolerance.

use crate::error::SolverError;
use crate::linear;
use crate::network::{FinancialNetwork, NetworkError};
use crate::rational::{rat, Rational};
use num::{FromPrimitive, Zero};
use serde::Serialize;

/// Which extreme fixed point to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Greatest,
    Least,
}

/// Clearing payments and resulting net worths.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralClearing {
    pub payments: Vec<Rational>,
    pub net_worths: Vec<Rational>,
    pub bound: Bound,
    /// Picard iterations used by the floating-point phase.
    pub iterations: usize,
    /// Sup-norm residual of the final Picard step.
    pub residual: f64,
    /// True when the exact default-set re-solve succeeded; false when the
    /// payments are the rationalized floating-point limit (degenerate system).
    pub exact: bool,
}

/// One exact application of the clearing payment map: each node pays its
/// collateral plus either the full unsecured obligation (when its assets
/// cover it) or the recovered fraction of its assets.
pub fn payment_map(network: &FinancialNetwork, payments: &[Rational]) -> Vec<Rational> {
    let n = network.node_count();
    let pi = network.relative_liabilities();
    let mu = &network.collateral_level;
    let alpha = &network.recovery_rate;
    (0..n)
        .map(|i| {
            let total = network.total_liabilities(i);
            let unsecured = (rat(1) - mu) * &total;
            let assets: Rational =
                &network.cash[i] + (0..n).map(|j| &pi[j][i] * &payments[j]).sum::<Rational>();
            if assets >= unsecured {
                total
            } else {
                mu * &total + alpha * assets
            }
        })
        .collect()
}

/// Interbank assets under a payment vector: `x_i + sum_j pi_ji p_j`.
fn assets(network: &FinancialNetwork, payments: &[Rational]) -> Vec<Rational> {
    let n = network.node_count();
    let pi = network.relative_liabilities();
    (0..n)
        .map(|i| &network.cash[i] + (0..n).map(|j| &pi[j][i] * &payments[j]).sum::<Rational>())
        .collect()
}

/// Net worths under a payment vector:
/// `K_i = x_i + sum_j pi_ji p_j - sum_j L_ij`. The cash account is `K_i^+`.
pub fn net_worths_centralized(
    network: &FinancialNetwork,
    payments: &[Rational],
) -> Result<Vec<Rational>, NetworkError> {
    let n = network.node_count();
    if payments.len() != n {
        return Err(NetworkError::BadVectorLength {
            n,
            got: payments.len(),
        });
    }
    Ok(assets(network, payments)
        .into_iter()
        .enumerate()
        .map(|(i, a)| a - network.total_liabilities(i))
        .collect())
}

/// Computes the greatest or least clearing payment vector.
///
/// The Picard phase iterates from the full-payment vector (greatest) or the
/// collateral-only vector (least); iterates are monotone. The returned
/// payments come from an exact re-solve of the implied default set.
pub fn clearing_payments(
    network: &FinancialNetwork,
    bound: Bound,
    tol: f64,
    max_iter: usize,
) -> Result<CentralClearing, SolverError> {
    let n = network.node_count();
    let totals: Vec<Rational> = (0..n).map(|i| network.total_liabilities(i)).collect();
    let mu_totals: Vec<Rational> = totals
        .iter()
        .map(|t| &network.collateral_level * t)
        .collect();

    // Floating-point Picard iteration for diagnostics and the convergence gate.
    let picard = PicardF64::new(network, &totals);
    let mut p = picard.start(bound);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iter {
        let next = picard.step(&p);
        residual = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        iterations += 1;
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(SolverError::NonConvergence {
            iterations,
            residual,
            last_iterate: p,
        });
    }

    // Exact refinement: grow (greatest) or shrink (least) the default set to a
    // self-consistent configuration, solving the affine system exactly each
    // round. Consistency of the configuration is equivalent to the payments
    // being an exact fixed point.
    let (payments, exact) = match solve_default_set(network, bound, &totals, &mu_totals) {
        Ok(p) => (p, true),
        Err(SolverError::Singular(_)) => {
            // Degenerate affine system (e.g. a zero-cash cycle at full
            // recovery). Fall back to the converged floating-point limit.
            let p: Vec<Rational> = p
                .iter()
                .map(|v| Rational::from_f64(*v).unwrap_or_else(Rational::zero))
                .collect();
            (p, false)
        }
        Err(e) => return Err(e),
    };

    let net_worths = net_worths_centralized(network, &payments)
        .map_err(|e| SolverError::Inconsistent(e.to_string()))?;
    Ok(CentralClearing {
        payments,
        net_worths,
        bound,
        iterations,
        residual,
        exact,
    })
}

/// Floating-point image of the payment map, shared by the diagnostic
/// iteration and the degenerate-instance fallback.
struct PicardF64 {
    pi: Vec<Vec<f64>>,
    x: Vec<f64>,
    totals: Vec<f64>,
    mu: f64,
    alpha: f64,
}

impl PicardF64 {
    fn new(network: &FinancialNetwork, totals: &[Rational]) -> Self {
        Self {
            pi: network
                .relative_liabilities()
                .iter()
                .map(|row| row.iter().map(crate::rational::to_f64).collect())
                .collect(),
            x: network.cash.iter().map(crate::rational::to_f64).collect(),
            totals: totals.iter().map(crate::rational::to_f64).collect(),
            mu: crate::rational::to_f64(&network.collateral_level),
            alpha: crate::rational::to_f64(&network.recovery_rate),
        }
    }

    fn start(&self, bound: Bound) -> Vec<f64> {
        match bound {
            Bound::Greatest => self.totals.clone(),
            Bound::Least => self.totals.iter().map(|t| self.mu * t).collect(),
        }
    }

    fn step(&self, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        (0..n)
            .map(|i| {
                let assets: f64 = self.x[i] + (0..n).map(|j| self.pi[j][i] * p[j]).sum::<f64>();
                let unsecured = (1.0 - self.mu) * self.totals[i];
                if assets >= unsecured {
                    self.totals[i]
                } else {
                    self.mu * self.totals[i] + self.alpha * assets
                }
            })
            .collect()
    }
}

fn solve_default_set(
    network: &FinancialNetwork,
    bound: Bound,
    totals: &[Rational],
    mu_totals: &[Rational],
) -> Result<Vec<Rational>, SolverError> {
    let n = network.node_count();
    let pi = network.relative_liabilities();
    let alpha = &network.recovery_rate;
    let mut defaulting = match bound {
        Bound::Greatest => vec![false; n],
        Bound::Least => totals.iter().map(|t| !t.is_zero()).collect(),
    };

    for _ in 0..=n {
        let mut matrix = vec![vec![Rational::zero(); n]; n];
        let mut rhs = vec![Rational::zero(); n];
        for i in 0..n {
            if defaulting[i] {
                for j in 0..n {
                    matrix[i][j] = if i == j {
                        rat(1) - alpha * &pi[j][i]
                    } else {
                        -(alpha * &pi[j][i])
                    };
                }
                rhs[i] = &mu_totals[i] + alpha * &network.cash[i];
            } else {
                matrix[i][i] = rat(1);
                rhs[i] = totals[i].clone();
            }
        }
        let payments = linear::solve(&matrix, &rhs)?;
        let asset_vec = assets(network, &payments);
        let next: Vec<bool> = (0..n)
            .map(|i| {
                let unsecured = (rat(1) - &network.collateral_level) * &totals[i];
                asset_vec[i] < unsecured
            })
            .collect();
        if next == defaulting {
            return Ok(payments);
        }
        defaulting = next;
    }
    Err(SolverError::Inconsistent(
        "default set failed to stabilize".into(),
    ))
}
