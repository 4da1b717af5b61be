//! Terminal net worths in the large-capacity regime, solved directly as a
//! fixed point instead of simulating blocks.
//!
//! Each bank's payments are summarized by a single threshold fee: bids
//! strictly above it are covered in full (net of the miner cut), bids at it
//! share the remaining surplus pro-rata on face value, bids below it get
//! nothing. The solver walks monotonically through these finitely many
//! threshold configurations, solving the affine system exactly at each step,
//! so the returned fixed point is exact.

use crate::bids::BidSchedule;
use crate::engine::{ChainTrace, LimitingCash};
use crate::error::SolverError;
use crate::linear;
use crate::network::FinancialNetwork;
use crate::rational::{positive_part, rat, to_f64, Rational};
use crate::Bound;
use num::{Signed, Zero};

/// Terminal clearing solution: net worths, per-bank threshold fees, pro-rata
/// shares at the threshold, and solvency flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalClearing {
    pub net_worths: Vec<Rational>,
    /// Threshold fee numerators; 0 for solvent banks.
    pub threshold_fees: Vec<u64>,
    /// `prorata_shares[i][j]`: the share of payer `i`'s threshold surplus
    /// credited to payee `j`, including the `(1 - f_i*)` miner discount.
    pub prorata_shares: Vec<Vec<Rational>>,
    pub solvent: Vec<bool>,
    pub bound: Bound,
    /// Threshold-configuration refinement rounds used.
    pub iterations: usize,
    /// Sup-norm mismatch of the returned point under one exact map
    /// application; always zero for a successful solve.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BankConfig {
    solvent: bool,
    threshold: u64,
}

/// Threshold fee of one bank given its net worth: the smallest fee level such
/// that the bank's worth plus its unpaid obligations below that level is
/// nonnegative. Zero for solvent banks; the top of the grid when even the
/// full unsecured mass cannot absorb the shortfall.
pub fn threshold_fee_terminal(
    net_worth: &Rational,
    payer: usize,
    network: &FinancialNetwork,
    bids: &BidSchedule,
) -> u64 {
    if !net_worth.is_negative() {
        return 0;
    }
    let n = network.node_count();
    let merged = crate::bids::merge_atoms((0..n).filter_map(|j| bids.atoms(payer, j)));
    let unsecured_total = (rat(1) - &network.collateral_level) * network.total_liabilities(payer);
    let budget = net_worth + unsecured_total;
    crate::bids::threshold_fee(&merged, &budget).unwrap_or(bids.fee_denominator())
}

fn config_of(
    net_worths: &[Rational],
    network: &FinancialNetwork,
    bids: &BidSchedule,
) -> Vec<BankConfig> {
    net_worths
        .iter()
        .enumerate()
        .map(|(i, k)| BankConfig {
            solvent: !k.is_negative(),
            threshold: threshold_fee_terminal(k, i, network, bids),
        })
        .collect()
}

/// Per-payer quantities fixed by a threshold configuration.
struct PayerTerms {
    /// Discounted full bids to each payee (solvent payer).
    full: Vec<Rational>,
    /// Discounted bids strictly above the threshold, per payee.
    strict_above: Vec<Rational>,
    /// Pro-rata share of the threshold surplus per payee, incl. `(1 - f*)`.
    prorata: Vec<Rational>,
    /// Constant part of the surplus: `sum_k (1-mu) L_ik - strict tail` (the
    /// net worth is added separately).
    surplus_base: Rational,
}

fn payer_terms(
    payer: usize,
    config: &BankConfig,
    network: &FinancialNetwork,
    bids: &BidSchedule,
) -> PayerTerms {
    let n = network.node_count();
    let grid = bids.grid();
    let zero = Rational::zero();
    let fee = grid.fee_value(config.threshold);
    let full: Vec<Rational> = (0..n)
        .map(|j| bids.discounted_tail(payer, j, &zero, false))
        .collect();
    let strict_above: Vec<Rational> = (0..n)
        .map(|j| bids.discounted_tail(payer, j, &fee, true))
        .collect();
    let mass_at: Vec<Rational> = (0..n)
        .map(|j| {
            bids.atoms(payer, j)
                .and_then(|atoms| atoms.get(&config.threshold))
                .cloned()
                .unwrap_or_else(Rational::zero)
        })
        .collect();
    let total_mass_at: Rational = mass_at.iter().sum();
    let prorata: Vec<Rational> = if total_mass_at.is_zero() {
        vec![Rational::zero(); n]
    } else {
        mass_at
            .iter()
            .map(|m| (rat(1) - &fee) * m / &total_mass_at)
            .collect()
    };
    let strict_tail_total: Rational = (0..n).map(|j| bids.tail_mass(payer, j, &fee, true)).sum();
    let surplus_base =
        (rat(1) - &network.collateral_level) * network.total_liabilities(payer) - strict_tail_total;
    PayerTerms {
        full,
        strict_above,
        prorata,
        surplus_base,
    }
}

fn evaluate(
    net_worths: &[Rational],
    config: &[BankConfig],
    network: &FinancialNetwork,
    bids: &BidSchedule,
) -> Vec<Rational> {
    let n = network.node_count();
    let margin_in = &network.collateral_level * (rat(1) - &network.rehypothecation_fee);
    let terms: Vec<PayerTerms> = (0..n)
        .map(|j| payer_terms(j, &config[j], network, bids))
        .collect();
    (0..n)
        .map(|i| {
            let mut worth = &network.cash[i] - network.total_liabilities(i);
            for j in 0..n {
                worth += &margin_in * &network.liabilities[j][i];
                if config[j].solvent {
                    worth += &terms[j].full[i];
                } else {
                    // Surpluses are nonnegative at any feasible net worth;
                    // clamp so out-of-range probes cannot pay negatively.
                    let surplus = positive_part(&(&net_worths[j] + &terms[j].surplus_base));
                    worth += &terms[j].strict_above[i] + &terms[j].prorata[i] * surplus;
                }
            }
            worth
        })
        .collect()
}

/// One exact application of the terminal net-worth map: solvent
/// counterparties contribute their discounted full bids, defaulting ones
/// their discounted above-threshold bids plus a pro-rata slice of the
/// threshold surplus. Monotone nondecreasing in the net-worth vector.
pub fn terminal_map(
    net_worths: &[Rational],
    network: &FinancialNetwork,
    bids: &BidSchedule,
) -> Vec<Rational> {
    let config = config_of(net_worths, network, bids);
    evaluate(net_worths, &config, network, bids)
}

fn solve_config(
    config: &[BankConfig],
    network: &FinancialNetwork,
    bids: &BidSchedule,
) -> Result<Vec<Rational>, SolverError> {
    let n = network.node_count();
    let margin_in = &network.collateral_level * (rat(1) - &network.rehypothecation_fee);
    let terms: Vec<PayerTerms> = (0..n)
        .map(|j| payer_terms(j, &config[j], network, bids))
        .collect();
    let mut matrix = vec![vec![Rational::zero(); n]; n];
    let mut rhs = vec![Rational::zero(); n];
    for i in 0..n {
        let mut base = &network.cash[i] - network.total_liabilities(i);
        for j in 0..n {
            base += &margin_in * &network.liabilities[j][i];
            matrix[i][j] = if i == j { rat(1) } else { Rational::zero() };
            if config[j].solvent {
                base += &terms[j].full[i];
            } else {
                base += &terms[j].strict_above[i] + &terms[j].prorata[i] * &terms[j].surplus_base;
                matrix[i][j] -= &terms[j].prorata[i];
            }
        }
        rhs[i] = base;
    }
    Ok(linear::solve(&matrix, &rhs)?)
}

/// Extreme starting points: everything received (greatest) or collateral
/// only (least).
fn start_vector(network: &FinancialNetwork, bids: &BidSchedule, bound: Bound) -> Vec<Rational> {
    let n = network.node_count();
    let margin_in = &network.collateral_level * (rat(1) - &network.rehypothecation_fee);
    let zero = Rational::zero();
    (0..n)
        .map(|i| {
            let mut worth = &network.cash[i] - network.total_liabilities(i);
            for j in 0..n {
                worth += &margin_in * &network.liabilities[j][i];
                if matches!(bound, Bound::Greatest) {
                    worth += bids.discounted_tail(j, i, &zero, false);
                }
            }
            worth
        })
        .collect()
}

/// Solves the terminal net-worth fixed point by monotone refinement of the
/// threshold configuration, starting from the all-paid point (greatest) or
/// the collateral-only point (least). Presumes the large-capacity regime
/// (block capacity at least the number of positive obligations).
pub fn solve_terminal(
    network: &FinancialNetwork,
    bids: &BidSchedule,
    bound: Bound,
    max_iter: usize,
) -> Result<TerminalClearing, SolverError> {
    // A configuration can make the affine system singular: a defaulting set
    // whose entire threshold mass recirculates internally at fee 0 has a
    // column-stochastic block. Such configurations have no isolated solution;
    // stepping the exact map moves the worths monotonically until the
    // configuration changes (or lands on a fixed point), after which the
    // affine path resumes.
    const DEGENERATE_STEP_CAP: usize = 4096;

    let mut worths = start_vector(network, bids, bound);
    let mut iterations = 0;
    let config = loop {
        if iterations >= max_iter {
            return Err(SolverError::NonConvergence {
                iterations,
                residual: sup_distance(&terminal_map(&worths, network, bids), &worths),
                last_iterate: worths.iter().map(to_f64).collect(),
            });
        }
        iterations += 1;
        let config = config_of(&worths, network, bids);
        let image = evaluate(&worths, &config, network, bids);
        if image == worths {
            break config;
        }
        match solve_config(&config, network, bids) {
            Ok(solution) => {
                let solution_config = config_of(&solution, network, bids);
                let stable = solution_config == config;
                worths = solution;
                if stable {
                    break solution_config;
                }
            }
            Err(SolverError::Singular(_)) => {
                let mut current = image;
                let mut steps = 0;
                loop {
                    if config_of(&current, network, bids) != config {
                        break;
                    }
                    let next = terminal_map(&current, network, bids);
                    if next == current {
                        break;
                    }
                    steps += 1;
                    if steps > DEGENERATE_STEP_CAP {
                        return Err(SolverError::Inconsistent(
                            "degenerate threshold configuration did not resolve".into(),
                        ));
                    }
                    current = next;
                }
                worths = current;
            }
            Err(e) => return Err(e),
        }
    };

    if terminal_map(&worths, network, bids) != worths {
        return Err(SolverError::Inconsistent(
            "stabilized configuration is not a fixed point".into(),
        ));
    }

    let n = network.node_count();
    let grid = bids.grid();
    let prorata_shares: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            let fee_num = config[i].threshold;
            let mass_at: Vec<Rational> = (0..n)
                .map(|j| {
                    bids.atoms(i, j)
                        .and_then(|atoms| atoms.get(&fee_num))
                        .cloned()
                        .unwrap_or_else(Rational::zero)
                })
                .collect();
            let total: Rational = mass_at.iter().sum();
            if total.is_zero() {
                vec![Rational::zero(); n]
            } else {
                let fee = grid.fee_value(fee_num);
                mass_at
                    .iter()
                    .map(|m| (rat(1) - &fee) * m / &total)
                    .collect()
            }
        })
        .collect();

    Ok(TerminalClearing {
        threshold_fees: config.iter().map(|c| c.threshold).collect(),
        solvent: config.iter().map(|c| c.solvent).collect(),
        net_worths: worths,
        prorata_shares,
        bound,
        iterations,
        residual: 0.0,
    })
}

fn sup_distance(a: &[Rational], b: &[Rational]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| to_f64(&(x - y).abs()))
        .fold(0.0, f64::max)
}

/// Sufficient condition for a unique terminal solution:
/// `x_i + mu (1 - f_R) sum_j L_ji >= 0` for every node. Always holds for
/// nonnegative endowments.
pub fn uniqueness_check(network: &FinancialNetwork) -> bool {
    let margin_in = &network.collateral_level * (rat(1) - &network.rehypothecation_fee);
    (0..network.node_count())
        .all(|i| !(&network.cash[i] + &margin_in * network.total_claims(i)).is_negative())
}

/// Agreement report between a chain trace's limiting cash and the terminal
/// solution's positive equities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub gaps: Vec<Rational>,
    pub max_gap: Rational,
    pub ok: bool,
    /// Whether the trace side is an exact fixed point (vs an epsilon or
    /// block-cap stop).
    pub trace_exact: bool,
}

/// Checks `|limiting cash - (K*)^+| <= tol` per bank. Meaningful when the
/// trace ran with capacity covering all obligations and the uniqueness
/// condition holds.
pub fn consistency_check(
    trace: &ChainTrace,
    terminal: &TerminalClearing,
    tol: &Rational,
) -> ConsistencyReport {
    let limit: LimitingCash = crate::engine::limiting_cash(trace);
    consistency_check_cash(&limit, terminal, tol)
}

/// As [`consistency_check`], against an already-extracted limiting cash
/// vector (e.g. one reloaded from an exported trace report).
pub fn consistency_check_cash(
    limit: &LimitingCash,
    terminal: &TerminalClearing,
    tol: &Rational,
) -> ConsistencyReport {
    let gaps: Vec<Rational> = limit
        .cash
        .iter()
        .zip(&terminal.net_worths)
        .map(|(v, k)| (v - positive_part(k)).abs())
        .collect();
    let max_gap = gaps.iter().max().cloned().unwrap_or_else(Rational::zero);
    ConsistencyReport {
        ok: &max_gap <= tol,
        gaps,
        max_gap,
        trace_exact: limit.exact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bids::BidEntry;
    use crate::engine::{run_chain, EngineConfig};
    use crate::network::Discretization;
    use crate::rational::ratio;

    fn two_claimant_network() -> FinancialNetwork {
        FinancialNetwork::new(
            vec![rat(1), rat(1), ratio(3, 2)],
            vec![
                vec![rat(0), rat(0), rat(0)],
                vec![rat(0), rat(0), rat(0)],
                vec![rat(1), rat(1), rat(0)],
            ],
            rat(0),
            rat(1),
            rat(0),
            2,
            false,
        )
        .unwrap()
    }

    fn disc() -> Discretization {
        Discretization::new(1, 10).unwrap()
    }

    fn fee_pair_schedule(network: &FinancialNetwork, f1: u64, f2: u64) -> BidSchedule {
        BidSchedule::new(
            network,
            &disc(),
            [
                BidEntry {
                    from: 2,
                    to: 0,
                    fee_num: f1,
                    amount: rat(1),
                },
                BidEntry {
                    from: 2,
                    to: 1,
                    fee_num: f2,
                    amount: rat(1),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn threshold_fee_examples() {
        let network = two_claimant_network();
        let bids = fee_pair_schedule(&network, 5, 4);
        // Solvent bank: threshold 0.
        assert_eq!(threshold_fee_terminal(&rat(3), 0, &network, &bids), 0);
        // Worth -0.5 against atoms {0.5 -> 1, 0.4 -> 1}: the tail above 0.4
        // needs 1 <= 1.5 of assets.
        assert_eq!(threshold_fee_terminal(&ratio(-1, 2), 2, &network, &bids), 4);
        // Worth at the lower bound with all mass at the top of the grid: the
        // only affordable tail is the empty one.
        let top = BidSchedule::new(
            &network,
            &disc(),
            [
                BidEntry {
                    from: 2,
                    to: 0,
                    fee_num: 10,
                    amount: rat(1),
                },
                BidEntry {
                    from: 2,
                    to: 1,
                    fee_num: 10,
                    amount: rat(1),
                },
            ],
        )
        .unwrap();
        assert_eq!(threshold_fee_terminal(&rat(-2), 2, &network, &top), 10);
    }

    #[test]
    fn terminal_map_matches_hand_evaluation() {
        let network = two_claimant_network();
        let bids = fee_pair_schedule(&network, 5, 4);
        // At any point where bank 3 is in default with threshold 0.4, banks 1
        // and 2 receive 0.5 and 0.3.
        let image = terminal_map(&[rat(1), rat(1), ratio(-1, 2)], &network, &bids);
        assert_eq!(image, vec![ratio(3, 2), ratio(13, 10), ratio(-1, 2)]);
    }

    #[test]
    fn terminal_map_is_monotone() {
        let network = two_claimant_network();
        let bids = fee_pair_schedule(&network, 5, 4);
        let low = terminal_map(&[rat(0), rat(0), rat(-2)], &network, &bids);
        let high = terminal_map(&[rat(2), rat(2), rat(0)], &network, &bids);
        assert!(low.iter().zip(&high).all(|(a, b)| a <= b));
    }

    #[test]
    fn solves_two_claimant_fixed_point_exactly() {
        let network = two_claimant_network();
        let bids = fee_pair_schedule(&network, 5, 4);
        for bound in [Bound::Greatest, Bound::Least] {
            let terminal = solve_terminal(&network, &bids, bound, 10_000).unwrap();
            assert_eq!(
                terminal.net_worths,
                vec![ratio(3, 2), ratio(13, 10), ratio(-1, 2)]
            );
            assert_eq!(terminal.threshold_fees, vec![0, 0, 4]);
            assert_eq!(terminal.solvent, vec![true, true, false]);
            // Pro-rata row of the defaulting bank: all threshold mass sits on
            // the claim of bank 2, cut by (1 - 0.4).
            assert_eq!(
                terminal.prorata_shares[2],
                vec![rat(0), ratio(3, 5), rat(0)]
            );
        }
    }

    #[test]
    fn zero_fee_default_free_worths() {
        // Chain of two banks, everyone solvent at zero fees.
        let network = FinancialNetwork::new(
            vec![rat(2), rat(1)],
            vec![vec![rat(0), rat(1)], vec![rat(0), rat(0)]],
            rat(0),
            rat(1),
            rat(0),
            1,
            false,
        )
        .unwrap();
        let bids = BidSchedule::zero_fee(&network, &disc()).unwrap();
        let terminal = solve_terminal(&network, &bids, Bound::Greatest, 100).unwrap();
        assert_eq!(terminal.net_worths, vec![rat(1), rat(2)]);
        assert!(terminal.solvent.iter().all(|&s| s));
    }

    #[test]
    fn threshold_nonincreasing_in_net_worth() {
        let network = two_claimant_network();
        let bids = fee_pair_schedule(&network, 5, 4);
        let mut last = u64::MAX;
        for k in [rat(-2), ratio(-3, 2), rat(-1), ratio(-1, 2), rat(0), rat(1)] {
            let f = threshold_fee_terminal(&k, 2, &network, &bids);
            assert!(f <= last);
            last = f;
        }
    }

    #[test]
    fn uniqueness_check_signs() {
        let network = two_claimant_network();
        assert!(uniqueness_check(&network));
        let mut synthetic = network.clone();
        synthetic.cash[0] = rat(-1);
        assert!(!uniqueness_check(&synthetic));
    }

    #[test]
    fn trace_limit_matches_terminal_positive_parts() {
        let network = two_claimant_network();
        let bids = fee_pair_schedule(&network, 5, 4);
        let trace = run_chain(&network, &bids, &EngineConfig::default()).unwrap();
        let terminal = solve_terminal(&network, &bids, Bound::Greatest, 10_000).unwrap();
        let report = consistency_check(&trace, &terminal, &Rational::zero());
        assert!(report.ok, "max gap {}", report.max_gap);
        assert!(report.trace_exact);
    }

    /// A symmetric zero-fee cycle whose members owe more than they hold: the
    /// all-defaulting configuration met on the way up from the collateral
    /// floor is degenerate (its affine system has a column-stochastic block),
    /// so this pins the exact-stepping fallback. Both banks end just solvent.
    #[test]
    fn degenerate_cycle_resolves_from_below() {
        let network = FinancialNetwork::new(
            vec![ratio(1, 2), ratio(1, 2)],
            vec![vec![rat(0), rat(4)], vec![rat(4), rat(0)]],
            rat(0),
            rat(1),
            rat(0),
            4,
            false,
        )
        .unwrap();
        let disc = Discretization::new(1, 4).unwrap();
        let bids = BidSchedule::zero_fee(&network, &disc).unwrap();
        for bound in [Bound::Greatest, Bound::Least] {
            let terminal = solve_terminal(&network, &bids, bound, 10_000).unwrap();
            assert_eq!(terminal.net_worths, vec![ratio(1, 2), ratio(1, 2)]);
            assert!(terminal.solvent.iter().all(|&s| s));
        }
    }
}
