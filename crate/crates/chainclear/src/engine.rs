//! Decentralized clearing engine: builds the chain block by block. Each block
//! realizes the fee-maximizing set of payments that the payers' current cash
//! can cover, subject to the pair capacity, with no rehypothecation of
//! payments received in the same block.
//!
//! All arithmetic is exact, and tie-breaking is deterministic, so identical
//! inputs produce bit-identical traces.

use crate::bids::{merge_atoms, AtomMap, BidSchedule, ResidualBids};
use crate::error::SolverError;
use crate::network::FinancialNetwork;
use crate::rational::{rat, Rational};
use num::{Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// How to resolve ties between fee-maximizing candidate blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Deterministic: lexicographically smallest pair set under
    /// (payer, payee) ordering.
    Lexicographic,
    /// Uniform choice among maximizers from a seeded generator, for studying
    /// the spread over arbitrary maximizer selections.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Stop once a block's realized face volume drops below this (partial
    /// payment cycles can recirculate shrinking volume indefinitely).
    pub volume_epsilon: Rational,
    pub max_blocks: usize,
    /// Cap on candidate pair sets enumerated per block.
    pub enum_budget: u64,
    /// Past the budget, build the block by greedy marginal-fee insertion
    /// instead of failing.
    pub greedy_fallback: bool,
    pub tie_break: TieBreak,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            volume_epsilon: Rational::new(1.into(), 1_000_000_000_000u64.into()),
            max_blocks: 10_000,
            enum_budget: 1_000_000,
            greedy_fallback: false,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

/// Cash accounts and unpaid bid atoms after `block_index` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub block_index: usize,
    pub cash: Vec<Rational>,
    pub residuals: ResidualBids,
}

/// One mined block: the selected pair set, the realized bid atoms (face
/// amounts), the per-payer threshold fee, and the total miner take.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: usize,
    pub selected: Vec<(usize, usize)>,
    pub realized: BTreeMap<(usize, usize), AtomMap>,
    /// Threshold fee numerator per payer with selected pairs: bids strictly
    /// above it are realized in full, bids at it pro-rata on face value.
    pub threshold_fees: BTreeMap<usize, u64>,
    /// `sum fee * amount` over realized atoms.
    pub miner_fee: Rational,
    /// Total realized face value.
    pub volume: Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualsExhausted,
    ZeroPaymentFixedPoint,
    VolumeBelowEpsilon,
    MaxBlocks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub blocks: Vec<Block>,
    /// `cash_history[t]` is the cash vector after block `t`; entry 0 is the
    /// initial margin-adjusted cash.
    pub cash_history: Vec<Vec<Rational>>,
    pub final_residuals: ResidualBids,
    pub termination: Termination,
}

/// Final cash of a terminated trace, flagged exact when the chain reached a
/// true fixed point rather than an epsilon or block-count stop.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitingCash {
    pub cash: Vec<Rational>,
    pub exact: bool,
    pub remaining_residual_mass: Rational,
}

/// Minimal fee level the payer can support over the selected payees: the
/// smallest fee (0 or an atom fee) whose strict tail fits in `cash`.
pub fn threshold_fee_block(
    residuals: &ResidualBids,
    payer: usize,
    payees: &[usize],
    cash: &Rational,
) -> u64 {
    let merged = merge_atoms(payees.iter().filter_map(|&j| residuals.atoms(payer, j)));
    threshold_of_atoms(&merged, cash)
}

fn threshold_of_atoms(merged: &AtomMap, cash: &Rational) -> u64 {
    crate::bids::threshold_fee(merged, cash).expect("cash accounts are nonnegative")
}

/// Realized face amounts for a candidate pair set.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub realized: BTreeMap<(usize, usize), AtomMap>,
    pub threshold_fees: BTreeMap<usize, u64>,
    pub miner_fee: Rational,
    pub volume: Rational,
}

/// Constructs the fee structure for a candidate pair set `selected`: per
/// payer, bids strictly above the threshold fee are realized in full; at the
/// threshold, the remaining cash is split across payees pro-rata on face
/// value (the `(1 - f)` miner cut is applied when crediting the payee, not
/// when drawing down the payer's cash).
pub fn realized_block_bids(
    residuals: &ResidualBids,
    cash: &[Rational],
    selected: &[(usize, usize)],
) -> Realization {
    let grid = residuals.grid();
    let mut by_payer: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(payer, payee) in selected {
        by_payer.entry(payer).or_default().push(payee);
    }

    let mut realized: BTreeMap<(usize, usize), AtomMap> = BTreeMap::new();
    let mut threshold_fees = BTreeMap::new();
    let mut miner_fee = Rational::zero();
    let mut volume = Rational::zero();

    for (payer, payees) in by_payer {
        let merged = merge_atoms(payees.iter().filter_map(|&j| residuals.atoms(payer, j)));
        let threshold = threshold_of_atoms(&merged, &cash[payer]);
        threshold_fees.insert(payer, threshold);
        let strict_tail: Rational = merged
            .iter()
            .filter(|(&f, _)| f > threshold)
            .map(|(_, a)| a.clone())
            .sum();
        let surplus = &cash[payer] - &strict_tail;
        let mass_at = merged
            .get(&threshold)
            .cloned()
            .unwrap_or_else(Rational::zero);

        for &payee in &payees {
            let Some(atoms) = residuals.atoms(payer, payee) else {
                continue;
            };
            for (&fee_num, amount) in atoms {
                let face = if fee_num > threshold {
                    amount.clone()
                } else if fee_num == threshold && !mass_at.is_zero() {
                    if surplus >= mass_at {
                        amount.clone()
                    } else {
                        amount * &surplus / &mass_at
                    }
                } else {
                    Rational::zero()
                };
                if face.is_zero() {
                    continue;
                }
                miner_fee += grid.fee_value(fee_num) * &face;
                volume += &face;
                realized
                    .entry((payer, payee))
                    .or_default()
                    .insert(fee_num, face);
            }
        }
    }

    Realization {
        realized,
        threshold_fees,
        miner_fee,
        volume,
    }
}

fn count_combinations(n: usize, k: usize) -> u128 {
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if result > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    result
}

/// Selects the block's pair set: the fee-maximizing subset of pairs with
/// positive residual, at most `block_capacity` of them. When every residual
/// pair fits, the full set is taken directly (a superset never collects less
/// fee, since the per-payer realization fills highest fees first).
pub fn select_block(
    state: &ChainState,
    network: &FinancialNetwork,
    cfg: &EngineConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<(usize, usize)>, SolverError> {
    let available = state.residuals.pairs_with_mass();
    let capacity = network.block_capacity;
    if available.len() <= capacity {
        return Ok(available);
    }

    let candidates = count_combinations(available.len(), capacity);
    if candidates > cfg.enum_budget as u128 {
        if !cfg.greedy_fallback {
            return Err(SolverError::EnumerationBudgetExceeded {
                candidates,
                budget: cfg.enum_budget,
            });
        }
        return Ok(greedy_select(state, &available, capacity));
    }

    let mut best_fee = Rational::zero() - rat(1);
    let mut best: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut indices: Vec<usize> = (0..capacity).collect();
    loop {
        let subset: Vec<(usize, usize)> = indices.iter().map(|&i| available[i]).collect();
        let fee = realized_block_bids(&state.residuals, &state.cash, &subset).miner_fee;
        if fee > best_fee {
            best_fee = fee;
            best = vec![subset];
        } else if fee == best_fee && matches!(cfg.tie_break, TieBreak::Seeded(_)) {
            best.push(subset);
        }
        // next lexicographic combination
        let mut i = capacity;
        loop {
            if i == 0 {
                return Ok(match (&cfg.tie_break, rng.as_deref_mut()) {
                    (TieBreak::Seeded(_), Some(rng)) => {
                        best.swap_remove(rng.random_range(0..best.len()))
                    }
                    _ => best.swap_remove(0),
                });
            }
            i -= 1;
            if indices[i] != i + available.len() - capacity {
                break;
            }
        }
        indices[i] += 1;
        for j in (i + 1)..capacity {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

fn greedy_select(
    state: &ChainState,
    available: &[(usize, usize)],
    capacity: usize,
) -> Vec<(usize, usize)> {
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    while chosen.len() < capacity {
        let mut best_pair = None;
        let mut best_fee = Rational::zero() - rat(1);
        for &pair in available {
            if chosen.contains(&pair) {
                continue;
            }
            let mut candidate = chosen.clone();
            candidate.push(pair);
            candidate.sort_unstable();
            let fee = realized_block_bids(&state.residuals, &state.cash, &candidate).miner_fee;
            if fee > best_fee {
                best_fee = fee;
                best_pair = Some(pair);
            }
        }
        match best_pair {
            Some(p) => chosen.push(p),
            None => break,
        }
        chosen.sort_unstable();
    }
    chosen
}

/// Executes one block: selects pairs, realizes bids, credits payees net of
/// the miner cut, and decrements residuals. Total cash drops by exactly the
/// miner fee.
pub fn advance(
    state: &ChainState,
    network: &FinancialNetwork,
    cfg: &EngineConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(ChainState, Block), SolverError> {
    let selected = select_block(state, network, cfg, rng)?;
    let realization = realized_block_bids(&state.residuals, &state.cash, &selected);
    let grid = state.residuals.grid();

    let mut cash = state.cash.clone();
    let mut residuals = state.residuals.clone();
    for (&(payer, payee), atoms) in &realization.realized {
        for (&fee_num, face) in atoms {
            cash[payer] -= face;
            cash[payee] += (rat(1) - grid.fee_value(fee_num)) * face;
            residuals
                .decrement(payer, payee, fee_num, face)
                .map_err(|e| SolverError::Inconsistent(e.to_string()))?;
        }
    }

    debug_assert!(cash.iter().all(|v| !v.is_negative()));
    debug_assert_eq!(
        cash.iter().sum::<Rational>(),
        state.cash.iter().sum::<Rational>() - &realization.miner_fee,
    );

    let block = Block {
        index: state.block_index + 1,
        selected,
        realized: realization.realized,
        threshold_fees: realization.threshold_fees,
        miner_fee: realization.miner_fee,
        volume: realization.volume,
    };
    let next = ChainState {
        block_index: state.block_index + 1,
        cash,
        residuals,
    };
    Ok((next, block))
}

/// Runs the chain to termination: residuals exhausted, a zero-payment block
/// (the state is then a fixed point), volume under epsilon, or the block cap.
pub fn run_chain(
    network: &FinancialNetwork,
    bids: &BidSchedule,
    cfg: &EngineConfig,
) -> crate::error::Result<ChainTrace> {
    let initial = network.initial_cash()?;
    let mut rng = match cfg.tie_break {
        TieBreak::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        TieBreak::Lexicographic => None,
    };
    let mut state = ChainState {
        block_index: 0,
        cash: initial.clone(),
        residuals: ResidualBids::from(bids),
    };
    let mut blocks = Vec::new();
    let mut cash_history = vec![initial];

    let termination = loop {
        if state.residuals.is_empty() {
            break Termination::ResidualsExhausted;
        }
        if blocks.len() >= cfg.max_blocks {
            break Termination::MaxBlocks;
        }
        let (next, block) = advance(&state, network, cfg, rng.as_mut())?;
        state = next;
        cash_history.push(state.cash.clone());
        let volume = block.volume.clone();
        blocks.push(block);
        if volume.is_zero() {
            break Termination::ZeroPaymentFixedPoint;
        }
        if volume < cfg.volume_epsilon {
            break Termination::VolumeBelowEpsilon;
        }
    };

    Ok(ChainTrace {
        blocks,
        cash_history,
        final_residuals: state.residuals,
        termination,
    })
}

/// Final cash of the trace. Exact for true fixed points (residuals exhausted
/// or a zero-payment block); approximate for epsilon or block-cap stops, with
/// the unpaid residual mass reported.
pub fn limiting_cash(trace: &ChainTrace) -> LimitingCash {
    let exact = matches!(
        trace.termination,
        Termination::ResidualsExhausted | Termination::ZeroPaymentFixedPoint
    );
    LimitingCash {
        cash: trace.cash_history.last().cloned().unwrap_or_default(),
        exact,
        remaining_residual_mass: trace.final_residuals.remaining_mass(),
    }
}
