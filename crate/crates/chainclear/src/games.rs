//! Optimal bidding: enumerable strategy spaces, engine-evaluated payoff
//! tables, pure-Nash scanning, symmetric mixed equilibria via support
//! enumeration, a fictitious-play heuristic, and Pareto scalarized
//! coordinate ascent.
//!
//! A node's strategy is a joint bid choice for all of its incoming
//! obligations (the obligee picks the fees it will cede to miners, buying
//! seniority for its own claims).

use crate::bids::{AtomMap, BidEntry, BidSchedule};
use crate::error::{GameError, Result};
use crate::linear;
use crate::network::{Discretization, FinancialNetwork};
use crate::rational::{rat, to_f64, Rational};
use crate::scenario::{
    expected_cash, weighted_objective, EvalConfig, Evaluator, ObjectiveSpec, ScenarioSet,
};
use num::{Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// One pure strategy of a node: atoms for each of its incoming obligations.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStrategy {
    pub atoms: BTreeMap<(usize, usize), AtomMap>,
}

/// Enumerable pure-strategy set of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpace {
    pub node: usize,
    pub strategies: Vec<NodeStrategy>,
}

fn incoming_pairs(network: &FinancialNetwork, node: usize) -> Vec<(usize, usize)> {
    (0..network.node_count())
        .filter(|&j| !network.unsecured(j, node).is_zero())
        .map(|j| (j, node))
        .collect()
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    result
}

impl StrategySpace {
    /// All-or-nothing strategies: each incoming obligation's full unsecured
    /// mass at one fee level, every combination of levels. A node with no
    /// incoming obligations has the single empty strategy.
    pub fn all_or_nothing(
        network: &FinancialNetwork,
        disc: &Discretization,
        node: usize,
        budget: u64,
    ) -> Result<Self> {
        let pairs = incoming_pairs(network, node);
        let choices = disc.fee_denominator as u128 + 1;
        let size = choices.saturating_pow(pairs.len() as u32);
        if size > budget as u128 {
            return Err(GameError::BudgetExceeded { size, budget }.into());
        }
        let mut strategies = Vec::new();
        let mut fees = vec![0u64; pairs.len()];
        loop {
            let atoms = pairs
                .iter()
                .zip(&fees)
                .map(|(&(from, to), &fee)| {
                    let mut m = AtomMap::new();
                    m.insert(fee, network.unsecured(from, to));
                    ((from, to), m)
                })
                .collect();
            strategies.push(NodeStrategy { atoms });
            if !increment(&mut fees, disc.fee_denominator) {
                break;
            }
        }
        Ok(Self { node, strategies })
    }

    /// Full grid: every split of each incoming obligation into `1/D`
    /// multiples across fee levels. Explodes fast; tiny instances only.
    pub fn full_grid(
        network: &FinancialNetwork,
        disc: &Discretization,
        node: usize,
        budget: u64,
    ) -> Result<Self> {
        let pairs = incoming_pairs(network, node);
        let bins = disc.fee_denominator + 1;
        let mut size: u128 = 1;
        let mut units_per_pair = Vec::new();
        for &(from, to) in &pairs {
            let scaled = rat(disc.bid_denominator as i64) * network.unsecured(from, to);
            debug_assert!(
                scaled.denom() == &1.into(),
                "grid integrality checked by validate"
            );
            let units: u64 = scaled
                .numer()
                .try_into()
                .map_err(|_| GameError::BudgetExceeded {
                    size: u128::MAX,
                    budget,
                })?;
            size = size.saturating_mul(binomial(units + bins - 1, bins - 1));
            units_per_pair.push(units);
        }
        if size > budget as u128 {
            return Err(GameError::BudgetExceeded { size, budget }.into());
        }

        let mut per_pair: Vec<Vec<AtomMap>> = Vec::new();
        for &units in &units_per_pair {
            let mut splits = Vec::new();
            compositions(units, bins as usize, &mut Vec::new(), &mut splits);
            let maps = splits
                .into_iter()
                .map(|split| {
                    split
                        .iter()
                        .enumerate()
                        .filter(|(_, &u)| u > 0)
                        .map(|(fee, &u)| {
                            (
                                fee as u64,
                                Rational::new(u.into(), (disc.bid_denominator).into()),
                            )
                        })
                        .collect::<AtomMap>()
                })
                .collect();
            per_pair.push(maps);
        }

        let mut strategies = Vec::new();
        let counts: Vec<usize> = per_pair.iter().map(Vec::len).collect();
        for choice in Profiles::new(counts) {
            let atoms = pairs
                .iter()
                .enumerate()
                .map(|(slot, &pair)| (pair, per_pair[slot][choice[slot]].clone()))
                .collect();
            strategies.push(NodeStrategy { atoms });
        }
        Ok(Self { node, strategies })
    }

    /// Index of the strategy bidding zero fees everywhere, when present.
    pub fn zero_fee_index(&self) -> Option<usize> {
        self.strategies.iter().position(|s| {
            s.atoms
                .values()
                .all(|atoms| atoms.keys().all(|&fee| fee == 0))
        })
    }
}

fn increment(fees: &mut [u64], max: u64) -> bool {
    for slot in fees.iter_mut().rev() {
        if *slot < max {
            *slot += 1;
            return true;
        }
        *slot = 0;
    }
    false
}

fn compositions(units: u64, bins: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if bins == 1 {
        let mut full = prefix.clone();
        full.push(units);
        out.push(full);
        return;
    }
    for first in 0..=units {
        prefix.push(first);
        compositions(units - first, bins - 1, prefix, out);
        prefix.pop();
    }
}

/// Mixed-radix iterator over pure profiles, last player fastest.
pub struct Profiles {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Profiles {
    pub fn new(counts: Vec<usize>) -> Self {
        let next = if counts.contains(&0) {
            None
        } else {
            Some(vec![0; counts.len()])
        };
        Self { counts, next }
    }
}

impl Iterator for Profiles {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut bumped = current.clone();
        let mut advanced = false;
        for i in (0..bumped.len()).rev() {
            if bumped[i] + 1 < self.counts[i] {
                bumped[i] += 1;
                advanced = true;
                break;
            }
            bumped[i] = 0;
        }
        self.next = if advanced && !bumped.is_empty() {
            Some(bumped)
        } else {
            None
        };
        Some(current)
    }
}

/// Expected payoffs (terminal cash of the owning node) for every pure
/// profile of the designated players.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTable {
    pub players: Vec<usize>,
    pub strategy_counts: Vec<usize>,
    values: Vec<Vec<Rational>>,
}

impl PayoffTable {
    /// Builds a table from precomputed values (row-major, last player
    /// fastest; one payoff per player per profile).
    pub fn from_values(
        players: Vec<usize>,
        strategy_counts: Vec<usize>,
        values: Vec<Vec<Rational>>,
    ) -> Result<Self> {
        let expected: usize = strategy_counts.iter().product();
        if values.len() != expected || values.iter().any(|v| v.len() != players.len()) {
            return Err(GameError::Dimensions(format!(
                "expected {expected} profiles x {} players",
                players.len()
            ))
            .into());
        }
        Ok(Self {
            players,
            strategy_counts,
            values,
        })
    }

    fn flat(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.strategy_counts)
            .fold(0, |acc, (&p, &c)| acc * c + p)
    }

    pub fn payoff(&self, profile: &[usize], player_pos: usize) -> &Rational {
        &self.values[self.flat(profile)][player_pos]
    }

    pub fn profiles(&self) -> Profiles {
        Profiles::new(self.strategy_counts.clone())
    }
}

/// Evaluates the payoff table of the designated players, holding `fixed`
/// atoms on every other obligation. Payoffs are expected terminal cash.
#[allow(clippy::too_many_arguments)]
pub fn payoff_table(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    spaces: &[StrategySpace],
    fixed: &BTreeMap<(usize, usize), AtomMap>,
    evaluator: Evaluator,
    cfg: &EvalConfig,
    budget: u64,
) -> Result<PayoffTable> {
    let counts: Vec<usize> = spaces.iter().map(|s| s.strategies.len()).collect();
    let size: u128 = counts.iter().map(|&c| c as u128).product();
    if size > budget as u128 {
        return Err(GameError::BudgetExceeded { size, budget }.into());
    }
    let player_pairs: BTreeSet<(usize, usize)> = spaces
        .iter()
        .flat_map(|s| {
            s.strategies
                .first()
                .map(|st| st.atoms.keys().copied().collect::<Vec<_>>())
        })
        .flatten()
        .collect();
    if let Some(pair) = fixed.keys().find(|p| player_pairs.contains(p)) {
        return Err(GameError::Dimensions(format!(
            "fixed bids overlap a player-controlled obligation {pair:?}"
        ))
        .into());
    }

    let mut values = Vec::with_capacity(size as usize);
    for profile in Profiles::new(counts.clone()) {
        let schedule = assemble(network, disc, spaces, &profile, fixed)?;
        let expected = expected_cash(network, scenarios, &schedule, evaluator, cfg)?;
        values.push(spaces.iter().map(|s| expected[s.node].clone()).collect());
    }
    PayoffTable::from_values(spaces.iter().map(|s| s.node).collect(), counts, values)
}

fn assemble(
    network: &FinancialNetwork,
    disc: &Discretization,
    spaces: &[StrategySpace],
    profile: &[usize],
    fixed: &BTreeMap<(usize, usize), AtomMap>,
) -> Result<BidSchedule> {
    let mut entries: Vec<BidEntry> = Vec::new();
    for (&(from, to), atoms) in fixed {
        for (&fee_num, amount) in atoms {
            entries.push(BidEntry {
                from,
                to,
                fee_num,
                amount: amount.clone(),
            });
        }
    }
    for (space, &choice) in spaces.iter().zip(profile) {
        let strategy = &space.strategies[choice];
        for (&(from, to), atoms) in &strategy.atoms {
            for (&fee_num, amount) in atoms {
                entries.push(BidEntry {
                    from,
                    to,
                    fee_num,
                    amount: amount.clone(),
                });
            }
        }
    }
    Ok(BidSchedule::new(network, disc, entries)?)
}

/// All pure profiles where no player gains by unilateral deviation. May be
/// empty.
pub fn pure_nash_scan(table: &PayoffTable) -> Vec<Vec<usize>> {
    table
        .profiles()
        .filter(|profile| {
            (0..table.players.len()).all(|p| {
                let current = table.payoff(profile, p);
                let mut alt_profile = profile.clone();
                (0..table.strategy_counts[p]).all(|alt| {
                    alt_profile[p] = alt;
                    table.payoff(&alt_profile, p) <= current
                })
            })
        })
        .collect()
}

/// Argmax set of one player's strategies against a fixed opponent profile
/// (the player's own slot in `profile` is ignored). Ties preserved in
/// ascending index order.
pub fn best_response(table: &PayoffTable, player_pos: usize, profile: &[usize]) -> Vec<usize> {
    let mut probe = profile.to_vec();
    let mut best: Option<Rational> = None;
    let mut arg = Vec::new();
    for s in 0..table.strategy_counts[player_pos] {
        probe[player_pos] = s;
        let value = table.payoff(&probe, player_pos);
        match &best {
            Some(b) if value < b => {}
            Some(b) if value == b => arg.push(s),
            _ => {
                best = Some(value.clone());
                arg = vec![s];
            }
        }
    }
    arg
}

/// A mixed strategy with its equilibrium payoff (per player, symmetric).
#[derive(Debug, Clone, PartialEq)]
pub struct MixedEquilibrium {
    pub probabilities: Vec<Rational>,
    pub expected_payoff: Rational,
}

const MAX_SUPPORT_BITS: usize = 22;

/// Symmetric mixed equilibria of a symmetric two-player table by support
/// enumeration: for each support, solve the indifference system exactly,
/// keep solutions with strictly positive in-support weights and no
/// profitable outside deviation (within `tol`).
pub fn symmetric_mixed_equilibrium(
    table: &PayoffTable,
    tol: &Rational,
) -> Result<Vec<MixedEquilibrium>> {
    if table.players.len() != 2 || table.strategy_counts[0] != table.strategy_counts[1] {
        return Err(GameError::AsymmetricTable(format!(
            "{} players with counts {:?}",
            table.players.len(),
            table.strategy_counts
        ))
        .into());
    }
    let m = table.strategy_counts[0];
    if m > MAX_SUPPORT_BITS {
        return Err(GameError::BudgetExceeded {
            size: 1u128 << m,
            budget: 1 << MAX_SUPPORT_BITS,
        }
        .into());
    }
    for a in 0..m {
        for b in 0..m {
            if table.payoff(&[a, b], 0) != table.payoff(&[b, a], 1) {
                return Err(GameError::AsymmetricTable(format!(
                    "payoff([{a},{b}], 0) != payoff([{b},{a}], 1)"
                ))
                .into());
            }
        }
    }

    let mut found = Vec::new();
    for mask in 1u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|&s| mask & (1 << s) != 0).collect();
        let k = support.len();
        // Unknowns: p over the support, then the common payoff u.
        let mut matrix = vec![vec![Rational::zero(); k + 1]; k + 1];
        let mut rhs = vec![Rational::zero(); k + 1];
        for (row, &i) in support.iter().enumerate() {
            for (col, &j) in support.iter().enumerate() {
                matrix[row][col] = table.payoff(&[i, j], 0).clone();
            }
            matrix[row][k] = rat(-1);
        }
        for cell in matrix[k].iter_mut().take(k) {
            *cell = rat(1);
        }
        rhs[k] = rat(1);
        let Ok(solution) = linear::solve(&matrix, &rhs) else {
            continue;
        };
        let payoff = solution[k].clone();
        if solution[..k].iter().any(|p| !p.is_positive()) {
            continue;
        }
        let mut probabilities = vec![Rational::zero(); m];
        for (idx, &s) in support.iter().enumerate() {
            probabilities[s] = solution[idx].clone();
        }
        let outside_ok = (0..m).filter(|s| !support.contains(s)).all(|s| {
            let value: Rational = (0..m)
                .map(|j| table.payoff(&[s, j], 0) * &probabilities[j])
                .sum();
            value <= &payoff + tol
        });
        if outside_ok {
            found.push(MixedEquilibrium {
                probabilities,
                expected_payoff: payoff,
            });
        }
    }
    if found.is_empty() {
        return Err(GameError::NoEquilibrium.into());
    }
    Ok(found)
}

/// Empirical play frequencies after fictitious-play rounds, with the exact
/// residual deviation gain. Convergence is not guaranteed; the residual says
/// how far from equilibrium the empirical profile is.
#[derive(Debug, Clone, PartialEq)]
pub struct FictitiousPlayOutcome {
    pub empirical: Vec<Vec<Rational>>,
    pub deviation_gain: Rational,
    pub rounds: usize,
}

/// Simultaneous-update fictitious play: every round each player best-responds
/// to the others' empirical frequencies. The seed picks the initial profile.
pub fn fictitious_play(table: &PayoffTable, rounds: usize, seed: u64) -> FictitiousPlayOutcome {
    let players = table.players.len();
    let counts = &table.strategy_counts;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tallies: Vec<Vec<u64>> = counts.iter().map(|&c| vec![0u64; c]).collect();
    for (p, tally) in tallies.iter_mut().enumerate() {
        tally[rng.random_range(0..counts[p])] = 1;
    }
    let values_f64: Vec<Vec<f64>> = table
        .values
        .iter()
        .map(|row| row.iter().map(to_f64).collect())
        .collect();

    for round in 0..rounds {
        let total = (round + 1) as f64;
        let mut response = vec![0usize; players];
        for p in 0..players {
            let mut utilities = vec![0.0f64; counts[p]];
            for profile in Profiles::new(counts.clone()) {
                let mut weight = 1.0;
                for (k, &s) in profile.iter().enumerate() {
                    if k != p {
                        weight *= tallies[k][s] as f64 / total;
                    }
                }
                if weight > 0.0 {
                    utilities[profile[p]] += weight * values_f64[table.flat(&profile)][p];
                }
            }
            response[p] = utilities
                .iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(j.cmp(i)))
                .map(|(i, _)| i)
                .unwrap_or(0);
        }
        for (p, &s) in response.iter().enumerate() {
            tallies[p][s] += 1;
        }
    }

    let total = rat((rounds + 1) as i64);
    let empirical: Vec<Vec<Rational>> = tallies
        .iter()
        .map(|tally| tally.iter().map(|&c| rat(c as i64) / &total).collect())
        .collect();
    let deviation_gain = deviation_gain(table, &empirical);
    FictitiousPlayOutcome {
        empirical,
        deviation_gain,
        rounds,
    }
}

/// Largest exact gain any player can get by a pure deviation from a mixed
/// product profile.
pub fn deviation_gain(table: &PayoffTable, mixes: &[Vec<Rational>]) -> Rational {
    let players = table.players.len();
    let mut worst = Rational::zero() - rat(1);
    for p in 0..players {
        let mut current = Rational::zero();
        let mut pure = vec![Rational::zero(); table.strategy_counts[p]];
        for profile in table.profiles() {
            let mut weight_others = Rational::zero() + rat(1);
            for (k, &s) in profile.iter().enumerate() {
                if k != p {
                    weight_others *= &mixes[k][s];
                }
            }
            if weight_others.is_zero() {
                continue;
            }
            let value = table.payoff(&profile, p);
            pure[profile[p]] += &weight_others * value;
            current += weight_others * &mixes[p][profile[p]] * value;
        }
        let best = pure.iter().max().cloned().unwrap_or_else(Rational::zero);
        let gain = best - current;
        if gain > worst {
            worst = gain;
        }
    }
    worst
}

/// Weighted objective of a bid schedule under the scenario pipeline.
pub fn pareto_objective(
    network: &FinancialNetwork,
    scenarios: &ScenarioSet,
    bids: &BidSchedule,
    objective: &ObjectiveSpec,
    evaluator: Evaluator,
    cfg: &EvalConfig,
) -> Result<Rational> {
    let expected = expected_cash(network, scenarios, bids, evaluator, cfg)?;
    weighted_objective(&expected, objective)
}

/// Outcome of the coordinate-ascent search over all-or-nothing assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    pub fees: BTreeMap<(usize, usize), u64>,
    pub objective: Rational,
    pub sweeps: usize,
    /// True when a full sweep found no improving move (coordinate-wise local
    /// optimum); false when stopped by the sweep cap.
    pub converged: bool,
}

type Memo = HashMap<Vec<u64>, Rational>;

#[allow(clippy::too_many_arguments)]
fn evaluate_assignment(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    objective: &ObjectiveSpec,
    pairs: &[(usize, usize)],
    fees: &[u64],
    evaluator: Evaluator,
    cfg: &EvalConfig,
    memo: &mut Memo,
) -> Result<Rational> {
    if let Some(hit) = memo.get(fees) {
        return Ok(hit.clone());
    }
    let assignment: BTreeMap<(usize, usize), u64> =
        pairs.iter().copied().zip(fees.iter().copied()).collect();
    let schedule = BidSchedule::all_or_nothing(network, disc, &assignment)?;
    let value = pareto_objective(network, scenarios, &schedule, objective, evaluator, cfg)?;
    memo.insert(fees.to_vec(), value.clone());
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn ascend(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    objective: &ObjectiveSpec,
    start: &[u64],
    pairs: &[(usize, usize)],
    evaluator: Evaluator,
    cfg: &EvalConfig,
    max_sweeps: usize,
    memo: &mut Memo,
) -> Result<(Vec<u64>, Rational, usize, bool)> {
    let mut fees = start.to_vec();
    let mut value = evaluate_assignment(
        network, disc, scenarios, objective, pairs, &fees, evaluator, cfg, memo,
    )?;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut improved = false;
        for slot in 0..fees.len() {
            let original = fees[slot];
            let mut best_fee = original;
            let mut best_value = value.clone();
            for fee in 0..=disc.fee_denominator {
                if fee == original {
                    continue;
                }
                fees[slot] = fee;
                let candidate = evaluate_assignment(
                    network, disc, scenarios, objective, pairs, &fees, evaluator, cfg, memo,
                )?;
                // Strict improvement only; the lowest fee wins among equals.
                if candidate > best_value || (candidate == best_value && fee < best_fee) {
                    best_value = candidate;
                    best_fee = fee;
                }
            }
            if best_value > value {
                fees[slot] = best_fee;
                value = best_value;
                improved = true;
            } else {
                fees[slot] = original;
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }
    Ok((fees, value, sweeps, converged))
}

/// Coordinate ascent over all-or-nothing fee assignments: sweeps the
/// obligations in pair order, exhaustively trying every fee level for the
/// full obligation mass and accepting strict improvements, until a sweep
/// makes no move or the cap is hit.
#[allow(clippy::too_many_arguments)]
pub fn pareto_coordinate_ascent(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    objective: &ObjectiveSpec,
    start: &BTreeMap<(usize, usize), u64>,
    evaluator: Evaluator,
    cfg: &EvalConfig,
    max_sweeps: usize,
) -> Result<AscentOutcome> {
    let pairs: Vec<(usize, usize)> = network
        .obligation_pairs()
        .into_iter()
        .filter(|&(i, j)| !network.unsecured(i, j).is_zero())
        .collect();
    let start_fees: Vec<u64> = pairs
        .iter()
        .map(|pair| start.get(pair).copied().unwrap_or(0))
        .collect();
    let mut memo = Memo::new();
    let (fees, objective_value, sweeps, converged) = ascend(
        network,
        disc,
        scenarios,
        objective,
        &start_fees,
        &pairs,
        evaluator,
        cfg,
        max_sweeps,
        &mut memo,
    )?;
    Ok(AscentOutcome {
        fees: pairs.into_iter().zip(fees).collect(),
        objective: objective_value,
        sweeps,
        converged,
    })
}

/// Multi-start wrapper: the zero-fee start plus seeded random assignments,
/// returning the best outcome found (first among ties).
#[allow(clippy::too_many_arguments)]
pub fn pareto_multi_start(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    objective: &ObjectiveSpec,
    evaluator: Evaluator,
    cfg: &EvalConfig,
    starts: usize,
    seed: u64,
    max_sweeps: usize,
) -> Result<AscentOutcome> {
    let pairs: Vec<(usize, usize)> = network
        .obligation_pairs()
        .into_iter()
        .filter(|&(i, j)| !network.unsecured(i, j).is_zero())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut memo = Memo::new();
    let mut best: Option<AscentOutcome> = None;
    for attempt in 0..starts.max(1) {
        let start_fees: Vec<u64> = if attempt == 0 {
            vec![0; pairs.len()]
        } else {
            (0..pairs.len())
                .map(|_| rng.random_range(0..=disc.fee_denominator))
                .collect()
        };
        let (fees, objective_value, sweeps, converged) = ascend(
            network,
            disc,
            scenarios,
            objective,
            &start_fees,
            &pairs,
            evaluator,
            cfg,
            max_sweeps,
            &mut memo,
        )?;
        let outcome = AscentOutcome {
            fees: pairs.iter().copied().zip(fees).collect(),
            objective: objective_value,
            sweeps,
            converged,
        };
        if best
            .as_ref()
            .is_none_or(|b| outcome.objective > b.objective)
        {
            best = Some(outcome);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Result of scanning all single-obligation all-or-nothing fee deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptReport {
    pub base_objective: Rational,
    pub max_gain: Rational,
    pub best_deviation: Option<((usize, usize), u64)>,
    pub evaluations: usize,
}

/// Scans every single-obligation all-or-nothing fee deviation from `bids`
/// and reports the largest objective gain (nonpositive at a coordinate-wise
/// local optimum).
#[allow(clippy::too_many_arguments)]
pub fn local_optimality_check(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    objective: &ObjectiveSpec,
    bids: &BidSchedule,
    evaluator: Evaluator,
    cfg: &EvalConfig,
) -> Result<LocalOptReport> {
    let base_objective = pareto_objective(network, scenarios, bids, objective, evaluator, cfg)?;
    let pairs: Vec<(usize, usize)> = network
        .obligation_pairs()
        .into_iter()
        .filter(|&(i, j)| !network.unsecured(i, j).is_zero())
        .collect();

    let mut max_gain: Option<Rational> = None;
    let mut best_deviation = None;
    let mut evaluations = 0;
    for &pair in &pairs {
        for fee in 0..=disc.fee_denominator {
            let mut entries: Vec<BidEntry> = Vec::new();
            for (&(from, to), atoms) in bids.pairs() {
                if (from, to) == pair {
                    continue;
                }
                for (&fee_num, amount) in atoms {
                    entries.push(BidEntry {
                        from,
                        to,
                        fee_num,
                        amount: amount.clone(),
                    });
                }
            }
            entries.push(BidEntry {
                from: pair.0,
                to: pair.1,
                fee_num: fee,
                amount: network.unsecured(pair.0, pair.1),
            });
            let schedule = BidSchedule::new(network, disc, entries)?;
            let value = pareto_objective(network, scenarios, &schedule, objective, evaluator, cfg)?;
            evaluations += 1;
            let gain = value - &base_objective;
            if max_gain.as_ref().is_none_or(|g| &gain > g) {
                max_gain = Some(gain);
                best_deviation = Some((pair, fee));
            }
        }
    }

    Ok(LocalOptReport {
        base_objective,
        max_gain: max_gain.unwrap_or_else(Rational::zero),
        best_deviation,
        evaluations,
    })
}

/// Per-node largest unilateral gain over all-or-nothing strategies against a
/// fixed baseline schedule (each node varies the bids on its own incoming
/// obligations, everyone else's stay put).
#[allow(clippy::too_many_arguments)]
pub fn nash_deviation_scan(
    network: &FinancialNetwork,
    disc: &Discretization,
    scenarios: &ScenarioSet,
    baseline: &BidSchedule,
    evaluator: Evaluator,
    cfg: &EvalConfig,
    budget: u64,
) -> Result<Vec<(usize, Rational)>> {
    let base_cash = expected_cash(network, scenarios, baseline, evaluator, cfg)?;
    let mut gains = Vec::new();
    for (node, node_base) in base_cash.iter().enumerate() {
        let space = StrategySpace::all_or_nothing(network, disc, node, budget)?;
        if space.strategies.len() <= 1 {
            continue;
        }
        let fixed: BTreeMap<(usize, usize), AtomMap> = baseline
            .pairs()
            .filter(|(&(_, to), _)| to != node)
            .map(|(&pair, atoms)| (pair, atoms.clone()))
            .collect();
        let table = payoff_table(
            network,
            disc,
            scenarios,
            std::slice::from_ref(&space),
            &fixed,
            evaluator,
            cfg,
            budget,
        )?;
        let mut best = node_base.clone();
        for s in 0..space.strategies.len() {
            let value = table.payoff(&[s], 0);
            if value > &best {
                best = value.clone();
            }
        }
        gains.push((node, best - node_base));
    }
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::scenario::Scenario;

    fn defaulting_chain() -> (FinancialNetwork, Discretization) {
        // Bank 0 owes 2 to bank 1 but has only 1 in cash.
        let network = FinancialNetwork::new(
            vec![rat(1), rat(0)],
            vec![vec![rat(0), rat(2)], vec![rat(0), rat(0)]],
            rat(0),
            rat(1),
            rat(0),
            4,
            false,
        )
        .unwrap();
        (network, Discretization::new(2, 2).unwrap())
    }

    #[test]
    fn all_or_nothing_space_enumerates_fee_grid() {
        let (network, disc) = defaulting_chain();
        let space = StrategySpace::all_or_nothing(&network, &disc, 1, 1000).unwrap();
        assert_eq!(space.strategies.len(), 3);
        assert_eq!(space.zero_fee_index(), Some(0));
        // No incoming obligations: a single empty strategy.
        let empty = StrategySpace::all_or_nothing(&network, &disc, 0, 1000).unwrap();
        assert_eq!(empty.strategies.len(), 1);
        assert!(empty.strategies[0].atoms.is_empty());
    }

    #[test]
    fn full_grid_space_counts_compositions() {
        let (network, disc) = defaulting_chain();
        // 4 units into 3 fee bins: C(6, 2) = 15 splits.
        let space = StrategySpace::full_grid(&network, &disc, 1, 1000).unwrap();
        assert_eq!(space.strategies.len(), 15);
        assert!(StrategySpace::full_grid(&network, &disc, 1, 10).is_err());
    }

    #[test]
    fn payoff_table_matches_direct_evaluation() {
        let (network, disc) = defaulting_chain();
        let scenarios = ScenarioSet::degenerate(&network);
        let space = StrategySpace::all_or_nothing(&network, &disc, 1, 1000).unwrap();
        let cfg = EvalConfig::default();
        for evaluator in [Evaluator::Chain, Evaluator::Limit] {
            let table = payoff_table(
                &network,
                &disc,
                &scenarios,
                std::slice::from_ref(&space),
                &BTreeMap::new(),
                evaluator,
                &cfg,
                1000,
            )
            .unwrap();
            // All cash flows to the single claim; fee f keeps (1-f) of it.
            assert_eq!(*table.payoff(&[0], 0), rat(1));
            assert_eq!(*table.payoff(&[1], 0), ratio(1, 2));
            assert_eq!(*table.payoff(&[2], 0), rat(0));
        }
    }

    #[test]
    fn pure_nash_scan_finds_dominant_profile() {
        // Prisoners-dilemma-like 2x2: strategy 1 dominates.
        let values = vec![
            vec![rat(3), rat(3)],
            vec![rat(0), rat(4)],
            vec![rat(4), rat(0)],
            vec![rat(1), rat(1)],
        ];
        let table = PayoffTable::from_values(vec![0, 1], vec![2, 2], values).unwrap();
        assert_eq!(pure_nash_scan(&table), vec![vec![1, 1]]);
        assert_eq!(best_response(&table, 0, &[0, 0]), vec![1]);
    }

    #[test]
    fn symmetric_mixed_equilibrium_hawk_dove() {
        // Contest over a resource worth 2 at fighting cost 4: the unique
        // symmetric equilibrium mixes half and half with payoff one half.
        let values = vec![
            vec![rat(-1), rat(-1)],
            vec![rat(2), rat(0)],
            vec![rat(0), rat(2)],
            vec![rat(1), rat(1)],
        ];
        let table = PayoffTable::from_values(vec![0, 1], vec![2, 2], values).unwrap();
        let found = symmetric_mixed_equilibrium(&table, &Rational::zero()).unwrap();
        let interior: Vec<_> = found
            .iter()
            .filter(|e| e.probabilities.iter().all(|p| p.is_positive()))
            .collect();
        assert_eq!(interior.len(), 1);
        assert_eq!(interior[0].probabilities, vec![ratio(1, 2), ratio(1, 2)]);
        assert_eq!(interior[0].expected_payoff, ratio(1, 2));
    }

    #[test]
    fn mixed_equilibrium_point_mass_on_dominant_strategy() {
        let values = vec![
            vec![rat(3), rat(3)],
            vec![rat(0), rat(4)],
            vec![rat(4), rat(0)],
            vec![rat(1), rat(1)],
        ];
        let table = PayoffTable::from_values(vec![0, 1], vec![2, 2], values).unwrap();
        let found = symmetric_mixed_equilibrium(&table, &Rational::zero()).unwrap();
        assert!(found
            .iter()
            .any(|e| e.probabilities == vec![rat(0), rat(1)]));
    }

    #[test]
    fn fictitious_play_converges_on_dominant_strategy() {
        let values = vec![
            vec![rat(3), rat(3)],
            vec![rat(0), rat(4)],
            vec![rat(4), rat(0)],
            vec![rat(1), rat(1)],
        ];
        let table = PayoffTable::from_values(vec![0, 1], vec![2, 2], values).unwrap();
        let outcome = fictitious_play(&table, 200, 7);
        assert!(outcome.empirical[0][1] > ratio(9, 10));
        assert!(outcome.deviation_gain <= ratio(1, 10));
    }

    #[test]
    fn ascent_finds_single_obligation_optimum() {
        let (network, disc) = defaulting_chain();
        let scenarios = ScenarioSet::degenerate(&network);
        let objective = ObjectiveSpec::new(vec![rat(1), rat(1)]).unwrap();
        let outcome = pareto_coordinate_ascent(
            &network,
            &disc,
            &scenarios,
            &objective,
            &BTreeMap::new(),
            Evaluator::Limit,
            &EvalConfig::default(),
            10,
        )
        .unwrap();
        // Any positive fee burns value to the miners.
        assert_eq!(outcome.fees[&(0, 1)], 0);
        assert!(outcome.converged);
        assert_eq!(outcome.objective, rat(1));
    }

    #[test]
    fn local_check_flags_wasteful_fees() {
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
        let disc = Discretization::new(1, 2).unwrap();
        let scenarios = ScenarioSet::degenerate(&network);
        let objective = ObjectiveSpec::new(vec![rat(1), rat(1)]).unwrap();
        let cfg = EvalConfig::default();

        let zero = BidSchedule::zero_fee(&network, &disc).unwrap();
        let report = local_optimality_check(
            &network,
            &disc,
            &scenarios,
            &objective,
            &zero,
            Evaluator::Limit,
            &cfg,
        )
        .unwrap();
        assert!(report.max_gain <= rat(0));

        let mut top = BTreeMap::new();
        top.insert((0usize, 1usize), 2u64);
        let expensive = BidSchedule::all_or_nothing(&network, &disc, &top).unwrap();
        let report = local_optimality_check(
            &network,
            &disc,
            &scenarios,
            &objective,
            &expensive,
            Evaluator::Limit,
            &cfg,
        )
        .unwrap();
        assert!(report.max_gain.is_positive());
        assert_eq!(report.best_deviation, Some(((0, 1), 0)));
    }

    #[test]
    fn deviation_scan_on_two_point_scenarios() {
        let (network, disc) = defaulting_chain();
        let scenarios = ScenarioSet::new(vec![
            Scenario {
                probability: ratio(1, 2),
                cash: vec![rat(1), rat(0)],
            },
            Scenario {
                probability: ratio(1, 2),
                cash: vec![rat(2), rat(0)],
            },
        ])
        .unwrap();
        let zero = BidSchedule::zero_fee(&network, &disc).unwrap();
        let gains = nash_deviation_scan(
            &network,
            &disc,
            &scenarios,
            &zero,
            Evaluator::Limit,
            &EvalConfig::default(),
            10_000,
        )
        .unwrap();
        // Only node 1 holds a claim; it cannot gain by paying fees (no
        // competing claimants).
        assert_eq!(gains.len(), 1);
        assert_eq!(gains[0].0, 1);
        assert!(gains[0].1 <= rat(0));
    }
}
