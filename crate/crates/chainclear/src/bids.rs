//! Bid schedules: each unsecured obligation is split into atoms on a discrete
//! fee grid. Higher fee means higher effective seniority, since miners realize
//! high-fee bids first. The tail sums defined here are the basic algebra the
//! block engine, the terminal solver, and the bidding games all consume.

use crate::network::{Discretization, FinancialNetwork};
use crate::rational::{rat, Rational};
use num::{One, Signed, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

/// Sparse atom collection for one ordered pair: fee numerator (over the grid
/// denominator) to amount. Zero amounts are never stored.
pub type AtomMap = BTreeMap<u64, Rational>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BidError {
    #[error("fee grid denominator must be positive")]
    ZeroDenominator,
    #[error("fee numerator {fee_num} exceeds grid denominator {denominator}")]
    OffGridFee { fee_num: u64, denominator: u64 },
    #[error("bid of {amount} on ({from},{to}) is not a multiple of 1/{denominator}")]
    OffGridAmount {
        from: usize,
        to: usize,
        amount: Rational,
        denominator: u64,
    },
    #[error("negative bid amount on ({from},{to})")]
    NegativeAmount { from: usize, to: usize },
    #[error("bids on ({from},{to}) total {got}, expected the unsecured obligation {expected}")]
    MassMismatch {
        from: usize,
        to: usize,
        expected: Rational,
        got: Rational,
    },
    #[error("bid on ({from},{to}) but there is no such obligation")]
    NoObligation { from: usize, to: usize },
    #[error("bid references node {node} outside the network")]
    UnknownNode { node: usize },
    #[error("residual decrement on ({from},{to}) at fee {fee_num} exceeds the remaining atom")]
    OverDecrement {
        from: usize,
        to: usize,
        fee_num: u64,
    },
}

/// Discrete fee grid `{0, 1/F, ..., 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeeGrid {
    denominator: u64,
}

impl FeeGrid {
    pub fn new(denominator: u64) -> Result<Self, BidError> {
        if denominator == 0 {
            return Err(BidError::ZeroDenominator);
        }
        Ok(Self { denominator })
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// Fee numerators `0..=F` in increasing order.
    pub fn levels(&self) -> impl Iterator<Item = u64> {
        0..=self.denominator
    }

    pub fn contains(&self, fee_num: u64) -> bool {
        fee_num <= self.denominator
    }

    /// Fee level as an exact rational in [0, 1].
    pub fn fee_value(&self, fee_num: u64) -> Rational {
        Rational::new(fee_num.into(), self.denominator.into())
    }
}

/// One bid entry for schedule construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BidEntry {
    pub from: usize,
    pub to: usize,
    pub fee_num: u64,
    pub amount: Rational,
}

/// Feasible bidding strategy: for every pair with a positive obligation, the
/// atoms sum to the full unsecured amount `(1 - mu) L_ij` and every atom is a
/// nonnegative multiple of `1/D` at an on-grid fee.
#[derive(Debug, Clone, PartialEq)]
pub struct BidSchedule {
    fee_denominator: u64,
    pairs: BTreeMap<(usize, usize), AtomMap>,
}

impl BidSchedule {
    /// Builds and checks a schedule from raw entries. Entries for the same
    /// (pair, fee) accumulate. Every obligation must be covered in full;
    /// callers wanting the padding convention place the shortfall at fee 0
    /// themselves.
    pub fn new(
        network: &FinancialNetwork,
        disc: &Discretization,
        entries: impl IntoIterator<Item = BidEntry>,
    ) -> Result<Self, BidError> {
        let n = network.node_count();
        let grid = FeeGrid::new(disc.fee_denominator)?;
        let d = rat(disc.bid_denominator as i64);
        let mut pairs: BTreeMap<(usize, usize), AtomMap> = BTreeMap::new();

        for entry in entries {
            for node in [entry.from, entry.to] {
                if node >= n {
                    return Err(BidError::UnknownNode { node });
                }
            }
            if network.liabilities[entry.from][entry.to].is_zero() {
                if entry.amount.is_zero() {
                    continue;
                }
                return Err(BidError::NoObligation {
                    from: entry.from,
                    to: entry.to,
                });
            }
            if !grid.contains(entry.fee_num) {
                return Err(BidError::OffGridFee {
                    fee_num: entry.fee_num,
                    denominator: grid.denominator(),
                });
            }
            if entry.amount.is_negative() {
                return Err(BidError::NegativeAmount {
                    from: entry.from,
                    to: entry.to,
                });
            }
            if !(&d * &entry.amount).denom().is_one() {
                return Err(BidError::OffGridAmount {
                    from: entry.from,
                    to: entry.to,
                    amount: entry.amount,
                    denominator: disc.bid_denominator,
                });
            }
            if entry.amount.is_zero() {
                continue;
            }
            *pairs
                .entry((entry.from, entry.to))
                .or_default()
                .entry(entry.fee_num)
                .or_insert_with(Rational::zero) += entry.amount;
        }

        for (from, to) in network.obligation_pairs() {
            let expected = network.unsecured(from, to);
            let got: Rational = pairs
                .get(&(from, to))
                .map(|atoms| atoms.values().sum())
                .unwrap_or_else(Rational::zero);
            if got != expected {
                return Err(BidError::MassMismatch {
                    from,
                    to,
                    expected,
                    got,
                });
            }
        }

        Ok(Self {
            fee_denominator: disc.fee_denominator,
            pairs,
        })
    }

    /// All-or-nothing schedule: the full unsecured obligation of every pair
    /// placed at its assigned fee; unassigned pairs default to fee 0.
    pub fn all_or_nothing(
        network: &FinancialNetwork,
        disc: &Discretization,
        fees: &BTreeMap<(usize, usize), u64>,
    ) -> Result<Self, BidError> {
        let grid = FeeGrid::new(disc.fee_denominator)?;
        for (&(from, to), &fee_num) in fees {
            if !grid.contains(fee_num) {
                return Err(BidError::OffGridFee {
                    fee_num,
                    denominator: grid.denominator(),
                });
            }
            if from >= network.node_count() || to >= network.node_count() {
                return Err(BidError::UnknownNode { node: from.max(to) });
            }
            if network.liabilities[from][to].is_zero() {
                return Err(BidError::NoObligation { from, to });
            }
        }
        let entries = network
            .obligation_pairs()
            .into_iter()
            .map(|(from, to)| BidEntry {
                from,
                to,
                fee_num: fees.get(&(from, to)).copied().unwrap_or(0),
                amount: network.unsecured(from, to),
            });
        Self::new(network, disc, entries)
    }

    /// Uniform zero-fee schedule.
    pub fn zero_fee(network: &FinancialNetwork, disc: &Discretization) -> Result<Self, BidError> {
        Self::all_or_nothing(network, disc, &BTreeMap::new())
    }

    pub fn fee_denominator(&self) -> u64 {
        self.fee_denominator
    }

    pub fn grid(&self) -> FeeGrid {
        FeeGrid {
            denominator: self.fee_denominator,
        }
    }

    pub fn atoms(&self, from: usize, to: usize) -> Option<&AtomMap> {
        self.pairs.get(&(from, to))
    }

    /// Pairs carrying positive bid mass, in (payer, payee) order.
    pub fn pairs(&self) -> impl Iterator<Item = (&(usize, usize), &AtomMap)> {
        self.pairs.iter()
    }

    pub fn total_mass(&self, from: usize, to: usize) -> Rational {
        mass(self.pairs.get(&(from, to)))
    }

    /// Sum of atom amounts at fee levels above `f` (strict) or at-and-above
    /// `f` (inclusive).
    pub fn tail_mass(&self, from: usize, to: usize, f: &Rational, strict: bool) -> Rational {
        tail(
            self.pairs.get(&(from, to)),
            self.fee_denominator,
            f,
            strict,
            false,
        )
    }

    /// As [`BidSchedule::tail_mass`], with each atom weighted by `(1 - fee)`.
    pub fn discounted_tail(&self, from: usize, to: usize, f: &Rational, strict: bool) -> Rational {
        tail(
            self.pairs.get(&(from, to)),
            self.fee_denominator,
            f,
            strict,
            true,
        )
    }
}

/// Remaining (unpaid) bid atoms during chain construction. Fees stay on the
/// grid but pro-rata partial payments leave amounts off the `1/D` grid, so
/// amounts are arbitrary nonnegative rationals here.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBids {
    fee_denominator: u64,
    pairs: BTreeMap<(usize, usize), AtomMap>,
}

impl From<&BidSchedule> for ResidualBids {
    fn from(schedule: &BidSchedule) -> Self {
        Self {
            fee_denominator: schedule.fee_denominator,
            pairs: schedule.pairs.clone(),
        }
    }
}

impl ResidualBids {
    pub fn fee_denominator(&self) -> u64 {
        self.fee_denominator
    }

    pub fn grid(&self) -> FeeGrid {
        FeeGrid {
            denominator: self.fee_denominator,
        }
    }

    pub fn atoms(&self, from: usize, to: usize) -> Option<&AtomMap> {
        self.pairs.get(&(from, to))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(usize, usize), &AtomMap)> {
        self.pairs.iter()
    }

    /// Pairs with positive remaining mass, lexicographically ordered.
    pub fn pairs_with_mass(&self) -> Vec<(usize, usize)> {
        self.pairs.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn total_mass(&self, from: usize, to: usize) -> Rational {
        mass(self.pairs.get(&(from, to)))
    }

    /// Total remaining mass across all pairs.
    pub fn remaining_mass(&self) -> Rational {
        self.pairs.values().flat_map(|atoms| atoms.values()).sum()
    }

    pub fn tail_mass(&self, from: usize, to: usize, f: &Rational, strict: bool) -> Rational {
        tail(
            self.pairs.get(&(from, to)),
            self.fee_denominator,
            f,
            strict,
            false,
        )
    }

    pub fn discounted_tail(&self, from: usize, to: usize, f: &Rational, strict: bool) -> Rational {
        tail(
            self.pairs.get(&(from, to)),
            self.fee_denominator,
            f,
            strict,
            true,
        )
    }

    /// Removes realized mass from one atom; the atom disappears when drained.
    pub fn decrement(
        &mut self,
        from: usize,
        to: usize,
        fee_num: u64,
        amount: &Rational,
    ) -> Result<(), BidError> {
        if amount.is_zero() {
            return Ok(());
        }
        let over = BidError::OverDecrement { from, to, fee_num };
        let atoms = self.pairs.get_mut(&(from, to)).ok_or(over.clone())?;
        let current = atoms.get_mut(&fee_num).ok_or(over.clone())?;
        if amount.is_negative() || &*current < amount {
            return Err(over);
        }
        *current -= amount;
        if current.is_zero() {
            atoms.remove(&fee_num);
        }
        if atoms.is_empty() {
            self.pairs.remove(&(from, to));
        }
        Ok(())
    }
}

fn mass(atoms: Option<&AtomMap>) -> Rational {
    atoms
        .map(|a| a.values().sum())
        .unwrap_or_else(Rational::zero)
}

fn tail(
    atoms: Option<&AtomMap>,
    fee_denominator: u64,
    f: &Rational,
    strict: bool,
    discounted: bool,
) -> Rational {
    let Some(atoms) = atoms else {
        return Rational::zero();
    };
    let mut total = Rational::zero();
    for (&fee_num, amount) in atoms {
        let fee = Rational::new(fee_num.into(), fee_denominator.into());
        let include = if strict { &fee > f } else { &fee >= f };
        if include {
            if discounted {
                total += (rat(1) - fee) * amount;
            } else {
                total += amount;
            }
        }
    }
    total
}

/// Smallest fee level (0 or an atom fee) whose strict-above tail fits in
/// `budget`: atoms strictly above the returned level can be paid in full.
/// `None` when `budget` is negative, since even the empty tail is then
/// unaffordable.
pub fn threshold_fee(atoms: &AtomMap, budget: &Rational) -> Option<u64> {
    if budget.is_negative() {
        return None;
    }
    let fees: Vec<u64> = atoms.keys().copied().collect();
    let amounts: Vec<&Rational> = atoms.values().collect();
    // strict_tail[k] = mass strictly above fees[k]
    let mut strict_tail = vec![Rational::zero(); fees.len()];
    for k in (0..fees.len().saturating_sub(1)).rev() {
        strict_tail[k] = &strict_tail[k + 1] + amounts[k + 1];
    }
    let above_zero: Rational = fees
        .iter()
        .zip(&amounts)
        .filter(|(&f, _)| f > 0)
        .map(|(_, a)| (*a).clone())
        .sum();
    if &above_zero <= budget {
        return Some(0);
    }
    for k in 0..fees.len() {
        if &strict_tail[k] <= budget {
            return Some(fees[k]);
        }
    }
    Some(0)
}

/// Merges the atoms of several pairs into one fee-indexed map (used for
/// per-payer thresholds over a selected payee set).
pub fn merge_atoms<'a>(maps: impl IntoIterator<Item = &'a AtomMap>) -> AtomMap {
    let mut merged = AtomMap::new();
    for map in maps {
        for (&fee, amount) in map {
            *merged.entry(fee).or_insert_with(Rational::zero) += amount;
        }
    }
    merged
}
