//! Shared fixtures for the integration suites: the three-bank fee race and
//! the five-node stressed system with a society node.

#![allow(dead_code)]

use chainclear::rational::{rat, ratio, to_f64};
use chainclear::{
    BidSchedule, Discretization, FinancialNetwork, ObjectiveSpec, Rational, Scenario, ScenarioSet,
};
use std::collections::BTreeMap;

/// Three banks, bank at index 2 owes 1 to each of the other two but holds
/// only 1.5 in cash; whole-dollar bids, fees in tenths.
pub fn three_bank_network() -> (FinancialNetwork, Discretization) {
    let network = FinancialNetwork::new(
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
    .unwrap();
    (network, Discretization::new(1, 10).unwrap())
}

/// Closed-form payment received by claimant 1 in the three-bank fee race
/// when the claimants bid fee numerators `k1`, `k2` (over 10): the higher
/// bidder collects the full dollar, the lower one the 0.50 remainder, equal
/// bids split the 1.50 pro-rata; the payee nets `(1 - f)` of the face.
pub fn three_bank_closed_form(k1: u64, k2: u64) -> Rational {
    let discount = rat(1) - ratio(k1 as i64, 10);
    let face = match k1.cmp(&k2) {
        std::cmp::Ordering::Greater => rat(1),
        std::cmp::Ordering::Equal => ratio(3, 4),
        std::cmp::Ordering::Less => ratio(1, 2),
    };
    discount * face
}

/// Five nodes with an external-claims aggregator at index 0, the two-point
/// endowment stress, and the published scalarization weights. Fees in units
/// of 2.5 percent, bids in cents, capacity covering all sixteen obligations.
pub fn five_node_network() -> (FinancialNetwork, Discretization, ScenarioSet, ObjectiveSpec) {
    let network = FinancialNetwork::new(
        unstressed_cash(),
        vec![
            vec![rat(0); 5],
            vec![rat(3), rat(0), rat(7), rat(1), rat(1)],
            vec![rat(3), rat(3), rat(0), rat(3), rat(3)],
            vec![rat(3), rat(1), rat(1), rat(0), rat(1)],
            vec![rat(3), rat(1), rat(2), rat(1), rat(0)],
        ],
        rat(0),
        rat(1),
        rat(0),
        25,
        true,
    )
    .unwrap();
    let disc = Discretization::new(100, 40).unwrap();
    let scenarios = ScenarioSet::new(vec![
        Scenario {
            probability: ratio(3, 4),
            cash: unstressed_cash(),
        },
        Scenario {
            probability: ratio(1, 4),
            cash: stressed_cash(),
        },
    ])
    .unwrap();
    let objective = ObjectiveSpec::new(vec![ratio(1, 10), rat(1), rat(1), rat(1), rat(1)]).unwrap();
    (network, disc, scenarios, objective)
}

pub fn unstressed_cash() -> Vec<Rational> {
    vec![rat(0), rat(6), rat(8), rat(7), rat(10)]
}

pub fn stressed_cash() -> Vec<Rational> {
    vec![rat(0), rat(1), rat(3), rat(2), rat(5)]
}

/// The reference all-or-nothing fee assignment for the five-node system:
/// claims on bank 1 are prioritized at 2.5 or 5 percent, bank 2's obligation
/// to bank 4 at 2.5 percent, everything else at zero.
pub fn five_node_reference_fees() -> BTreeMap<(usize, usize), u64> {
    let mut fees = BTreeMap::new();
    for pair in [(1, 2), (1, 3), (2, 4)] {
        fees.insert(pair, 1u64);
    }
    fees.insert((1, 4), 2u64);
    // all other obligations default to fee 0
    fees
}

pub fn five_node_reference_bids() -> BidSchedule {
    let (network, disc, _, _) = five_node_network();
    BidSchedule::all_or_nothing(&network, &disc, &five_node_reference_fees()).unwrap()
}

/// |value - target| <= tol, comparing in exact arithmetic against a decimal
/// target string.
pub fn within(value: &Rational, target: &str, tol: &str) -> bool {
    let target = chainclear::rational::parse_decimal(target).unwrap();
    let tol = chainclear::rational::parse_decimal(tol).unwrap();
    num::Signed::abs(&(value - target)) <= tol
}

pub fn approx_f64(value: &Rational, target: f64, tol: f64) -> bool {
    (to_f64(value) - target).abs() <= tol
}

/// Random instance generation shared by the acceptance and property suites.
pub mod gen {
    use chainclear::bids::BidEntry;
    use chainclear::rational::{rat, ratio, Rational};
    use chainclear::{BidSchedule, Discretization, FinancialNetwork};
    use num::{Signed, Zero};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub struct NetworkParams {
        pub max_nodes: usize,
        pub max_fee_denominator: u64,
        pub max_bid_denominator: u64,
        /// Allow collateralization 1/2 and recovery 1/2 variants.
        pub vary_collateral: bool,
        pub strictly_positive_cash: bool,
        /// Capacity = n^2 when true, else random small.
        pub full_capacity: bool,
    }

    pub fn random_network(
        rng: &mut ChaCha8Rng,
        params: &NetworkParams,
    ) -> (FinancialNetwork, Discretization) {
        let n = rng.random_range(2..=params.max_nodes);
        // Even denominators keep half-collateralized obligations on the grid.
        let mu_half = params.vary_collateral && rng.random_range(0..4) == 0;
        let d = if mu_half {
            2 * rng.random_range(1..=params.max_bid_denominator / 2).max(1)
        } else {
            rng.random_range(1..=params.max_bid_denominator)
        };
        let f = rng.random_range(1..=params.max_fee_denominator);
        let mu = if mu_half { ratio(1, 2) } else { rat(0) };
        let alpha = if params.vary_collateral && rng.random_range(0..2) == 0 {
            ratio(1, 2)
        } else {
            rat(1)
        };
        let f_r = if mu_half && rng.random_range(0..2) == 0 {
            ratio(1, 10)
        } else {
            rat(0)
        };

        let mut liabilities = vec![vec![Rational::zero(); n]; n];
        let mut any = false;
        for (i, row) in liabilities.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j && rng.random_range(0..2) == 0 {
                    let units = rng.random_range(1..=4u64);
                    *cell = rat(units as i64);
                    any = true;
                }
            }
        }
        if !any {
            liabilities[0][1] = rat(1);
        }
        let cash: Vec<Rational> = (0..n)
            .map(|_| {
                let lo = if params.strictly_positive_cash { 1 } else { 0 };
                ratio(rng.random_range(lo..=8i64), 2)
            })
            .collect();
        let capacity = if params.full_capacity {
            n * n
        } else {
            rng.random_range(1..=n * n)
        };
        let mut network =
            FinancialNetwork::new(cash, liabilities, mu, alpha, f_r, capacity, false).unwrap();
        // Ensure margin posting never drives an account negative: raise cash
        // by any shortfall so every instance is admissible.
        for (i, v) in network.margin_adjusted_cash().into_iter().enumerate() {
            if v.is_negative() {
                network.cash[i] -= v;
            }
        }
        assert!(network.initial_cash().is_ok());
        (network, Discretization::new(d, f).unwrap())
    }

    /// Uniformly messy feasible bids: every unsecured obligation split into
    /// random grid multiples across fee levels.
    pub fn random_bids(
        rng: &mut ChaCha8Rng,
        network: &FinancialNetwork,
        disc: &Discretization,
    ) -> BidSchedule {
        let mut entries = Vec::new();
        for (from, to) in network.obligation_pairs() {
            let scaled = rat(disc.bid_denominator as i64) * network.unsecured(from, to);
            assert!(scaled.denom() == &1.into());
            let mut remaining: u64 = scaled.numer().try_into().unwrap();
            for fee_num in 0..disc.fee_denominator {
                if remaining == 0 {
                    break;
                }
                let take = rng.random_range(0..=remaining / 2 + 1).min(remaining);
                if take > 0 {
                    entries.push(BidEntry {
                        from,
                        to,
                        fee_num,
                        amount: Rational::new(take.into(), disc.bid_denominator.into()),
                    });
                    remaining -= take;
                }
            }
            if remaining > 0 {
                entries.push(BidEntry {
                    from,
                    to,
                    fee_num: disc.fee_denominator,
                    amount: Rational::new(remaining.into(), disc.bid_denominator.into()),
                });
            }
        }
        BidSchedule::new(network, disc, entries).unwrap()
    }

    /// Networks where zero-fee bidding leaves everyone solvent: endowments
    /// cover any shortfall between liabilities and zero-fee receipts.
    pub fn random_default_free(
        rng: &mut ChaCha8Rng,
        max_nodes: usize,
        max_fee_denominator: u64,
    ) -> (FinancialNetwork, Discretization) {
        let n = rng.random_range(2..=max_nodes);
        let f = rng.random_range(1..=max_fee_denominator);
        let mut liabilities = vec![vec![Rational::zero(); n]; n];
        for (i, row) in liabilities.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j && rng.random_range(0..3) == 0 {
                    *cell = rat(rng.random_range(1..=3i64));
                }
            }
        }
        let mut network = FinancialNetwork::new(
            vec![Rational::zero(); n],
            liabilities,
            rat(0),
            rat(1),
            rat(0),
            n * n,
            false,
        )
        .unwrap();
        for i in 0..n {
            let shortfall = network.total_liabilities(i) - network.total_claims(i);
            let slack = ratio(rng.random_range(0..=4i64), 2);
            network.cash[i] = chainclear::rational::positive_part(&shortfall) + slack;
        }
        assert!(network.default_free());
        (network, Discretization::new(1, f).unwrap())
    }
}
