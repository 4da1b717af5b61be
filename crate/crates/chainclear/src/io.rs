//! Input file schemas (JSON) and exact ingestion.
//!
//! Currency amounts, parameters, probabilities, and weights are decimal
//! strings (or integers) so values convert to exact rationals; JSON floats
//! are rejected. Field names are a stable contract:
//!
//! Network file: `n`, `cash`, `liabilities`, `mu`, `alpha` (default `"1"`),
//! `f_R` (default `"0"`), `block_capacity`, `society` (default `false`),
//! `discretization: {D, F}`, optional `scenarios: [{prob, cash}]`, optional
//! `objective: {weights, utility}`.
//!
//! Bids file: a list of `{from, to, atoms: [{fee_num, amount}]}` with fees as
//! integer numerators over `F`.

use crate::bids::{BidEntry, BidSchedule};
use crate::error::{Error, Result};
use crate::network::{Discretization, FinancialNetwork};
use crate::rational::{parse_decimal, Rational};
use crate::scenario::{ObjectiveSpec, Scenario, ScenarioSet};
use serde::de::{self, Deserializer};
use serde::Deserialize;
use std::path::Path;

/// A number that must arrive as a decimal string or an integer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactNumber(pub Rational);

impl<'de> Deserialize<'de> for ExactNumber {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl de::Visitor<'_> for Visitor {
            type Value = ExactNumber;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a decimal string like \"5.825\" or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<ExactNumber, E> {
                parse_decimal(v).map(ExactNumber).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<ExactNumber, E> {
                Ok(ExactNumber(crate::rational::rat(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<ExactNumber, E> {
                Ok(ExactNumber(Rational::from_integer(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<ExactNumber, E> {
                Err(E::custom(format!(
                    "floating-point literal {v} is not exact; quote it as a decimal string"
                )))
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscretizationFile {
    #[serde(rename = "D")]
    d: u64,
    #[serde(rename = "F")]
    f: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    prob: ExactNumber,
    cash: Vec<ExactNumber>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveFile {
    weights: Vec<ExactNumber>,
    #[serde(default = "default_utility")]
    utility: String,
}

fn default_utility() -> String {
    "positive_part".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    n: usize,
    #[serde(default)]
    society: bool,
    cash: Vec<ExactNumber>,
    liabilities: Vec<Vec<ExactNumber>>,
    mu: ExactNumber,
    #[serde(default = "default_one")]
    alpha: ExactNumber,
    #[serde(rename = "f_R", default = "default_zero")]
    f_r: ExactNumber,
    block_capacity: usize,
    discretization: DiscretizationFile,
    #[serde(default)]
    scenarios: Option<Vec<ScenarioFile>>,
    #[serde(default)]
    objective: Option<ObjectiveFile>,
}

fn default_one() -> ExactNumber {
    ExactNumber(crate::rational::rat(1))
}

fn default_zero() -> ExactNumber {
    ExactNumber(Rational::from_integer(0.into()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BidAtomFile {
    fee_num: u64,
    amount: ExactNumber,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BidPairFile {
    from: usize,
    to: usize,
    atoms: Vec<BidAtomFile>,
}

/// Everything a network file can carry.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedNetwork {
    pub network: FinancialNetwork,
    pub discretization: Discretization,
    pub scenarios: Option<ScenarioSet>,
    pub objective: Option<ObjectiveSpec>,
}

/// Parses a network document, converting decimals exactly and enforcing the
/// structural rules.
pub fn parse_network(json: &str) -> Result<LoadedNetwork> {
    let file: NetworkFile = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    if file.cash.len() != file.n {
        return Err(Error::Parse(format!(
            "cash has {} entries but n = {}",
            file.cash.len(),
            file.n
        )));
    }
    if file.liabilities.len() != file.n || file.liabilities.iter().any(|r| r.len() != file.n) {
        return Err(Error::Parse(format!("liabilities must be {0}x{0}", file.n)));
    }
    let network = FinancialNetwork::new(
        file.cash.into_iter().map(|v| v.0).collect(),
        file.liabilities
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.0).collect())
            .collect(),
        file.mu.0,
        file.alpha.0,
        file.f_r.0,
        file.block_capacity,
        file.society,
    )?;
    let discretization = Discretization::new(file.discretization.d, file.discretization.f)?;
    let scenarios = file
        .scenarios
        .map(|list| {
            ScenarioSet::new(
                list.into_iter()
                    .map(|s| Scenario {
                        probability: s.prob.0,
                        cash: s.cash.into_iter().map(|v| v.0).collect(),
                    })
                    .collect(),
            )
        })
        .transpose()?;
    if let Some(set) = &scenarios {
        if set
            .scenarios
            .iter()
            .any(|s| s.cash.len() != network.node_count())
        {
            return Err(Error::Parse(
                "scenario cash vectors must have n entries".into(),
            ));
        }
    }
    let objective = file
        .objective
        .map(|o| {
            if o.utility != "positive_part" {
                return Err(Error::Parse(format!(
                    "unknown utility {:?}; only \"positive_part\" is supported",
                    o.utility
                )));
            }
            ObjectiveSpec::new(o.weights.into_iter().map(|v| v.0).collect())
        })
        .transpose()?;
    if let Some(objective) = &objective {
        if objective.weights.len() != network.node_count() {
            return Err(Error::Parse("objective needs one weight per node".into()));
        }
    }
    Ok(LoadedNetwork {
        network,
        discretization,
        scenarios,
        objective,
    })
}

/// Parses a bids document against a network, enforcing feasibility.
pub fn parse_bids(
    json: &str,
    network: &FinancialNetwork,
    disc: &Discretization,
) -> Result<BidSchedule> {
    let file: Vec<BidPairFile> =
        serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    let entries = file.into_iter().flat_map(|pair| {
        pair.atoms.into_iter().map(move |atom| BidEntry {
            from: pair.from,
            to: pair.to,
            fee_num: atom.fee_num,
            amount: atom.amount.0,
        })
    });
    Ok(BidSchedule::new(network, disc, entries)?)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<LoadedNetwork> {
    parse_network(&std::fs::read_to_string(path)?)
}

pub fn load_bids(
    path: impl AsRef<Path>,
    network: &FinancialNetwork,
    disc: &Discretization,
) -> Result<BidSchedule> {
    parse_bids(&std::fs::read_to_string(path)?, network, disc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    const THREE_BANK: &str = r#"{
        "n": 3,
        "cash": ["1", "1", "1.5"],
        "liabilities": [["0","0","0"],["0","0","0"],["1","1","0"]],
        "mu": "0",
        "alpha": "1",
        "block_capacity": 2,
        "discretization": {"D": 1, "F": 10}
    }"#;

    #[test]
    fn parses_network_file() {
        let loaded = parse_network(THREE_BANK).unwrap();
        assert_eq!(loaded.network.node_count(), 3);
        assert_eq!(loaded.network.cash[2], ratio(3, 2));
        assert_eq!(loaded.discretization.fee_denominator, 10);
        assert_eq!(loaded.network.rehypothecation_fee, rat(0));
        assert!(loaded.scenarios.is_none());
    }

    #[test]
    fn rejects_float_literals() {
        let bad = THREE_BANK.replace("\"1.5\"", "1.5");
        let err = parse_network(&bad).unwrap_err();
        assert!(err.to_string().contains("not exact"), "{err}");
    }

    #[test]
    fn rejects_self_liability_with_index() {
        let bad = THREE_BANK.replace("[\"1\",\"1\",\"0\"]", "[\"1\",\"1\",\"1\"]");
        let err = parse_network(&bad).unwrap_err();
        assert!(err.to_string().contains("liability to itself"), "{err}");
    }

    #[test]
    fn parses_scenarios_and_objective() {
        let json = r#"{
            "n": 2,
            "cash": ["1", "0"],
            "liabilities": [["0","1"],["0","0"]],
            "mu": "0",
            "alpha": "1",
            "f_R": "0",
            "block_capacity": 1,
            "discretization": {"D": 1, "F": 2},
            "scenarios": [
                {"prob": "0.75", "cash": ["2", "0"]},
                {"prob": "0.25", "cash": ["1", "0"]}
            ],
            "objective": {"weights": ["0.1", "1"], "utility": "positive_part"}
        }"#;
        let loaded = parse_network(json).unwrap();
        let scenarios = loaded.scenarios.unwrap();
        assert_eq!(scenarios.scenarios[0].probability, ratio(3, 4));
        assert_eq!(loaded.objective.unwrap().weights[0], ratio(1, 10));
    }

    #[test]
    fn parses_bids_against_network() {
        let loaded = parse_network(THREE_BANK).unwrap();
        let bids_json = r#"[
            {"from": 2, "to": 0, "atoms": [{"fee_num": 5, "amount": "1"}]},
            {"from": 2, "to": 1, "atoms": [{"fee_num": 4, "amount": "1"}]}
        ]"#;
        let schedule = parse_bids(bids_json, &loaded.network, &loaded.discretization).unwrap();
        assert_eq!(schedule.total_mass(2, 0), rat(1));

        let under = r#"[{"from": 2, "to": 0, "atoms": [{"fee_num": 5, "amount": "1"}]}]"#;
        let err = parse_bids(under, &loaded.network, &loaded.discretization).unwrap_err();
        assert!(
            err.to_string()
                .contains("expected the unsecured obligation"),
            "{err}"
        );
    }
}
