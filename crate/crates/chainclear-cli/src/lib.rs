//! Command-line driver: loads network/bids documents, dispatches to the
//! solvers, and writes JSON reports embedding input digests and the fully
//! resolved parameters.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 inadmissible
//! input (structural rules or the margin/grid assumptions), 4 solver or game
//! failure.

#![allow(clippy::result_large_err)]

use chainclear::rational::{format_decimal, format_rational, Rational};
use chainclear::*;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num::{Signed, Zero};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "chainclear",
    about = "Clear interbank obligation networks: centralized fixed point, miner-built blockchain, terminal net worths, and optimal bidding",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Greatest,
    Least,
}

impl From<BoundArg> for Bound {
    fn from(value: BoundArg) -> Bound {
        match value {
            BoundArg::Greatest => Bound::Greatest,
            BoundArg::Least => Bound::Least,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorArg {
    Chain,
    Limit,
}

impl From<EvaluatorArg> for Evaluator {
    fn from(value: EvaluatorArg) -> Evaluator {
        match value {
            EvaluatorArg::Chain => Evaluator::Chain,
            EvaluatorArg::Limit => Evaluator::Limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NashMode {
    PureScan,
    SymmetricMixed,
    FictitiousPlay,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Network document (JSON).
    #[arg(long)]
    pub network: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EngineArgs {
    /// Stop when a block's realized face volume drops below this.
    #[arg(long, default_value = "1e-12")]
    pub volume_epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_blocks: usize,
    /// Cap on candidate pair sets enumerated per block.
    #[arg(long, default_value_t = 1_000_000)]
    pub enum_budget: u64,
    /// Build blocks greedily when the enumeration budget is exceeded.
    #[arg(long)]
    pub greedy: bool,
    /// Resolve miner-indifferent ties uniformly at random (seeded) instead of
    /// lexicographically.
    #[arg(long)]
    pub random_ties: bool,
}

impl EngineArgs {
    fn config(&self, seed: u64) -> EngineConfig {
        EngineConfig {
            volume_epsilon: rational_from_f64(self.volume_epsilon),
            max_blocks: self.max_blocks,
            enum_budget: self.enum_budget,
            greedy_fallback: self.greedy,
            tie_break: if self.random_ties {
                TieBreak::Seeded(seed)
            } else {
                TieBreak::Lexicographic
            },
        }
    }

    fn parameters(&self, seed: u64) -> Value {
        json!({
            "volume_epsilon": self.volume_epsilon,
            "max_blocks": self.max_blocks,
            "enum_budget": self.enum_budget,
            "greedy": self.greedy,
            "random_ties": self.random_ties,
            "seed": seed,
        })
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check structural rules, margin solvency, and bid-grid integrality.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Centralized clearing fixed point (with scenario sweep when present).
    ClearCentralized {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = BoundArg::Greatest)]
        bound: BoundArg,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
    },
    /// Run the miner-built blockchain to termination and export the trace.
    SimulateChain {
        #[command(flatten)]
        common: CommonArgs,
        /// Bids document (JSON).
        #[arg(long)]
        bids: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve the terminal net-worth fixed point directly.
    SolveLimit {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        bids: PathBuf,
        #[arg(long, value_enum, default_value_t = BoundArg::Greatest)]
        bound: BoundArg,
        /// Agreement tolerance for the optional chain check.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Also run the chain and report the agreement gap per node.
        #[arg(long)]
        check_chain: bool,
        /// Compare against the limiting cash of a previously exported
        /// simulate-chain report instead of rerunning the chain.
        #[arg(long, conflicts_with = "check_chain")]
        trace: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Equilibrium bidding over all-or-nothing strategy spaces.
    SolveNash {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        mode: NashMode,
        #[arg(long, value_enum, default_value_t = EvaluatorArg::Chain)]
        evaluator: EvaluatorArg,
        /// Cap on the number of profiles in the payoff table.
        #[arg(long, default_value_t = 1_000_000)]
        table_budget: u64,
        /// Equilibrium verification slack.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Pareto scalarized search (or scoring of a given schedule).
    SolvePareto {
        #[command(flatten)]
        common: CommonArgs,
        /// Score this schedule and scan its single-obligation deviations
        /// instead of searching.
        #[arg(long)]
        bids: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = EvaluatorArg::Limit)]
        evaluator: EvaluatorArg,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_sweeps: usize,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

/// Machine-readable failure record written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

pub fn classify(error: &Error) -> (i32, &'static str) {
    match error {
        Error::Parse(_) | Error::Number(_) | Error::Io(_) => (EXIT_PARSE, "parse"),
        Error::Network(_) | Error::Bid(_) => (EXIT_VALIDATION, "validation"),
        Error::Solver(_) | Error::Game(_) => (EXIT_SOLVER, "solver"),
        Error::Scenario { source, .. } => (classify(source).0, "scenario"),
    }
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(RunFailure::Inadmissible) => EXIT_VALIDATION,
        Err(RunFailure::Error(e)) => {
            let (exit_code, kind) = classify(&e);
            let record = ErrorRecord {
                kind: kind.to_string(),
                message: e.to_string(),
                exit_code,
            };
            eprintln!("{}", serde_json::to_string_pretty(&record).unwrap());
            exit_code
        }
    }
}

enum RunFailure {
    Error(Error),
    /// `validate` found violations; the report was still written.
    Inadmissible,
}

impl<E: Into<Error>> From<E> for RunFailure {
    fn from(e: E) -> Self {
        RunFailure::Error(e.into())
    }
}

fn num(r: &Rational) -> Value {
    json!({
        "decimal": format_decimal(r, 12),
        "rational": format_rational(r),
    })
}

fn nums(values: &[Rational]) -> Value {
    Value::Array(values.iter().map(num).collect())
}

fn rational_from_f64(v: f64) -> Rational {
    Rational::from_float(v).unwrap_or_else(Rational::zero)
}

fn digest(path: &Path) -> std::io::Result<Value> {
    let bytes = std::fs::read(path)?;
    let hash = Sha256::digest(&bytes);
    Ok(json!({
        "path": path.display().to_string(),
        "sha256": hex::encode(hash),
    }))
}

fn emit(report: &Value, out: Option<&PathBuf>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => std::fs::write(path, text + "\n"),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn atoms_json(atoms: &AtomMap) -> Value {
    Value::Array(
        atoms
            .iter()
            .map(|(fee_num, amount)| json!({"fee_num": fee_num, "amount": num(amount)}))
            .collect(),
    )
}

fn fees_json(fees: &BTreeMap<(usize, usize), u64>) -> Value {
    Value::Array(
        fees.iter()
            .map(|(&(from, to), &fee)| json!({"from": from, "to": to, "fee_num": fee}))
            .collect(),
    )
}

fn scenario_list(loaded: &io::LoadedNetwork) -> ScenarioSet {
    loaded
        .scenarios
        .clone()
        .unwrap_or_else(|| ScenarioSet::degenerate(&loaded.network))
}

fn dispatch(cli: Cli) -> std::result::Result<(), RunFailure> {
    match cli.command {
        Command::Validate { common } => {
            let loaded = io::load_network(&common.network)?;
            let report = validate(&loaded.network, &loaded.discretization);
            let admissible = report.is_admissible();
            let document = json!({
                "command": "validate",
                "inputs": {"network": digest(&common.network)?},
                "parameters": {},
                "results": {
                    "admissible": admissible,
                    "assumption1_ok": report.assumption1_ok,
                    "assumption2_ok": report.assumption2_ok,
                    "violations": serde_json::to_value(&report.violations).expect("serializable"),
                },
            });
            emit(&document, common.out.as_ref())?;
            if admissible {
                Ok(())
            } else {
                Err(RunFailure::Inadmissible)
            }
        }

        Command::ClearCentralized {
            common,
            bound,
            tol,
            max_iter,
        } => {
            let loaded = io::load_network(&common.network)?;
            let clearing = clearing_payments(&loaded.network, bound.into(), tol, max_iter)
                .map_err(Error::from)?;
            let mut results = json!({
                "payments": nums(&clearing.payments),
                "net_worths": nums(&clearing.net_worths),
                "cash_accounts": nums(&chainclear::network::positive_parts(&clearing.net_worths)),
                "iterations": clearing.iterations,
                "residual": clearing.residual,
                "exact": clearing.exact,
            });
            if loaded.network.society {
                results["society_receipts"] = num(&clearing.net_worths[0]);
            }
            if let Some(scenarios) = &loaded.scenarios {
                let mut per_scenario = Vec::new();
                let mut expected = vec![Rational::zero(); loaded.network.node_count()];
                for scenario in &scenarios.scenarios {
                    let world = loaded.network.with_cash(scenario.cash.clone())?;
                    let c = clearing_payments(&world, bound.into(), tol, max_iter)
                        .map_err(Error::from)?;
                    for (acc, k) in expected.iter_mut().zip(&c.net_worths) {
                        *acc += &scenario.probability * chainclear::rational::positive_part(k);
                    }
                    per_scenario.push(json!({
                        "probability": num(&scenario.probability),
                        "net_worths": nums(&c.net_worths),
                        "exact": c.exact,
                    }));
                }
                results["scenarios"] = Value::Array(per_scenario);
                results["expected_cash"] = nums(&expected);
                if let Some(objective) = &loaded.objective {
                    let value = weighted_objective(&expected, objective)?;
                    results["weighted_objective"] = num(&value);
                }
            }
            let document = json!({
                "command": "clear-centralized",
                "inputs": {"network": digest(&common.network)?},
                "parameters": {
                    "bound": serde_json::to_value(Bound::from(bound)).expect("serializable"),
                    "tol": tol,
                    "max_iter": max_iter,
                },
                "results": results,
            });
            emit(&document, common.out.as_ref())?;
            Ok(())
        }

        Command::SimulateChain {
            common,
            bids,
            engine,
            seed,
        } => {
            let loaded = io::load_network(&common.network)?;
            let schedule = io::load_bids(&bids, &loaded.network, &loaded.discretization)?;
            let cfg = engine.config(seed);
            let trace = run_chain(&loaded.network, &schedule, &cfg)?;
            let limit = limiting_cash(&trace);
            let blocks: Vec<Value> = trace
                .blocks
                .iter()
                .enumerate()
                .map(|(t, block)| {
                    json!({
                        "index": block.index,
                        "selected": block.selected.iter()
                            .map(|&(from, to)| json!({"from": from, "to": to}))
                            .collect::<Vec<_>>(),
                        "realized": block.realized.iter()
                            .map(|(&(from, to), atoms)| json!({
                                "from": from, "to": to, "atoms": atoms_json(atoms),
                            }))
                            .collect::<Vec<_>>(),
                        "threshold_fees": block.threshold_fees.iter()
                            .map(|(&payer, &fee)| json!({"payer": payer, "fee_num": fee}))
                            .collect::<Vec<_>>(),
                        "miner_fee": num(&block.miner_fee),
                        "volume": num(&block.volume),
                        "cash_after": nums(&trace.cash_history[t + 1]),
                    })
                })
                .collect();
            let document = json!({
                "command": "simulate-chain",
                "inputs": {
                    "network": digest(&common.network)?,
                    "bids": digest(&bids)?,
                },
                "parameters": engine.parameters(seed),
                "results": {
                    "initial_cash": nums(&trace.cash_history[0]),
                    "blocks": blocks,
                    "termination": serde_json::to_value(trace.termination).expect("serializable"),
                    "limiting_cash": nums(&limit.cash),
                    "exact": limit.exact,
                    "remaining_residual_mass": num(&limit.remaining_residual_mass),
                },
            });
            emit(&document, common.out.as_ref())?;
            Ok(())
        }

        Command::SolveLimit {
            common,
            bids,
            bound,
            tol,
            max_iter,
            check_chain,
            trace,
            engine,
        } => {
            let loaded = io::load_network(&common.network)?;
            let schedule = io::load_bids(&bids, &loaded.network, &loaded.discretization)?;
            let terminal = solve_terminal(&loaded.network, &schedule, bound.into(), max_iter)
                .map_err(Error::from)?;
            let mut results = json!({
                "net_worths": nums(&terminal.net_worths),
                "cash_accounts": nums(&chainclear::network::positive_parts(&terminal.net_worths)),
                "threshold_fees": terminal.threshold_fees,
                "solvent": terminal.solvent,
                "unique": uniqueness_check(&loaded.network),
                "iterations": terminal.iterations,
            });
            if loaded.network.society {
                results["society_receipts"] = num(&terminal.net_worths[0]);
            }
            let limiting = if let Some(path) = &trace {
                Some(limiting_cash_from_report(path)?)
            } else if check_chain {
                let trace = run_chain(&loaded.network, &schedule, &engine.config(0))?;
                Some(limiting_cash(&trace))
            } else {
                None
            };
            if let Some(limiting) = limiting {
                let report = consistency_check_cash(&limiting, &terminal, &rational_from_f64(tol));
                results["chain_consistency"] = json!({
                    "ok": report.ok,
                    "max_gap": num(&report.max_gap),
                    "gaps": nums(&report.gaps),
                    "trace_exact": report.trace_exact,
                });
            }
            let document = json!({
                "command": "solve-limit",
                "inputs": {
                    "network": digest(&common.network)?,
                    "bids": digest(&bids)?,
                },
                "parameters": {
                    "bound": serde_json::to_value(Bound::from(bound)).expect("serializable"),
                    "tol": tol,
                    "max_iter": max_iter,
                    "check_chain": check_chain,
                    "trace": trace.as_ref().map(|p| p.display().to_string()),
                },
                "results": results,
            });
            emit(&document, common.out.as_ref())?;
            Ok(())
        }

        Command::SolveNash {
            common,
            mode,
            evaluator,
            table_budget,
            tol,
            rounds,
            seed,
            engine,
        } => {
            let loaded = io::load_network(&common.network)?;
            let scenarios = scenario_list(&loaded);
            let cfg = EvalConfig {
                engine: engine.config(seed),
                solver_max_iter: 10_000,
            };
            let spaces: Vec<StrategySpace> = (0..loaded.network.node_count())
                .map(|node| {
                    StrategySpace::all_or_nothing(
                        &loaded.network,
                        &loaded.discretization,
                        node,
                        table_budget,
                    )
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|s| s.strategies.len() > 1)
                .collect();
            let table = payoff_table(
                &loaded.network,
                &loaded.discretization,
                &scenarios,
                &spaces,
                &BTreeMap::new(),
                evaluator.into(),
                &cfg,
                table_budget,
            )?;
            let results = match mode {
                NashMode::PureScan => {
                    let equilibria = pure_nash_scan(&table);
                    json!({
                        "players": table.players,
                        "strategy_counts": table.strategy_counts,
                        "pure_equilibria": equilibria,
                    })
                }
                NashMode::SymmetricMixed => {
                    let found = symmetric_mixed_equilibrium(&table, &rational_from_f64(tol))?;
                    json!({
                        "players": table.players,
                        "equilibria": found.iter().map(|eq| json!({
                            "probabilities": nums(&eq.probabilities),
                            "expected_payoff": num(&eq.expected_payoff),
                        })).collect::<Vec<_>>(),
                    })
                }
                NashMode::FictitiousPlay => {
                    let outcome = fictitious_play(&table, rounds, seed);
                    json!({
                        "players": table.players,
                        "empirical": outcome.empirical.iter().map(|m| nums(m)).collect::<Vec<_>>(),
                        "deviation_gain": num(&outcome.deviation_gain),
                        "rounds": outcome.rounds,
                        "note": "heuristic: convergence is not guaranteed; the deviation gain measures distance from equilibrium",
                    })
                }
            };
            let document = json!({
                "command": "solve-nash",
                "inputs": {"network": digest(&common.network)?},
                "parameters": {
                    "mode": format!("{mode:?}"),
                    "evaluator": serde_json::to_value(Evaluator::from(evaluator)).expect("serializable"),
                    "table_budget": table_budget,
                    "tol": tol,
                    "rounds": rounds,
                    "seed": seed,
                },
                "results": results,
            });
            emit(&document, common.out.as_ref())?;
            Ok(())
        }

        Command::SolvePareto {
            common,
            bids,
            evaluator,
            starts,
            seed,
            max_sweeps,
            engine,
        } => {
            let loaded = io::load_network(&common.network)?;
            let scenarios = scenario_list(&loaded);
            let objective = match loaded.objective.clone() {
                Some(o) => o,
                None => ObjectiveSpec::new(vec![
                    chainclear::rational::rat(1);
                    loaded.network.node_count()
                ])?,
            };
            let cfg = EvalConfig {
                engine: engine.config(seed),
                solver_max_iter: 10_000,
            };
            let results = match &bids {
                Some(path) => {
                    let schedule = io::load_bids(path, &loaded.network, &loaded.discretization)?;
                    let value = games::pareto_objective(
                        &loaded.network,
                        &scenarios,
                        &schedule,
                        &objective,
                        evaluator.into(),
                        &cfg,
                    )?;
                    let local = local_optimality_check(
                        &loaded.network,
                        &loaded.discretization,
                        &scenarios,
                        &objective,
                        &schedule,
                        evaluator.into(),
                        &cfg,
                    )?;
                    json!({
                        "objective": num(&value),
                        "local_optimality": {
                            "max_gain": num(&local.max_gain),
                            "best_deviation": local.best_deviation.map(|((from, to), fee)| {
                                json!({"from": from, "to": to, "fee_num": fee})
                            }),
                            "evaluations": local.evaluations,
                            "locally_optimal": !local.max_gain.is_positive(),
                        },
                    })
                }
                None => {
                    let outcome = pareto_multi_start(
                        &loaded.network,
                        &loaded.discretization,
                        &scenarios,
                        &objective,
                        evaluator.into(),
                        &cfg,
                        starts,
                        seed,
                        max_sweeps,
                    )?;
                    json!({
                        "objective": num(&outcome.objective),
                        "fees": fees_json(&outcome.fees),
                        "sweeps": outcome.sweeps,
                        "converged": outcome.converged,
                    })
                }
            };
            let mut inputs = json!({"network": digest(&common.network)?});
            if let Some(path) = &bids {
                inputs["bids"] = digest(path)?;
            }
            let document = json!({
                "command": "solve-pareto",
                "inputs": inputs,
                "parameters": {
                    "evaluator": serde_json::to_value(Evaluator::from(evaluator)).expect("serializable"),
                    "starts": starts,
                    "seed": seed,
                    "max_sweeps": max_sweeps,
                    "mode": if bids.is_some() { "score" } else { "search" },
                },
                "results": results,
            });
            emit(&document, common.out.as_ref())?;
            Ok(())
        }
    }
}

/// Reloads the limiting cash of an exported simulate-chain report.
fn limiting_cash_from_report(path: &Path) -> Result<engine::LimitingCash> {
    let text = std::fs::read_to_string(path)?;
    let report: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let results = &report["results"];
    let cash = results["limiting_cash"]
        .as_array()
        .ok_or_else(|| Error::Parse("report has no results.limiting_cash".into()))?
        .iter()
        .map(|v| {
            let repr = v["rational"].as_str().ok_or_else(|| {
                Error::Parse("limiting_cash entries need a rational field".into())
            })?;
            Ok(chainclear::rational::parse_decimal(repr)?)
        })
        .collect::<Result<Vec<Rational>>>()?;
    let exact = results["exact"]
        .as_bool()
        .ok_or_else(|| Error::Parse("report has no results.exact".into()))?;
    let remaining = results["remaining_residual_mass"]["rational"]
        .as_str()
        .map(chainclear::rational::parse_decimal)
        .transpose()?
        .unwrap_or_else(Rational::zero);
    Ok(engine::LimitingCash {
        cash,
        exact,
        remaining_residual_mass: remaining,
    })
}
