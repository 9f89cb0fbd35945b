//! Command-line front end: solve, verify, audit, tatonnement, experiment,
//! perturb, frontier. All outputs are JSON with fractions as exact strings.
//!
//! Exit codes: 0 success, 1 verification found a violation (or an internal
//! error), 2 nonexistence proved by `solve`, 3 parse/validation error,
//! 4 enumeration cap exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fisher_market::demand::VerifyOutcome;
use fisher_market::error::Error;
use fisher_market::experiments::{
    generate_market, perturb_budgets, run_batch, BatchConfig, BudgetMode, GenSpec,
    ValueDistribution,
};
use fisher_market::fairness::{fairness_report, FairnessOptions};
use fisher_market::frontier::pareto_frontier;
use fisher_market::market::{
    market_to_file_json, parse_market, Allocation, BudgetProfile, Caps, Market, PriceVector,
};
use fisher_market::rational::{format_rational, parse_rational, to_f64_lossy};
use fisher_market::solver::{solve_almost_equal, solve_with_strategy, SolveStatus, StrategyChoice};
use fisher_market::tatonnement::{run_tatonnement, TatonnementConfig, UpdateRule};

#[derive(Parser)]
#[command(
    name = "fisher-market",
    version,
    about = "Competitive equilibria for indivisible goods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap on items for subset enumerations.
    #[arg(long, global = true, default_value_t = 14)]
    max_items: usize,
    /// Cap on n^m-style labeling enumerations.
    #[arg(long, global = true, default_value_t = 4_000_000)]
    max_labelings: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Proportional,
    Gamma,
    Exhaustive,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Randomized,
    SingleItem,
    AllItems,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Pareto,
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetModeArg {
    Crossing,
    PerturbedEqual,
    Ladder,
    Explicit,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a competitive equilibrium.
    Solve {
        market: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
        /// Emit the full SolveOutcome as JSON instead of a summary.
        #[arg(long)]
        json: bool,
        /// Run the almost-equal-budgets perturbation grid instead of the
        /// market file's own budgets (comma-separated epsilons).
        #[arg(long)]
        almost_equal: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify an (allocation, prices) pair against the demand oracle.
    Verify {
        market: PathBuf,
        /// JSON file: {"owners": [...], "prices": ["1/2", ...]}.
        certificate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fairness audit of an allocation, or frontier export.
    Audit {
        market: PathBuf,
        /// JSON file: {"owners": [...]}.
        #[arg(long)]
        allocation: Option<PathBuf>,
        /// Check l-out-of-d maximin shares up to this d.
        #[arg(long)]
        mms: Option<usize>,
        /// Compare against the exact weighted Nash-welfare argmax.
        #[arg(long)]
        nash: bool,
        /// Emit the Pareto frontier as JSON.
        #[arg(long)]
        frontier: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integer-price tatonnement.
    Tatonnement {
        market: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1000)]
        scale: u64,
        #[arg(long, default_value_t = 1)]
        step: u64,
        /// Continue probability for the randomized rule, e.g. "1/2".
        #[arg(long, default_value = "1/2")]
        continue_prob: String,
        #[arg(long, value_enum, default_value_t = RuleArg::Randomized)]
        rule: RuleArg,
        /// Write the trace to this file (stdout otherwise).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate, solve and audit a batch of random instances.
    Experiment {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m_min: usize,
        #[arg(long, default_value_t = 6)]
        m_max: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
        dist: DistArg,
        #[arg(long, default_value = "2")]
        pareto_shape: String,
        #[arg(long)]
        identical: bool,
        /// Spliddit-style integer valuations dividing this many points.
        #[arg(long)]
        spliddit_like: Option<u64>,
        #[arg(long, value_enum, default_value_t = BudgetModeArg::Crossing)]
        budget_mode: BudgetModeArg,
        /// Epsilon for perturbed-equal budgets, e.g. "1/100".
        #[arg(long, default_value = "1/100")]
        epsilon: String,
        /// Ladder base and step for --budget-mode ladder.
        #[arg(long, default_value_t = 100)]
        ladder_base: u64,
        #[arg(long, default_value_t = 3)]
        ladder_step: u64,
        /// Explicit budgets, comma-separated, for --budget-mode explicit.
        #[arg(long)]
        budgets: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Audit maximin guarantees up to this d on every equilibrium.
        #[arg(long, default_value_t = 0)]
        mms_d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturb a market's budgets into a nearby generic profile.
    Perturb {
        market: PathBuf,
        #[arg(long, default_value = "1/100")]
        epsilon: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the Pareto frontier.
    Frontier {
        market: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random market file.
    Generate {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
        dist: DistArg,
        #[arg(long, default_value = "2")]
        pareto_shape: String,
        #[arg(long)]
        identical: bool,
        #[arg(long)]
        spliddit_like: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Budgets for the generated file, comma-separated (equal otherwise).
        #[arg(long)]
        budgets: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
struct CertificateFile {
    owners: Vec<usize>,
    prices: Vec<String>,
}

#[derive(Deserialize)]
struct AllocationFile {
    owners: Vec<usize>,
}

#[derive(Serialize)]
struct FrontierDump {
    entries: Vec<FrontierDumpEntry>,
}

#[derive(Serialize)]
struct FrontierDumpEntry {
    owners: Vec<usize>,
    value_point: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let caps = Caps {
        max_items: cli.max_items,
        max_labelings: cli.max_labelings,
        ..Caps::default()
    };
    match run(cli.command, &caps) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Parse(_) | Error::Validation(_) | Error::Precondition(_) => {
                    ExitCode::from(3)
                }
                Error::CapExceeded(_) => ExitCode::from(4),
                Error::Internal(_) => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command, caps: &Caps) -> Result<ExitCode, Error> {
    match command {
        Command::Solve {
            market,
            strategy,
            json,
            almost_equal,
            out,
        } => {
            let (market, budgets) = load_market(&market)?;
            if let Some(grid_text) = almost_equal {
                let grid = parse_rational_list(&grid_text)?;
                let report = solve_almost_equal(&market, &grid, caps)?;
                emit(
                    &serde_json::to_string_pretty(&report).unwrap(),
                    out.as_deref(),
                )?;
                return Ok(if report.all_failed {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                });
            }
            let choice = match strategy {
                StrategyArg::Auto => StrategyChoice::Auto,
                StrategyArg::Proportional => StrategyChoice::Proportional,
                StrategyArg::Gamma => StrategyChoice::Gamma,
                StrategyArg::Exhaustive => StrategyChoice::Exhaustive,
            };
            let outcome = solve_with_strategy(&market, &budgets, caps, choice)?;
            if json || out.is_some() {
                emit(
                    &serde_json::to_string_pretty(&outcome).unwrap(),
                    out.as_deref(),
                )?;
            } else {
                print_solve_summary(&market, &outcome);
            }
            Ok(match outcome.status {
                SolveStatus::CeFound => ExitCode::SUCCESS,
                SolveStatus::NoCeExists => ExitCode::from(2),
                SolveStatus::CapExceeded => ExitCode::from(4),
            })
        }
        Command::Verify {
            market,
            certificate,
            out,
        } => {
            let (market, budgets) = load_market(&market)?;
            let text = read_file(&certificate)?;
            let parsed: CertificateFile = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("bad certificate file: {e}")))?;
            let allocation = Allocation::new(parsed.owners, market.num_agents())?;
            let prices = PriceVector::new(
                parsed
                    .prices
                    .iter()
                    .map(|t| parse_rational(t))
                    .collect::<Result<Vec<_>, _>>()?,
            )?;
            let outcome =
                fisher_market::demand::verify_ce(&market, &budgets, &allocation, &prices, caps)?;
            emit(
                &serde_json::to_string_pretty(&outcome).unwrap(),
                out.as_deref(),
            )?;
            Ok(match outcome {
                VerifyOutcome::Certificate(_) => ExitCode::SUCCESS,
                VerifyOutcome::Violation(_) => ExitCode::from(1),
            })
        }
        Command::Audit {
            market,
            allocation,
            mms,
            nash,
            frontier,
            out,
        } => {
            let (market, budgets) = load_market(&market)?;
            if frontier && allocation.is_none() {
                let dump = frontier_dump(&market, caps)?;
                emit(
                    &serde_json::to_string_pretty(&dump).unwrap(),
                    out.as_deref(),
                )?;
                return Ok(ExitCode::SUCCESS);
            }
            let Some(path) = allocation else {
                return Err(Error::Validation(
                    "audit needs --allocation (or --frontier)".into(),
                ));
            };
            let text = read_file(&path)?;
            let parsed: AllocationFile = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("bad allocation file: {e}")))?;
            let allocation = Allocation::new(parsed.owners, market.num_agents())?;
            let options = FairnessOptions {
                mms_d_max: mms,
                check_nash: nash,
            };
            let report = fairness_report(&market, &budgets, &allocation, &options, caps)?;
            let mut doc = serde_json::to_value(&report).unwrap();
            if frontier {
                let dump = frontier_dump(&market, caps)?;
                doc.as_object_mut()
                    .unwrap()
                    .insert("frontier".into(), serde_json::to_value(&dump).unwrap());
            }
            emit(&serde_json::to_string_pretty(&doc).unwrap(), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Tatonnement {
            market,
            seed,
            max_iter,
            scale,
            step,
            continue_prob,
            rule,
            trace,
        } => {
            let (market, budgets) = load_market(&market)?;
            let config = TatonnementConfig {
                max_iterations: max_iter,
                price_step: step,
                continue_probability: parse_rational(&continue_prob)?,
                rng_seed: seed,
                budget_scale: scale,
                rule: match rule {
                    RuleArg::Randomized => UpdateRule::Randomized,
                    RuleArg::SingleItem => UpdateRule::SingleItem,
                    RuleArg::AllItems => UpdateRule::AllItems,
                },
            };
            let result = run_tatonnement(&market, &budgets, &config, caps)?;
            emit(
                &serde_json::to_string_pretty(&result).unwrap(),
                trace.as_deref(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment {
            n,
            m_min,
            m_max,
            count,
            dist,
            pareto_shape,
            identical,
            spliddit_like,
            budget_mode,
            epsilon,
            ladder_base,
            ladder_step,
            budgets,
            seed,
            mms_d,
            out,
        } => {
            let config = BatchConfig {
                count,
                n,
                m_min,
                m_max,
                distribution: distribution_from(dist, &pareto_shape)?,
                identical_preferences: identical,
                integer_points: spliddit_like,
                budget_mode: match budget_mode {
                    BudgetModeArg::Crossing => BudgetMode::Crossing,
                    BudgetModeArg::PerturbedEqual => BudgetMode::PerturbedEqual {
                        epsilon: parse_rational(&epsilon)?,
                    },
                    BudgetModeArg::Ladder => BudgetMode::Ladder {
                        base: ladder_base,
                        step: ladder_step,
                    },
                    BudgetModeArg::Explicit => BudgetMode::Explicit {
                        budgets: parse_rational_list(&budgets.ok_or_else(|| {
                            Error::Validation("--budget-mode explicit needs --budgets".into())
                        })?)?,
                    },
                },
                master_seed: seed,
                mms_d_max: mms_d,
            };
            let report = run_batch(&config, caps)?;
            emit(&report.to_json(), out.as_deref())?;
            if report.alarm {
                eprintln!("ALARM: {:?}", report.alarm_details);
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Perturb {
            market,
            epsilon,
            seed,
            out,
        } => {
            let (market, budgets) = load_market(&market)?;
            let epsilon = parse_rational(&epsilon)?;
            let perturbed = perturb_budgets(&market, &budgets, &epsilon, seed, caps)?;
            let doc = serde_json::json!({
                "budgets": perturbed
                    .as_slice()
                    .iter()
                    .map(format_rational)
                    .collect::<Vec<_>>(),
            });
            emit(&serde_json::to_string_pretty(&doc).unwrap(), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Frontier { market, out } => {
            let (market, _) = load_market(&market)?;
            let dump = frontier_dump(&market, caps)?;
            emit(
                &serde_json::to_string_pretty(&dump).unwrap(),
                out.as_deref(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            n,
            m,
            dist,
            pareto_shape,
            identical,
            spliddit_like,
            seed,
            budgets,
            out,
        } => {
            let spec = GenSpec {
                n,
                m,
                distribution: distribution_from(dist, &pareto_shape)?,
                identical_preferences: identical,
                rng_seed: seed,
                integer_points: spliddit_like,
            };
            let market = generate_market(&spec)?;
            let budgets = match budgets {
                Some(text) => BudgetProfile::new(parse_rational_list(&text)?)?,
                None => BudgetProfile::equal(n),
            };
            emit(&market_to_file_json(&market, &budgets), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn distribution_from(dist: DistArg, pareto_shape: &str) -> Result<ValueDistribution, Error> {
    Ok(match dist {
        DistArg::Uniform => ValueDistribution::Uniform,
        DistArg::Pareto => ValueDistribution::Pareto {
            shape: parse_rational(pareto_shape)?,
        },
    })
}

fn frontier_dump(market: &Market, caps: &Caps) -> Result<FrontierDump, Error> {
    let frontier = pareto_frontier(market, caps)?;
    Ok(FrontierDump {
        entries: frontier
            .entries
            .iter()
            .map(|e| FrontierDumpEntry {
                owners: e.allocation.owner().to_vec(),
                value_point: e.values.iter().map(format_rational).collect(),
            })
            .collect(),
    })
}

fn print_solve_summary(market: &Market, outcome: &fisher_market::solver::SolveOutcome) {
    match outcome.status {
        SolveStatus::CeFound => {
            let cert = outcome.certificate.as_ref().unwrap();
            println!(
                "equilibrium found via {}",
                outcome.strategy.expect("strategy recorded")
            );
            for agent in 0..market.num_agents() {
                let items: Vec<&str> = cert
                    .owners
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a == agent)
                    .map(|(j, _)| market.item_names()[j].as_str())
                    .collect();
                println!(
                    "  {}: {{{}}} value {}",
                    market.agent_names()[agent],
                    items.join(","),
                    format_rational(&cert.demand_values[agent]),
                );
            }
            let prices: Vec<String> = cert
                .prices
                .iter()
                .map(|p| format!("{} (~{:.4})", format_rational(p), to_f64_lossy(p)))
                .collect();
            println!("  prices: {}", prices.join(", "));
        }
        SolveStatus::NoCeExists => {
            println!("no competitive equilibrium exists (proved by exhaustive search)")
        }
        SolveStatus::CapExceeded => println!("enumeration cap exceeded"),
    }
}

fn parse_rational_list(text: &str) -> Result<Vec<fisher_market::rational::Rational>, Error> {
    text.split(',')
        .map(|part| parse_rational(part.trim()))
        .collect()
}

fn load_market(path: &Path) -> Result<(Market, BudgetProfile), Error> {
    let text = read_file(path)?;
    parse_market(&text)
}

fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
