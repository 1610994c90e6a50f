//! `uc` — train, evaluate, and benchmark unit commitment policies.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
//! 4 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uc_cli::{config::Scenario, ExperimentConfig};
use uc_core::UcError;

#[derive(Parser)]
#[command(name = "uc", version, about = "Unit commitment experiments: exact solver baseline and ensemble Q-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, global = false)]
    config: PathBuf,
    /// Override the trainer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the baseline wall-clock limit, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Override the baseline optimality-gap target.
    #[arg(long)]
    gap: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the instance files, printing a summary.
    Ingest(ConfigArgs),
    /// Generate a synthetic load CSV for a grid file.
    GenLoads {
        /// Grid specification file.
        #[arg(long)]
        grid: PathBuf,
        /// Number of whole days to generate.
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Horizon peak as a fraction of fleet capacity.
        #[arg(long, default_value_t = 0.8)]
        peak_fraction: f64,
        /// Comma-separated per-bus weights (defaults to an even split).
        #[arg(long, value_delimiter = ',')]
        bus_weights: Option<Vec<f64>>,
        #[arg(long, default_value_t = 9)]
        forecast_window: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the ensemble and write checkpoints and logs.
    Train(ConfigArgs),
    /// Greedy-evaluate stored checkpoints on the test days.
    Evaluate(ConfigArgs),
    /// Solve the rolling-window exact baseline over the test days.
    Baseline(ConfigArgs),
    /// Join two day-cost CSVs and compute percentage gaps.
    Compare {
        /// CSV with the method's day costs.
        #[arg(long)]
        method: PathBuf,
        /// Cost column to read from the method CSV.
        #[arg(long, default_value = "ensemble")]
        method_column: String,
        /// CSV with baseline day costs (reads its `cost` column).
        #[arg(long)]
        baseline: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate agent and baseline under a unit or line outage.
    Outage {
        #[command(flatten)]
        config: ConfigArgs,
        /// Unit id (from the grid file) to take out of service.
        #[arg(long, conflicts_with = "line")]
        unit_id: Option<usize>,
        /// Line number (1-based) to remove.
        #[arg(long)]
        line: Option<usize>,
    },
    /// Dump the candidate action set of a state as CSV.
    Actions {
        #[command(flatten)]
        config: ConfigArgs,
        /// Day index, 0-based from the scenario start.
        #[arg(long)]
        day: usize,
        /// Period within the day, 0-based.
        #[arg(long)]
        period: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export one member's greedy test-week schedule as an episode trace.
    Trace {
        #[command(flatten)]
        config: ConfigArgs,
        /// Member id whose checkpoint to roll out.
        #[arg(long, default_value_t = 0)]
        member: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate training logs into curve CSVs.
    Report {
        /// Directory holding training_log.csv (and timing.csv).
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, UcError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.trainer.seed = seed;
    }
    if let Some(out_dir) = &args.out_dir {
        config.paths.out_dir = out_dir.clone();
    }
    if let Some(limit) = args.time_limit {
        config.baseline.time_limit_s = limit;
    }
    if let Some(gap) = args.gap {
        config.baseline.gap = gap;
    }
    std::fs::create_dir_all(&config.paths.out_dir)?;
    Ok(config)
}

fn run() -> Result<(), UcError> {
    match Cli::parse().command {
        Command::Ingest(args) => {
            let config = load_config(&args)?;
            let workspace = uc_cli::prepare(&config)?;
            println!(
                "grid: {} buses, {} units, {} lines; capacity {:.1} MW",
                workspace.grid.n_buses,
                workspace.grid.n_units(),
                workspace.grid.lines.len(),
                workspace.grid.total_capacity()
            );
            println!(
                "loads: {} periods ({} days); peak {:.1} MW",
                workspace.loads.horizon,
                workspace.loads.horizon / 24,
                workspace.loads.peak()
            );
            for warning in &workspace.warnings {
                println!("note: {warning}");
            }
            Ok(())
        }
        Command::GenLoads {
            grid,
            days,
            seed,
            peak_fraction,
            bus_weights,
            forecast_window,
            out,
        } => {
            uc_cli::cmd_gen_loads(
                &grid,
                days,
                seed,
                peak_fraction,
                bus_weights,
                forecast_window,
                &out,
            )?;
            println!("wrote {} ({} days, seed {seed})", out.display(), days);
            Ok(())
        }
        Command::Train(args) => {
            let config = load_config(&args)?;
            let workspace = uc_cli::prepare(&config)?;
            let artifacts = uc_cli::cmd_train(&config, &workspace)?;
            println!(
                "trained {} members; best member {} ; log {}",
                artifacts.checkpoints.len(),
                artifacts.best_member,
                artifacts.training_log.display()
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let config = load_config(&args)?;
            let workspace = uc_cli::prepare(&config)?;
            let rows = uc_cli::cmd_evaluate(&config, &workspace)?;
            for row in &rows {
                println!(
                    "day {}: ensemble cost {:.2}{}",
                    row.day + 1,
                    row.ensemble_cost,
                    if row.infeasible_members.is_empty() {
                        String::new()
                    } else {
                        format!(" (infeasible members: {:?})", row.infeasible_members)
                    }
                );
            }
            let total: f64 = rows.iter().map(|r| r.ensemble_cost).sum();
            println!("test-week ensemble total: {total:.2}");
            Ok(())
        }
        Command::Baseline(args) => {
            let config = load_config(&args)?;
            let workspace = uc_cli::prepare(&config)?;
            let rows = uc_cli::cmd_baseline(&config, &workspace)?;
            for row in &rows {
                if row.infeasible {
                    println!("day {}: infeasible window (excluded)", row.day + 1);
                } else {
                    println!(
                        "day {}: cost {:.2} gap {:.4} proved={}",
                        row.day + 1,
                        row.cost,
                        row.gap,
                        row.proved_optimal
                    );
                }
            }
            let total: f64 = rows.iter().filter(|r| !r.infeasible).map(|r| r.cost).sum();
            println!("test-week baseline total: {total:.2}");
            Ok(())
        }
        Command::Compare {
            method,
            method_column,
            baseline,
            out,
        } => {
            let rows = uc_cli::cmd_compare(&method, &method_column, &baseline, &out)?;
            for row in &rows {
                println!(
                    "day {}: {:.2} vs {:.2} -> delta {:.2}%",
                    row.day, row.method_cost, row.baseline_cost, row.delta
                );
            }
            Ok(())
        }
        Command::Outage {
            config,
            unit_id,
            line,
        } => {
            let config_file = load_config(&config)?;
            let workspace = uc_cli::prepare(&config_file)?;
            let scenario = match (unit_id, line) {
                (Some(id), None) => Scenario::Unit { id },
                (None, Some(index)) => Scenario::Line { index },
                _ => {
                    return Err(UcError::Config(
                        "pass exactly one of --unit-id or --line".into(),
                    ))
                }
            };
            let rows = uc_cli::cmd_outage(&config_file, &workspace, &scenario)?;
            for row in &rows {
                println!(
                    "day {}: {:.2} vs {:.2} -> delta {:.2}%",
                    row.day, row.method_cost, row.baseline_cost, row.delta
                );
            }
            Ok(())
        }
        Command::Actions {
            config,
            day,
            period,
            out,
        } => {
            let config_file = load_config(&config)?;
            let workspace = uc_cli::prepare(&config_file)?;
            let count = uc_cli::cmd_actions(&config_file, &workspace, day, period, &out)?;
            println!("wrote {count} candidates to {}", out.display());
            Ok(())
        }
        Command::Trace {
            config,
            member,
            out,
        } => {
            let config_file = load_config(&config)?;
            let workspace = uc_cli::prepare(&config_file)?;
            uc_cli::cmd_trace(&config_file, &workspace, member, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Report { out_dir } => {
            let (curve, wall) = uc_cli::cmd_report(&out_dir)?;
            println!("wrote {} and {}", curve.display(), wall.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                UcError::Config(_) | UcError::Parse { .. } | UcError::Dimension(_) => 2,
                UcError::Infeasible(_) | UcError::Islanding(_) | UcError::EnumerationCap { .. } => 3,
                UcError::TrainingDivergence { .. } | UcError::EnsembleFailure(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
