use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairgrid_core::harness::config::set_json_path;
use fairgrid_core::harness::sweep::map_batch;
use fairgrid_core::harness::{emit_artifacts, recompute_summary, run, ConfigError, Exec, RunMode, RunReport, Scenario};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "fairgrid", version, about = "Fair voltage-regulator election in microgrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the coordination mode (centralized, blockchain, no_control).
    #[arg(long)]
    mode: Option<RunMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one scenario per value of a config key.
    Sweep {
        /// Base config; defaults apply when omitted.
        config: Option<PathBuf>,
        /// Dotted config key, e.g. `chain.block_period_s`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, parsed as JSON where possible.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute a run's summary from its traces and compare.
    Report { dir: PathBuf },
}

enum Failure {
    Validation(String),
    Desync(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Other(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn read_doc(path: Option<&Path>) -> Result<Value, Failure> {
    let Some(path) = path else {
        return Ok(serde_json::json!({}));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn apply_overrides(doc: &mut Value, o: &Overrides) -> Result<(), Failure> {
    if let Some(seed) = o.seed {
        set_json_path(doc, "seed", seed.into())?;
    }
    if let Some(mode) = o.mode {
        set_json_path(doc, "mode", mode.to_string().into())?;
    }
    Ok(())
}

fn execute(s: &Scenario, dir: &Path) -> Result<RunReport, Failure> {
    let report = run(s).map_err(|e| Failure::Other(e.to_string()))?;
    emit_artifacts(&report, dir).map_err(|e| Failure::Other(e.to_string()))?;
    Ok(report)
}

fn print_summary(report: &RunReport, dir: &Path) {
    let d = report.summary().derived;
    println!("{} seed={} periods={} -> {}", report.scenario.mode, report.scenario.seed, report.scenario.periods, dir.display());
    for (f, gap) in &d.fairness_gap {
        println!("  feeder {f}: fairness_gap {gap:.4}");
    }
    println!(
        "  overvoltage minutes {} (without control {}), undervoltage minutes {} (without control {})",
        d.overvoltage_minutes, d.baseline_overvoltage_minutes, d.undervoltage_minutes, d.baseline_undervoltage_minutes
    );
    println!("  mean bits per agent-period {:.1}", d.cost.mean_total_bits);
    if let Some(c) = report.chain {
        println!(
            "  blocks {} (canonical {}), reorgs {}, desync {}, stale {}",
            c.blocks_mined, c.canonical_height, c.reorgs, report.consensus.desync_events, report.consensus.stale_periods
        );
    }
}

fn check_desync(report: &RunReport) -> Result<(), Failure> {
    let seen = report.consensus.desync_events;
    if seen > report.scenario.desync_budget {
        return Err(Failure::Desync(format!(
            "{seen} desynchronized periods exceed the budget of {}",
            report.scenario.desync_budget
        )));
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut doc = read_doc(Some(&config))?;
            apply_overrides(&mut doc, &overrides)?;
            let s = Scenario::from_json_value(doc)?;
            let report = execute(&s, &overrides.out)?;
            print_summary(&report, &overrides.out);
            check_desync(&report)
        }
        Command::Sweep { config, param, values, overrides } => {
            let mut base = read_doc(config.as_deref())?;
            apply_overrides(&mut base, &overrides)?;
            let (mut scenarios, mut dirs) = (Vec::new(), Vec::new());
            for raw in &values {
                let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
                let mut doc = base.clone();
                set_json_path(&mut doc, &param, value)?;
                scenarios.push(Scenario::from_json_value(doc)?);
                dirs.push(overrides.out.join(format!("{param}={raw}")));
            }
            let jobs: Vec<(Scenario, PathBuf)> = scenarios.into_iter().zip(dirs).collect();
            let results = map_batch(&jobs, Exec::Parallel, |(s, dir)| execute(s, dir).map(|r| (r, dir.clone())));
            let mut worst = Ok(());
            for r in results {
                let (report, dir) = r?;
                print_summary(&report, &dir);
                if worst.is_ok() {
                    worst = check_desync(&report);
                }
            }
            worst
        }
        Command::Report { dir } => {
            let (stored, derived) = recompute_summary(&dir).map_err(|e| Failure::Other(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&derived).expect("serializable"));
            if stored.derived != derived {
                return Err(Failure::Other("summary.json does not match the traces".into()));
            }
            println!("summary.json matches the traces");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Desync(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
