use std::path::PathBuf;
use std::process::ExitCode;

use cgrsim_cli::config::{Overrides, ScenarioConfig};
use cgrsim_cli::experiment::FilterStatus;
use cgrsim_cli::{cmd_export_lp, cmd_filter, cmd_run, CliError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cgrsim", version, about = "Contact graph routing experiments on scheduled DTN contact plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every (plan, load, policy, seed) and write run and aggregate CSVs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Generate candidate plans and keep those the flow oracle can serve at the highest load.
    Filter {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Write the flow model of one plan and load as an LP file.
    ExportLp {
        config: PathBuf,
        #[arg(long)]
        load: u64,
        /// Generator seed of the plan (random scenarios).
        #[arg(long)]
        plan_seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Default)]
struct Flags {
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated policies: deltime, hops, mo:<w>.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Loads, e.g. "1..=10" or "3,6,10".
    #[arg(long)]
    loads: Option<String>,
    /// Routes computed per destination.
    #[arg(short = 'k', long = "k-routes")]
    k_routes: Option<usize>,
    /// Run seeds, e.g. "0..=4".
    #[arg(long)]
    seeds: Option<String>,
    /// Also solve the flow oracle for every (plan, load).
    #[arg(long, overrides_with = "no_oracle")]
    oracle: bool,
    #[arg(long)]
    no_oracle: bool,
    /// Worker threads (0: one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Number of random candidate plans.
    #[arg(long)]
    candidates: Option<u64>,
    /// Stop after this many kept plans.
    #[arg(long)]
    target_plans: Option<usize>,
    /// Write one NDJSON event log per run.
    #[arg(long)]
    events: bool,
    /// External solver command; `{model}` and `{solution}` are replaced by file paths.
    #[arg(long)]
    solver_cmd: Option<String>,
    #[arg(long)]
    solver_timeout: Option<f64>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            policies: self.policies.clone(),
            loads: self.loads.clone(),
            k_routes: self.k_routes,
            seeds: self.seeds.clone(),
            oracle: match (self.oracle, self.no_oracle) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            },
            workers: self.workers,
            candidates: self.candidates,
            target_plans: self.target_plans,
            events: self.events.then_some(true),
            solver_command: self.solver_cmd.clone(),
            solver_timeout_secs: self.solver_timeout,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, flags } => {
            let cfg = ScenarioConfig::load(&config, &flags.overrides())?;
            let summary = cmd_run(&cfg)?;
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
            eprintln!(
                "{} runs over {} plan(s) -> {}, {}",
                summary.rows.len(),
                summary.plans,
                cfg.output.runs.display(),
                cfg.output.aggregate.display()
            );
        }
        Command::Filter { config, flags } => {
            let cfg = ScenarioConfig::load(&config, &flags.overrides())?;
            let entries = cmd_filter(&cfg)?;
            let count = |s| entries.iter().filter(|e| e.status == s).count();
            eprintln!(
                "{} candidates: {} kept, {} excluded, {} errors -> {}",
                entries.len(),
                count(FilterStatus::Kept),
                count(FilterStatus::Excluded),
                count(FilterStatus::ExcludedError),
                cfg.output.manifest.display()
            );
        }
        Command::ExportLp {
            config,
            load,
            plan_seed,
            output,
            flags,
        } => {
            let cfg = ScenarioConfig::load(&config, &flags.overrides())?;
            cmd_export_lp(&cfg, load, plan_seed, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cgrsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
