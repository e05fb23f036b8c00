//! Experiment orchestration for `cgrsim`: scenario files, load sweeps over
//! routing policies, the feasibility filter and CSV reports.

pub mod config;
pub mod experiment;
pub mod report;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use cgrsim::contact_plan::discretize;
use cgrsim::oracle::{build_ilp, commodities_from_traffic};

use config::{PlanSource, ScenarioConfig};
use experiment::{filter_candidates, resolve_plans, run_matrix, FilterStatus, ManifestEntry, RunRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("solver error: {0}")]
    Solver(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Solver(_) => 4,
        }
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    fill(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub plans: usize,
    pub rows: Vec<RunRow>,
    pub notes: Vec<String>,
}

/// Runs the experiment matrix and writes the run and aggregate CSVs (and
/// event logs when enabled).
pub fn cmd_run(cfg: &ScenarioConfig) -> Result<RunSummary, CliError> {
    let plans = resolve_plans(cfg)?;
    let outcomes = run_matrix(cfg, &plans)?;
    let rows: Vec<RunRow> = outcomes.iter().filter_map(|o| o.row.clone()).collect();
    let notes = outcomes.iter().filter_map(|o| o.note.clone()).collect();

    write_file(&cfg.output.runs, |w| report::write_runs(&rows, w))?;
    let agg = report::aggregate(&rows);
    write_file(&cfg.output.aggregate, |w| report::write_aggregate(&agg, w))?;
    if let Some(dir) = &cfg.output.events_dir {
        for o in &outcomes {
            if let (Some(row), Some(log)) = (&o.row, &o.log) {
                let name = format!(
                    "{}_p{}_l{}_{}_s{}.ndjson",
                    row.scenario_id,
                    row.plan_seed.map_or("file".to_string(), |s| s.to_string()),
                    row.load,
                    row.w.map_or(row.policy.clone(), |w| format!("{}{w}", row.policy)),
                    row.run_seed.unwrap_or(0),
                );
                write_file(&dir.join(name), |w| log.write_ndjson(w))?;
            }
        }
    }
    Ok(RunSummary {
        plans: plans.len(),
        rows,
        notes,
    })
}

/// Classifies generated candidates at the highest load and writes the
/// manifest plus every kept plan.
pub fn cmd_filter(cfg: &ScenarioConfig) -> Result<Vec<ManifestEntry>, CliError> {
    let PlanSource::Random(random) = &cfg.plan else {
        return Err(CliError::Config("filter needs a [plan.random] section".into()));
    };
    let results = filter_candidates(cfg, random)?;
    for (entry, plan) in &results {
        if entry.status == FilterStatus::Kept {
            let path = cfg.output.plans_dir.join(format!("plan_{}.txt", entry.seed));
            write_file(&path, |w| w.write_all(plan.to_plan_string().as_bytes()))?;
        }
    }
    let entries: Vec<ManifestEntry> = results.into_iter().map(|(e, _)| e).collect();
    write_file(&cfg.output.manifest, |w| report::write_manifest(&entries, w))?;
    Ok(entries)
}

/// Writes the per-demand flow model for one plan and load in LP format.
/// `plan_seed` picks a generated plan (the first seed by default).
pub fn cmd_export_lp(cfg: &ScenarioConfig, load: u64, plan_seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let plan = match &cfg.plan {
        PlanSource::File(_) => resolve_plans(cfg)?.remove(0).plan,
        PlanSource::Random(r) => r
            .params
            .generate(plan_seed.unwrap_or(r.first_seed))
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let traffic = cfg.traffic.traffic(load);
    traffic.validate(&plan).map_err(|e| CliError::Config(e.to_string()))?;
    let timeline = discretize(&plan, &traffic.generation_times()).map_err(|e| CliError::Config(e.to_string()))?;
    let commodities = commodities_from_traffic(&traffic, &timeline).map_err(|e| CliError::Config(e.to_string()))?;
    let model = build_ilp(&timeline, &cfg.node_specs, &commodities).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(out, |w| milp::write_lp(model.problem(), w))
}
