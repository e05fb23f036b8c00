//! Plan resolution, feasibility filtering and the run matrix.

use std::collections::BTreeMap;
use std::fs;

use cgrsim::contact_plan::{parse_contact_plan, ContactPlan, NodeId};
use cgrsim::forwarding::Policy;
use cgrsim::oracle::{feasibility_filter, flows_to_metrics, solve_scenario, FilterOutcome};
use cgrsim::sim::{compute_metrics, run_simulation, EventLog, MetricsReport, SimSettings};
use rayon::prelude::*;

use crate::config::{PlanSource, RandomPlans, ScenarioConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanInstance {
    /// Generator seed; `None` for a plan read from a file.
    pub seed: Option<u64>,
    pub plan: ContactPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterStatus {
    Kept,
    Excluded,
    ExcludedError,
}

impl FilterStatus {
    pub fn label(self) -> &'static str {
        match self {
            FilterStatus::Kept => "KEPT",
            FilterStatus::Excluded => "EXCLUDED",
            FilterStatus::ExcludedError => "EXCLUDED-ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub seed: u64,
    pub status: FilterStatus,
    pub objective: Option<i64>,
    pub detail: String,
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

/// Generates every candidate and runs the oracle on it at the highest load.
pub fn filter_candidates(cfg: &ScenarioConfig, random: &RandomPlans) -> Result<Vec<(ManifestEntry, ContactPlan)>, CliError> {
    let traffic = cfg.traffic.traffic(cfg.max_load());
    let seeds: Vec<u64> = random.seeds().collect();
    let plans = seeds
        .iter()
        .map(|&s| random.params.generate(s).map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes: Vec<FilterOutcome> = pool(cfg.workers)?.install(|| {
        plans
            .par_iter()
            .map(|p| feasibility_filter(std::slice::from_ref(p), &traffic, &cfg.backend).remove(0))
            .collect()
    });
    Ok(seeds
        .into_iter()
        .zip(outcomes)
        .zip(plans)
        .map(|((seed, outcome), plan)| {
            let (status, objective, detail) = match outcome {
                FilterOutcome::Kept { objective } => (FilterStatus::Kept, Some(objective), String::new()),
                FilterOutcome::Excluded => (FilterStatus::Excluded, None, "infeasible".to_string()),
                FilterOutcome::ExcludedError(e) => (FilterStatus::ExcludedError, None, e),
            };
            (ManifestEntry { seed, status, objective, detail }, plan)
        })
        .collect())
}

/// The plans an experiment runs on.
pub fn resolve_plans(cfg: &ScenarioConfig) -> Result<Vec<PlanInstance>, CliError> {
    match &cfg.plan {
        PlanSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let plan = parse_contact_plan(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(vec![PlanInstance { seed: None, plan }])
        }
        PlanSource::Random(random) if random.filter => {
            let kept = filter_candidates(cfg, random)?
                .into_iter()
                .filter(|(m, _)| m.status == FilterStatus::Kept)
                .map(|(m, plan)| PlanInstance { seed: Some(m.seed), plan });
            Ok(match random.target_plans {
                Some(n) => kept.take(n).collect(),
                None => kept.collect(),
            })
        }
        PlanSource::Random(random) => {
            let plans = random.seeds().map(|s| {
                let plan = random.params.generate(s).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(PlanInstance { seed: Some(s), plan })
            });
            match random.target_plans {
                Some(n) => plans.take(n).collect(),
                None => plans.collect(),
            }
        }
    }
}

/// One line of the per-run CSV. Oracle rows have policy `ILP` and no
/// weight, K or run seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub scenario_id: String,
    pub plan_seed: Option<u64>,
    pub load: u64,
    pub policy: String,
    pub w: Option<f64>,
    pub k: Option<usize>,
    pub run_seed: Option<u64>,
    pub delivery_ratio: f64,
    pub dropped_total: u64,
    pub dropped_per_node: BTreeMap<NodeId, u64>,
    pub mean_hops: Option<f64>,
    pub energy_efficiency: Option<f64>,
    pub mean_delay: Option<f64>,
    pub mean_delay_ttl_finite: Option<f64>,
    pub mean_delay_ttl_inf: Option<f64>,
    pub generated: u64,
    pub delivered_on_time: u64,
    pub delivered_late: u64,
    pub residual: u64,
}

pub const ORACLE_POLICY: &str = "ILP";

impl RunRow {
    fn new(
        cfg: &ScenarioConfig,
        plan: &PlanInstance,
        load: u64,
        policy: Option<Policy>,
        run_seed: Option<u64>,
        m: &MetricsReport,
    ) -> Self {
        Self {
            scenario_id: cfg.scenario_id.clone(),
            plan_seed: plan.seed,
            load,
            policy: policy.map_or(ORACLE_POLICY.to_string(), |p| p.kind().to_string()),
            w: policy.and_then(|p| p.weight()),
            k: policy.map(|_| cfg.k_routes),
            run_seed,
            delivery_ratio: m.delivery_ratio,
            dropped_total: m.dropped,
            dropped_per_node: m.dropped_per_node.clone(),
            mean_hops: m.mean_hops,
            energy_efficiency: m.energy_efficiency,
            mean_delay: m.mean_delay,
            mean_delay_ttl_finite: m.mean_delay_ttl_finite,
            mean_delay_ttl_inf: m.mean_delay_ttl_inf,
            generated: m.generated,
            delivered_on_time: m.delivered_on_time,
            delivered_late: m.delivered_late,
            residual: m.residual,
        }
    }

    pub fn is_oracle(&self) -> bool {
        self.policy == ORACLE_POLICY
    }
}

#[derive(Debug, Clone, Copy)]
enum Job<'a> {
    Oracle { plan: &'a PlanInstance, load: u64 },
    Sim { plan: &'a PlanInstance, load: u64, policy: Policy, seed: u64 },
}

/// A finished job: its row (absent when the oracle finds the load
/// infeasible) and, for simulations, the event log.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: Option<RunRow>,
    pub log: Option<EventLog>,
    pub note: Option<String>,
}

fn run_job(cfg: &ScenarioConfig, job: Job<'_>) -> Result<RunOutcome, CliError> {
    match job {
        Job::Oracle { plan, load } => {
            let traffic = cfg.traffic.traffic(load);
            let (model, sol) = solve_scenario(&plan.plan, &traffic, &cfg.node_specs, &cfg.backend)
                .map_err(|e| CliError::Solver(format!("plan {:?}, load {load}: {e}", plan.seed)))?;
            if !sol.is_optimal() {
                return Ok(RunOutcome {
                    row: None,
                    log: None,
                    note: Some(format!("oracle infeasible for plan {:?} at load {load}", plan.seed)),
                });
            }
            let m = flows_to_metrics(&sol, &model).map_err(|e| CliError::Solver(e.to_string()))?;
            Ok(RunOutcome {
                row: Some(RunRow::new(cfg, plan, load, None, None, &m)),
                log: None,
                note: None,
            })
        }
        Job::Sim { plan, load, policy, seed } => {
            let traffic = cfg.traffic.traffic(load);
            let settings = SimSettings {
                k_routes: cfg.k_routes,
                seed,
            };
            let log = run_simulation(&plan.plan, &traffic, policy, &cfg.node_specs, &settings)
                .map_err(|e| CliError::Config(format!("plan {:?}, load {load}, {policy}: {e}", plan.seed)))?;
            let m = compute_metrics(&log);
            Ok(RunOutcome {
                row: Some(RunRow::new(cfg, plan, load, Some(policy), Some(seed), &m)),
                log: Some(log),
                note: None,
            })
        }
    }
}

/// Runs every (plan, load, policy, seed) simulation, plus one oracle solve
/// per (plan, load) when enabled. Results come back in matrix order
/// whatever the number of workers.
pub fn run_matrix(cfg: &ScenarioConfig, plans: &[PlanInstance]) -> Result<Vec<RunOutcome>, CliError> {
    let mut jobs = Vec::new();
    for plan in plans {
        for &load in &cfg.loads {
            if cfg.oracle {
                jobs.push(Job::Oracle { plan, load });
            }
            for &policy in &cfg.policies {
                for &seed in &cfg.seeds {
                    jobs.push(Job::Sim { plan, load, policy, seed });
                }
            }
        }
    }
    pool(cfg.workers)?.install(|| jobs.par_iter().map(|&job| run_job(cfg, job)).collect())
}
