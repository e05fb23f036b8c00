//! Scenario files (TOML) and command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use cgrsim::contact_plan::{BufferCapacity, NodeId, NodeSpec, RandomNetwork};
use cgrsim::forwarding::{Policy, Ttl};
use cgrsim::oracle::SolverBackend;
use cgrsim::sim::{Demand, TrafficModel};
use milp::{ExternalSolver, SolveOptions};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum IntList {
    List(Vec<u64>),
    /// `"a..=b"` or a comma list.
    Text(String),
}

impl IntList {
    fn resolve(&self, what: &str) -> Result<Vec<u64>, CliError> {
        match self {
            IntList::List(v) => Ok(v.clone()),
            IntList::Text(s) => parse_int_list(s).map_err(|e| CliError::Config(format!("{what}: {e}"))),
        }
    }
}

/// Parses `"3,6,10"`, `"1..=10"` or a mix such as `"1..=3,7"`.
pub fn parse_int_list(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in {part:?}"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in {part:?}"))?;
            if a > b {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("not an integer: {part:?}"))?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario_id: Option<String>,
    plan: PlanSection,
    traffic: TrafficSection,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    oracle: OracleSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    node: Vec<NodeEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSection {
    file: Option<PathBuf>,
    random: Option<RandomSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RandomSection {
    n_nodes: u32,
    n_states: u32,
    state_duration: f64,
    density: f64,
    capacity: u64,
    first_seed: u64,
    candidates: u64,
    filter: bool,
    target_plans: Option<usize>,
}

impl Default for RandomSection {
    fn default() -> Self {
        let net = RandomNetwork::default();
        Self {
            n_nodes: net.n_nodes,
            n_states: net.n_states,
            state_duration: net.state_duration,
            density: net.density,
            capacity: net.capacity,
            first_seed: 0,
            candidates: 100,
            filter: true,
            target_plans: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrafficSection {
    loads: IntList,
    #[serde(default)]
    generation_time: f64,
    flow: Vec<FlowSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowSection {
    sources: IntList,
    destinations: IntList,
    ttl: OneOrMany<Ttl>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunSection {
    policies: Vec<String>,
    k: usize,
    seeds: IntList,
    workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            policies: ["deltime", "hops", "mo:0.25", "mo:0.5", "mo:0.75"].map(String::from).to_vec(),
            k: 20,
            seeds: IntList::List(vec![0]),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OracleSection {
    enabled: bool,
    backend: String,
    command: Option<String>,
    timeout_secs: Option<f64>,
    node_limit: Option<usize>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            enabled: false,
            backend: "builtin".into(),
            command: None,
            timeout_secs: None,
            node_limit: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OutputSection {
    dir: PathBuf,
    runs: String,
    aggregate: String,
    manifest: String,
    plans_dir: String,
    events: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            runs: "runs.csv".into(),
            aggregate: "aggregate.csv".into(),
            manifest: "manifest.csv".into(),
            plans_dir: "plans".into(),
            events: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: u32,
    buffer: u64,
}

/// Values given on the command line; each one replaces the file's.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub policies: Option<Vec<String>>,
    pub loads: Option<String>,
    pub k_routes: Option<usize>,
    pub seeds: Option<String>,
    pub oracle: Option<bool>,
    pub workers: Option<usize>,
    pub candidates: Option<u64>,
    pub target_plans: Option<usize>,
    pub events: Option<bool>,
    pub solver_command: Option<String>,
    pub solver_timeout_secs: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum PlanSource {
    File(PathBuf),
    Random(RandomPlans),
}

#[derive(Debug, Clone)]
pub struct RandomPlans {
    pub params: RandomNetwork,
    pub first_seed: u64,
    pub candidates: u64,
    /// Keep only plans the oracle can serve at the highest load.
    pub filter: bool,
    /// Stop after this many kept plans (in seed order).
    pub target_plans: Option<usize>,
}

impl RandomPlans {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let first = self.first_seed;
        (0..self.candidates).map(move |i| first + i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub sources: Vec<NodeId>,
    pub destinations: Vec<NodeId>,
    /// The load of each (source, destination) pair is split evenly over these.
    pub ttls: Vec<Ttl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub flows: Vec<FlowSpec>,
    pub generation_time: f64,
}

impl TrafficSpec {
    /// Demands when every (source, destination) pair carries `load` packets.
    pub fn traffic(&self, load: u64) -> TrafficModel {
        let mut demands = Vec::new();
        for flow in &self.flows {
            let m = flow.ttls.len() as u64;
            for &src in &flow.sources {
                for &dst in flow.destinations.iter().filter(|&&d| d != src) {
                    for (i, &ttl) in flow.ttls.iter().enumerate() {
                        let count = load / m + u64::from((i as u64) < load % m);
                        if count > 0 {
                            demands.push(Demand {
                                src,
                                dst,
                                count,
                                t_gen: self.generation_time,
                                ttl,
                            });
                        }
                    }
                }
            }
        }
        TrafficModel::new(demands)
    }
}

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub runs: PathBuf,
    pub aggregate: PathBuf,
    pub manifest: PathBuf,
    pub plans_dir: PathBuf,
    pub events_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub plan: PlanSource,
    pub traffic: TrafficSpec,
    pub loads: Vec<u64>,
    pub policies: Vec<Policy>,
    pub k_routes: usize,
    pub seeds: Vec<u64>,
    pub node_specs: Vec<NodeSpec>,
    /// Whether `run` also solves the flow oracle per (plan, load).
    pub oracle: bool,
    pub backend: SolverBackend,
    pub output: OutputPaths,
    /// 0 picks one per core.
    pub workers: usize,
}

impl ScenarioConfig {
    pub fn max_load(&self) -> u64 {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    /// Reads a scenario file; relative plan paths resolve against its directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let default_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_toml(&text, base, &default_id, overrides)
    }

    pub fn from_toml(text: &str, base: &Path, default_id: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        resolve(file, base, default_id, overrides)
    }
}

fn node_list(list: &IntList, what: &str) -> Result<Vec<NodeId>, CliError> {
    let ids = list.resolve(what)?;
    if ids.is_empty() {
        return Err(CliError::Config(format!("{what} is empty")));
    }
    ids.into_iter()
        .map(|v| {
            u32::try_from(v)
                .ok()
                .filter(|&v| v > 0)
                .map(NodeId)
                .ok_or_else(|| CliError::Config(format!("{what}: invalid node id {v}")))
        })
        .collect()
}

fn resolve(file: FileConfig, base: &Path, default_id: &str, ov: &Overrides) -> Result<ScenarioConfig, CliError> {
    let config = |m: String| CliError::Config(m);

    let plan = match (&file.plan.file, &file.plan.random) {
        (Some(p), None) => PlanSource::File(base.join(p)),
        (None, Some(r)) => {
            let params = RandomNetwork {
                n_nodes: r.n_nodes,
                n_states: r.n_states,
                state_duration: r.state_duration,
                density: r.density,
                capacity: r.capacity,
            };
            params.validate().map_err(|e| config(e.to_string()))?;
            PlanSource::Random(RandomPlans {
                params,
                first_seed: r.first_seed,
                candidates: ov.candidates.unwrap_or(r.candidates),
                filter: r.filter,
                target_plans: ov.target_plans.or(r.target_plans),
            })
        }
        _ => return Err(config("[plan] needs exactly one of `file` or `random`".into())),
    };

    let loads = match &ov.loads {
        Some(s) => parse_int_list(s).map_err(|e| config(format!("loads: {e}")))?,
        None => file.traffic.loads.resolve("loads")?,
    };
    if loads.is_empty() {
        return Err(config("load list is empty".into()));
    }
    if !(file.traffic.generation_time.is_finite() && file.traffic.generation_time >= 0.0) {
        return Err(config("generation_time must be a non-negative number".into()));
    }
    if file.traffic.flow.is_empty() {
        return Err(config("traffic needs at least one [[traffic.flow]]".into()));
    }
    let flows = file
        .traffic
        .flow
        .iter()
        .map(|f| {
            let ttls = f.ttl.to_vec();
            if ttls.is_empty() {
                return Err(config("flow ttl list is empty".into()));
            }
            Ok(FlowSpec {
                sources: node_list(&f.sources, "sources")?,
                destinations: node_list(&f.destinations, "destinations")?,
                ttls,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let policy_names = ov.policies.clone().unwrap_or(file.run.policies);
    if policy_names.is_empty() {
        return Err(config("policy list is empty".into()));
    }
    let policies = policy_names
        .iter()
        .map(|p| p.parse::<Policy>().map_err(|e| config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let seeds = match &ov.seeds {
        Some(s) => parse_int_list(s).map_err(|e| config(format!("seeds: {e}")))?,
        None => file.run.seeds.resolve("seeds")?,
    };
    if seeds.is_empty() {
        return Err(config("seed list is empty".into()));
    }
    let k_routes = ov.k_routes.unwrap_or(file.run.k);
    if k_routes == 0 {
        return Err(config("k must be at least 1".into()));
    }

    let node_specs = file
        .node
        .iter()
        .map(|n| NodeSpec {
            id: NodeId(n.id),
            buffer: BufferCapacity::Packets(n.buffer),
        })
        .collect();

    let o = &file.oracle;
    let timeout = ov.solver_timeout_secs.or(o.timeout_secs);
    if let Some(t) = timeout {
        if !(t.is_finite() && t > 0.0) {
            return Err(config("solver timeout must be positive".into()));
        }
    }
    let command = ov.solver_command.clone().or(o.command.clone());
    let backend_name = if ov.solver_command.is_some() { "external" } else { o.backend.as_str() };
    let backend = match backend_name {
        "builtin" => SolverBackend::Builtin(SolveOptions {
            time_limit: timeout.map(Duration::from_secs_f64),
            node_limit: o.node_limit.unwrap_or(SolveOptions::default().node_limit),
            ..SolveOptions::default()
        }),
        "external" => SolverBackend::External(ExternalSolver {
            command: command.ok_or_else(|| config("external backend needs `command`".into()))?,
            timeout: Duration::from_secs_f64(timeout.unwrap_or(600.0)),
        }),
        other => return Err(config(format!("unknown solver backend {other:?}"))),
    };

    let out = &file.output;
    let dir = ov.out_dir.clone().unwrap_or(out.dir.clone());
    let output = OutputPaths {
        runs: dir.join(&out.runs),
        aggregate: dir.join(&out.aggregate),
        manifest: dir.join(&out.manifest),
        plans_dir: dir.join(&out.plans_dir),
        events_dir: ov.events.unwrap_or(out.events).then(|| dir.join("events")),
        dir,
    };

    Ok(ScenarioConfig {
        scenario_id: file.scenario_id.unwrap_or_else(|| default_id.to_string()),
        plan,
        traffic: TrafficSpec {
            flows,
            generation_time: file.traffic.generation_time,
        },
        loads,
        policies,
        k_routes,
        seeds,
        node_specs,
        oracle: ov.oracle.unwrap_or(o.enabled),
        backend,
        output,
        workers: ov.workers.unwrap_or(file.run.workers),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [plan]
        file = "net.plan"
        [traffic]
        loads = "1..=3"
        [[traffic.flow]]
        sources = [1, 2]
        destinations = [3]
        ttl = [20, "inf"]
    "#;

    fn load(text: &str, ov: &Overrides) -> Result<ScenarioConfig, CliError> {
        ScenarioConfig::from_toml(text, Path::new("/cfg"), "minimal", ov)
    }

    #[test]
    fn defaults_and_paths() {
        let cfg = load(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(cfg.scenario_id, "minimal");
        assert!(matches!(&cfg.plan, PlanSource::File(p) if p == Path::new("/cfg/net.plan")));
        assert_eq!(cfg.loads, vec![1, 2, 3]);
        assert_eq!(cfg.policies.len(), 5);
        assert_eq!((cfg.k_routes, cfg.seeds.clone(), cfg.oracle), (20, vec![0], false));
        assert_eq!(cfg.output.runs, Path::new("results/runs.csv"));
    }

    #[test]
    fn load_splits_over_ttls() {
        let cfg = load(MINIMAL, &Overrides::default()).unwrap();
        let t = cfg.traffic.traffic(3);
        let counts: Vec<(u32, u64, Ttl)> = t.demands.iter().map(|d| (d.src.0, d.count, d.ttl)).collect();
        assert_eq!(
            counts,
            vec![(1, 2, Ttl::Finite(20.0)), (1, 1, Ttl::Infinite), (2, 2, Ttl::Finite(20.0)), (2, 1, Ttl::Infinite)]
        );
        assert_eq!(cfg.traffic.traffic(1).total_packets(), 2);
    }

    #[test]
    fn overrides_win() {
        let ov = Overrides {
            policies: Some(vec!["hops".into()]),
            loads: Some("5,7".into()),
            k_routes: Some(3),
            out_dir: Some("/tmp/x".into()),
            oracle: Some(true),
            ..Overrides::default()
        };
        let cfg = load(MINIMAL, &ov).unwrap();
        assert_eq!(cfg.policies, vec![Policy::Hops]);
        assert_eq!(cfg.loads, vec![5, 7]);
        assert_eq!(cfg.k_routes, 3);
        assert!(cfg.oracle);
        assert_eq!(cfg.output.aggregate, Path::new("/tmp/x/aggregate.csv"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            MINIMAL.replace("[plan]", "[run]\npolicies = []\n[plan]"),
            MINIMAL.replace("[plan]", "[run]\npolicies = [\"mo:1.5\"]\n[plan]"),
            MINIMAL.replace("loads = \"1..=3\"", "loads = []"),
            MINIMAL.replace("file = \"net.plan\"", ""),
            MINIMAL.replace("ttl = [20, \"inf\"]", "ttl = -4"),
            format!("{MINIMAL}\nbogus = 1\n"),
        ];
        for text in cases {
            assert!(matches!(load(&text, &Overrides::default()), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn int_lists() {
        assert_eq!(parse_int_list("1..=3, 7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_int_list("3..=1").is_err());
        assert!(parse_int_list("x").is_err());
    }
}
