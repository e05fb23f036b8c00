//! Optimal multi-commodity flow over the state timeline.
//!
//! Each commodity is one demand. Variables `X[q, e, d]` carry flow of
//! commodity `d` over arc `e` during state `k_q`; `B[q, v, d]` is what node
//! `v` holds of it at timestamp `t_q`. The objective charges every unit sent
//! in state `k_q` the weight `w(k_q)`.
//!
//! Variables that no unit of a commodity can use (not reachable from its
//! source, or unable to reach the destination by the deadline) are left out
//! of the model; they would be zero in every feasible point.
//!
//! The built-in backend solves a smaller equivalent model in which demands
//! with the same destination and deadline share one flow class, then splits
//! the class flow back into commodities and checks the result exactly
//! against the per-demand model.

use std::collections::{BTreeMap, BTreeSet};

use milp::{ExternalSolver, Problem, Sense, SolveError, SolveOptions, Status, VarId, Violation};

use crate::contact_plan::{discretize, BufferCapacity, ContactId, ContactPlan, NodeId, NodeSpec, PlanError, StateArc, StateTimeline};
use crate::forwarding::Ttl;
use crate::sim::{report_from, MetricsReport, TrafficModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("demand {demand} is generated at {time}, which is not a timeline timestamp")]
    UnalignedDemand { demand: usize, time: f64 },
    #[error("invalid commodity: {0}")]
    InvalidCommodity(String),
    #[error("invalid state weights: {0}")]
    InvalidWeights(String),
    #[error("solution is not optimal")]
    NotOptimal,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Solver(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Commodity {
    pub id: usize,
    pub src: NodeId,
    pub dst: NodeId,
    /// Timestamp index of generation.
    pub t_gen: usize,
    pub ttl: Ttl,
    pub amount: u64,
    /// Timestamp index by which everything must sit at `dst`.
    pub deadline_ts: usize,
}

/// Earliest timestamp index at or after `t_gen + ttl`, or the last one.
pub fn deadline_index(timeline: &StateTimeline, t_gen: usize, ttl: Ttl) -> usize {
    let ts = timeline.timestamps();
    match ttl {
        Ttl::Infinite => timeline.final_index(),
        Ttl::Finite(ttl) => {
            let due = ts[t_gen] + ttl;
            ts.iter().position(|&t| t >= due).unwrap_or(timeline.final_index())
        }
    }
}

/// One commodity per demand, numbered in demand order.
pub fn commodities_from_traffic(traffic: &TrafficModel, timeline: &StateTimeline) -> Result<Vec<Commodity>, OracleError> {
    traffic
        .demands
        .iter()
        .enumerate()
        .map(|(id, d)| {
            let t_gen = timeline
                .timestamp_index(d.t_gen)
                .ok_or(OracleError::UnalignedDemand { demand: id, time: d.t_gen })?;
            Ok(Commodity {
                id,
                src: d.src,
                dst: d.dst,
                t_gen,
                ttl: d.ttl,
                amount: d.count,
                deadline_ts: deadline_index(timeline, t_gen, d.ttl),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum StateWeights {
    /// `w(k_q) = q`.
    #[default]
    Linear,
    /// One weight per state, positive and strictly increasing.
    Custom(Vec<i64>),
}

impl StateWeights {
    fn resolve(&self, num_states: usize) -> Result<Vec<i64>, OracleError> {
        match self {
            StateWeights::Linear => Ok((1..=num_states as i64).collect()),
            StateWeights::Custom(w) => {
                if w.len() != num_states {
                    return Err(OracleError::InvalidWeights(format!("{} weights for {num_states} states", w.len())));
                }
                if w.first().is_some_and(|&x| x <= 0) || w.windows(2).any(|p| p[0] >= p[1]) {
                    return Err(OracleError::InvalidWeights("weights must be positive and strictly increasing".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcKey {
    /// State index `q` of `k_q`, from 1.
    pub state: usize,
    pub contact: ContactId,
    pub commodity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BufferKey {
    pub timestamp: usize,
    pub node: NodeId,
    pub commodity: usize,
}

/// Demands that are interchangeable inside the model: same destination and
/// deadline. A per-demand model has one class per commodity.
struct FlowClass {
    label: usize,
    dst: NodeId,
    deadline: usize,
    finite: bool,
    /// (timestamp, node, amount)
    injections: Vec<(usize, NodeId, i64)>,
}

impl FlowClass {
    fn injected(&self, q: usize, v: NodeId) -> i64 {
        self.injections.iter().filter(|i| i.0 == q && i.1 == v).map(|i| i.2).sum()
    }

    fn total(&self) -> i64 {
        self.injections.iter().map(|i| i.2).sum()
    }
}

struct Assembled {
    problem: Problem,
    x: BTreeMap<ArcKey, VarId>,
    b: BTreeMap<BufferKey, VarId>,
}

fn usable(arcs: &[StateArc]) -> impl Iterator<Item = &StateArc> {
    arcs.iter().filter(|a| a.capacity > 0)
}

fn forward_closure(arcs: &[StateArc], start: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let mut seen = start.clone();
    let mut stack: Vec<NodeId> = start.iter().copied().collect();
    while let Some(u) = stack.pop() {
        for a in usable(arcs).filter(|a| a.from == u) {
            if seen.insert(a.to) {
                stack.push(a.to);
            }
        }
    }
    seen
}

fn backward_closure(arcs: &[StateArc], start: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let mut seen = start.clone();
    let mut stack: Vec<NodeId> = start.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for a in usable(arcs).filter(|a| a.to == v) {
            if seen.insert(a.from) {
                stack.push(a.from);
            }
        }
    }
    seen
}

fn assemble(
    name: &str,
    timeline: &StateTimeline,
    buffers: &BTreeMap<NodeId, BufferCapacity>,
    weights: &[i64],
    classes: &[FlowClass],
) -> Assembled {
    let f = timeline.final_index();
    let nodes: Vec<NodeId> = timeline.nodes().iter().copied().collect();
    let mut problem = Problem::new(name);
    let mut xv = BTreeMap::new();
    let mut bv = BTreeMap::new();

    for class in classes {
        let d = class.label;
        let z = class.dst;
        let sources_at = |q: usize| -> BTreeSet<NodeId> {
            class.injections.iter().filter(|i| i.0 == q).map(|i| i.1).collect()
        };
        let mut held = vec![sources_at(0)];
        let mut moving = vec![BTreeSet::new()];
        for q in 1..=f {
            let reach = forward_closure(&timeline.state(q).arcs, &held[q - 1]);
            held.push(reach.union(&sources_at(q)).copied().collect());
            moving.push(reach);
        }
        let mut back = vec![BTreeSet::new(); f + 1];
        for q in (0..=f).rev() {
            back[q] = if q >= class.deadline {
                BTreeSet::from([z])
            } else {
                backward_closure(&timeline.state(q + 1).arcs, &back[q + 1])
            };
        }

        for q in 0..=f {
            if q > 0 && q <= class.deadline {
                for a in usable(&timeline.state(q).arcs) {
                    if moving[q].contains(&a.from) && back[q - 1].contains(&a.to) {
                        let id = problem.add_int_var(
                            format!("X_k{q}_e{}_d{d}", a.contact.0),
                            0,
                            Some(a.capacity as i64),
                            weights[q - 1],
                        );
                        xv.insert(ArcKey { state: q, contact: a.contact, commodity: d }, id);
                    }
                }
            }
            for &v in &nodes {
                let keep = (held[q].contains(&v) && back[q].contains(&v))
                    || class.injected(q, v) > 0
                    || (q >= class.deadline && v == z);
                if keep {
                    let id = problem.add_int_var(format!("B_t{q}_v{v}_d{d}"), 0, None, 0);
                    bv.insert(BufferKey { timestamp: q, node: v, commodity: d }, id);
                }
            }
        }
    }

    let mut rows: Vec<(String, Vec<(VarId, i64)>, Sense, i64)> = Vec::new();
    let b_of = |q: usize, v: NodeId, d: usize| bv.get(&BufferKey { timestamp: q, node: v, commodity: d }).copied();

    for class in classes {
        let d = class.label;
        let total = class.total();
        for &v in &nodes {
            let terms: Vec<_> = b_of(0, v, d).map(|b| (b, 1)).into_iter().collect();
            rows.push((format!("init_v{v}_d{d}"), terms, Sense::Eq, class.injected(0, v)));
        }
        for q in 1..=f {
            let arcs = &timeline.state(q).arcs;
            for &v in &nodes {
                let mut terms = Vec::new();
                terms.extend(b_of(q, v, d).map(|b| (b, 1)));
                terms.extend(b_of(q - 1, v, d).map(|b| (b, -1)));
                for a in arcs {
                    let Some(&x) = xv.get(&ArcKey { state: q, contact: a.contact, commodity: d }) else {
                        continue;
                    };
                    if a.to == v {
                        terms.push((x, -1));
                    }
                    if a.from == v {
                        terms.push((x, 1));
                    }
                }
                rows.push((format!("cons_t{q}_v{v}_d{d}"), terms, Sense::Eq, class.injected(q, v)));
            }
        }
        for &(q, y, _) in &class.injections {
            if q > 0 {
                let terms = b_of(q, y, d).map(|b| (b, 1)).into_iter().collect();
                rows.push((format!("src_t{q}_v{y}_d{d}"), terms, Sense::Ge, class.injected(q, y)));
            }
        }
        for &v in &nodes {
            let terms = b_of(f, v, d).map(|b| (b, 1)).into_iter().collect();
            let rhs = if v == class.dst { total } else { 0 };
            rows.push((format!("final_v{v}_d{d}"), terms, Sense::Eq, rhs));
        }
        if class.finite {
            let at = |q| b_of(q, class.dst, d).map(|b| (b, 1)).into_iter().collect::<Vec<_>>();
            rows.push((format!("deadline_t{}_d{d}", class.deadline), at(class.deadline), Sense::Eq, total));
            for q in class.deadline + 1..=f {
                rows.push((format!("retain_t{q}_d{d}"), at(q), Sense::Ge, total));
            }
        }
    }
    for q in 0..=f {
        for &v in &nodes {
            if let Some(&BufferCapacity::Packets(cap)) = buffers.get(&v) {
                let terms = classes.iter().filter_map(|c| b_of(q, v, c.label)).map(|b| (b, 1)).collect();
                rows.push((format!("buf_t{q}_v{v}"), terms, Sense::Le, cap as i64));
            }
        }
    }
    for q in 1..=f {
        for a in &timeline.state(q).arcs {
            let terms = classes
                .iter()
                .filter_map(|c| xv.get(&ArcKey { state: q, contact: a.contact, commodity: c.label }))
                .map(|&x| (x, 1))
                .collect();
            rows.push((format!("arc_k{q}_e{}", a.contact.0), terms, Sense::Le, a.capacity as i64));
        }
    }

    for (name, terms, sense, rhs) in rows {
        // rows over pruned variables only are kept when they cannot hold
        let trivial = terms.is_empty() && sense.holds(0, rhs as i128);
        if !trivial {
            problem.add_constraint(name, terms, sense, rhs);
        }
    }
    Assembled { problem, x: xv, b: bv }
}

/// The per-demand flow model and everything needed to audit its solutions.
#[derive(Debug, Clone)]
pub struct IlpModel {
    problem: Problem,
    timeline: StateTimeline,
    buffers: BTreeMap<NodeId, BufferCapacity>,
    commodities: Vec<Commodity>,
    weights: Vec<i64>,
    x_vars: BTreeMap<ArcKey, VarId>,
    b_vars: BTreeMap<BufferKey, VarId>,
}

impl IlpModel {
    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn timeline(&self) -> &StateTimeline {
        &self.timeline
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    /// `w(k_q)` at index `q - 1`.
    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn x_var(&self, key: ArcKey) -> Option<VarId> {
        self.x_vars.get(&key).copied()
    }

    pub fn b_var(&self, key: BufferKey) -> Option<VarId> {
        self.b_vars.get(&key).copied()
    }

    pub fn to_lp_string(&self) -> String {
        milp::to_lp_string(&self.problem)
    }

    /// Reads a per-demand solution vector into flow maps (nonzero entries only).
    pub fn flows_from_values(&self, sol: &milp::Solution) -> FlowSolution {
        if sol.status == Status::Infeasible {
            return FlowSolution::infeasible();
        }
        let pick = |id: VarId| sol.values[id.0];
        FlowSolution {
            status: Status::Optimal,
            x: self.x_vars.iter().map(|(&k, &v)| (k, pick(v))).filter(|e| e.1 != 0).collect(),
            b: self.b_vars.iter().map(|(&k, &v)| (k, pick(v))).filter(|e| e.1 != 0).collect(),
            objective: sol.objective,
        }
    }
}

pub fn build_ilp(timeline: &StateTimeline, node_specs: &[NodeSpec], commodities: &[Commodity]) -> Result<IlpModel, OracleError> {
    build_ilp_weighted(timeline, node_specs, commodities, &StateWeights::Linear)
}

pub fn build_ilp_weighted(
    timeline: &StateTimeline,
    node_specs: &[NodeSpec],
    commodities: &[Commodity],
    weights: &StateWeights,
) -> Result<IlpModel, OracleError> {
    let weights = weights.resolve(timeline.num_states())?;
    let f = timeline.final_index();
    let mut ids = BTreeSet::new();
    for c in commodities {
        let bad = |why: &str| Err(OracleError::InvalidCommodity(format!("commodity {}: {why}", c.id)));
        if !ids.insert(c.id) {
            return bad("duplicate id");
        }
        if c.amount == 0 {
            return bad("zero amount");
        }
        if c.src == c.dst {
            return bad("source equals destination");
        }
        if !timeline.nodes().contains(&c.src) || !timeline.nodes().contains(&c.dst) {
            return bad("endpoint outside the plan");
        }
        if c.t_gen > f || c.deadline_ts > f {
            return bad("timestamp index past the horizon");
        }
        if c.amount > i64::MAX as u64 / 4 {
            return bad("amount too large");
        }
    }
    for s in node_specs {
        if !timeline.nodes().contains(&s.id) {
            return Err(OracleError::InvalidCommodity(format!("buffer given for unknown node {}", s.id)));
        }
    }
    let buffers: BTreeMap<NodeId, BufferCapacity> = node_specs.iter().map(|s| (s.id, s.buffer)).collect();
    let classes: Vec<FlowClass> = commodities
        .iter()
        .map(|c| FlowClass {
            label: c.id,
            dst: c.dst,
            deadline: c.deadline_ts,
            finite: c.ttl.is_finite(),
            injections: vec![(c.t_gen, c.src, c.amount as i64)],
        })
        .collect();
    let asm = assemble("flow", timeline, &buffers, &weights, &classes);
    Ok(IlpModel {
        problem: asm.problem,
        timeline: timeline.clone(),
        buffers,
        commodities: commodities.to_vec(),
        weights,
        x_vars: asm.x,
        b_vars: asm.b,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSolution {
    pub status: Status,
    /// Nonzero arc flows; absent keys are zero.
    pub x: BTreeMap<ArcKey, i64>,
    /// Nonzero buffer occupancies; absent keys are zero.
    pub b: BTreeMap<BufferKey, i64>,
    pub objective: i64,
}

impl FlowSolution {
    pub fn infeasible() -> Self {
        Self {
            status: Status::Infeasible,
            x: BTreeMap::new(),
            b: BTreeMap::new(),
            objective: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn flow(&self, state: usize, contact: ContactId, commodity: usize) -> i64 {
        self.x.get(&ArcKey { state, contact, commodity }).copied().unwrap_or(0)
    }

    pub fn buffer(&self, timestamp: usize, node: NodeId, commodity: usize) -> i64 {
        self.b.get(&BufferKey { timestamp, node, commodity }).copied().unwrap_or(0)
    }

    pub fn total_flow(&self) -> i64 {
        self.x.values().sum()
    }
}

#[derive(Debug, Clone)]
pub enum SolverBackend {
    Builtin(SolveOptions),
    /// Solves the per-demand model through an LP file.
    External(ExternalSolver),
}

impl Default for SolverBackend {
    fn default() -> Self {
        SolverBackend::Builtin(SolveOptions::default())
    }
}

pub fn solve(model: &IlpModel, backend: &SolverBackend) -> Result<FlowSolution, OracleError> {
    match backend {
        SolverBackend::External(ext) => {
            let sol = ext.solve(&model.problem)?;
            Ok(model.flows_from_values(&sol))
        }
        SolverBackend::Builtin(opts) => solve_grouped(model, opts),
    }
}

fn solve_grouped(model: &IlpModel, opts: &SolveOptions) -> Result<FlowSolution, OracleError> {
    let mut groups: BTreeMap<(NodeId, usize, bool), Vec<usize>> = BTreeMap::new();
    for (i, c) in model.commodities.iter().enumerate() {
        groups.entry((c.dst, c.deadline_ts, c.ttl.is_finite())).or_default().push(i);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let classes: Vec<FlowClass> = groups
        .iter()
        .enumerate()
        .map(|(label, ((dst, deadline, finite), members))| FlowClass {
            label,
            dst: *dst,
            deadline: *deadline,
            finite: *finite,
            injections: members
                .iter()
                .map(|&i| {
                    let c = &model.commodities[i];
                    (c.t_gen, c.src, c.amount as i64)
                })
                .collect(),
        })
        .collect();
    let asm = assemble("flow_grouped", &model.timeline, &model.buffers, &model.weights, &classes);
    let sol = milp::solve(&asm.problem, opts)?;
    if sol.status == Status::Infeasible {
        return Ok(FlowSolution::infeasible());
    }

    let mut x = BTreeMap::new();
    let mut b = BTreeMap::new();
    for (label, (_, members)) in groups.iter().enumerate() {
        let commodities: Vec<&Commodity> = members.iter().map(|&i| &model.commodities[i]).collect();
        split_class(model, &asm, &sol.values, label, &commodities, &mut x, &mut b)?;
    }

    let mut values = vec![0i64; model.problem.num_vars()];
    for (key, &val) in &x {
        let id = model.x_vars.get(key).ok_or_else(|| SolveError::Numerical(format!("flow on pruned arc {key:?}")))?;
        values[id.0] = val;
    }
    for (key, &val) in &b {
        let id = model.b_vars.get(key).ok_or_else(|| SolveError::Numerical(format!("buffer on pruned slot {key:?}")))?;
        values[id.0] = val;
    }
    if let Some(v) = model.problem.violations(&values).first() {
        return Err(SolveError::Numerical(format!("split flow fails {v}")).into());
    }
    let objective = i64::try_from(model.problem.objective(&values)).map_err(|_| SolveError::Numerical("objective overflow".into()))?;
    if objective != sol.objective {
        return Err(SolveError::Numerical("split flow changed the objective".into()).into());
    }
    Ok(FlowSolution {
        status: Status::Optimal,
        x,
        b,
        objective,
    })
}

/// Assigns the units of one flow class to its commodities, state by state.
fn split_class(
    model: &IlpModel,
    asm: &Assembled,
    values: &[i64],
    label: usize,
    members: &[&Commodity],
    x: &mut BTreeMap<ArcKey, i64>,
    b: &mut BTreeMap<BufferKey, i64>,
) -> Result<(), OracleError> {
    let numerical = |msg: String| OracleError::Solver(SolveError::Numerical(msg));
    let timeline = &model.timeline;
    let mut pools: BTreeMap<NodeId, BTreeMap<usize, i64>> = BTreeMap::new();
    let inject = |pools: &mut BTreeMap<NodeId, BTreeMap<usize, i64>>, q: usize| {
        for c in members.iter().filter(|c| c.t_gen == q) {
            *pools.entry(c.src).or_default().entry(c.id).or_insert(0) += c.amount as i64;
        }
    };
    let record = |pools: &BTreeMap<NodeId, BTreeMap<usize, i64>>, q: usize, b: &mut BTreeMap<BufferKey, i64>| {
        for &v in timeline.nodes() {
            let held: i64 = pools.get(&v).map_or(0, |p| p.values().sum());
            let class = asm
                .b
                .get(&BufferKey { timestamp: q, node: v, commodity: label })
                .map_or(0, |id| values[id.0]);
            if held != class {
                return Err(numerical(format!("class {label} holds {class} at t{q} v{v}, split gives {held}")));
            }
            for (&d, &n) in pools.get(&v).into_iter().flatten() {
                if n != 0 {
                    b.insert(BufferKey { timestamp: q, node: v, commodity: d }, n);
                }
            }
        }
        Ok(())
    };

    inject(&mut pools, 0);
    record(&pools, 0, b)?;
    for q in 1..=timeline.final_index() {
        let flows: Vec<(StateArc, i64)> = timeline
            .state(q)
            .arcs
            .iter()
            .filter_map(|a| {
                let id = asm.x.get(&ArcKey { state: q, contact: a.contact, commodity: label })?;
                (values[id.0] > 0).then_some((*a, values[id.0]))
            })
            .collect();
        // a node forwards only after everything it receives this state has arrived
        let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (a, _) in &flows {
            indegree.entry(a.from).or_insert(0);
            *indegree.entry(a.to).or_insert(0) += 1;
        }
        let mut ready: BTreeSet<NodeId> = indegree.iter().filter(|e| *e.1 == 0).map(|e| *e.0).collect();
        let mut done = 0;
        while let Some(u) = ready.pop_first() {
            done += 1;
            for (a, amount) in flows.iter().filter(|f| f.0.from == u) {
                let mut left = *amount;
                let pool = pools.entry(u).or_default();
                let mut moved = Vec::new();
                for (&d, n) in pool.iter_mut() {
                    let take = left.min(*n);
                    if take > 0 {
                        *n -= take;
                        left -= take;
                        moved.push((d, take));
                    }
                    if left == 0 {
                        break;
                    }
                }
                if left > 0 {
                    return Err(numerical(format!("class {label} sends more than node {u} holds in k{q}")));
                }
                for (d, n) in moved {
                    *pools.entry(a.to).or_default().entry(d).or_insert(0) += n;
                    *x.entry(ArcKey { state: q, contact: a.contact, commodity: d }).or_insert(0) += n;
                }
                let deg = indegree.get_mut(&a.to).expect("arc endpoints are indexed");
                *deg -= 1;
                if *deg == 0 {
                    ready.insert(a.to);
                }
            }
        }
        if done < indegree.len() {
            return Err(numerical(format!("class {label} circulates flow in k{q}")));
        }
        inject(&mut pools, q);
        record(&pools, q, b)?;
    }
    Ok(())
}

/// Re-checks every model condition from the timeline and commodities,
/// independently of the assembled rows. Empty means feasible.
pub fn validate_solution(model: &IlpModel, sol: &FlowSolution) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |name: String, activity: i128, sense: Sense, rhs: i128| {
        if !sense.holds(activity, rhs) {
            out.push(Violation { name, activity, sense, rhs });
        }
    };
    let timeline = &model.timeline;
    let f = timeline.final_index();
    let commodities: BTreeMap<usize, &Commodity> = model.commodities.iter().map(|c| (c.id, c)).collect();

    // net inflow per (q, v, d), total per (q, contact)
    let mut net: BTreeMap<(usize, NodeId, usize), i128> = BTreeMap::new();
    let mut per_arc: BTreeMap<(usize, ContactId), i128> = BTreeMap::new();
    let mut early: BTreeMap<usize, i128> = BTreeMap::new();
    let mut objective: i128 = 0;
    for (k, &val) in &sol.x {
        let name = format!("X_k{}_e{}_d{}", k.state, k.contact.0, k.commodity);
        let arc = (1..=timeline.num_states())
            .contains(&k.state)
            .then(|| timeline.state(k.state).arcs.iter().find(|a| a.contact == k.contact))
            .flatten();
        let (Some(arc), Some(c)) = (arc, commodities.get(&k.commodity)) else {
            check(format!("{name}.exists"), val as i128, Sense::Eq, 0);
            continue;
        };
        check(format!("{name}.lower"), val as i128, Sense::Ge, 0);
        let val = val as i128;
        *net.entry((k.state, arc.to, k.commodity)).or_insert(0) += val;
        *net.entry((k.state, arc.from, k.commodity)).or_insert(0) -= val;
        *per_arc.entry((k.state, k.contact)).or_insert(0) += val;
        if k.state <= c.t_gen {
            *early.entry(c.id).or_insert(0) += val;
        }
        objective += model.weights[k.state - 1] as i128 * val;
    }
    for (k, &val) in &sol.b {
        let name = format!("B_t{}_v{}_d{}", k.timestamp, k.node, k.commodity);
        if k.timestamp > f || !timeline.nodes().contains(&k.node) || !commodities.contains_key(&k.commodity) {
            check(format!("{name}.exists"), val as i128, Sense::Eq, 0);
        } else {
            check(format!("{name}.lower"), val as i128, Sense::Ge, 0);
        }
    }

    let buf = |q: usize, v: NodeId, d: usize| sol.buffer(q, v, d) as i128;
    for c in commodities.values() {
        let d = c.id;
        let amount = c.amount as i128;
        let generated = |q: usize, v: NodeId| if q == c.t_gen && v == c.src { amount } else { 0 };
        for &v in timeline.nodes() {
            check(format!("init_v{v}_d{d}"), buf(0, v, d), Sense::Eq, generated(0, v));
            for q in 1..=f {
                let inflow = net.get(&(q, v, d)).copied().unwrap_or(0);
                let lhs = buf(q, v, d) - buf(q - 1, v, d) - inflow;
                check(format!("cons_t{q}_v{v}_d{d}"), lhs, Sense::Eq, generated(q, v));
            }
            let want = if v == c.dst { amount } else { 0 };
            check(format!("final_v{v}_d{d}"), buf(f, v, d), Sense::Eq, want);
        }
        if c.t_gen > 0 {
            check(format!("src_t{}_v{}_d{d}", c.t_gen, c.src), buf(c.t_gen, c.src, d), Sense::Ge, amount);
        }
        if c.ttl.is_finite() {
            check(format!("deadline_t{}_d{d}", c.deadline_ts), buf(c.deadline_ts, c.dst, d), Sense::Eq, amount);
            for q in c.deadline_ts + 1..=f {
                check(format!("retain_t{q}_d{d}"), buf(q, c.dst, d), Sense::Ge, amount);
            }
        }
        check(format!("nonanticipation_d{d}"), early.get(&d).copied().unwrap_or(0), Sense::Eq, 0);
    }
    for (&v, &cap) in &model.buffers {
        if let BufferCapacity::Packets(cap) = cap {
            for q in 0..=f {
                let held: i128 = commodities.keys().map(|&d| buf(q, v, d)).sum();
                check(format!("buf_t{q}_v{v}"), held, Sense::Le, cap as i128);
            }
        }
    }
    for q in 1..=timeline.num_states() {
        for a in &timeline.state(q).arcs {
            let used = per_arc.get(&(q, a.contact)).copied().unwrap_or(0);
            check(format!("arc_k{q}_e{}", a.contact.0), used, Sense::Le, a.capacity as i128);
        }
    }
    check("objective".into(), objective, Sense::Eq, sol.objective as i128);
    out
}

/// Metrics of an optimal flow. A unit counts as delivered at the first
/// timestamp where the destination holds at least that many units of its
/// commodity.
pub fn flows_to_metrics(sol: &FlowSolution, model: &IlpModel) -> Result<MetricsReport, OracleError> {
    if !sol.is_optimal() {
        return Err(OracleError::NotOptimal);
    }
    let ts = model.timeline.timestamps();
    let mut packets = Vec::new();
    for c in &model.commodities {
        let t0 = ts[c.t_gen];
        let mut delivered = 0u64;
        for (q, &t) in ts.iter().enumerate() {
            let held = sol.buffer(q, c.dst, c.id).max(0) as u64;
            if held > delivered {
                let fresh = held.min(c.amount) - delivered.min(c.amount);
                packets.push((c.ttl, fresh, Some(t - t0)));
                delivered = held;
            }
        }
        if delivered < c.amount {
            packets.push((c.ttl, c.amount - delivered, None));
        }
    }
    let transmissions = sol.total_flow().max(0) as u64;
    Ok(report_from(&packets, transmissions, 0, BTreeMap::new()))
}

/// Discretizes `plan`, builds the model for `traffic` and solves it.
pub fn solve_scenario(
    plan: &ContactPlan,
    traffic: &TrafficModel,
    node_specs: &[NodeSpec],
    backend: &SolverBackend,
) -> Result<(IlpModel, FlowSolution), OracleError> {
    let timeline = discretize(plan, &traffic.generation_times())?;
    let commodities = commodities_from_traffic(traffic, &timeline)?;
    let model = build_ilp(&timeline, node_specs, &commodities)?;
    let sol = solve(&model, backend)?;
    Ok((model, sol))
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    Kept { objective: i64 },
    Excluded,
    ExcludedError(String),
}

impl FilterOutcome {
    pub fn is_kept(&self) -> bool {
        matches!(self, FilterOutcome::Kept { .. })
    }
}

/// Classifies each plan by whether the oracle delivers all of `traffic`.
pub fn feasibility_filter(plans: &[ContactPlan], traffic: &TrafficModel, backend: &SolverBackend) -> Vec<FilterOutcome> {
    plans
        .iter()
        .map(|plan| {
            let result = traffic
                .validate(plan)
                .map_err(|e| e.to_string())
                .and_then(|()| solve_scenario(plan, traffic, &[], backend).map_err(|e| e.to_string()));
            match result {
                Ok((_, sol)) if sol.is_optimal() => FilterOutcome::Kept { objective: sol.objective },
                Ok(_) => FilterOutcome::Excluded,
                Err(e) => FilterOutcome::ExcludedError(e),
            }
        })
        .collect()
}

/// The plans of `plans` that pass [`feasibility_filter`].
pub fn kept_plans(plans: &[ContactPlan], traffic: &TrafficModel, backend: &SolverBackend) -> Vec<ContactPlan> {
    plans
        .iter()
        .zip(feasibility_filter(plans, traffic, backend))
        .filter(|(_, o)| o.is_kept())
        .map(|(p, _)| p.clone())
        .collect()
}
