//! Contact plans: parsing, random generation and time discretization.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Contact ids are assigned 1, 2, ... in plan order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactId(pub u32);

impl fmt::Display for ContactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("contact interval [{t_start}, {t_end}) is empty")]
    InvalidInterval { t_start: f64, t_end: f64 },
    #[error("time {0} is negative or not finite")]
    InvalidTime(f64),
    #[error("contact from node {0} to itself")]
    SelfLoop(NodeId),
    #[error("node {0} declared twice")]
    DuplicateId(NodeId),
    #[error("node id 0 is reserved")]
    ZeroNode,
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<PlanError>,
    },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("generation time {time} lies outside [0, {horizon}]")]
    GenerationTime { time: f64, horizon: f64 },
}

impl PlanError {
    /// The underlying error with any line context stripped.
    pub fn innermost(&self) -> &PlanError {
        match self {
            PlanError::AtLine { source, .. } => source.innermost(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub id: ContactId,
    pub from: NodeId,
    pub to: NodeId,
    pub t_start: f64,
    pub t_end: f64,
    /// Packets the contact can carry over its whole window.
    pub capacity: u64,
    /// One-way light time. Kept for the file format; routing treats it as 0.
    pub owlt: f64,
}

impl Contact {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// A contact before it is given an id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub t_start: f64,
    pub t_end: f64,
    pub capacity: u64,
    pub owlt: f64,
}

impl ContactSpec {
    pub fn new(from: NodeId, to: NodeId, t_start: f64, t_end: f64, capacity: u64) -> Self {
        Self {
            from,
            to,
            t_start,
            t_end,
            capacity,
            owlt: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactPlan {
    contacts: Vec<Contact>,
    nodes: BTreeSet<NodeId>,
    horizon: f64,
}

#[derive(Debug, Default)]
pub struct PlanBuilder {
    declared: BTreeSet<NodeId>,
    contacts: Vec<Contact>,
}

impl PlanBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, id: NodeId) -> Result<&mut Self, PlanError> {
        if id.0 == 0 {
            return Err(PlanError::ZeroNode);
        }
        if !self.declared.insert(id) {
            return Err(PlanError::DuplicateId(id));
        }
        Ok(self)
    }

    pub fn contact(&mut self, spec: ContactSpec) -> Result<ContactId, PlanError> {
        for t in [spec.t_start, spec.t_end, spec.owlt] {
            if !t.is_finite() || t < 0.0 {
                return Err(PlanError::InvalidTime(t));
            }
        }
        if spec.t_start >= spec.t_end {
            return Err(PlanError::InvalidInterval {
                t_start: spec.t_start,
                t_end: spec.t_end,
            });
        }
        if spec.from.0 == 0 || spec.to.0 == 0 {
            return Err(PlanError::ZeroNode);
        }
        if spec.from == spec.to {
            return Err(PlanError::SelfLoop(spec.from));
        }
        let id = ContactId(self.contacts.len() as u32 + 1);
        self.contacts.push(Contact {
            id,
            from: spec.from,
            to: spec.to,
            t_start: spec.t_start,
            t_end: spec.t_end,
            capacity: spec.capacity,
            owlt: spec.owlt,
        });
        Ok(id)
    }

    pub fn build(self) -> ContactPlan {
        let mut nodes = self.declared;
        nodes.extend(self.contacts.iter().flat_map(|c| [c.from, c.to]));
        let horizon = self.contacts.iter().map(|c| c.t_end).fold(0.0, f64::max);
        ContactPlan {
            contacts: self.contacts,
            nodes,
            horizon,
        }
    }
}

impl ContactPlan {
    pub fn from_specs(
        nodes: impl IntoIterator<Item = NodeId>,
        contacts: impl IntoIterator<Item = ContactSpec>,
    ) -> Result<Self, PlanError> {
        let mut b = PlanBuilder::new();
        for n in nodes {
            b.node(n)?;
        }
        for c in contacts {
            b.contact(c)?;
        }
        Ok(b.build())
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn contact(&self, id: ContactId) -> Option<&Contact> {
        (id.0 as usize).checked_sub(1).and_then(|i| self.contacts.get(i))
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.nodes.contains(&id)
    }

    /// Latest contact end; 0 for a plan without contacts.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn to_plan_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ContactPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.nodes {
            writeln!(f, "node {n}")?;
        }
        for c in &self.contacts {
            write!(f, "contact {} {} {} {} {}", c.t_start, c.t_end, c.from, c.to, c.capacity)?;
            if c.owlt != 0.0 {
                write!(f, " {}", c.owlt)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn field<T: FromStr>(tok: &str, what: &str, line: usize) -> Result<T, PlanError> {
    tok.parse().map_err(|_| PlanError::MalformedLine {
        line,
        reason: format!("bad {what} {tok:?}"),
    })
}

fn node_field(tok: &str, line: usize) -> Result<NodeId, PlanError> {
    field::<u32>(tok, "node id", line).map(NodeId)
}

/// Parses the line-oriented plan format:
///
/// ```text
/// # comment
/// node 1
/// contact <t_start> <t_end> <from> <to> <capacity> [owlt]
/// ```
pub fn parse_contact_plan(text: &str) -> Result<ContactPlan, PlanError> {
    let mut b = PlanBuilder::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let at = |e: PlanError| PlanError::AtLine {
            line,
            source: Box::new(e),
        };
        match toks[0] {
            "node" => {
                if toks.len() != 2 {
                    return Err(PlanError::MalformedLine {
                        line,
                        reason: format!("node takes 1 field, got {}", toks.len() - 1),
                    });
                }
                b.node(node_field(toks[1], line)?).map_err(at)?;
            }
            "contact" => {
                if !(6..=7).contains(&toks.len()) {
                    return Err(PlanError::MalformedLine {
                        line,
                        reason: format!("contact takes 5 or 6 fields, got {}", toks.len() - 1),
                    });
                }
                let spec = ContactSpec {
                    t_start: field(toks[1], "start time", line)?,
                    t_end: field(toks[2], "end time", line)?,
                    from: node_field(toks[3], line)?,
                    to: node_field(toks[4], line)?,
                    capacity: field(toks[5], "capacity", line)?,
                    owlt: toks.get(6).map(|t| field(t, "owlt", line)).transpose()?.unwrap_or(0.0),
                };
                b.contact(spec).map_err(at)?;
            }
            other => {
                return Err(PlanError::MalformedLine {
                    line,
                    reason: format!("unknown record {other:?}"),
                })
            }
        }
    }
    Ok(b.build())
}

impl FromStr for ContactPlan {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_contact_plan(s)
    }
}

/// Parameters of the random network family: every unordered node pair is
/// connected in each state with probability `density`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetwork {
    pub n_nodes: u32,
    pub n_states: u32,
    pub state_duration: f64,
    pub density: f64,
    pub capacity: u64,
}

impl Default for RandomNetwork {
    fn default() -> Self {
        Self {
            n_nodes: 11,
            n_states: 10,
            state_duration: 10.0,
            density: 0.2,
            capacity: 10,
        }
    }
}

impl RandomNetwork {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidParameter(m.into()));
        if self.n_nodes < 2 {
            return bad("need at least 2 nodes");
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density must lie in [0, 1]");
        }
        if !(self.state_duration.is_finite() && self.state_duration > 0.0) {
            return bad("state duration must be positive");
        }
        Ok(())
    }

    /// Builds the plan for `seed`. Pairs are drawn state by state, then in
    /// `(i, j)` order with `i < j`; each hit yields `i -> j` then `j -> i`.
    pub fn generate(&self, seed: u64) -> Result<ContactPlan, PlanError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = PlanBuilder::new();
        for n in 1..=self.n_nodes {
            b.node(NodeId(n))?;
        }
        for s in 0..self.n_states {
            let t_start = f64::from(s) * self.state_duration;
            let t_end = f64::from(s + 1) * self.state_duration;
            for i in 1..=self.n_nodes {
                for j in i + 1..=self.n_nodes {
                    if rng.gen::<f64>() < self.density {
                        for (from, to) in [(i, j), (j, i)] {
                            b.contact(ContactSpec::new(NodeId(from), NodeId(to), t_start, t_end, self.capacity))?;
                        }
                    }
                }
            }
        }
        Ok(b.build())
    }
}

pub fn generate_random_network(
    seed: u64,
    n_nodes: u32,
    n_states: u32,
    state_duration: f64,
    density: f64,
    capacity: u64,
) -> Result<ContactPlan, PlanError> {
    RandomNetwork {
        n_nodes,
        n_states,
        state_duration,
        density,
        capacity,
    }
    .generate(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BufferCapacity {
    #[default]
    Unlimited,
    Packets(u64),
}

impl BufferCapacity {
    /// Whether a buffer already holding `stored` packets accepts one more.
    pub fn has_room(self, stored: u64) -> bool {
        match self {
            BufferCapacity::Unlimited => true,
            BufferCapacity::Packets(cap) => stored < cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub buffer: BufferCapacity,
}

impl NodeSpec {
    pub fn unlimited(id: NodeId) -> Self {
        Self {
            id,
            buffer: BufferCapacity::Unlimited,
        }
    }
}

/// A contact's share of one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateArc {
    pub contact: ContactId,
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: u64,
}

/// Interval `[start, end]` between consecutive timestamps; `index` counts from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub arcs: Vec<StateArc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTimeline {
    timestamps: Vec<f64>,
    states: Vec<State>,
    nodes: BTreeSet<NodeId>,
}

impl StateTimeline {
    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// State `k_q` for `q` in `1..=num_states()`.
    pub fn state(&self, q: usize) -> &State {
        &self.states[q - 1]
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Index of the last timestamp.
    pub fn final_index(&self) -> usize {
        self.timestamps.len() - 1
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn timestamp_index(&self, t: f64) -> Option<usize> {
        self.timestamps.iter().position(|&x| x == t)
    }
}

/// Splits the horizon at every contact boundary and generation time.
pub fn discretize(plan: &ContactPlan, generation_times: &[f64]) -> Result<StateTimeline, PlanError> {
    let horizon = plan.horizon();
    for &t in generation_times {
        if !(0.0..=horizon).contains(&t) {
            return Err(PlanError::GenerationTime { time: t, horizon });
        }
    }
    let mut timestamps: Vec<f64> = [0.0, horizon]
        .into_iter()
        .chain(plan.contacts().iter().flat_map(|c| [c.t_start, c.t_end]))
        .chain(generation_times.iter().copied())
        .collect();
    timestamps.sort_by(f64::total_cmp);
    timestamps.dedup();

    let mut assigned = vec![0u64; plan.contacts().len()];
    let states = timestamps
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (start, end) = (w[0], w[1]);
            let arcs = plan
                .contacts()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.t_start <= start && end <= c.t_end)
                .map(|(i, c)| {
                    let share = c.capacity as f64 * (end - start) / c.duration();
                    let capacity = ((share + 1e-9).floor() as u64).min(c.capacity - assigned[i]);
                    assigned[i] += capacity;
                    StateArc {
                        contact: c.id,
                        from: c.from,
                        to: c.to,
                        capacity,
                    }
                })
                .collect();
            State {
                index: k + 1,
                start,
                end,
                arcs,
            }
        })
        .collect();
    Ok(StateTimeline {
        timestamps,
        states,
        nodes: plan.nodes().clone(),
    })
}

/// The three-node example: N1->N2 over [0,10), N2->N3 over [10,20),
/// N1->N3 over [20,30), ten packets each.
pub fn fig2_plan() -> ContactPlan {
    let n = NodeId;
    ContactPlan::from_specs(
        [n(1), n(2), n(3)],
        [
            ContactSpec::new(n(1), n(2), 0.0, 10.0, 10),
            ContactSpec::new(n(2), n(3), 10.0, 20.0, 10),
            ContactSpec::new(n(1), n(3), 20.0, 30.0, 10),
        ],
    )
    .expect("static plan is valid")
}
