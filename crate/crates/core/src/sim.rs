//! Discrete-event store-carry-forward simulation.
//!
//! Every node routes packets with its own route cache and volume ledger and
//! keeps one FIFO queue per neighbor. Contacts forward queued packets the
//! moment they open and whenever a packet is queued while they are open, up
//! to their capacity. Light time is zero, so a packet may cross several
//! contacts at one instant.
//!
//! Events at the same instant run in the order: contact ends, traffic
//! generation, contact starts, deadline expiries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io;

use serde::{Deserialize, Serialize};

use crate::contact_plan::{BufferCapacity, ContactId, ContactPlan, NodeId, NodeSpec};
use crate::forwarding::{select_route, ForwardingError, Packet, PacketId, Policy, Ttl, VolumeLedger};
use crate::routing::{RouteCache, RoutingError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub src: NodeId,
    pub dst: NodeId,
    /// Packets generated at once.
    pub count: u64,
    pub t_gen: f64,
    pub ttl: Ttl,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficModel {
    pub demands: Vec<Demand>,
}

impl TrafficModel {
    pub fn new(demands: Vec<Demand>) -> Self {
        Self { demands }
    }

    /// Each source sends `load` packets to `dst` at time 0.
    pub fn all_to_one(sources: &[(NodeId, Ttl)], dst: NodeId, load: u64) -> Self {
        let demands = if load == 0 {
            Vec::new()
        } else {
            sources
                .iter()
                .map(|&(src, ttl)| Demand {
                    src,
                    dst,
                    count: load,
                    t_gen: 0.0,
                    ttl,
                })
                .collect()
        };
        Self { demands }
    }

    pub fn total_packets(&self) -> u64 {
        self.demands.iter().map(|d| d.count).sum()
    }

    pub fn generation_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.demands.iter().map(|d| d.t_gen).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Checks endpoints and times against `plan`.
    pub fn validate(&self, plan: &ContactPlan) -> Result<(), SimError> {
        for (i, d) in self.demands.iter().enumerate() {
            for n in [d.src, d.dst] {
                if !plan.has_node(n) {
                    return Err(SimError::UnknownNode(n));
                }
            }
            if d.src == d.dst {
                return Err(SimError::InvalidDemand(format!("demand {i}: source equals destination")));
            }
            if d.count == 0 {
                return Err(SimError::InvalidDemand(format!("demand {i}: zero packets")));
            }
            if !(0.0..=plan.horizon()).contains(&d.t_gen) {
                return Err(SimError::InvalidDemand(format!(
                    "demand {i}: generation time {} outside [0, {}]",
                    d.t_gen,
                    plan.horizon()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("node {0} is not part of the contact plan")]
    UnknownNode(NodeId),
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Forwarding(#[from] ForwardingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRoute,
    Expired,
    BufferFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Generated { src: NodeId, dst: NodeId, ttl: Ttl, deadline: f64 },
    Transmitted { from: NodeId, to: NodeId, contact: ContactId },
    DeliveredOnTime { node: NodeId },
    DeliveredLate { node: NodeId },
    Dropped { node: NodeId, reason: DropReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub packet: PacketId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    /// One JSON object per line.
    pub fn write_ndjson(&self, mut w: impl io::Write) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    /// Routes computed per (node, destination).
    pub k_routes: usize,
    /// Accepted for reproducible experiment records. The engine itself makes
    /// no random choices, so the value does not affect the run.
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { k_routes: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Scheduled {
    ContactEnd(usize),
    Generation(usize),
    ContactStart(usize),
    Expiry(usize),
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    node: NodeId,
    neighbor: NodeId,
    planned: ContactId,
}

struct Engine<'a> {
    plan: &'a ContactPlan,
    policy: Policy,
    horizon: f64,
    n_nodes: usize,
    packets: Vec<Packet>,
    location: Vec<Option<Queued>>,
    queues: BTreeMap<(NodeId, NodeId), VecDeque<usize>>,
    stored: BTreeMap<NodeId, u64>,
    buffers: BTreeMap<NodeId, BufferCapacity>,
    ledgers: BTreeMap<NodeId, VolumeLedger>,
    cache: RouteCache,
    remaining: Vec<u64>,
    active: BTreeMap<(NodeId, NodeId), BTreeSet<usize>>,
    arrivals: VecDeque<(NodeId, usize)>,
    log: Vec<Event>,
}

impl Engine<'_> {
    fn record(&mut self, time: f64, pkt: usize, kind: EventKind) {
        self.log.push(Event {
            time,
            packet: self.packets[pkt].id,
            kind,
        });
    }

    fn drop_packet(&mut self, node: NodeId, pkt: usize, t: f64, reason: DropReason) {
        self.record(t, pkt, EventKind::Dropped { node, reason });
    }

    /// A packet is at `node` (new, arrived, or displaced) and needs a decision.
    fn handle(&mut self, node: NodeId, pkt: usize, t: f64) -> Result<(), SimError> {
        let (dst, deadline) = (self.packets[pkt].dst, self.packets[pkt].deadline);
        if node == dst {
            let kind = if t <= deadline {
                EventKind::DeliveredOnTime { node }
            } else {
                EventKind::DeliveredLate { node }
            };
            self.record(t, pkt, kind);
            return Ok(());
        }
        let stored = self.stored.get(&node).copied().unwrap_or(0);
        if !self.buffers.get(&node).copied().unwrap_or_default().has_room(stored) {
            self.drop_packet(node, pkt, t, DropReason::BufferFull);
            return Ok(());
        }
        let routes = self.cache.routes(self.plan, node, dst, t)?;
        let ledger = self.ledgers.entry(node).or_default();
        let chosen = select_route(&routes, self.policy, &self.packets[pkt], t, self.n_nodes, self.horizon, ledger)?;
        let Some(route) = chosen else {
            self.drop_packet(node, pkt, t, DropReason::NoRoute);
            return Ok(());
        };
        let neighbor = route.next_hop;
        self.location[pkt] = Some(Queued {
            node,
            neighbor,
            planned: route.first_contact().id,
        });
        self.queues.entry((node, neighbor)).or_default().push_back(pkt);
        *self.stored.entry(node).or_insert(0) += 1;
        self.transmit(node, neighbor, t);
        Ok(())
    }

    /// Sends queued packets over every open contact of the link.
    fn transmit(&mut self, from: NodeId, to: NodeId, t: f64) {
        let Some(open) = self.active.get(&(from, to)) else {
            return;
        };
        let open: Vec<usize> = open.iter().copied().collect();
        for ci in open {
            while self.remaining[ci] > 0 {
                let Some(pkt) = self.queues.get_mut(&(from, to)).and_then(|q| q.pop_front()) else {
                    return;
                };
                self.remaining[ci] -= 1;
                self.location[pkt] = None;
                *self.stored.get_mut(&from).expect("queued packets are counted") -= 1;
                self.packets[pkt].hop_count += 1;
                let contact = self.plan.contacts()[ci].id;
                self.record(t, pkt, EventKind::Transmitted { from, to, contact });
                self.arrivals.push_back((to, pkt));
            }
        }
    }

    fn settle(&mut self, t: f64) -> Result<(), SimError> {
        while let Some((node, pkt)) = self.arrivals.pop_front() {
            self.handle(node, pkt, t)?;
        }
        Ok(())
    }

    fn unqueue(&mut self, pkt: usize) -> Option<Queued> {
        let at = self.location[pkt].take()?;
        let q = self.queues.get_mut(&(at.node, at.neighbor)).expect("located packets are queued");
        q.retain(|&p| p != pkt);
        *self.stored.get_mut(&at.node).expect("queued packets are counted") -= 1;
        Some(at)
    }

    fn step(&mut self, t: f64, ev: Scheduled, demands: &[(usize, usize)]) -> Result<(), SimError> {
        match ev {
            Scheduled::ContactEnd(ci) => {
                let c = self.plan.contacts()[ci];
                if let Some(open) = self.active.get_mut(&(c.from, c.to)) {
                    open.remove(&ci);
                }
                // packets waiting for this contact look for another way
                let stranded: Vec<usize> = self
                    .queues
                    .get(&(c.from, c.to))
                    .map(|q| {
                        q.iter()
                            .copied()
                            .filter(|&p| self.location[p].is_some_and(|l| l.planned == c.id))
                            .collect()
                    })
                    .unwrap_or_default();
                for p in stranded {
                    self.unqueue(p);
                    self.arrivals.push_back((c.from, p));
                }
            }
            Scheduled::Generation(di) => {
                let (first, count) = demands[di];
                for pkt in first..first + count {
                    let p = &self.packets[pkt];
                    let kind = EventKind::Generated {
                        src: p.src,
                        dst: p.dst,
                        ttl: p.ttl,
                        deadline: p.deadline,
                    };
                    let src = p.src;
                    self.record(t, pkt, kind);
                    self.arrivals.push_back((src, pkt));
                }
            }
            Scheduled::ContactStart(ci) => {
                let c = self.plan.contacts()[ci];
                self.active.entry((c.from, c.to)).or_default().insert(ci);
                self.transmit(c.from, c.to, t);
            }
            Scheduled::Expiry(pkt) => {
                if let Some(at) = self.unqueue(pkt) {
                    self.drop_packet(at.node, pkt, t, DropReason::Expired);
                }
            }
        }
        self.settle(t)
    }
}

/// Runs the scenario to the plan horizon and returns the event log.
pub fn run_simulation(
    plan: &ContactPlan,
    traffic: &TrafficModel,
    policy: Policy,
    node_specs: &[NodeSpec],
    settings: &SimSettings,
) -> Result<EventLog, SimError> {
    traffic.validate(plan)?;
    for s in node_specs {
        if !plan.has_node(s.id) {
            return Err(SimError::UnknownNode(s.id));
        }
    }
    let horizon = plan.horizon();

    let mut packets = Vec::new();
    let mut demand_ranges = Vec::new();
    for d in &traffic.demands {
        demand_ranges.push((packets.len(), d.count as usize));
        for _ in 0..d.count {
            let id = PacketId(packets.len() as u64 + 1);
            packets.push(Packet::new(id, d.src, d.dst, d.t_gen, d.ttl, horizon));
        }
    }

    let mut schedule: Vec<(f64, Scheduled)> = Vec::new();
    for (ci, c) in plan.contacts().iter().enumerate() {
        schedule.push((c.t_start, Scheduled::ContactStart(ci)));
        schedule.push((c.t_end, Scheduled::ContactEnd(ci)));
    }
    for (di, d) in traffic.demands.iter().enumerate() {
        schedule.push((d.t_gen, Scheduled::Generation(di)));
    }
    for (pi, p) in packets.iter().enumerate() {
        if p.ttl.is_finite() && p.deadline <= horizon {
            schedule.push((p.deadline, Scheduled::Expiry(pi)));
        }
    }
    schedule.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut engine = Engine {
        plan,
        policy,
        horizon,
        n_nodes: plan.nodes().len(),
        location: vec![None; packets.len()],
        packets,
        queues: BTreeMap::new(),
        stored: BTreeMap::new(),
        buffers: node_specs.iter().map(|s| (s.id, s.buffer)).collect(),
        ledgers: BTreeMap::new(),
        cache: RouteCache::new(settings.k_routes),
        remaining: plan.contacts().iter().map(|c| c.capacity).collect(),
        active: BTreeMap::new(),
        arrivals: VecDeque::new(),
        log: Vec::new(),
    };
    for (t, ev) in schedule {
        engine.step(t, ev, &demand_ranges)?;
    }
    Ok(EventLog { events: engine.log })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtlClassStats {
    pub ttl: Ttl,
    pub generated: u64,
    pub delivered_on_time: u64,
    /// Over on-time deliveries of the class only.
    pub mean_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub generated: u64,
    pub delivered_on_time: u64,
    pub delivered_late: u64,
    pub dropped: u64,
    pub residual: u64,
    pub transmissions: u64,
    /// `delivered_on_time / generated`, 0 without traffic.
    pub delivery_ratio: f64,
    pub dropped_per_node: BTreeMap<NodeId, u64>,
    /// All transmissions per on-time delivery.
    pub mean_hops: Option<f64>,
    /// On-time deliveries per transmission.
    pub energy_efficiency: Option<f64>,
    pub mean_delay: Option<f64>,
    pub mean_delay_ttl_finite: Option<f64>,
    pub mean_delay_ttl_inf: Option<f64>,
    pub by_ttl: Vec<TtlClassStats>,
}

#[derive(Default)]
struct DelayAcc {
    generated: u64,
    count: u64,
    sum: f64,
}

impl DelayAcc {
    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Builds a report from per-packet outcomes. Delays are only taken from
/// on-time deliveries.
pub(crate) fn report_from(
    packets: &[(Ttl, u64, Option<f64>)],
    transmissions: u64,
    delivered_late: u64,
    dropped_per_node: BTreeMap<NodeId, u64>,
) -> MetricsReport {
    let generated: u64 = packets.iter().map(|p| p.1).sum();
    let mut classes: Vec<(Ttl, DelayAcc)> = Vec::new();
    let (mut all, mut finite, mut infinite) = (DelayAcc::default(), DelayAcc::default(), DelayAcc::default());
    for &(ttl, count, delay) in packets {
        let idx = match classes.iter().position(|(t, _)| t.total_cmp(&ttl).is_eq()) {
            Some(i) => i,
            None => {
                classes.push((ttl, DelayAcc::default()));
                classes.len() - 1
            }
        };
        classes[idx].1.generated += count;
        if let Some(d) = delay {
            let side = if ttl.is_finite() { &mut finite } else { &mut infinite };
            for acc in [&mut classes[idx].1, &mut all, side] {
                acc.count += count;
                acc.sum += d * count as f64;
            }
        }
    }
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let on_time = all.count;
    let dropped: u64 = dropped_per_node.values().sum();
    MetricsReport {
        generated,
        delivered_on_time: on_time,
        delivered_late,
        dropped,
        residual: generated - on_time - delivered_late - dropped,
        transmissions,
        delivery_ratio: if generated == 0 { 0.0 } else { on_time as f64 / generated as f64 },
        dropped_per_node,
        mean_hops: (on_time > 0).then(|| transmissions as f64 / on_time as f64),
        energy_efficiency: (on_time > 0 && transmissions > 0).then(|| on_time as f64 / transmissions as f64),
        mean_delay: all.mean(),
        mean_delay_ttl_finite: finite.mean(),
        mean_delay_ttl_inf: infinite.mean(),
        by_ttl: classes
            .into_iter()
            .map(|(ttl, acc)| TtlClassStats {
                ttl,
                generated: acc.generated,
                delivered_on_time: acc.count,
                mean_delay: acc.mean(),
            })
            .collect(),
    }
}

pub fn compute_metrics(log: &EventLog) -> MetricsReport {
    let mut created: BTreeMap<PacketId, (f64, Ttl)> = BTreeMap::new();
    let mut delay: BTreeMap<PacketId, f64> = BTreeMap::new();
    let mut transmissions = 0;
    let mut late = 0;
    let mut dropped_per_node = BTreeMap::new();
    for e in &log.events {
        match &e.kind {
            EventKind::Generated { ttl, .. } => {
                created.insert(e.packet, (e.time, *ttl));
            }
            EventKind::Transmitted { .. } => transmissions += 1,
            EventKind::DeliveredOnTime { .. } => {
                let t0 = created.get(&e.packet).map_or(e.time, |c| c.0);
                delay.insert(e.packet, e.time - t0);
            }
            EventKind::DeliveredLate { .. } => late += 1,
            EventKind::Dropped { node, .. } => *dropped_per_node.entry(*node).or_insert(0) += 1,
        }
    }
    let packets: Vec<(Ttl, u64, Option<f64>)> = created
        .iter()
        .map(|(id, &(_, ttl))| (ttl, 1, delay.get(id).copied()))
        .collect();
    report_from(&packets, transmissions, late, dropped_per_node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_plan::{fig2_plan, ContactSpec};

    fn fig2_traffic(ttl_n1: Ttl) -> TrafficModel {
        TrafficModel::new(vec![
            Demand {
                src: NodeId(1),
                dst: NodeId(3),
                count: 10,
                t_gen: 0.0,
                ttl: ttl_n1,
            },
            Demand {
                src: NodeId(2),
                dst: NodeId(3),
                count: 10,
                t_gen: 0.0,
                ttl: Ttl::Finite(20.0),
            },
        ])
    }

    fn run(policy: Policy) -> (EventLog, MetricsReport) {
        let log = run_simulation(
            &fig2_plan(),
            &fig2_traffic(Ttl::Finite(30.0)),
            policy,
            &[],
            &SimSettings::default(),
        )
        .unwrap();
        let m = compute_metrics(&log);
        (log, m)
    }

    #[test]
    fn fig2_deltime_loses_relayed_traffic() {
        let (_, m) = run(Policy::DelTime);
        assert_eq!(m.generated, 20);
        assert_eq!(m.delivered_on_time, 10);
        assert_eq!(m.dropped_per_node, BTreeMap::from([(NodeId(2), 10)]));
        assert_eq!(m.transmissions, 20);
        assert_eq!(m.delivery_ratio, 0.5);
        assert_eq!(m.mean_hops, Some(2.0));
        assert_eq!(m.energy_efficiency, Some(0.5));
        let ttl20 = m.by_ttl.iter().find(|c| c.ttl == Ttl::Finite(20.0)).unwrap();
        assert!(ttl20.mean_delay.unwrap() <= 20.0);
    }

    #[test]
    fn fig2_hops_delivers_everything() {
        let (_, m) = run(Policy::Hops);
        assert_eq!(m.delivered_on_time, 20);
        assert_eq!(m.dropped, 0);
        assert_eq!(m.transmissions, 20);
        assert_eq!(m.mean_hops, Some(1.0));
        assert_eq!(m.energy_efficiency, Some(1.0));
        assert_eq!(m.mean_delay_ttl_finite, Some(15.0));
        assert_eq!(m.mean_delay_ttl_inf, None);
    }

    #[test]
    fn no_traffic_empty_log() {
        let log = run_simulation(&fig2_plan(), &TrafficModel::default(), Policy::Hops, &[], &SimSettings::default())
            .unwrap();
        assert!(log.events.is_empty());
        let m = compute_metrics(&log);
        assert_eq!((m.generated, m.delivery_ratio, m.mean_delay), (0, 0.0, None));
    }

    #[test]
    fn unknown_node_is_rejected() {
        let traffic = TrafficModel::new(vec![Demand {
            src: NodeId(1),
            dst: NodeId(9),
            count: 1,
            t_gen: 0.0,
            ttl: Ttl::Infinite,
        }]);
        let err = run_simulation(&fig2_plan(), &traffic, Policy::Hops, &[], &SimSettings::default()).unwrap_err();
        assert_eq!(err, SimError::UnknownNode(NodeId(9)));
    }

    #[test]
    fn stranded_packets_expire() {
        // the only contact closes at 5; the packet cannot leave before its deadline 3
        let n = NodeId;
        let plan = ContactPlan::from_specs([], [ContactSpec::new(n(1), n(2), 2.0, 5.0, 0), ContactSpec::new(n(2), n(3), 0.0, 9.0, 5)]).unwrap();
        let traffic = TrafficModel::new(vec![Demand {
            src: n(1),
            dst: n(2),
            count: 1,
            t_gen: 0.0,
            ttl: Ttl::Finite(3.0),
        }]);
        let log = run_simulation(&plan, &traffic, Policy::DelTime, &[], &SimSettings::default()).unwrap();
        // zero capacity: the route has no volume, so it is refused up front
        let m = compute_metrics(&log);
        assert_eq!(m.dropped, 1);

        let plan = ContactPlan::from_specs(
            [],
            [
                ContactSpec::new(n(1), n(2), 2.0, 5.0, 1),
                ContactSpec::new(n(3), n(2), 0.0, 9.0, 5),
                ContactSpec::new(n(3), n(1), 1.0, 2.0, 1),
            ],
        )
        .unwrap();
        // node 3 floods the only 1->2 slot by first handing a packet to node 1
        let traffic = TrafficModel::new(vec![
            Demand {
                src: n(1),
                dst: n(2),
                count: 1,
                t_gen: 0.0,
                ttl: Ttl::Finite(3.0),
            },
            Demand {
                src: n(3),
                dst: n(2),
                count: 1,
                t_gen: 0.0,
                ttl: Ttl::Infinite,
            },
        ]);
        let log = run_simulation(&plan, &traffic, Policy::Hops, &[], &SimSettings::default()).unwrap();
        let m = compute_metrics(&log);
        assert_eq!(m.generated, m.delivered_on_time + m.delivered_late + m.dropped + m.residual);
    }

    #[test]
    fn finite_buffers_drop_overflow() {
        let n = NodeId;
        let plan = ContactPlan::from_specs([], [ContactSpec::new(n(1), n(2), 5.0, 10.0, 10)]).unwrap();
        let traffic = TrafficModel::new(vec![Demand {
            src: n(1),
            dst: n(2),
            count: 4,
            t_gen: 0.0,
            ttl: Ttl::Infinite,
        }]);
        let specs = [NodeSpec {
            id: n(1),
            buffer: BufferCapacity::Packets(3),
        }];
        let log = run_simulation(&plan, &traffic, Policy::Hops, &specs, &SimSettings::default()).unwrap();
        let m = compute_metrics(&log);
        assert_eq!(m.delivered_on_time, 3);
        assert_eq!(m.dropped_per_node, BTreeMap::from([(n(1), 1)]));
    }

    #[test]
    fn ndjson_is_line_per_event() {
        let (log, _) = run(Policy::Hops);
        let text = log.to_ndjson();
        assert_eq!(text.lines().count(), log.events.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["event"], "generated");
        let back: Event = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(&back, log.events.last().unwrap());
    }
}
