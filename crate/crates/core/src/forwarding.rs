//! Route filtering and policy-driven route selection.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::contact_plan::{Contact, ContactId, NodeId};
use crate::routing::Route;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForwardingError {
    #[error("degenerate scenario: {0}")]
    DegenerateScenario(&'static str),
    #[error("weight {0} is outside [0, 1]")]
    InvalidWeight(f64),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("invalid ttl {0:?}")]
    InvalidTtl(String),
}

/// Time to live: seconds, or unbounded (deliverable any time before the
/// plan horizon).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ttl {
    Finite(f64),
    Infinite,
}

impl Ttl {
    pub fn is_finite(self) -> bool {
        matches!(self, Ttl::Finite(_))
    }

    pub fn deadline(self, created_at: f64, horizon: f64) -> f64 {
        match self {
            Ttl::Finite(s) => created_at + s,
            Ttl::Infinite => horizon,
        }
    }

    /// Finite values ascending, then infinite.
    pub fn total_cmp(&self, other: &Ttl) -> Ordering {
        match (self, other) {
            (Ttl::Finite(a), Ttl::Finite(b)) => a.total_cmp(b),
            (Ttl::Finite(_), Ttl::Infinite) => Ordering::Less,
            (Ttl::Infinite, Ttl::Finite(_)) => Ordering::Greater,
            (Ttl::Infinite, Ttl::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Ttl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ttl::Finite(s) => write!(f, "{s}"),
            Ttl::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Ttl {
    type Err = ForwardingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinite" | "INFINITE" => Ok(Ttl::Infinite),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(Ttl::Finite(v)),
                _ => Err(ForwardingError::InvalidTtl(s.to_string())),
            },
        }
    }
}

impl Serialize for Ttl {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ttl::Finite(v) => s.serialize_f64(*v),
            Ttl::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Ttl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() && v >= 0.0 => Ok(Ttl::Finite(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("invalid ttl {v}"))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub src: NodeId,
    pub dst: NodeId,
    pub created_at: f64,
    pub ttl: Ttl,
    /// `created_at + ttl`, or the plan horizon for an infinite ttl.
    pub deadline: f64,
    /// Capacity units; always 1.
    pub size: u64,
    pub hop_count: u32,
}

impl Packet {
    pub fn new(id: PacketId, src: NodeId, dst: NodeId, created_at: f64, ttl: Ttl, horizon: f64) -> Self {
        Self {
            id,
            src,
            dst,
            created_at,
            ttl,
            deadline: ttl.deadline(created_at, horizon),
            size: 1,
            hop_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Earliest delivery time.
    DelTime,
    /// Fewest hops.
    Hops,
    /// Weighted sum of hops over node count and delivery time over horizon.
    Mo { w: f64 },
}

impl Policy {
    pub fn mo(w: f64) -> Result<Policy, ForwardingError> {
        if (0.0..=1.0).contains(&w) {
            Ok(Policy::Mo { w })
        } else {
            Err(ForwardingError::InvalidWeight(w))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Policy::DelTime => "DELTIME",
            Policy::Hops => "HOPS",
            Policy::Mo { .. } => "MO",
        }
    }

    pub fn weight(&self) -> Option<f64> {
        match self {
            Policy::Mo { w } => Some(*w),
            _ => None,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Mo { w } => write!(f, "MO({w})"),
            other => f.write_str(other.kind()),
        }
    }
}

impl FromStr for Policy {
    type Err = ForwardingError;

    /// Accepts `deltime`, `hops`, `mo:<w>` and `MO(<w>)`, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "deltime" => return Ok(Policy::DelTime),
            "hops" => return Ok(Policy::Hops),
            _ => {}
        }
        let w = lower
            .strip_prefix("mo:")
            .or_else(|| lower.strip_prefix("mo(").and_then(|r| r.strip_suffix(')')))
            .and_then(|w| w.trim().parse::<f64>().ok())
            .ok_or_else(|| ForwardingError::UnknownPolicy(s.to_string()))?;
        Policy::mo(w)
    }
}

/// Residual capacity as believed by one node. Starts at each contact's full
/// capacity and only ever decreases through that node's own selections.
#[derive(Debug, Clone, Default)]
pub struct VolumeLedger {
    used: HashMap<ContactId, u64>,
}

impl VolumeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn residual(&self, c: &Contact) -> u64 {
        c.capacity.saturating_sub(self.used.get(&c.id).copied().unwrap_or(0))
    }

    pub fn volume(&self, route: &Route) -> u64 {
        route.contacts.iter().map(|c| self.residual(c)).min().unwrap_or(0)
    }

    /// Route with its volume recomputed from this ledger.
    pub fn refresh(&self, route: &Route) -> Route {
        Route {
            volume: self.volume(route),
            ..route.clone()
        }
    }

    pub fn consume(&mut self, route: &Route, size: u64) {
        for c in &route.contacts {
            *self.used.entry(c.id).or_insert(0) += size;
        }
    }
}

/// Routes still open after `t_now`, with room for the packet and an
/// estimated delivery no later than its deadline.
pub fn filter_routes(routes: &[Route], pkt: &Packet, t_now: f64) -> Vec<Route> {
    routes
        .iter()
        .filter(|r| r.expiry > t_now && r.volume >= pkt.size && r.edt <= pkt.deadline)
        .cloned()
        .collect()
}

fn check_scale(n_nodes: usize, horizon: f64) -> Result<(), ForwardingError> {
    if n_nodes == 0 {
        return Err(ForwardingError::DegenerateScenario("no nodes"));
    }
    if !(horizon > 0.0) {
        return Err(ForwardingError::DegenerateScenario("zero plan horizon"));
    }
    Ok(())
}

/// `w * hops / n_nodes + (1 - w) * edt / horizon`.
pub fn mo_metric(route: &Route, n_nodes: usize, horizon: f64, w: f64) -> Result<f64, ForwardingError> {
    check_scale(n_nodes, horizon)?;
    if !(0.0..=1.0).contains(&w) {
        return Err(ForwardingError::InvalidWeight(w));
    }
    Ok(w * (route.hops as f64 / n_nodes as f64) + (1.0 - w) * (route.edt / horizon))
}

fn ids_cmp(a: &Route, b: &Route) -> Ordering {
    a.contacts.iter().map(|c| c.id).cmp(b.contacts.iter().map(|c| c.id))
}

fn tie_break(a: &Route, b: &Route) -> Ordering {
    a.hops.cmp(&b.hops).then(a.edt.total_cmp(&b.edt)).then_with(|| ids_cmp(a, b))
}

/// Orders two routes under `policy`; smaller is preferred.
///
/// MO values are compared through their difference scaled by
/// `n_nodes * horizon`, which is exact for integral hops and times and so
/// keeps genuine ties as ties.
pub fn policy_cmp(policy: Policy, a: &Route, b: &Route, n_nodes: usize, horizon: f64) -> Ordering {
    let primary = match policy {
        Policy::DelTime => a.edt.total_cmp(&b.edt),
        Policy::Hops => a.hops.cmp(&b.hops),
        Policy::Mo { w } => {
            let dh = a.hops as f64 - b.hops as f64;
            let de = a.edt - b.edt;
            let diff = w * dh * horizon + (1.0 - w) * de * n_nodes as f64;
            diff.total_cmp(&0.0)
        }
    };
    primary.then_with(|| tie_break(a, b))
}

/// Picks a route for `pkt` at `t_now` and books it in `ledger`.
///
/// Volumes are taken from the ledger, the candidates filtered, and the
/// preferred survivor returned. `None` means the packet has no compliant
/// route from this node.
pub fn select_route(
    routes: &[Route],
    policy: Policy,
    pkt: &Packet,
    t_now: f64,
    n_nodes: usize,
    horizon: f64,
    ledger: &mut VolumeLedger,
) -> Result<Option<Route>, ForwardingError> {
    if matches!(policy, Policy::Mo { .. }) {
        check_scale(n_nodes, horizon)?;
    }
    let current: Vec<Route> = routes.iter().map(|r| ledger.refresh(&r.served_at(t_now))).collect();
    let chosen = filter_routes(&current, pkt, t_now)
        .into_iter()
        .min_by(|a, b| policy_cmp(policy, a, b, n_nodes, horizon));
    if let Some(route) = &chosen {
        ledger.consume(route, pkt.size);
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_plan::fig2_plan;
    use crate::routing::{build_contact_graph, k_best_routes};

    fn fig2_n1_routes() -> Vec<Route> {
        let plan = fig2_plan();
        let g = build_contact_graph(&plan, NodeId(1), NodeId(3), 0.0).unwrap();
        k_best_routes(&g, 5)
    }

    fn pkt(ttl: Ttl) -> Packet {
        Packet::new(PacketId(1), NodeId(1), NodeId(3), 0.0, ttl, 30.0)
    }

    fn pick(policy: Policy, ttl: Ttl) -> Vec<ContactId> {
        let mut ledger = VolumeLedger::new();
        select_route(&fig2_n1_routes(), policy, &pkt(ttl), 0.0, 3, 30.0, &mut ledger)
            .unwrap()
            .unwrap()
            .ids()
    }

    #[test]
    fn ttl_filter() {
        let routes = fig2_n1_routes();
        assert_eq!(filter_routes(&routes, &pkt(Ttl::Finite(30.0)), 0.0).len(), 2);
        let short = filter_routes(&routes, &pkt(Ttl::Finite(15.0)), 0.0);
        assert_eq!(short.len(), 1);
        assert_eq!(short[0].edt, 10.0);
        let mut empty = routes[0].clone();
        empty.volume = 0;
        assert!(filter_routes(&[empty], &pkt(Ttl::Infinite), 0.0).is_empty());
    }

    #[test]
    fn mo_metric_values() {
        let r1 = &fig2_n1_routes()[0];
        assert!((mo_metric(r1, 3, 30.0, 0.25).unwrap() - 5.0 / 12.0).abs() < 1e-12);
        assert!((mo_metric(r1, 3, 30.0, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((mo_metric(r1, 3, 30.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            mo_metric(r1, 3, 0.0, 0.5),
            Err(ForwardingError::DegenerateScenario(_))
        ));
    }

    #[test]
    fn fig2_policies() {
        let r1 = vec![ContactId(1), ContactId(2)];
        let r3 = vec![ContactId(3)];
        let ttl = Ttl::Finite(30.0);
        assert_eq!(pick(Policy::DelTime, ttl), r1);
        assert_eq!(pick(Policy::Hops, ttl), r3);
        assert_eq!(pick(Policy::mo(0.25).unwrap(), ttl), r1);
        assert_eq!(pick(Policy::mo(0.75).unwrap(), ttl), r3);
        assert_eq!(pick(Policy::mo(0.5).unwrap(), ttl), r3);
    }

    #[test]
    fn selection_books_volume() {
        let routes = fig2_n1_routes();
        let mut ledger = VolumeLedger::new();
        for _ in 0..10 {
            let r = select_route(&routes, Policy::DelTime, &pkt(Ttl::Finite(30.0)), 0.0, 3, 30.0, &mut ledger)
                .unwrap()
                .unwrap();
            assert_eq!(r.hops, 2);
        }
        // R1 exhausted; the next packet falls back to R3
        let r = select_route(&routes, Policy::DelTime, &pkt(Ttl::Finite(30.0)), 0.0, 3, 30.0, &mut ledger)
            .unwrap()
            .unwrap();
        assert_eq!(r.ids(), vec![ContactId(3)]);
        assert_eq!(ledger.volume(&routes[0]), 0);
        let none = select_route(&routes, Policy::DelTime, &pkt(Ttl::Finite(15.0)), 0.0, 3, 30.0, &mut ledger).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn parse_policy_and_ttl() {
        assert_eq!("deltime".parse::<Policy>().unwrap(), Policy::DelTime);
        assert_eq!("HOPS".parse::<Policy>().unwrap(), Policy::Hops);
        assert_eq!("mo:0.25".parse::<Policy>().unwrap(), Policy::Mo { w: 0.25 });
        assert_eq!("MO(0.5)".parse::<Policy>().unwrap(), Policy::Mo { w: 0.5 });
        assert!("mo:1.5".parse::<Policy>().is_err());
        assert!("fastest".parse::<Policy>().is_err());
        assert_eq!("inf".parse::<Ttl>().unwrap(), Ttl::Infinite);
        assert_eq!("20".parse::<Ttl>().unwrap(), Ttl::Finite(20.0));
        assert_eq!(Ttl::Infinite.deadline(5.0, 100.0), 100.0);
        assert_eq!(serde_json::to_string(&Ttl::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Ttl>("20").unwrap(), Ttl::Finite(20.0));
    }
}
