//! Contact graph routing.
//!
//! Routes are ranked by `(edt, hops, contact ids)`. Arrival at a contact is
//! `max(arrival so far, t_start)` and must stay below `t_end`; with zero
//! light time the delivery estimate is the arrival at the last contact.
//! Routes never visit a node twice.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::contact_plan::{Contact, ContactId, ContactPlan, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("node {0} is not part of the contact plan")]
    UnknownNode(NodeId),
    #[error("source and destination are both node {0}")]
    SameEndpoints(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub contacts: Vec<Contact>,
    pub hops: usize,
    /// Estimated delivery time.
    pub edt: f64,
    /// Smallest residual capacity along the route.
    pub volume: u64,
    /// Earliest contact end along the route.
    pub expiry: f64,
    pub next_hop: NodeId,
}

impl Route {
    /// Builds the route for departing at `t_now`; `None` if some contact
    /// would be reached after it closes or the contacts do not chain.
    pub fn from_contacts(contacts: Vec<Contact>, t_now: f64) -> Option<Route> {
        let first = contacts.first()?;
        let next_hop = first.to;
        let mut arrival = t_now;
        for (i, c) in contacts.iter().enumerate() {
            if i > 0 && contacts[i - 1].to != c.from {
                return None;
            }
            arrival = arrival.max(c.t_start);
            if arrival >= c.t_end {
                return None;
            }
        }
        Some(Route {
            hops: contacts.len(),
            edt: arrival,
            volume: contacts.iter().map(|c| c.capacity).min().unwrap_or(0),
            expiry: contacts.iter().map(|c| c.t_end).fold(f64::INFINITY, f64::min),
            next_hop,
            contacts,
        })
    }

    pub fn ids(&self) -> Vec<ContactId> {
        self.contacts.iter().map(|c| c.id).collect()
    }

    pub fn first_contact(&self) -> &Contact {
        &self.contacts[0]
    }

    /// Arrival time at each contact when departing at `t_now`.
    pub fn arrival_times(&self, t_now: f64) -> Vec<f64> {
        self.contacts
            .iter()
            .scan(t_now, |a, c| {
                *a = a.max(c.t_start);
                Some(*a)
            })
            .collect()
    }

    /// The same route seen from a later time. Valid while `t_now < expiry`;
    /// arrivals only move up to `t_now`, so the estimate becomes
    /// `max(edt, t_now)`.
    pub fn served_at(&self, t_now: f64) -> Route {
        Route {
            edt: self.edt.max(t_now),
            ..self.clone()
        }
    }

    /// Ranking used for route lists: `(edt, hops, contact ids)`.
    pub fn rank_cmp(&self, other: &Route) -> Ordering {
        self.edt
            .total_cmp(&other.edt)
            .then(self.hops.cmp(&other.hops))
            .then_with(|| self.contacts.iter().map(|c| c.id).cmp(other.contacts.iter().map(|c| c.id)))
    }
}

/// Contacts still usable after `t_now`, with retention edges between them.
#[derive(Debug, Clone)]
pub struct ContactGraph<'p> {
    plan: &'p ContactPlan,
    source: NodeId,
    dest: NodeId,
    t_now: f64,
    /// Indices into `plan.contacts()`, ascending id.
    vertices: Vec<usize>,
    node_index: BTreeMap<NodeId, usize>,
    /// Per dense node index, positions in `vertices` departing that node.
    out: Vec<Vec<usize>>,
}

pub fn build_contact_graph(
    plan: &ContactPlan,
    source: NodeId,
    dest: NodeId,
    t_now: f64,
) -> Result<ContactGraph<'_>, RoutingError> {
    for n in [source, dest] {
        if !plan.has_node(n) {
            return Err(RoutingError::UnknownNode(n));
        }
    }
    if source == dest {
        return Err(RoutingError::SameEndpoints(source));
    }
    let node_index: BTreeMap<NodeId, usize> = plan.nodes().iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let vertices: Vec<usize> = plan
        .contacts()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.t_end > t_now)
        .map(|(i, _)| i)
        .collect();
    let mut out = vec![Vec::new(); node_index.len()];
    for (pos, &ci) in vertices.iter().enumerate() {
        out[node_index[&plan.contacts()[ci].from]].push(pos);
    }
    Ok(ContactGraph {
        plan,
        source,
        dest,
        t_now,
        vertices,
        node_index,
        out,
    })
}

/// A down-set of times: everything below `time`, and `time` itself if
/// `inclusive`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cutoff {
    time: f64,
    inclusive: bool,
}

impl Cutoff {
    const EMPTY: Cutoff = Cutoff {
        time: f64::NEG_INFINITY,
        inclusive: false,
    };

    fn admits(self, t: f64) -> bool {
        t < self.time || (self.inclusive && t == self.time)
    }

    fn key_cmp(self, other: Cutoff) -> Ordering {
        self.time.total_cmp(&other.time).then(self.inclusive.cmp(&other.inclusive))
    }

    fn min(self, other: Cutoff) -> Cutoff {
        if self.key_cmp(other).is_le() {
            self
        } else {
            other
        }
    }

    fn max(self, other: Cutoff) -> Cutoff {
        if self.key_cmp(other).is_ge() {
            self
        } else {
            other
        }
    }
}

/// Restrictions for one search: nodes that may not be entered and contacts
/// that may not be taken from the start node.
struct Bans<'a> {
    nodes: &'a [bool],
    first: &'a HashSet<ContactId>,
}

impl<'p> ContactGraph<'p> {
    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn dest(&self) -> NodeId {
        self.dest
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    fn vertex(&self, pos: usize) -> &'p Contact {
        &self.plan.contacts()[self.vertices[pos]]
    }

    pub fn vertex_ids(&self) -> Vec<ContactId> {
        (0..self.vertices.len()).map(|p| self.vertex(p).id).collect()
    }

    /// Contacts leaving the source.
    pub fn root_successors(&self) -> Vec<ContactId> {
        self.out[self.node_index[&self.source]].iter().map(|&p| self.vertex(p).id).collect()
    }

    /// Contacts reaching the destination.
    pub fn terminal_predecessors(&self) -> Vec<ContactId> {
        (0..self.vertices.len())
            .map(|p| self.vertex(p))
            .filter(|c| c.to == self.dest)
            .map(|c| c.id)
            .collect()
    }

    /// Contacts a packet carried by `id` can be handed to.
    pub fn successors(&self, id: ContactId) -> Vec<ContactId> {
        let Some(a) = (0..self.vertices.len()).map(|p| self.vertex(p)).find(|c| c.id == id) else {
            return Vec::new();
        };
        let ready = a.t_start.max(self.t_now);
        self.out[self.node_index[&a.to]]
            .iter()
            .map(|&p| self.vertex(p))
            .filter(|b| b.id != a.id && b.t_end > ready)
            .map(|b| b.id)
            .collect()
    }

    fn allowed(&self, pos: usize, at_start: bool, start: usize, bans: &Bans) -> bool {
        let c = self.vertex(pos);
        let to = self.node_index[&c.to];
        to != start && !bans.nodes[to] && !(at_start && bans.first.contains(&c.id))
    }

    /// Lexicographically smallest `(edt, hops, ids)` path from `start` at
    /// `t0` to the destination, as vertex positions.
    fn best_path(&self, start: usize, t0: f64, bans: &Bans) -> Option<Vec<usize>> {
        let n = self.node_index.len();
        let dest = self.node_index[&self.dest];

        // earliest arrival per node
        let mut earliest = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        earliest[start] = t0;
        loop {
            let Some(u) = (0..n)
                .filter(|&u| !done[u] && earliest[u].is_finite())
                .min_by(|&a, &b| earliest[a].total_cmp(&earliest[b]).then(a.cmp(&b)))
            else {
                break;
            };
            done[u] = true;
            if u == dest {
                break;
            }
            for &p in &self.out[u] {
                if !self.allowed(p, u == start, start, bans) {
                    continue;
                }
                let c = self.vertex(p);
                let v = self.node_index[&c.to];
                let a = earliest[u].max(c.t_start);
                if a < c.t_end && a < earliest[v] {
                    earliest[v] = a;
                }
            }
        }
        let best_edt = earliest[dest];
        if !best_edt.is_finite() {
            return None;
        }
        let usable = |p: usize| self.vertex(p).t_start <= best_edt;

        // fewest hops reaching the destination by best_edt
        let mut reach = vec![f64::INFINITY; n];
        reach[start] = t0;
        let mut hops = 0;
        while reach[dest] > best_edt {
            hops += 1;
            if hops > n {
                unreachable!("earliest-arrival path has fewer than n hops");
            }
            let prev = reach.clone();
            for u in (0..n).filter(|&u| u != dest && prev[u].is_finite()) {
                for &p in &self.out[u] {
                    if !usable(p) || !self.allowed(p, u == start, start, bans) {
                        continue;
                    }
                    let c = self.vertex(p);
                    let v = self.node_index[&c.to];
                    let a = prev[u].max(c.t_start);
                    if a < c.t_end && a < reach[v] {
                        reach[v] = a;
                    }
                }
            }
        }

        // cutoffs[r][v]: times at which v can still reach the destination
        // by best_edt within r contacts
        let mut cutoffs = vec![vec![Cutoff::EMPTY; n]];
        cutoffs[0][dest] = Cutoff {
            time: best_edt,
            inclusive: true,
        };
        for r in 1..hops {
            let prev = &cutoffs[r - 1];
            let mut cur = prev.clone();
            for u in (0..n).filter(|&u| u != dest && u != start) {
                for &p in &self.out[u] {
                    if !usable(p) || !self.allowed(p, false, start, bans) {
                        continue;
                    }
                    let c = self.vertex(p);
                    let window = Cutoff {
                        time: c.t_end,
                        inclusive: false,
                    }
                    .min(prev[self.node_index[&c.to]]);
                    if window.admits(c.t_start) {
                        cur[u] = cur[u].max(window);
                    }
                }
            }
            cutoffs.push(cur);
        }

        // smallest contact id first at every step
        let mut path = Vec::with_capacity(hops);
        let (mut u, mut a) = (start, t0);
        for step in 0..hops {
            let left = hops - step - 1;
            let next = self.out[u].iter().copied().find(|&p| {
                if !usable(p) || !self.allowed(p, step == 0, start, bans) {
                    return false;
                }
                let c = self.vertex(p);
                let arr = a.max(c.t_start);
                arr < c.t_end && cutoffs[left][self.node_index[&c.to]].admits(arr)
            })?;
            let c = self.vertex(next);
            a = a.max(c.t_start);
            u = self.node_index[&c.to];
            path.push(next);
        }
        debug_assert_eq!(u, dest);
        debug_assert_eq!(a, best_edt);
        Some(path)
    }

    fn to_route(&self, path: &[usize]) -> Route {
        let contacts = path.iter().map(|&p| *self.vertex(p)).collect();
        Route::from_contacts(contacts, self.t_now).expect("search only returns feasible paths")
    }
}

/// The route with the earliest delivery time, ties broken by hops and then
/// contact ids.
pub fn earliest_route(graph: &ContactGraph) -> Option<Route> {
    let none = vec![false; graph.node_index.len()];
    let first = HashSet::new();
    let start = graph.node_index[&graph.source];
    graph
        .best_path(
            start,
            graph.t_now,
            &Bans {
                nodes: &none,
                first: &first,
            },
        )
        .map(|p| graph.to_route(&p))
}

struct Candidate {
    route: Route,
    path: Vec<usize>,
    /// Index of the first contact that differs from the parent route.
    deviation: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.route.rank_cmp(&other.route)
    }
}

/// Up to `k` best routes in `(edt, hops, ids)` order, by Yen's algorithm
/// with Lawler's restriction of spur nodes to the deviation suffix. Pass
/// `usize::MAX` to enumerate every simple route.
pub fn k_best_routes(graph: &ContactGraph, k: usize) -> Vec<Route> {
    let n = graph.node_index.len();
    let source = graph.node_index[&graph.source];
    let no_nodes = vec![false; n];
    let no_first = HashSet::new();
    let Some(first) = graph.best_path(
        source,
        graph.t_now,
        &Bans {
            nodes: &no_nodes,
            first: &no_first,
        },
    ) else {
        return Vec::new();
    };

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut candidates = BTreeSet::new();
    seen.insert(first.clone());
    candidates.insert(Candidate {
        route: graph.to_route(&first),
        path: first,
        deviation: 0,
    });
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut routes = Vec::new();

    while routes.len() < k {
        let Some(best) = candidates.pop_first() else {
            break;
        };
        found.push(best.path.clone());
        routes.push(best.route);
        let path = &best.path;

        for i in best.deviation..path.len() {
            let root = &path[..i];
            let (spur, t_spur) = match root.last() {
                None => (source, graph.t_now),
                Some(_) => {
                    let arrivals = graph.to_route(path).arrival_times(graph.t_now);
                    (graph.node_index[&graph.vertex(path[i - 1]).to], arrivals[i - 1])
                }
            };
            let mut banned = vec![false; n];
            banned[source] = true;
            for &p in root {
                banned[graph.node_index[&graph.vertex(p).from]] = true;
            }
            banned[spur] = false;
            let first: HashSet<ContactId> = found
                .iter()
                .filter(|f| f.len() > i && f[..i] == *root)
                .map(|f| graph.vertex(f[i]).id)
                .collect();
            let Some(tail) = graph.best_path(
                spur,
                t_spur,
                &Bans {
                    nodes: &banned,
                    first: &first,
                },
            ) else {
                continue;
            };
            let mut full = root.to_vec();
            full.extend(tail);
            if seen.insert(full.clone()) {
                candidates.insert(Candidate {
                    route: graph.to_route(&full),
                    path: full,
                    deviation: i,
                });
            }
        }
    }
    routes
}

/// Per-node route table, recomputed once the earliest-expiring cached route
/// expires.
#[derive(Debug, Clone)]
pub struct RouteCache {
    k: usize,
    entries: BTreeMap<(NodeId, NodeId), CacheEntry>,
    computations: usize,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    valid_until: f64,
    routes: Vec<Route>,
}

impl RouteCache {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            entries: BTreeMap::new(),
            computations: 0,
        }
    }

    /// Number of K-best searches performed so far.
    pub fn computations(&self) -> usize {
        self.computations
    }

    /// Routes from `local` to `dest` as seen at `t_now`.
    pub fn routes(
        &mut self,
        plan: &ContactPlan,
        local: NodeId,
        dest: NodeId,
        t_now: f64,
    ) -> Result<Vec<Route>, RoutingError> {
        let fresh = self
            .entries
            .get(&(local, dest))
            .is_some_and(|e| t_now < e.valid_until);
        if !fresh {
            let graph = build_contact_graph(plan, local, dest, t_now)?;
            let routes = k_best_routes(&graph, self.k);
            self.computations += 1;
            let valid_until = routes.iter().map(|r| r.expiry).fold(f64::INFINITY, f64::min);
            self.entries.insert((local, dest), CacheEntry { valid_until, routes });
        }
        Ok(self.entries[&(local, dest)].routes.iter().map(|r| r.served_at(t_now)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_plan::{fig2_plan, ContactSpec};

    fn ids(v: &[u32]) -> Vec<ContactId> {
        v.iter().map(|&i| ContactId(i)).collect()
    }

    #[test]
    fn fig2_graph_shape() {
        let plan = fig2_plan();
        let g = build_contact_graph(&plan, NodeId(1), NodeId(3), 0.0).unwrap();
        assert_eq!(g.root_successors(), ids(&[1, 3]));
        assert_eq!(g.successors(ContactId(1)), ids(&[2]));
        assert_eq!(g.terminal_predecessors(), ids(&[2, 3]));
        let late = build_contact_graph(&plan, NodeId(1), NodeId(3), 25.0).unwrap();
        assert_eq!(late.vertex_ids(), ids(&[3]));
    }

    #[test]
    fn graph_errors() {
        let plan = fig2_plan();
        assert_eq!(
            build_contact_graph(&plan, NodeId(1), NodeId(9), 0.0).unwrap_err(),
            RoutingError::UnknownNode(NodeId(9))
        );
        assert!(build_contact_graph(&plan, NodeId(2), NodeId(2), 0.0).is_err());
    }

    #[test]
    fn fig2_routes() {
        let plan = fig2_plan();
        let g = build_contact_graph(&plan, NodeId(1), NodeId(3), 0.0).unwrap();
        let r = earliest_route(&g).unwrap();
        assert_eq!((r.ids(), r.edt, r.hops), (ids(&[1, 2]), 10.0, 2));
        assert_eq!(r.expiry, 10.0);
        assert_eq!(r.next_hop, NodeId(2));
        let all = k_best_routes(&g, 5);
        assert_eq!(all.len(), 2);
        assert_eq!((all[1].ids(), all[1].edt), (ids(&[3]), 20.0));
        assert_eq!(k_best_routes(&g, 1), vec![r]);

        let g2 = build_contact_graph(&plan, NodeId(2), NodeId(3), 0.0).unwrap();
        let r2 = earliest_route(&g2).unwrap();
        assert_eq!((r2.ids(), r2.edt, r2.hops), (ids(&[2]), 10.0, 1));
        assert_eq!(k_best_routes(&g2, 5).len(), 1);
    }

    #[test]
    fn no_contacts_no_route() {
        let plan = ContactPlan::from_specs([NodeId(1), NodeId(2)], []).unwrap();
        let g = build_contact_graph(&plan, NodeId(1), NodeId(2), 0.0).unwrap();
        assert!(g.vertex_ids().is_empty());
        assert!(earliest_route(&g).is_none());
        assert!(k_best_routes(&g, 3).is_empty());
    }

    #[test]
    fn ties_prefer_fewer_hops_then_ids() {
        let n = NodeId;
        // 1->3 direct at [5,9) and 1->2->3 both reaching by 5
        let plan = ContactPlan::from_specs(
            [],
            [
                ContactSpec::new(n(1), n(2), 0.0, 9.0, 1),
                ContactSpec::new(n(2), n(3), 5.0, 9.0, 1),
                ContactSpec::new(n(1), n(3), 5.0, 9.0, 1),
                ContactSpec::new(n(1), n(3), 4.0, 9.0, 1),
            ],
        )
        .unwrap();
        let g = build_contact_graph(&plan, n(1), n(3), 0.0).unwrap();
        let all = k_best_routes(&g, usize::MAX);
        let got: Vec<_> = all.iter().map(|r| (r.ids(), r.edt)).collect();
        assert_eq!(
            got,
            vec![(ids(&[4]), 4.0), (ids(&[3]), 5.0), (ids(&[1, 2]), 5.0)]
        );
    }

    #[test]
    fn closed_contact_is_not_usable() {
        let n = NodeId;
        // the relay contact closes exactly when the packet could first arrive
        let plan = ContactPlan::from_specs(
            [],
            [ContactSpec::new(n(1), n(2), 5.0, 6.0, 1), ContactSpec::new(n(2), n(3), 0.0, 5.0, 1)],
        )
        .unwrap();
        let g = build_contact_graph(&plan, n(1), n(3), 0.0).unwrap();
        assert!(earliest_route(&g).is_none());
    }

    #[test]
    fn cache_reuses_until_expiry() {
        let plan = fig2_plan();
        let mut cache = RouteCache::new(5);
        let r0 = cache.routes(&plan, NodeId(1), NodeId(3), 0.0).unwrap();
        assert_eq!(r0.len(), 2);
        let r5 = cache.routes(&plan, NodeId(1), NodeId(3), 5.0).unwrap();
        assert_eq!(cache.computations(), 1);
        assert_eq!(r5[0].edt, 10.0);
        let r12 = cache.routes(&plan, NodeId(1), NodeId(3), 12.0).unwrap();
        assert_eq!(cache.computations(), 2);
        assert_eq!(r12.len(), 1);
        assert_eq!(r12[0].ids(), ids(&[3]));
    }
}
