//! Route search against exhaustive enumeration of simple contact paths.

use std::collections::BTreeSet;

use cgrsim::contact_plan::{generate_random_network, ContactPlan, ContactSpec, NodeId};
use cgrsim::routing::{build_contact_graph, earliest_route, k_best_routes, Route};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every simple path from `src` to `dst` usable when departing at `t_now`,
/// as (edt, hops, ids), sorted.
fn enumerate(plan: &ContactPlan, src: NodeId, dst: NodeId, t_now: f64) -> Vec<(f64, usize, Vec<u32>)> {
    fn walk(
        plan: &ContactPlan,
        at: NodeId,
        time: f64,
        dst: NodeId,
        visited: &mut BTreeSet<NodeId>,
        path: &mut Vec<u32>,
        out: &mut Vec<(f64, usize, Vec<u32>)>,
    ) {
        for c in plan.contacts() {
            if c.from != at || visited.contains(&c.to) {
                continue;
            }
            let arrival = time.max(c.t_start);
            if arrival >= c.t_end {
                continue;
            }
            path.push(c.id.0);
            if c.to == dst {
                out.push((arrival, path.len(), path.clone()));
            } else {
                visited.insert(c.to);
                walk(plan, c.to, arrival, dst, visited, path, out);
                visited.remove(&c.to);
            }
            path.pop();
        }
    }
    let mut out = Vec::new();
    let mut visited = BTreeSet::from([src]);
    walk(plan, src, t_now, dst, &mut visited, &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    out
}

fn key(r: &Route) -> (f64, usize, Vec<u32>) {
    (r.edt, r.hops, r.contacts.iter().map(|c| c.id.0).collect())
}

/// Small plans on a coarse time grid so that equal times, touching windows
/// and parallel contacts are common.
fn random_plan(rng: &mut ChaCha8Rng) -> ContactPlan {
    let n_nodes = rng.gen_range(2..=6u32);
    let n_states = rng.gen_range(1..=4u32);
    if rng.gen_bool(0.3) {
        return generate_random_network(rng.gen(), n_nodes, n_states, 10.0, rng.gen_range(0.2..0.9), 5).unwrap();
    }
    let slots = n_states * 2;
    let n_contacts = rng.gen_range(0..=(n_nodes * n_states * 2) as usize);
    let contacts: Vec<ContactSpec> = (0..n_contacts)
        .filter_map(|_| {
            let from = rng.gen_range(1..=n_nodes);
            let to = rng.gen_range(1..=n_nodes);
            let a = rng.gen_range(0..slots);
            let b = rng.gen_range(a + 1..=slots);
            (from != to).then(|| {
                ContactSpec::new(NodeId(from), NodeId(to), f64::from(a) * 5.0, f64::from(b) * 5.0, rng.gen_range(0..4))
            })
        })
        .collect();
    ContactPlan::from_specs((1..=n_nodes).map(NodeId), contacts).unwrap()
}

#[test]
fn matches_enumeration_on_random_plans() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut plans = 0;
    let mut compared = 0;
    while plans < 300 {
        let plan = random_plan(&mut rng);
        plans += 1;
        let n = plan.nodes().len() as u32;
        for _ in 0..4 {
            let src = NodeId(rng.gen_range(1..=n));
            let dst = NodeId(rng.gen_range(1..=n));
            if src == dst {
                continue;
            }
            let t_now = f64::from(rng.gen_range(0..8u32)) * 2.5;
            let expected = enumerate(&plan, src, dst, t_now);
            let graph = build_contact_graph(&plan, src, dst, t_now).unwrap();

            let got: Vec<_> = k_best_routes(&graph, usize::MAX).iter().map(key).collect();
            assert_eq!(got, expected, "plan:\n{plan}\nfrom {src} to {dst} at {t_now}");
            assert_eq!(earliest_route(&graph).map(|r| key(&r)), expected.first().cloned());

            let k = rng.gen_range(1..=4);
            let top: Vec<_> = k_best_routes(&graph, k).iter().map(key).collect();
            assert_eq!(top, expected.iter().take(k).cloned().collect::<Vec<_>>());
            compared += 1;
        }
    }
    assert!(compared >= 200);
}

#[test]
fn routes_respect_windows_and_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let plan = random_plan(&mut rng);
        let n = plan.nodes().len() as u32;
        let graph = build_contact_graph(&plan, NodeId(1), NodeId(n), 0.0).unwrap();
        for r in k_best_routes(&graph, 10) {
            assert_eq!(r.hops, r.contacts.len());
            assert!(0.0 < r.expiry);
            assert!(r.edt < r.contacts.last().unwrap().t_end);
            let arrivals = r.arrival_times(0.0);
            for (w, c) in arrivals.windows(2).zip(r.contacts.iter().skip(1)) {
                assert!(w[0] <= w[1]);
                assert!(c.t_start <= w[1] && w[1] < c.t_end);
            }
            for pair in r.contacts.windows(2) {
                assert_eq!(pair[0].to, pair[1].from);
            }
            assert_eq!(r.volume, r.contacts.iter().map(|c| c.capacity).min().unwrap());
            assert_eq!(r.edt, *arrivals.last().unwrap());
        }
    }
}
