//! Flow oracle: the grouped built-in solve against a direct solve of the
//! per-demand model, and audits of every optimal solution.

use cgrsim::contact_plan::{discretize, BufferCapacity, ContactPlan, ContactSpec, NodeId, NodeSpec, RandomNetwork};
use cgrsim::forwarding::Ttl;
use cgrsim::oracle::{build_ilp, commodities_from_traffic, flows_to_metrics, solve, validate_solution, SolverBackend};
use cgrsim::sim::{Demand, TrafficModel};
use milp::{Arithmetic, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_case(rng: &mut ChaCha8Rng) -> (ContactPlan, TrafficModel, Vec<NodeSpec>) {
    let n_nodes = rng.gen_range(2..=5u32);
    let slots = rng.gen_range(1..=4u32);
    let contacts: Vec<ContactSpec> = (0..rng.gen_range(1..=10))
        .filter_map(|_| {
            let from = rng.gen_range(1..=n_nodes);
            let to = rng.gen_range(1..=n_nodes);
            let a = rng.gen_range(0..slots);
            let b = rng.gen_range(a + 1..=slots);
            (from != to).then(|| {
                ContactSpec::new(NodeId(from), NodeId(to), f64::from(a) * 10.0, f64::from(b) * 10.0, rng.gen_range(0..=4))
            })
        })
        .collect();
    let plan = ContactPlan::from_specs((1..=n_nodes).map(NodeId), contacts).unwrap();
    let demands = (0..rng.gen_range(0..=4))
        .filter_map(|_| {
            let src = rng.gen_range(1..=n_nodes);
            let dst = rng.gen_range(1..=n_nodes);
            let t_gen = f64::from(rng.gen_range(0..=slots)) * 10.0;
            let ttl = match rng.gen_range(0..3) {
                0 => Ttl::Infinite,
                _ => Ttl::Finite(f64::from(rng.gen_range(1..=3u32)) * 10.0),
            };
            (src != dst && t_gen <= plan.horizon()).then(|| Demand {
                src: NodeId(src),
                dst: NodeId(dst),
                count: rng.gen_range(1..=4),
                t_gen,
                ttl,
            })
        })
        .collect();
    let specs = (1..=n_nodes)
        .filter_map(|v| {
            rng.gen_bool(0.2).then(|| NodeSpec {
                id: NodeId(v),
                buffer: BufferCapacity::Packets(rng.gen_range(1..=4)),
            })
        })
        .collect();
    (plan, TrafficModel::new(demands), specs)
}

#[test]
fn grouped_solve_matches_per_demand_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let exact = SolveOptions {
        arithmetic: Arithmetic::Exact,
        ..SolveOptions::default()
    };
    let (mut optimal, mut infeasible) = (0, 0);
    for _ in 0..250 {
        let (plan, traffic, specs) = random_case(&mut rng);
        let timeline = discretize(&plan, &traffic.generation_times()).unwrap();
        let commodities = commodities_from_traffic(&traffic, &timeline).unwrap();
        let model = build_ilp(&timeline, &specs, &commodities).unwrap();

        let direct = milp::solve(model.problem(), &exact).unwrap();
        let grouped = solve(&model, &SolverBackend::default()).unwrap();
        assert_eq!(grouped.status, direct.status, "plan:\n{plan}\n{traffic:?}");
        if grouped.is_optimal() {
            optimal += 1;
            assert_eq!(grouped.objective, direct.objective, "plan:\n{plan}\n{traffic:?}");
            assert_eq!(validate_solution(&model, &grouped), vec![]);
            assert_eq!(validate_solution(&model, &model.flows_from_values(&direct)), vec![]);
            let m = flows_to_metrics(&grouped, &model).unwrap();
            assert_eq!(m.delivered_on_time, m.generated);
            assert_eq!(m.transmissions as i64, grouped.total_flow());
        } else {
            infeasible += 1;
        }
    }
    assert!(optimal > 50 && infeasible > 20, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn every_model_variable_is_constrained() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let (plan, traffic, specs) = random_case(&mut rng);
        let timeline = discretize(&plan, &traffic.generation_times()).unwrap();
        let model = build_ilp(&timeline, &specs, &commodities_from_traffic(&traffic, &timeline).unwrap()).unwrap();
        let mut used = vec![false; model.problem().num_vars()];
        for row in model.problem().constraints() {
            for &(v, _) in &row.terms {
                used[v.0] = true;
            }
        }
        assert!(used.iter().all(|&u| u));
    }
}

#[test]
fn random_networks_at_full_load() {
    let sources: Vec<(NodeId, Ttl)> = (1..=10)
        .map(|v| (NodeId(v), if v <= 5 { Ttl::Infinite } else { Ttl::Finite(20.0) }))
        .collect();
    let traffic = TrafficModel::all_to_one(&sources, NodeId(11), 10);
    let (mut kept, mut excluded) = (0, 0);
    for seed in 0..20 {
        let plan = RandomNetwork::default().generate(seed).unwrap();
        let timeline = discretize(&plan, &traffic.generation_times()).unwrap();
        let model = build_ilp(&timeline, &[], &commodities_from_traffic(&traffic, &timeline).unwrap()).unwrap();
        let sol = solve(&model, &SolverBackend::default()).unwrap();
        match sol.status {
            Status::Optimal => {
                kept += 1;
                assert_eq!(validate_solution(&model, &sol), vec![]);
                assert_eq!(flows_to_metrics(&sol, &model).unwrap().delivery_ratio, 1.0);
            }
            Status::Infeasible => excluded += 1,
        }
    }
    assert_eq!(kept + excluded, 20);
}
