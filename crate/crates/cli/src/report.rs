//! CSV output: per-run rows, aggregates with 95% intervals, filter manifests.

use std::collections::BTreeMap;
use std::io;

use cgrsim::contact_plan::NodeId;

use crate::experiment::{ManifestEntry, RunRow};

pub const RUN_COLUMNS: [&str; 19] = [
    "scenario_id",
    "plan_seed",
    "load",
    "policy",
    "w",
    "K",
    "run_seed",
    "delivery_ratio",
    "dropped_total",
    "dropped_per_node",
    "mean_hops",
    "energy_efficiency",
    "mean_delay",
    "mean_delay_ttl_finite",
    "mean_delay_ttl_inf",
    "generated",
    "delivered_on_time",
    "delivered_late",
    "residual",
];

/// Metrics averaged in aggregate rows, with how to read them off a run.
const AGGREGATED: [(&str, fn(&RunRow) -> Option<f64>); 11] = [
    ("delivery_ratio", |r| Some(r.delivery_ratio)),
    ("dropped_total", |r| Some(r.dropped_total as f64)),
    ("mean_hops", |r| r.mean_hops),
    ("energy_efficiency", |r| r.energy_efficiency),
    ("mean_delay", |r| r.mean_delay),
    ("mean_delay_ttl_finite", |r| r.mean_delay_ttl_finite),
    ("mean_delay_ttl_inf", |r| r.mean_delay_ttl_inf),
    ("generated", |r| Some(r.generated as f64)),
    ("delivered_on_time", |r| Some(r.delivered_on_time as f64)),
    ("delivered_late", |r| Some(r.delivered_late as f64)),
    ("residual", |r| Some(r.residual as f64)),
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn dropped_json(drops: &BTreeMap<NodeId, u64>) -> String {
    serde_json::to_string(drops).expect("map of integers serializes")
}

pub fn write_runs(rows: &[RunRow], w: impl io::Write) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RUN_COLUMNS).map_err(to_io)?;
    for r in rows {
        out.write_record([
            r.scenario_id.clone(),
            opt(r.plan_seed),
            r.load.to_string(),
            r.policy.clone(),
            opt(r.w),
            opt(r.k),
            opt(r.run_seed),
            r.delivery_ratio.to_string(),
            r.dropped_total.to_string(),
            dropped_json(&r.dropped_per_node),
            opt(r.mean_hops),
            opt(r.energy_efficiency),
            opt(r.mean_delay),
            opt(r.mean_delay_ttl_finite),
            opt(r.mean_delay_ttl_inf),
            r.generated.to_string(),
            r.delivered_on_time.to_string(),
            r.delivered_late.to_string(),
            r.residual.to_string(),
        ])
        .map_err(to_io)?;
    }
    out.flush()
}

/// Mean and 95% half-width (1.96 standard errors, sample deviation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

pub fn estimate(values: &[f64]) -> Option<Estimate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    };
    Some(Estimate { mean, half_width, n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario_id: String,
    pub load: u64,
    pub policy: String,
    pub w: Option<f64>,
    pub k: Option<usize>,
    pub runs: usize,
    /// Per metric in [`AGGREGATED`] order; `None` when no run defines it.
    pub metrics: Vec<(&'static str, Option<Estimate>)>,
    /// Mean drops per node over all runs of the group.
    pub dropped_per_node_mean: BTreeMap<NodeId, f64>,
}

impl AggregateRow {
    pub fn metric(&self, name: &str) -> Option<Estimate> {
        self.metrics.iter().find(|m| m.0 == name).and_then(|m| m.1)
    }
}

/// Groups runs by (scenario, load, policy, w, K) across plans and seeds,
/// in order of first appearance.
pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<(&RunRow, Vec<&RunRow>)> = Vec::new();
    for r in rows {
        let same = |g: &RunRow| g.scenario_id == r.scenario_id && g.load == r.load && g.policy == r.policy && g.w == r.w && g.k == r.k;
        match groups.iter_mut().find(|(head, _)| same(head)) {
            Some((_, members)) => members.push(r),
            None => groups.push((r, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(head, members)| {
            let metrics = AGGREGATED
                .iter()
                .map(|(name, read)| {
                    let values: Vec<f64> = members.iter().filter_map(|r| read(r)).collect();
                    (*name, estimate(&values))
                })
                .collect();
            let mut drops: BTreeMap<NodeId, f64> = BTreeMap::new();
            for r in &members {
                for (&node, &n) in &r.dropped_per_node {
                    *drops.entry(node).or_insert(0.0) += n as f64;
                }
            }
            for v in drops.values_mut() {
                *v /= members.len() as f64;
            }
            AggregateRow {
                scenario_id: head.scenario_id.clone(),
                load: head.load,
                policy: head.policy.clone(),
                w: head.w,
                k: head.k,
                runs: members.len(),
                metrics,
                dropped_per_node_mean: drops,
            }
        })
        .collect()
}

pub fn write_aggregate(rows: &[AggregateRow], w: impl io::Write) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["scenario_id", "load", "policy", "w", "K", "runs"].map(String::from).to_vec();
    for (name, _) in AGGREGATED {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_ci95"));
    }
    header.push("dropped_per_node_mean".into());
    out.write_record(&header).map_err(to_io)?;
    for r in rows {
        let mut rec = vec![
            r.scenario_id.clone(),
            r.load.to_string(),
            r.policy.clone(),
            opt(r.w),
            opt(r.k),
            r.runs.to_string(),
        ];
        for (_, est) in &r.metrics {
            rec.push(opt(est.map(|e| e.mean)));
            rec.push(opt(est.map(|e| e.half_width)));
        }
        rec.push(serde_json::to_string(&r.dropped_per_node_mean).expect("map of floats serializes"));
        out.write_record(&rec).map_err(to_io)?;
    }
    out.flush()
}

pub fn write_manifest(entries: &[ManifestEntry], w: impl io::Write) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["seed", "status", "objective", "detail"]).map_err(to_io)?;
    for e in entries {
        out.write_record([e.seed.to_string(), e.status.label().to_string(), opt(e.objective), e.detail.clone()])
            .map_err(to_io)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(load: u64, policy: &str, ratio: f64, drops: &[(u32, u64)]) -> RunRow {
        RunRow {
            scenario_id: "s".into(),
            plan_seed: Some(1),
            load,
            policy: policy.into(),
            w: None,
            k: Some(20),
            run_seed: Some(0),
            delivery_ratio: ratio,
            dropped_total: drops.iter().map(|d| d.1).sum(),
            dropped_per_node: drops.iter().map(|&(n, c)| (NodeId(n), c)).collect(),
            mean_hops: None,
            energy_efficiency: None,
            mean_delay: None,
            mean_delay_ttl_finite: None,
            mean_delay_ttl_inf: None,
            generated: 10,
            delivered_on_time: (ratio * 10.0) as u64,
            delivered_late: 0,
            residual: 0,
        }
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = estimate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3
        assert!((e.half_width - 1.96 * (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(estimate(&[7.0]).unwrap().half_width, 0.0);
        assert_eq!(estimate(&[]), None);
    }

    #[test]
    fn groups_by_load_and_policy() {
        let rows = [
            row(1, "HOPS", 1.0, &[]),
            row(1, "DELTIME", 0.5, &[(2, 4)]),
            row(1, "HOPS", 0.8, &[(3, 2)]),
            row(2, "HOPS", 0.6, &[]),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 3);
        assert_eq!((agg[0].policy.as_str(), agg[0].runs), ("HOPS", 2));
        assert!((agg[0].metric("delivery_ratio").unwrap().mean - 0.9).abs() < 1e-12);
        assert_eq!(agg[0].metric("mean_hops"), None);
        assert_eq!(agg[0].dropped_per_node_mean, BTreeMap::from([(NodeId(3), 1.0)]));
    }

    #[test]
    fn runs_csv_has_fixed_columns() {
        let mut buf = Vec::new();
        write_runs(&[row(3, "MO", 0.25, &[(2, 10)])], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RUN_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), r#"s,1,3,MO,,20,0,0.25,10,"{""2"":10}",,,,,,10,2,0,0"#);
    }
}
