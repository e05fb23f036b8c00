use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cgrsim::contact_plan::NodeId;
use cgrsim_cli::config::{Overrides, ScenarioConfig};
use cgrsim_cli::experiment::{FilterStatus, RunRow};
use cgrsim_cli::report::{aggregate, estimate};
use cgrsim_cli::{cmd_filter, cmd_run, CliError};
use proptest::prelude::*;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn cgrsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cgrsim")).args(args).output().unwrap()
}

#[test]
fn fig2_runs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = cgrsim(&["run", config("fig2.toml").to_str().unwrap(), "--out-dir", out]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let text = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let by_policy: BTreeMap<String, (&str, &str)> = rows
        .iter()
        .map(|r| (format!("{}{}", r[3], r[4]), (r[7], r[10])))
        .collect();
    assert_eq!(by_policy["ILP"], ("1", "1"));
    assert_eq!(by_policy["DELTIME"], ("0.5", "2"));
    assert_eq!(by_policy["HOPS"], ("1", "1"));
    assert_eq!(by_policy["MO0.25"].0, "0.5");
    assert_eq!(by_policy["MO0.5"].0, "1");
    assert!(text.contains(r#""{""2"":10}""#));
    assert!(dir.path().join("aggregate.csv").exists());
}

#[test]
fn empty_policy_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cgrsim(&[
        "run",
        config("fig2.toml").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--policies",
        "",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = ScenarioConfig::load(&config("fig2.toml"), &Overrides {
        policies: Some(vec!["mo:1.5".into()]),
        ..Overrides::default()
    })
    .unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
}

#[test]
fn missing_config_file_is_reported() {
    let out = cgrsim(&["run", "/nonexistent/scenario.toml"]);
    assert!(!out.status.success());
}

#[test]
fn export_lp_writes_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig2.lp");
    let out = cgrsim(&["export-lp", config("fig2.toml").to_str().unwrap(), "--load", "10", "-o", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lp = fs::read_to_string(path).unwrap();
    assert!(lp.contains("X_k2_e2_d1"));
    assert!(lp.to_ascii_lowercase().contains("end"));
}

#[test]
fn filter_manifest_lists_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = |candidates| {
        ScenarioConfig::load(&config("random.toml"), &Overrides {
            out_dir: Some(dir.path().to_path_buf()),
            candidates: Some(candidates),
            loads: Some("1".into()),
            ..Overrides::default()
        })
        .unwrap()
    };

    assert!(cmd_filter(&cfg(0)).unwrap().is_empty());
    let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.trim(), "seed,status,objective,detail");

    let cfg = cfg(8);
    let entries = cmd_filter(&cfg).unwrap();
    assert_eq!(entries.iter().map(|e| e.seed).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
    for e in &entries {
        let plan_file = cfg.output.plans_dir.join(format!("plan_{}.txt", e.seed));
        assert_eq!(plan_file.exists(), e.status == FilterStatus::Kept);
        assert_eq!(e.objective.is_some(), e.status == FilterStatus::Kept);
    }
    assert_eq!(fs::read_to_string(&cfg.output.manifest).unwrap().lines().count(), 9);
}

#[test]
fn events_are_written_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&config("fig2.toml"), &Overrides {
        out_dir: Some(dir.path().to_path_buf()),
        events: Some(true),
        oracle: Some(false),
        ..Overrides::default()
    })
    .unwrap();
    let summary = cmd_run(&cfg).unwrap();
    let files = fs::read_dir(cfg.output.events_dir.unwrap()).unwrap().count();
    assert_eq!(files, summary.rows.len());
}

fn row(plan_seed: u64, load: u64, policy: &str, ratio: f64, drops: u64) -> RunRow {
    RunRow {
        scenario_id: "p".into(),
        plan_seed: Some(plan_seed),
        load,
        policy: policy.into(),
        w: None,
        k: Some(20),
        run_seed: Some(0),
        delivery_ratio: ratio,
        dropped_total: drops,
        dropped_per_node: BTreeMap::from([(NodeId(1), drops)]),
        mean_hops: None,
        energy_efficiency: None,
        mean_delay: None,
        mean_delay_ttl_finite: None,
        mean_delay_ttl_inf: None,
        generated: 10,
        delivered_on_time: 0,
        delivered_late: 0,
        residual: 0,
    }
}

proptest! {
    #[test]
    fn aggregate_matches_recomputation(
        runs in prop::collection::vec((0u64..5, 1u64..4, 0usize..2, 0.0f64..=1.0, 0u64..20), 1..40)
    ) {
        let policies = ["HOPS", "DELTIME"];
        let rows: Vec<RunRow> = runs.iter().map(|&(s, l, p, r, d)| row(s, l, policies[p], r, d)).collect();
        let agg = aggregate(&rows);
        prop_assert_eq!(agg.iter().map(|a| a.runs).sum::<usize>(), rows.len());
        for a in &agg {
            let members: Vec<&RunRow> = rows.iter().filter(|r| r.load == a.load && r.policy == a.policy).collect();
            prop_assert_eq!(members.len(), a.runs);
            let ratios: Vec<f64> = members.iter().map(|r| r.delivery_ratio).collect();
            prop_assert_eq!(a.metric("delivery_ratio"), estimate(&ratios));
            let drops = members.iter().map(|r| r.dropped_total as f64).sum::<f64>() / members.len() as f64;
            prop_assert!((a.dropped_per_node_mean.get(&NodeId(1)).copied().unwrap_or(0.0) - drops).abs() < 1e-9);
        }
    }
}
