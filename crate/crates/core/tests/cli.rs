//! End-to-end runs of the `sim` binary.

use std::path::Path;
use std::process::Command;

use icnsim::config::{load_scenario, ScenarioConfig};
use icnsim::metrics::{metrics_from_trace, parse_trace};

fn sim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = sim(&[
        "run",
        "--scenario",
        &scenario("iotlab10.toml"),
        "--mode",
        "ADINR",
        "--seed",
        "3",
        "--out",
        out,
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in [
        "effective_config.toml",
        "results.csv",
        "summary.json",
        "trace-seed3.jsonl",
        "adaptation-seed3.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    // the effective config reloads and reproduces the run's metrics from its trace
    let cfg: ScenarioConfig = load_scenario(dir.path().join("effective_config.toml")).unwrap();
    let trace = parse_trace(&std::fs::read_to_string(dir.path().join("trace-seed3.jsonl")).unwrap()).unwrap();
    let rec = metrics_from_trace(&trace, cfg.mode.label(), 3, cfg.chunks, &cfg.power);
    assert_eq!(rec.pdr, 1.0);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("config,seed,ttc_s,pdr,e2e_retx,dups,mac_retx,energy_node_1_mJ"));
    assert_eq!(csv.lines().count(), 3);
    let adapt = std::fs::read_to_string(dir.path().join("adaptation-seed3.csv")).unwrap();
    assert!(adapt.starts_with("asn,link,U_cur,decision,dyn_cells_after"));
}

#[test]
fn repetitions_use_consecutive_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = sim(&[
        "run",
        "--scenario",
        &scenario("iotlab10-lossy.toml"),
        "--repetitions",
        "2",
        "--seed",
        "5",
        "--out",
        out,
    ]);
    assert!(status.status.success());
    assert!(dir.path().join("trace-seed5.jsonl").exists() && dir.path().join("trace-seed6.jsonl").exists());
}

#[test]
fn check_schedule_reports_success_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("schedule.csv");
    let out = sim(&[
        "check-schedule",
        "--scenario",
        &scenario("iotlab10.toml"),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("collision-free"));
    assert!(std::fs::read_to_string(csv)
        .unwrap()
        .starts_with("node,slot_offset,channel_offset"));
}

#[test]
fn analyze_urt_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("urt.csv");
    let out = sim(&[
        "analyze-urt",
        "--n",
        "20",
        "--iters",
        "500",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 21);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nunknown_key = 1\n").unwrap();
    let out = sim(&["dump-dodag", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_dodag_prints_the_path() {
    let out = sim(&["dump-dodag", "--scenario", &scenario("iotlab10.toml")]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("8,9,")));
}
