//! End-to-end checks of the `evacsim` binary: exit codes, CSV shape, and
//! byte-stable experiment outputs.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evacsim"))
}

fn fixture() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/mall50.json")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_prints_a_header_and_one_row() {
    let out = run_ok(bin().args([
        "run",
        "--building",
        fixture(),
        "--evacuees",
        "3",
        "--algorithm",
        "dijkstra",
        "--comms",
        "direct3g",
        "--seed",
        "1",
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("evacuees,algorithm,comms,seed,"));
    assert!(lines[1].starts_with("3,dijkstra,direct3g,1,"));
}

#[test]
fn run_is_reproducible_across_invocations() {
    let args = [
        "run",
        "--building",
        fixture(),
        "--evacuees",
        "5",
        "--algorithm",
        "cpn-spf",
        "--comms",
        "ahcpn",
        "--seed",
        "42",
    ];
    let a = run_ok(bin().args(args));
    let b = run_ok(bin().args(args));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.json");
    std::fs::write(
        &config,
        r#"{
            "hazard.ignition_node": "none",
            "hazard.spread_probability": 0.0,
            "experiment.counts": [2],
            "experiment.algorithms": ["dijkstra"],
            "experiment.comms_modes": ["direct3g", "ahcpn"],
            "experiment.seeds": [1, 2]
        }"#,
    )
    .unwrap();

    let run = |out_dir: &Path| {
        run_ok(bin().args([
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--building",
            fixture(),
            "--out",
            out_dir.to_str().unwrap(),
        ]));
        (
            std::fs::read(out_dir.join("results.csv")).unwrap(),
            std::fs::read(out_dir.join("summary.csv")).unwrap(),
        )
    };
    let (res_a, sum_a) = run(&dir.path().join("a"));
    let (res_b, sum_b) = run(&dir.path().join("b"));
    assert_eq!(res_a, res_b);
    assert_eq!(sum_a, sum_b);

    let results = String::from_utf8(res_a).unwrap();
    assert_eq!(results.lines().count(), 5, "header plus four runs");
    let summary = String::from_utf8(sum_a).unwrap();
    assert_eq!(summary.lines().count(), 3, "header plus two cells");
}

#[test]
fn unknown_algorithm_is_a_usage_error_naming_the_flag() {
    let out = bin()
        .args([
            "run",
            "--building",
            fixture(),
            "--evacuees",
            "3",
            "--algorithm",
            "bfs",
            "--comms",
            "direct3g",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("--algorithm"), "stderr: {stderr}");
}

#[test]
fn missing_building_is_a_usage_error() {
    let out = bin()
        .args([
            "run",
            "--evacuees",
            "3",
            "--algorithm",
            "dijkstra",
            "--comms",
            "direct3g",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("--building"), "stderr: {stderr}");
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"sim.warp_factor": 9}"#).unwrap();
    let out = bin()
        .args([
            "run",
            "--building",
            fixture(),
            "--evacuees",
            "3",
            "--algorithm",
            "dijkstra",
            "--comms",
            "direct3g",
            "--config",
            config.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("sim.warp_factor"), "stderr: {stderr}");
}
