//! End-to-end tests of the `spc` binary: the init / run / inspect command
//! flow against a temporary output directory, plus rerun determinism.

use std::path::Path;
use std::process::{Command, Output};

fn spc(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spc"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("spawn spc")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

/// Write a run config whose outputs land under `dir`.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let output_dir = dir.join("run");
    std::fs::write(
        &path,
        format!("output_dir = \"{}\"\n", output_dir.display()),
    )
    .unwrap();
    path
}

#[test]
fn help_and_usage_errors() {
    let bin = env!("CARGO_BIN_EXE_spc");
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert!(help.status.success());
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["init-sft", "run-rounds", "matchup", "search", "eval", "report"] {
        assert!(text.contains(cmd), "help must list `{cmd}`");
    }
    // Unknown flags are a usage error, not a crash.
    let bad = Command::new(bin).arg("run-rounds").arg("--no-such-flag").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    // A missing config file is a clean failure with a diagnostic.
    let missing = Command::new(bin)
        .args(["--config", "/nonexistent/run.toml", "report"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));
}

#[test]
fn full_command_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run_dir = dir.path().join("run");

    // Before initialization, training commands fail cleanly.
    let early = spc(&config, &["matchup", "--sneaky", "s0", "--critic", "c0"]);
    assert_eq!(early.status.code(), Some(1));

    // init-sft creates the two base checkpoints and the resolved config.
    let out = stdout(&spc(&config, &["init-sft"]));
    assert!(out.contains("initialized s0"), "got: {out}");
    assert!(run_dir.join("config.resolved.toml").is_file());
    assert!(run_dir.join("registry").is_dir());

    // A dry run prints the schedule as JSON and executes nothing.
    let dry = stdout(&spc(&config, &["run-rounds", "--dry-run"]));
    let plans: serde_json::Value = serde_json::from_str(&dry).expect("dry-run emits JSON");
    assert_eq!(plans.as_array().map(Vec::len), Some(2));
    assert!(!run_dir.join("rounds").join("round1").exists());

    // The real run plays both rounds and trains new versions.
    let run = stdout(&spc(&config, &["run-rounds"]));
    assert!(run.contains("round 1:") && run.contains("round 2:"), "got: {run}");
    for round in ["round1", "round2"] {
        let d = run_dir.join("rounds").join(round);
        assert!(d.join("records.jsonl").is_file());
        assert!(d.join("report.json").is_file());
    }

    // report summarizes the completed rounds from disk.
    let report = stdout(&spc(&config, &["report"]));
    assert!(report.contains("round 1:") && report.contains("round 2:"), "got: {report}");
    assert!(report.contains("trained s1") && report.contains("trained c2"), "got: {report}");

    // matchup pits stored versions and prints a JSON report.
    let matchup = stdout(&spc(
        &config,
        &["matchup", "--sneaky", "s2", "--critic", "c0", "--problems", "32"],
    ));
    let m: serde_json::Value = serde_json::from_str(&matchup).expect("matchup emits JSON");
    let rate = m["attack_success_rate"].as_f64().expect("attack_success_rate");
    assert!((0.0..=1.0).contains(&rate));

    // eval scores a trained critic on labeled probes.
    let eval = stdout(&spc(&config, &["eval", "--critic", "c2", "--probes", "120"]));
    let e: serde_json::Value = serde_json::from_str(&eval).expect("eval emits JSON");
    for key in ["recall_correct", "recall_error", "average", "harmonic_mean"] {
        assert!(e[key].is_number(), "missing {key} in {eval}");
    }

    // search compares guided and unguided solving and saves traces.
    let search = stdout(&spc(
        &config,
        &["search", "--critic", "c2", "--problems", "24", "--sc"],
    ));
    assert!(search.contains("guided solve rate"), "got: {search}");
    assert!(search.contains("self-consistent"), "got: {search}");
    assert!(run_dir.join("search").join("traces.jsonl").is_file());

    // The oracle critic works without the registry.
    let oracle = stdout(&spc(&config, &["eval", "--critic", "oracle", "--probes", "60"]));
    let o: serde_json::Value = serde_json::from_str(&oracle).unwrap();
    assert_eq!(o["recall_correct"].as_f64(), Some(100.0));
    assert_eq!(o["recall_error"].as_f64(), Some(100.0));
}

#[test]
fn rerun_is_byte_identical() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path());
        stdout(&spc(&config, &["init-sft"]));
        stdout(&spc(&config, &["run-rounds"]));
        let read = |round: &str, file: &str| {
            std::fs::read(dir.path().join("run").join("rounds").join(round).join(file)).unwrap()
        };
        (
            read("round1", "records.jsonl"),
            read("round2", "records.jsonl"),
            read("round1", "report.json"),
            read("round2", "report.json"),
        )
    };
    assert_eq!(run(), run(), "identical configs must reproduce identical artifacts");
}
