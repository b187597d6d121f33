//! End-to-end runs of the `harvest-rl` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn harvest(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harvest-rl"))
        .args(args)
        .current_dir(root)
        .env("HARVEST_RL_OUT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_traces_writes_15_days_at_control_step() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["gen-traces", "--archetype", "stairs", "--days", "15", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("gen-traces/stairs.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("timestamp,lux"));
    assert_eq!(lines.count(), 15 * 96);
    assert!(tmp.path().join("gen-traces/config.toml").exists());
}

#[test]
fn gen_traces_creates_missing_output_dir() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("a/b/c");
    let o = harvest(
        tmp.path(),
        &["gen-traces", "--all", "--days", "1", "--events", "--out-dir", dir.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["conference", "stairs", "middle_office", "window", "door"] {
        assert!(dir.join(format!("{name}.csv")).exists(), "{name}");
        assert!(dir.join(format!("{name}_events.csv")).exists(), "{name} events");
    }
}

#[test]
fn unknown_archetype_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["gen-traces", "--archetype", "basement"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("basement"));
}

#[test]
fn bad_flags_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&harvest(tmp.path(), &["train", "--no-such-flag"])), 1);
    assert_eq!(code(&harvest(tmp.path(), &[])), 1);
    assert_eq!(code(&harvest(tmp.path(), &["--help"])), 0);
}

#[test]
fn calibrate_writes_energy_config() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["calibrate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let energy = fs::read_to_string(tmp.path().join("calibrate/energy.toml")).unwrap();
    assert!(energy.starts_with("[energy]"));
    assert!(energy.contains("t_active"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("calibrate/calibration.json")).unwrap()).unwrap();
    assert_eq!(report["calibration"]["lifetimes"].as_array().unwrap().len(), 3);

    // The resolved section loads as part of an experiment config.
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, format!("seed = 1\n{energy}")).unwrap();
    let o = harvest(tmp.path(), &["eval", "--config", cfg.to_str().unwrap(), "--policy", "fixed", "--days", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn contradictory_calibration_targets_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["calibrate", "--target", "15:9", "--target", "60:900"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("infeasible"));
}

#[test]
fn one_time_training_writes_table_and_curve() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["train", "--strategy", "one_time", "--archetype", "window", "--days", "15"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = tmp.path().join("train");
    assert!(fs::metadata(dir.join("qtable.bin")).unwrap().len() <= 25_600);
    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("episode,total_reward,mean_q"));
    assert!(curve.lines().count() > 100);
}

#[test]
fn day_by_day_writes_one_table_per_day() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["train", "--archetype", "door", "--days", "15"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tables = fs::read_dir(tmp.path().join("train/tables")).unwrap().count();
    assert_eq!(tables, 15);
    let log = fs::read_to_string(tmp.path().join("train/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 15 * 96);
}

#[test]
fn transfer_from_donor_and_eval_saved_table() {
    let tmp = TempDir::new().unwrap();
    let donor_dir = tmp.path().join("donor");
    let o = harvest(
        tmp.path(),
        &["train", "--strategy", "one_time", "--archetype", "window", "--out-dir", donor_dir.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let donor = donor_dir.join("qtable.bin");
    let o = harvest(
        tmp.path(),
        &["train", "--strategy", "transfer", "--donor", donor.to_str().unwrap(), "--archetype", "window"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(tmp.path().join("train/initial_qtable.bin")).unwrap(), fs::read(&donor).unwrap());

    let table = tmp.path().join("train/qtable.bin");
    let o = harvest(tmp.path(), &["eval", "--qtable", table.to_str().unwrap(), "--archetype", "window"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["policy"], "qtable");
    assert_eq!(report["days"], 7);
}

#[test]
fn missing_table_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["eval", "--qtable", "/definitely/not/here.bin"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dead_node_is_reported_not_failed() {
    let tmp = TempDir::new().unwrap();
    let trace = tmp.path().join("dark.csv");
    let mut csv = String::from("timestamp,lux\n");
    for i in 0..(3 * 96) {
        csv.push_str(&format!("{},0\n", 1_704_067_200 + i * 900));
    }
    fs::write(&trace, csv).unwrap();
    let o = harvest(
        tmp.path(),
        &["eval", "--trace-file", trace.to_str().unwrap(), "--policy", "fixed", "--fixed-period", "15", "--eval-days", "3"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("eval/report.json")).unwrap()).unwrap();
    assert!(report["dead_time_fraction"].as_f64().unwrap() > 0.0);
}

#[test]
fn fixed_60_on_window_and_aces_beats_it() {
    let tmp = TempDir::new().unwrap();
    let read = |dir: &str| -> f64 {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(tmp.path().join(dir).join("report.json")).unwrap()).unwrap();
        v["avg_duty_cycle_period"].as_f64().unwrap()
    };
    let o = harvest(tmp.path(), &["eval", "--archetype", "window", "--policy", "fixed", "--out-dir", "f"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = harvest(tmp.path(), &["eval", "--archetype", "window", "--policy", "aces", "--out-dir", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fixed = read("f");
    assert!((fixed - (60.0 + harvest_rl::energy::DEFAULT_T_ACTIVE)).abs() < 1e-9, "fixed {fixed}");
    assert!(read("a") < fixed);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let o = harvest(
        tmp.path(),
        &["eval", "--archetype", "door", "--days", "4", "--policy", "aces", "--out-dir", first.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echoed = first.join("config.toml");
    let o = harvest(
        tmp.path(),
        &["eval", "--config", echoed.to_str().unwrap(), "--out-dir", second.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["report.json", "report.csv", "log.csv", "config.toml"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn compare_table12_has_one_row_per_archetype_and_policy() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["compare", "--suite", "table12", "--days", "4", "--eval-days", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("compare/table12.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 6);
}

#[test]
fn compare_ablations_report_sizes() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["compare", "--suite", "table5", "--days", "4", "--out-dir", "t5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("t5/table5.json")).unwrap()).unwrap();
    let mut sizes: Vec<u64> = rows.iter().filter(|r| r["context"] == "avg").map(|r| r["size"].as_u64().unwrap()).collect();
    sizes.sort();
    assert_eq!(sizes, [11, 22, 121, 242, 5808]);

    let o = harvest(tmp.path(), &["compare", "--suite", "table6", "--days", "4", "--out-dir", "t6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("t6/table6.csv")).unwrap();
    assert!(csv.contains("2-actions") && csv.contains("4-actions") && csv.contains("8-actions"));
}

#[test]
fn unknown_suite_is_rejected() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&harvest(tmp.path(), &["compare", "--suite", "table99"])), 1);
}
