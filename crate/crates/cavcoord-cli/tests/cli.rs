//! End-to-end checks of the `cavcoord` binary: exit codes, output
//! files, idempotence, and the plot-data reconstruction.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_cavcoord");

/// Two-path scenario small enough that every command finishes fast.
const SMALL: &str = r#"
seed = 0
horizon = { seconds = 60.0 }
policy = "priority"

[[paths]]
id = 1
kind = "straight"
length_m = 212.0
volume_veh_per_hour = 900.0

[[paths]]
id = 2
kind = "straight"
length_m = 212.0
volume_veh_per_hour = 900.0

[[conflicts]]
id = 1
locations = [{ path_id = 1, distance_m = 100.75 }, { path_id = 2, distance_m = 111.25 }]
"#;

fn cavcoord(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn run_writes_three_files() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let result = cavcoord(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");
    for name in ["trajectories.csv", "metrics.json", "events.jsonl"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(stdout.contains("exited"), "summary line: {stdout}");
}

#[test]
fn reruns_are_byte_identical_and_overrides_apply() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let result = cavcoord(&[
            "run",
            "--config",
            &config,
            "--seed",
            "9",
            "--policy",
            "fcfs",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
    }
    for name in ["trajectories.csv", "metrics.json", "events.jsonl"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs between reruns");
    }
    let metrics: serde_json::Value = serde_json::from_str(&read(&a, "metrics.json")).unwrap();
    assert_eq!(metrics["seed"], 9);
    assert_eq!(metrics["policy"], "fcfs");
}

#[test]
fn malformed_config_exits_two() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "not toml ]][[");
    let result = cavcoord(&["run", "--config", &config]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
    assert!(!String::from_utf8(result.stderr).unwrap().is_empty());
}

#[test]
fn speed_band_outside_limits_exits_two() {
    let tmp = TempDir::new().unwrap();
    let bad = format!("{SMALL}\n[entry_speed]\nlow_mps = 25.0\nhigh_mps = 30.0\n");
    let config = write_config(tmp.path(), &bad);
    let result = cavcoord(&["run", "--config", &config]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
}

#[test]
fn infeasible_abort_exits_three() {
    let tmp = TempDir::new().unwrap();
    // Large observation noise forces a replanned vehicle outside its
    // feasible window; abort surfaces that instead of keeping the old
    // plan.
    let fragile = SMALL
        .replace(
            "policy = \"priority\"",
            "policy = \"priority\"\non_infeasible = \"abort\"",
        )
        .replace("volume_veh_per_hour = 900.0", "volume_veh_per_hour = 2400.0")
        + "\n[noise]\nposition_m = 2.0\nspeed_mps = 0.2\n";
    let config = write_config(tmp.path(), &fragile);
    let result = cavcoord(&["run", "--config", &config, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3), "{result:?}");
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert!(stderr.contains("no safe exit time"), "{stderr}");
}

#[test]
fn compare_writes_three_policy_rows() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let result =
        cavcoord(&["compare", "--config", &config, "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{result:?}");
    let report: serde_json::Value = serde_json::from_str(&read(&out, "comparison.json")).unwrap();
    assert_eq!(report["seed"], 2);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["policy"], "fcfs");
    assert_eq!(rows[0]["percent_change_average"], 0.0);
    let bob = &rows[2];
    assert_eq!(bob["policy"], "best_of_both");
    assert!(bob["percent_change_average"].as_f64().unwrap() <= 1e-9);
    assert!(bob["chosen"].is_string(), "best_of_both row records the chosen arm");
}

#[test]
fn sweep_covers_every_cell_and_summarizes() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let result = cavcoord(&[
        "sweep",
        "--config",
        &config,
        "--volumes",
        "700,1000",
        "--seeds",
        "0..2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let report: serde_json::Value = serde_json::from_str(&read(&out, "sweep.json")).unwrap();
    // 2 volumes x 2 seeds x 3 policies.
    assert_eq!(report["cells"].as_array().unwrap().len(), 12);
    let summary = report["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 4);
    for entry in summary {
        assert_eq!(entry["seeds"], 2);
        let mean = entry["mean_percent_change_average"].as_f64().unwrap();
        assert!(entry["min_percent_change_average"].as_f64().unwrap() <= mean + 1e-12);
        assert!(entry["max_percent_change_average"].as_f64().unwrap() >= mean - 1e-12);
        if entry["policy"] == "best_of_both" {
            assert!(entry["max_percent_change_average"].as_f64().unwrap() <= 1e-9);
        }
    }
}

#[test]
fn validate_geometry_reports_the_layout() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let result = cavcoord(&["validate-geometry", "--config", &config]);
    assert!(result.status.success(), "{result:?}");
    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(stdout.contains("geometry ok: 2 paths, 1 conflict points"), "{stdout}");
}

#[test]
fn geometry_only_file_validates_without_scenario_keys() {
    let tmp = TempDir::new().unwrap();
    let doc = r#"
[[paths]]
id = 7
kind = "turn"
length_m = 150.0
"#;
    let config = write_config(tmp.path(), doc);
    let result = cavcoord(&["validate-geometry", "--config", &config]);
    assert!(result.status.success(), "{result:?}");
}

#[test]
fn conflict_off_the_path_exits_two() {
    let tmp = TempDir::new().unwrap();
    let bad = SMALL.replace("distance_m = 100.75", "distance_m = 500.0");
    let config = write_config(tmp.path(), &bad);
    let result = cavcoord(&["validate-geometry", "--config", &config]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
}

#[test]
fn plot_data_matches_the_run_it_reads() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(cavcoord(&["run", "--config", &config, "--seed", "4", "--out", out_s])
        .status
        .success());
    let result = cavcoord(&["plot-data", "--out", out_s, "--path-id", "1"]);
    assert!(result.status.success(), "{result:?}");

    let series = read(&out, "plot_path_1.csv");
    let mut lines = series.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    assert_eq!(*header.last().unwrap(), "replan_t");
    assert!(header.iter().any(|h| h.starts_with("p_cav")));
    assert!(header.iter().any(|h| h.starts_with("bound_cav")));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());

    // Replan timestamps in the series column are exactly replan event
    // times from events.jsonl.
    let mut event_replans = Vec::new();
    for line in read(&out, "events.jsonl").lines() {
        let event: serde_json::Value = serde_json::from_str(line).unwrap();
        if event["event"] == "replan" {
            event_replans.push(event["t"].as_f64().unwrap());
        }
    }
    let mut seen = 0;
    for row in &rows {
        let cell = row.last().unwrap();
        if !cell.is_empty() {
            let t: f64 = cell.parse().unwrap();
            assert!(event_replans.contains(&t), "unknown replan time {t}");
            seen += 1;
        }
    }
    assert!(seen > 0, "no replan timestamps surfaced");

    // Reconstructed positions agree digit for digit with the run's own
    // sampled trajectories.
    let cav: u64 = header[1].strip_prefix("p_cav").unwrap().parse().unwrap();
    let mut matched = 0;
    for line in read(&out, "trajectories.csv").lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[1].parse::<u64>().unwrap() != cav {
            continue;
        }
        if let Some(row) = rows.iter().find(|r| r[0] == fields[0]) {
            assert_eq!(row[1], fields[3], "position at t = {}", fields[0]);
            matched += 1;
        }
    }
    assert!(matched > 0, "no overlapping sample instants");

    let crossings = read(&out, "plot_path_1_crossings.csv");
    let marker_rows: Vec<&str> = crossings.lines().skip(1).collect();
    assert!(!marker_rows.is_empty(), "path 2 traffic crosses conflict 1");
    for row in marker_rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], "1");
        assert_eq!(fields[1], "2");
        assert_eq!(fields[4], "100.75");
    }
}

#[test]
fn plot_data_on_an_empty_path_writes_only_the_header() {
    let tmp = TempDir::new().unwrap();
    // Deterministic arrivals; path 2's first headway is far beyond the
    // horizon, so nothing ever spawns there.
    let quiet = SMALL
        .replace("policy = \"priority\"", "policy = \"priority\"\narrival_model = \"uniform_headway\"")
        .replace(
            "id = 2\nkind = \"straight\"\nlength_m = 212.0\nvolume_veh_per_hour = 900.0",
            "id = 2\nkind = \"straight\"\nlength_m = 212.0\nvolume_veh_per_hour = 0.01",
        );
    let config = write_config(tmp.path(), &quiet);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(cavcoord(&["run", "--config", &config, "--out", out_s]).status.success());
    let result = cavcoord(&["plot-data", "--out", out_s, "--path-id", "2"]);
    assert!(result.status.success(), "{result:?}");
    assert_eq!(read(&out, "plot_path_2.csv"), "t,replan_t\n");
}

#[test]
fn plot_data_without_run_outputs_exits_four() {
    let tmp = TempDir::new().unwrap();
    let result = cavcoord(&["plot-data", "--out", tmp.path().to_str().unwrap(), "--path-id", "1"]);
    assert_eq!(result.status.code(), Some(4), "{result:?}");
}

#[test]
fn plot_data_for_an_unknown_path_exits_two() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(cavcoord(&["run", "--config", &config, "--out", out_s]).status.success());
    let result = cavcoord(&["plot-data", "--out", out_s, "--path-id", "99"]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
}
