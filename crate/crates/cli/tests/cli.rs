use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evi")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_instance(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

const SINGLE_STATE: &str = r#"{
  "num_states": 1, "num_actions": 1, "num_objectives": 2, "gamma": 0.5,
  "rewards": [[[0.3, 0.7]]],
  "transitions": [[[1.0]]]
}"#;

fn read_moq(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_instance(dir.path(), "good.json", SINGLE_STATE);
    let o = evi(&["validate", "--instance", &good]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok"));

    let bad = write_instance(
        dir.path(),
        "bad.json",
        r#"{"num_states": 2, "num_actions": 1, "num_objectives": 1, "gamma": 0.9,
            "rewards": [[[0.0]], [[1.0]]],
            "transitions": [[[0.5, 0.5]], [[0.6, 0.5]]]}"#,
    );
    let o = evi(&["validate", "--instance", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(s=1,a=0)"), "{}", stderr(&o));

    let missing = dir.path().join("missing.json");
    let o = evi(&["validate", "--instance", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn validate_reports_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_instance(
        dir.path(),
        "bad.json",
        r#"{"num_states": 1, "num_actions": 2, "num_objectives": 1, "gamma": 1.0,
            "rewards": [[[2.0], [0.0]]],
            "transitions": [[[1.0], [0.9]]]}"#,
    );
    let o = evi(&["validate", "--instance", &bad]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("gamma"), "{err}");
    assert!(err.contains("(s=0,a=1)"), "{err}");
}

#[test]
fn exact_solve_single_state_geometric_series() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "one.json", SINGLE_STATE);
    let out = dir.path().join("run");
    let o = evi(&["solve", "--instance", &inst, "--grid-k", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_moq(&out.join("moq.csv"));
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert!((row[3] - 0.6).abs() <= 1e-9 && (row[4] - 1.4).abs() <= 1e-9, "{row:?}");
    }
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,distance,max_change\n"));
}

#[test]
fn model_based_on_deterministic_instance_matches_exact_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("det.json");
    let o = evi(&["gen-instance", "--deterministic", "--seed", "5", "--out", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let inst = inst.to_str().unwrap();

    let mb = dir.path().join("mb");
    let o = evi(&["solve", "--instance", inst, "--mode", "model-based", "--N", "2", "--T", "15", "--out", mb.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let ex = dir.path().join("ex");
    let o = evi(&["solve", "--instance", inst, "--T", "15", "--out", ex.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(mb.join("moq.csv")).unwrap(), fs::read(ex.join("moq.csv")).unwrap());
    assert_eq!(fs::read_to_string(mb.join("trace.csv")).unwrap().lines().count(), 16);
}

#[test]
fn model_based_prints_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = evi(&[
        "solve", "--mode", "model-based", "--epsilon", "0.1", "--gamma", "0.9", "--N", "50", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("T = 63"), "{text}");
    assert!(text.contains("N = 50"), "{text}");
    assert!(text.contains("xi = "), "{text}");
    assert!(out.join("empirical.json").exists());
}

#[test]
fn csv_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = evi(&["exp-convergence", "--N", "200", "--T", "30", "--seeds", "0..4", "--out", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));

    let sweep = |name: &str| {
        let path = dir.path().join(name);
        let o = evi(&[
            "exp-nsweep", "--N-list", "50,500", "--seeds", "0,1,2", "--T", "40", "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("slope = "));
        fs::read_to_string(path).unwrap()
    };
    let first = sweep("s1.csv");
    assert!(first.starts_with("n,seed,distance\n"));
    assert_eq!(first.lines().count(), 7);
    assert_eq!(first, sweep("s2.csv"));
}

#[test]
fn convergence_rows_respect_the_bound() {
    let o = evi(&["exp-convergence", "--N", "300", "--T", "25", "--seeds", "7,8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("seed,t,distance,bound"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2 * 26);
    for r in &rows {
        assert!(r[2] <= r[3] + 1e-9);
    }
    let t0 = rows.iter().find(|r| r[1] == 0.0).unwrap();
    assert!(t0[2] <= 10.0);
    let t22 = rows.iter().find(|r| r[1] == 22.0).unwrap();
    assert!((t22[3] - 0.984_770_902_183_6).abs() < 1e-9);
}

#[test]
fn oracle_check_passes_and_writes_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let front = dir.path().join("front.csv");
    let o = evi(&["oracle-check", "--states", "3", "--actions", "2", "--out", front.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(front).unwrap();
    assert!(text.starts_with("policy_id,action_map,q_1,q_2,is_pareto,is_ccs\n"));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn failed_checks_exit_with_three() {
    let o = evi(&["oracle-check", "--threshold=-1"]);
    assert_eq!(o.status.code(), Some(3));
    let o = evi(&[
        "exp-nsweep", "--N-list", "50,500", "--seeds", "0,1", "--T", "20", "--slope-range=5,6",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bad_configuration_exits_with_two() {
    let o = evi(&["solve", "--gamma", "1.5", "--out", "/nonexistent-never"]);
    assert_eq!(o.status.code(), Some(2));
    let o = evi(&["solve", "--mode", "model-based", "--epsilon", "-1", "--out", std::env::temp_dir().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = evi(&["gen-instance", "--states", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generated_instance_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = evi(&["gen-instance", "--states", "4", "--objectives", "3", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let path = write_instance(dir.path(), "gen.json", &stdout(&o));
    let o = evi(&["validate", "--instance", &path]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("4 states, 3 actions, 3 objectives"));
}
