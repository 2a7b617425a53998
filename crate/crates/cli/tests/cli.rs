//! End-to-end tests driving the compiled binary through every subcommand.

use nashdelay::experiment::RUNS_CSV_HEADER;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn nashdelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nashdelay"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run_ok(args: &[&str]) -> String {
    let out = nashdelay(args);
    assert!(
        out.status.success(),
        "`nashdelay {}` failed.\nstdout:\n{}\nstderr:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout should be UTF-8")
}

fn run_err(args: &[&str]) -> String {
    let out = nashdelay(args);
    assert!(
        !out.status.success(),
        "`nashdelay {}` unexpectedly succeeded:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Extracts the number from an aligned `name  = value` report line.
fn report_value(stdout: &str, name: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.starts_with(name) && l[name.len()..].trim_start().starts_with('='))
        .unwrap_or_else(|| panic!("no `{name}` line in:\n{stdout}"));
    let value = line
        .split('=')
        .nth(1)
        .expect("report lines contain `=`")
        .trim();
    value
        .parse()
        .unwrap_or_else(|_| panic!("unparseable value {value:?} for {name}"))
}

/// A two-state chain: the single joint action pays 1 and ends the episode.
fn write_chain_game(dir: &Path) -> String {
    let path = dir.join("chain.game");
    fs::write(
        &path,
        "states 2 actions1 1 actions2 1 gamma 0.8 initial 0 terminals 1\n\
         0 0 0 1 1.0 1.0 1.0\n",
    )
    .expect("temp game file should be writable");
    path.display().to_string()
}

fn csv_fields(row: &str) -> Vec<&str> {
    row.split(',').collect()
}

#[test]
fn bounds_reports_the_grid1_parameters() {
    let stdout = run_ok(&["bounds"]);
    assert!(
        stdout.contains("= 72, 4, 4"),
        "bounds should report the grid-world dimensions:\n{stdout}"
    );
    let epsilon_1 = report_value(&stdout, "epsilon_1");
    assert!((epsilon_1 - 0.004).abs() < 1e-12, "epsilon_1 = {epsilon_1}");
    let kappa = report_value(&stdout, "kappa");
    assert!((kappa - 1_440_000.0).abs() < 1.0, "kappa = {kappa}");
    let horizon = report_value(&stdout, "horizon H");
    assert_eq!(horizon, 23.0);
    let v_max = report_value(&stdout, "v_max");
    assert!((v_max - 5.0).abs() < 1e-12, "v_max = {v_max}");
}

#[test]
fn solve_stage_picks_the_efficient_coordination_point() {
    let dir = TempDir::new().expect("temp dir");
    let path = dir.path().join("coord.stage");
    fs::write(&path, "2 2\n2 0\n0 1\n\n2 0\n0 1\n").expect("stage file");
    let stdout = run_ok(&["solve-stage", path.to_str().expect("utf-8 path")]);
    assert!(stdout.contains("GlobalOptimal"), "{stdout}");
    assert_eq!(stdout.matches("pure action 0").count(), 2, "{stdout}");
    assert!(stdout.contains("value    = (2, 2)"), "{stdout}");
}

#[test]
fn run_prints_a_csv_row_for_a_file_game() {
    let dir = TempDir::new().expect("temp dir");
    let game = format!("file:{}", write_chain_game(dir.path()));
    let stdout = run_ok(&[
        "run",
        "--game",
        &game,
        "--max-steps",
        "400",
        "--seed",
        "11",
        "--window",
        "5",
        "--checkpoint-interval",
        "0",
    ]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some(RUNS_CSV_HEADER));
    let row = lines.next().expect("run should print one data row");
    let fields = csv_fields(row);
    assert_eq!(fields.len(), 19, "row: {row}");
    assert_eq!(fields[0], "0", "run id");
    assert_eq!(fields[1], "11", "seed");
    assert_eq!(fields[2], game.as_str());
    assert_eq!(fields[3], "delayed_nash_q");
    assert_eq!(
        fields[7], "true",
        "the one-step chain should converge: {row}"
    );
    assert!(
        !fields[8].is_empty(),
        "converged rows carry a convergence step: {row}"
    );
}

#[test]
fn flags_override_config_file_values() {
    let dir = TempDir::new().expect("temp dir");
    let game_path = write_chain_game(dir.path());
    let config_path = dir.path().join("experiment.conf");
    fs::write(
        &config_path,
        format!(
            "# tiny smoke configuration\n\
             game = file:{game_path}\n\
             m = 7\n\
             max_steps = 400\n\
             convergence_window_episodes = 5\n\
             checkpoint_interval = 0\n"
        ),
    )
    .expect("config file");
    let config = config_path.to_str().expect("utf-8 path");

    let from_file = run_ok(&["run", "--config", config]);
    let row = from_file.lines().nth(1).expect("data row");
    assert_eq!(
        csv_fields(row)[5],
        "7",
        "m should come from the file: {row}"
    );
    assert_eq!(csv_fields(row)[4], "0.8", "gamma keeps its default: {row}");

    let overridden = run_ok(&["run", "--config", config, "--m", "9"]);
    let row = overridden.lines().nth(1).expect("data row");
    assert_eq!(
        csv_fields(row)[5],
        "9",
        "the flag should beat the file: {row}"
    );
}

#[test]
fn batch_writes_runs_and_summary_csv() {
    let dir = TempDir::new().expect("temp dir");
    let game = format!("file:{}", write_chain_game(dir.path()));
    let out_dir = dir.path().join("out");
    let stdout = run_ok(&[
        "batch",
        "--game",
        &game,
        "--runs",
        "3",
        "--max-steps",
        "400",
        "--window",
        "5",
        "--checkpoint-interval",
        "0",
        "--out",
        out_dir.to_str().expect("utf-8 path"),
    ]);
    assert!(stdout.contains("3 runs, 3 converged"), "{stdout}");

    let runs = fs::read_to_string(out_dir.join("runs.csv")).expect("runs.csv");
    let rows: Vec<&str> = runs.lines().collect();
    assert_eq!(rows.len(), 4, "header plus one row per run:\n{runs}");
    assert_eq!(rows[0], RUNS_CSV_HEADER);
    for (i, row) in rows[1..].iter().enumerate() {
        let fields = csv_fields(row);
        assert_eq!(
            fields[0],
            i.to_string(),
            "rows are ordered by run id: {row}"
        );
        assert_eq!(fields[1], i.to_string(), "seed = base_seed + run id: {row}");
        assert_eq!(fields[7], "true", "{row}");
    }

    let summary = fs::read_to_string(out_dir.join("summary.csv")).expect("summary.csv");
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 2, "{summary}");
    assert!(rows[1].starts_with("3,3,1,"), "{summary}");
}

#[test]
fn oracle_dumps_exact_tables_for_a_file_game() {
    let dir = TempDir::new().expect("temp dir");
    let game = format!("file:{}", write_chain_game(dir.path()));
    let out_dir = dir.path().join("oracle");
    let stdout = run_ok(&[
        "oracle",
        "--game",
        &game,
        "--out",
        out_dir.to_str().expect("utf-8 path"),
    ]);
    assert!(stdout.contains("converged = true"), "{stdout}");

    let q = fs::read_to_string(out_dir.join("oracle_q.csv")).expect("oracle_q.csv");
    assert_eq!(q, "state,a1,a2,q1,q2\n0,0,0,1,1\n1,0,0,0,0\n");
    let v = fs::read_to_string(out_dir.join("oracle_v.csv")).expect("oracle_v.csv");
    assert_eq!(v, "state,label,v1,v2\n0,\"0\",1,1\n1,\"1\",0,0\n");
}

#[test]
fn invalid_configurations_are_rejected() {
    let stderr = run_err(&["run", "--game", "grid9"]);
    assert!(stderr.contains("grid9"), "{stderr}");

    let stderr = run_err(&["batch", "--runs", "0"]);
    assert!(stderr.contains("runs"), "{stderr}");

    let dir = TempDir::new().expect("temp dir");
    let game = format!("file:{}", write_chain_game(dir.path()));
    let stderr = run_err(&["run", "--game", &game, "--gamma", "1.5"]);
    assert!(stderr.contains("gamma"), "{stderr}");

    let config_path = dir.path().join("bad.conf");
    fs::write(&config_path, "cadence = 3\n").expect("config file");
    let stderr = run_err(&["run", "--config", config_path.to_str().expect("utf-8 path")]);
    assert!(
        stderr.contains("bad.conf:1") && stderr.contains("cadence"),
        "errors should cite the file line: {stderr}"
    );
}
