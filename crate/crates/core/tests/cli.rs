use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use implicit_imitation::gridworld::{CellRewards, GridMap};

fn imitate(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_imitate"));
    cmd.args(args).env_remove("IMIT_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["run", "--scenario", "exp1_basic", "--runs", "2", "--steps", "2000"];

fn small(extra: &[&str], env: &[(&str, &str)]) -> String {
    let args: Vec<&str> = SMALL.iter().chain(extra).copied().collect();
    ok(&imitate(&args, env))
}

#[test]
fn run_writes_series_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp1.csv");
    let stdout = small(&["--out", out.to_str().unwrap(), "--per-run"], &[]);
    let series = fs::read_to_string(&out).unwrap();
    let mut lines = series.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,obs_mean,ctrl_mean,delta,obs_r0,obs_r1,ctrl_r0,ctrl_r1"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    assert!(rows[0].starts_with("100,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
    let summary = fs::read_to_string(dir.path().join("exp1.summary.csv")).unwrap();
    assert_eq!(stdout, summary);
    let head = summary.lines().next().unwrap();
    assert_eq!(
        head,
        "scenario,optimal_rate,obs_convergence_step,ctrl_convergence_step,obs_final_rate,ctrl_final_rate,phi"
    );
    assert!(summary.lines().nth(1).unwrap().starts_with("exp1_basic,"));
}

#[test]
fn same_seed_same_bytes() {
    assert_eq!(small(&["--seed", "4"], &[]), small(&["--seed", "4"], &[]));
    assert_ne!(small(&["--seed", "4"], &[]), small(&["--seed", "5"], &[]));
}

#[test]
fn config_file_flags_and_env_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# comment\nscenario=exp1_basic\nruns=2\nsteps=2000\nseed=11\n\nbackups=3\n").unwrap();
    let via_file = ok(&imitate(&["run", "--config", cfg.to_str().unwrap()], &[]));
    assert_eq!(via_file, small(&["--seed", "11", "--backups", "3"], &[]));

    let flag_wins = ok(&imitate(&["run", "--config", cfg.to_str().unwrap(), "--seed", "12"], &[]));
    assert_eq!(flag_wins, small(&["--seed", "12", "--backups", "3"], &[]));

    let env_wins = ok(&imitate(
        &["run", "--config", cfg.to_str().unwrap(), "--seed", "12"],
        &[("IMIT_SEED", "13")],
    ));
    assert_eq!(env_wins, small(&["--seed", "13", "--backups", "3"], &[]));
}

#[test]
fn no_imitation_matches_an_observer_without_mentors() {
    let off = small(&["--no-imitation"], &[]);
    assert_eq!(off, small(&["--mentors", "none"], &[]));
    assert_ne!(off, small(&[], &[]));
}

#[test]
fn imitation_switches_are_accepted() {
    for flags in [
        &["--no-feasibility"][..],
        &["--no-repair", "--k", "2", "--n", "5"],
        &["--c", "2.5", "--alpha", "0.01"],
        &["--mentors", "none"],
        &["--mentors", "0"],
    ] {
        small(flags, &[]);
    }
}

#[test]
fn bad_input_fails_cleanly() {
    for args in [
        &["run", "--scenario", "nope"][..],
        &["run", "--scenario", "exp1_basic", "--mentors", "7", "--steps", "10"],
        &["run", "--scenario", "exp1_basic", "--alpha", "0.9", "--steps", "10"],
        &["run"],
    ] {
        let out = imitate(args, &[]);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}

#[test]
fn dump_writes_tables_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    let args = [
        "run", "--scenario", "het1_skew", "--runs", "1", "--steps", "1500", "--dump", dump.to_str().unwrap(),
    ];
    ok(&imitate(&args, &[]));
    for name in ["observer_counts.txt", "mentor0_counts.txt", "ledger.txt"] {
        assert!(dump.join(name).exists(), "{name} missing");
    }
    let counts = fs::read_to_string(dump.join("observer_counts.txt")).unwrap();
    assert!(!counts.is_empty());
}

#[test]
fn fracture_by_scenario_and_by_maps() {
    let by_name = ok(&imitate(&["fracture", "--scenario", "fracture_c"], &[]));
    assert_eq!(by_name.trim(), "mentor 0: phi 3.5000 disputed 22");
    let maps = Path::new(env!("CARGO_MANIFEST_DIR")).join("maps");
    let by_maps = ok(&imitate(
        &[
            "fracture",
            "--maps",
            maps.join("fracture_c.map").to_str().unwrap(),
            maps.join("fracture_c_mentor.map").to_str().unwrap(),
        ],
        &[],
    ));
    assert_eq!(by_maps, by_name);
}

#[test]
fn solve_prints_values_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("line.map");
    fs::write(&map, "S..X\n").unwrap();
    let out = ok(&imitate(&["solve", "--map", map.to_str().unwrap(), "--noise", "0"], &[]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "values");
    assert_eq!(lines[2], "policy");
    assert_eq!(lines[3].split_whitespace().collect::<Vec<_>>(), ["E", "E", "E", "X"]);
    // Goal reward 1, reset to start: V(S) = γ³ / (1 - γ⁴).
    let g: f64 = 0.9;
    let expected = g.powi(3) / (1.0 - g.powi(4));
    let start: f64 = lines[4].trim_start_matches("start value ").parse().unwrap();
    assert!((start - expected).abs() < 1e-4, "{start} vs {expected}");
    assert_eq!(lines[5], "goals per 1000 steps 250.0000");
}

#[test]
fn shipped_maps_round_trip_bit_exact() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("maps");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let map = GridMap::parse(&text, &CellRewards::default()).unwrap();
        assert_eq!(map.to_string(), text, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 15);
}

#[test]
fn malformed_maps_are_rejected() {
    let r = CellRewards::default();
    for text in ["S..\n..\n", "...\n..X\n", "S.Q\n..X\n", "S.S\n..X\n", ""] {
        assert!(GridMap::parse(text, &r).is_err(), "{text:?}");
    }
}
