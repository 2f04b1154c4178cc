use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isaacs_vex::model::builtin_config;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isaacs-vex"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_config(dir: &Path, name: &str, edit: impl FnOnce(&mut isaacs_vex::model::ProblemConfig)) -> PathBuf {
    let mut cfg = builtin_config(name).unwrap();
    cfg.discretization.steps = 8;
    cfg.discretization.space_nodes = vec![41];
    cfg.discretization.simplex_m = 8;
    edit(&mut cfg);
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

#[test]
fn solve_heat_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = configs().join("heat.json");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "report.json", "values.csv", "splits.csv", "snapshots/slice_00000.vexf"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["max_isaacs_gap"].as_f64(), Some(0.0));
}

#[test]
fn solve_pursuit_has_every_slice() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["solve", "--config", "pursuit1d", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let steps = builtin_config("pursuit1d").unwrap().discretization.steps;
    for k in 0..=steps {
        assert!(out.join(format!("snapshots/slice_{k:05}.vexf")).is_file(), "slice {k}");
    }
}

#[test]
fn empty_horizon_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "heat", |c| c.game.t_end = c.game.t0);
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_problem_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--config", "no-such-problem", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn hidden_cost_spike_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "heat", |c| {
        c.game.l = vec!["1e9 * max(0, 1 - 1e6 * abs(x))".into(), "0".into()];
    });
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn single_refinement_level_is_rejected() {
    let o = run(&["refine", "--config", "heat", "--levels", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn refine_reveal_differences_shrink() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["refine", "--config", "reveal2", "--levels", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("refine.json")).unwrap()).unwrap();
    let levels = table["levels"].as_array().unwrap();
    let d0 = levels[0]["diff_to_next"].as_f64().unwrap();
    let d1 = levels[1]["diff_to_next"].as_f64().unwrap();
    assert!(d1 < d0, "{d0} -> {d1}");
    assert!(levels[0]["closed_form_error"].is_null());
}

#[test]
fn beliefs_need_a_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["beliefs", "--config", "reveal2", "--out", dir.path().to_str().unwrap(), "--paths", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn beliefs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "reveal2", |_| {});
    let (cfg, out) = (cfg.to_str().unwrap(), dir.path().join("o"));
    let out = out.to_str().unwrap();
    assert_eq!(code(&run(&["solve", "--config", cfg, "--out", out])), 0);
    let mut copies = Vec::new();
    for workers in ["1", "4"] {
        let o = run(&["--workers", workers, "beliefs", "--config", cfg, "--out", out, "--paths", "300", "--seed", "9"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        copies.push(std::fs::read(Path::new(out).join("paths.csv")).unwrap());
    }
    assert_eq!(copies[0], copies[1]);
    assert!(Path::new(out).join("beliefs.json").is_file());
}

#[test]
fn vertex_start_keeps_belief_until_the_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "reveal2", |c| c.beliefs.as_mut().unwrap().p0 = vec![1.0, 0.0]);
    let (cfg, out) = (cfg.to_str().unwrap(), dir.path().join("o"));
    let out = out.to_str().unwrap();
    assert_eq!(code(&run(&["solve", "--config", cfg, "--out", out])), 0);
    assert_eq!(code(&run(&["beliefs", "--config", cfg, "--out", out, "--paths", "50"])), 0);
    let mut r = csv::Reader::from_path(Path::new(out).join("paths.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    let (ki, pi) = (header.iter().position(|h| h == "k").unwrap(), header.iter().position(|h| h == "p1").unwrap());
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let k: usize = rec[ki].parse().unwrap();
        if k <= 8 {
            assert_eq!(rec[pi].parse::<f64>().unwrap(), 1.0);
            rows += 1;
        }
    }
    assert_eq!(rows, 50 * 9);
}

#[test]
fn verify_passes_on_heat() {
    let o = run(&["verify", "--config", "heat"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn verify_flags_nonlipschitz_payoff() {
    let cfg = configs().join("nonlipschitz.json");
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 1, "{text}");
    assert!(text.lines().any(|l| l.starts_with("FAIL terminal-lipschitz")));
}

#[test]
fn zero_workers_is_a_usage_error() {
    let o = run(&["--workers", "0", "verify", "--config", "heat"]);
    assert_eq!(code(&o), 2);
}
