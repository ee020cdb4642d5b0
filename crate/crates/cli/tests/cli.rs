//! End-to-end runs of the `isac` binary on a deliberately tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
seed = 5

[scenario]
k = 4
n_grid = 40

[train]
md_n_grid = 20
md_iterations = 30
md_batch_size = 32
nn_hidden = 4
nn_iterations = 20
nn_batch_size = 32

[eval]
n_eval = 2000
n_calibration = 1000
omega_r = [0.0, 0.5, 1.0]
"#;

fn isac(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isac"));
    cmd.args(args).env_remove("ISAC_SEED");
    if let Some(s) = seed_env {
        cmd.env("ISAC_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let (dir, cfg) = setup();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = isac(&["sweep", "--methods", "baseline,md,nn", "--config", s(&cfg), "--out", s(out)], None);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn serialized_steering_reproduces_the_md_sweep() {
    let (dir, cfg) = setup();
    let art = dir.path().join("md.mdas");
    let o = isac(&["train", "--method", "md", "--config", s(&cfg), "--out", s(&art)], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (fresh, loaded) = (dir.path().join("fresh.csv"), dir.path().join("loaded.csv"));
    let o = isac(&["sweep", "--methods", "md", "--config", s(&cfg), "--out", s(&fresh)], None);
    assert_eq!(code(&o), 0);
    let o =
        isac(&["sweep", "--methods", "md", "--md-artifact", s(&art), "--config", s(&cfg), "--out", s(&loaded)], None);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(fresh).unwrap(), fs::read(loaded).unwrap());
}

#[test]
fn seed_precedence_is_config_then_env_then_flag() {
    let (dir, cfg) = setup();
    let out = |name: &str| dir.path().join(name);
    let run = |p: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut args = vec!["eval", "--method", "baseline", "--config", s(&cfg), "--out", s(p)];
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        assert_eq!(code(&isac(&args, env)), 0);
        fs::read_to_string(p).unwrap()
    };
    let from_cfg = run(&out("cfg.csv"), None, None);
    let from_env = run(&out("env.csv"), Some("9"), None);
    let from_flag = run(&out("flag.csv"), Some("9"), Some("5"));
    let env_as_flag = run(&out("env_flag.csv"), None, Some("9"));
    assert_ne!(from_cfg, from_env);
    assert_eq!(from_cfg, from_flag);
    assert_eq!(from_env, env_as_flag);
    assert!(from_env.lines().nth(1).unwrap().ends_with(",9"));
}

#[test]
fn geometry_seeds_multiply_the_rows() {
    let (dir, cfg) = setup();
    let out = dir.path().join("g.csv");
    let o =
        isac(&["sweep", "--methods", "baseline", "--geometry-seeds", "3", "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    let o =
        isac(&["sweep", "--methods", "baseline", "--geometry-seeds", "0", "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(code(&o), 1);
}

#[test]
fn configuration_errors_exit_with_one() {
    let (dir, cfg) = setup();
    let out = dir.path().join("x.csv");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[scenario]\nk = 4\nbogus = 1\n").unwrap();
    assert_eq!(code(&isac(&["sweep", "--config", s(&bad), "--out", s(&out)], None)), 1);
    assert_eq!(code(&isac(&["eval", "--method", "nn", "--config", s(&cfg), "--out", s(&out)], None)), 1);
    assert_eq!(code(&isac(&["sweep", "--methods", "svm", "--out", s(&out)], None)), 1);
    assert_eq!(code(&isac(&["eval", "--method", "baseline", "--config", s(&cfg), "--out", s(&out)], Some("x"))), 1);
    let missing = dir.path().join("none.mdas");
    let o =
        isac(&["sweep", "--methods", "md", "--md-artifact", s(&missing), "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&isac(&["--help"], None)), 0);
}

#[test]
fn nn_round_trip_and_json_export() {
    let (dir, cfg) = setup();
    let art = dir.path().join("nn.ae");
    let o = isac(&["train", "--method", "nn", "--omega", "0.5", "--config", s(&cfg), "--out", s(&art)], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("nn.json");
    let o = isac(
        &["eval", "--method", "nn", "--omega", "0.5", "--artifact", s(&art), "--config", s(&cfg), "--out", s(&out)],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let row = &v[0];
    assert_eq!(row["method"], "nn");
    assert_eq!(row["n_eval"], 2000);
    let o = isac(&["check", "--skip-selftest", "--config", s(&cfg), "--nn-artifact", s(&art)], None);
    assert_eq!(code(&o), 0);
}

#[test]
fn simulate_prints_a_summary() {
    let (_dir, cfg) = setup();
    let o = isac(&["simulate", "--config", s(&cfg), "--draws", "500", "--seed", "3"], None);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 3);
    assert!((v["precoder_energy"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn check_runs_the_self_tests() {
    let o = isac(&["check"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 40);
    assert!(!text.contains("FAIL"));
}
