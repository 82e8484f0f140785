use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pausesim");

const SMALL_RAFT: &str = r#"
system = "raft"
[workload]
rate = 200
duration_s = 10
seed = 5
"#;

fn pausesim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("s.toml");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn run_writes_summary_and_cdf() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), SMALL_RAFT);
    let out = dir.path().join("out");
    let o = pausesim(&["run", &cfg, "--mode", "on", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("gc-on"), "{stdout}");
    assert!(out.join("summary.csv").is_file());
    assert!(out.join("cdf-gc-on.txt").is_file());
}

#[test]
fn compare_writes_all_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), SMALL_RAFT);
    let out = dir.path().join("cmp");
    let o = pausesim(&["compare", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for label in ["gc-off", "blade", "gc-on"] {
        assert!(out.join(label).join("summary.csv").is_file(), "{label}");
    }
    assert!(out.join("comparison.csv").is_file());
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), SMALL_RAFT);
    let report = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = pausesim(&["run", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        fs::read(out.join("cdf-blade.txt")).unwrap()
    };
    assert_eq!(report("a", "3"), report("b", "3"));
}

#[test]
fn config_prints_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "system = \"http\"\n");
    let o = pausesim(&["config", &cfg]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[http]"));
    assert!(text.contains("rate = 6000.0"));
    assert!(!text.contains("[raft]"));
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let o = pausesim(&["run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error: "));

    let cfg = write_scenario(dir.path(), "[topology]\nnodes = 0\n");
    let o = pausesim(&["config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("topology.nodes"));

    let cfg = write_scenario(dir.path(), SMALL_RAFT);
    let o = pausesim(&["run", &cfg, "--deadline=-2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = pausesim(&["run", &cfg, "--mode", "sometimes"]);
    assert!(!o.status.success());
}
