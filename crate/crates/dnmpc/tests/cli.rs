//! Exit-code and output contract of the `dnmpc` binary.

use std::path::Path;
use std::process::{Command, Output};

fn dnmpc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dnmpc"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn run_writes_a_trace_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let out_path = dir.path().join("trace.jsonl");
    write(&cfg, "");
    let out = dnmpc(&["run", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    // header plus the default eight steps
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().next().unwrap().contains("dnmpc-trace/1"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    let out = dnmpc(&["frobnicate"], &[]);
    assert_eq!(code(&out), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "horizon = 0");
    let out = dnmpc(&["run", cfg.to_str().unwrap(), "--out", "/dev/null"], &[]);
    assert_eq!(code(&out), 1);

    let out = dnmpc(&["run", "/nonexistent.toml", "--out", "/dev/null"], &[]);
    assert_eq!(code(&out), 1);

    let out = dnmpc(&["verify", "--cases", "0", "--max-horizon", "3"], &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_exits_zero() {
    let out = dnmpc(&["--help"], &[]);
    assert_eq!(code(&out), 0);
}

#[test]
fn infeasible_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("boxed.toml");
    write(&cfg, "world = \"corridor_deadlock\"\nbounds = [-2, 2, 0, 0]\n");
    let out = dnmpc(&["run", cfg.to_str().unwrap(), "--out", "/dev/null"], &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no admissible control sequence"));
}

#[test]
fn sweep_prints_the_reference_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, "");
    let out = dnmpc(&["sweep", cfg.to_str().unwrap(), "--horizons", "4..7", "--agent", "2"], &[]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "N,V_x0,V_x1,alpha");
    assert_eq!(rows[1], "4,37,32,5/9");
    assert_eq!(rows[2], "5,41,33,8/9");
    assert_eq!(rows[3], "6,42,33,1");
    assert_eq!(rows[4], "7,42,33,1");
}

#[test]
fn alpha_reads_back_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let trace = dir.path().join("trace.jsonl");
    write(&cfg, "horizon = 2\n");
    let out = dnmpc(&["run", cfg.to_str().unwrap(), "--out", trace.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0);

    let out = dnmpc(&["alpha", "--trace", trace.to_str().unwrap(), "--weights", "1,1"], &[]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("alpha = 4/13"));

    let out = dnmpc(&["alpha", "--trace", trace.to_str().unwrap(), "--per-agent"], &[]);
    assert_eq!(code(&out), 0);
    // per-agent N = 2 values increase somewhere, so the local reports say so
    assert!(String::from_utf8_lossy(&out.stdout).contains("invalid"));

    let out = dnmpc(&["alpha", "--trace", "/nonexistent.jsonl"], &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let trace = dir.path().join("trace.jsonl");
    write(&cfg, "");
    dnmpc(&["run", cfg.to_str().unwrap(), "--out", trace.to_str().unwrap()], &[]);

    let out = dnmpc(&["export", "--trace", trace.to_str().unwrap(), "--format", "csv"], &[]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 1 + 8 * 2, "header plus 8 steps x 2 agents");
    assert_eq!(stdout.lines().next().unwrap(), "n,agent,x1,x2,value,stage_cost,level");

    let out = dnmpc(&["export", "--trace", trace.to_str().unwrap(), "--format", "plotdata"], &[]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("# agent 1"));

    let out = dnmpc(&["export", "--trace", trace.to_str().unwrap(), "--format", "xml"], &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, "seed = 1\n[network]\nloss = 0.5\n");
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    dnmpc(&["run", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()], &[]);
    dnmpc(&["run", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()], &[("DNMPC_SEED", "99")]);
    dnmpc(&["run", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()], &[("DNMPC_SEED", "99")]);
    let (a, b, c) = (
        std::fs::read_to_string(a).unwrap(),
        std::fs::read_to_string(b).unwrap(),
        std::fs::read_to_string(c).unwrap(),
    );
    assert_eq!(b, c, "same seed, same trace");
    assert_ne!(a.lines().next(), b.lines().next(), "header records the effective seed");

    let out = dnmpc(&["run", cfg.to_str().unwrap(), "--out", "/dev/null"], &[("DNMPC_SEED", "pi")]);
    assert_eq!(code(&out), 1);
}

#[test]
fn verify_passes_on_the_reference_setup() {
    let out = dnmpc(&["verify", "--cases", "25", "--max-horizon", "4", "--seed", "11"], &[]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("25 cases passed"));

    let out = dnmpc(&["verify", "--cases", "1", "--max-horizon", "99"], &[]);
    assert_eq!(code(&out), 1);
}
