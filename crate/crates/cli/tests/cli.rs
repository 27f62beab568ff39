use std::path::Path;
use std::process::{Command, Output};

fn wlde(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wlde"));
    cmd.args(args);
    for var in ["WLDE_CONFIG", "WLDE_OUT", "WLDE_THREADS", "WLDE_SEED"] {
        cmd.env_remove(var);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = r#"
generations = 20

[growth]
s_f = 0.3
s_h = 0.7

[kernel]
family = "laplace"
b = 1.0

[lattice]
nx = 64
spacing = 0.5

[profile]
amplitude = 0.8
half_width = 3.0
"#;

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_manifested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = wlde(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "complete");
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(files.contains(&"trajectory.csv") && files.contains(&"trajectory.wlde"));
    assert_eq!(m["config"]["lattice"]["nx"], 64);
}

#[test]
fn env_overrides_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("env");
    let o = wlde(
        &["stability"],
        &[("WLDE_CONFIG", &cfg), ("WLDE_OUT", out.to_str().unwrap()), ("WLDE_SEED", "7"), ("WLDE_THREADS", "2")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["config"]["seed"], 7);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = wlde(&["simulate", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), &SMALL.replace("s_f = 0.3", "s_f = 0.9"));
    let o = wlde(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("GrowthParams"));

    let cfg = write_config(dir.path(), &format!("{SMALL}\nunknown = 1\n"));
    let o = wlde(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));

    let o = wlde(&["reproduce", "fig42", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bracket_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}\n[optimize]\na_hi = 0.1\nhalf_widths = [1.0]\n");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("opt");
    let o = wlde(&["optimize", "--criterion", "acm", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["status"], "partial");
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = wlde(&["simulate", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn reproduce_fig2_uses_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2");
    let o = wlde(&["reproduce", "fig2", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["command"], "reproduce fig2");
    assert_eq!(m["config"]["dispersal"]["delta"], 0.6);
    let csv = std::fs::read_to_string(out.join("phase_portrait.csv")).unwrap();
    assert!(csv.starts_with("v,delta_v,fixed_point\n"));
}

#[test]
fn reproduce_table4_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("t{i}"));
        let o = wlde(&["reproduce", "table4", "--threads", threads, "--out", out.to_str().unwrap()], &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        hashes.push(std::fs::read(out.join("manifest.json")).unwrap());
        let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
        assert_eq!(csv.lines().count(), 25);
    }
    assert_eq!(hashes[0], hashes[1]);
}
