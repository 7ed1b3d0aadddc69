// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn siaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siaf")).args(args).env_remove("SIAF_LOG").output().expect("spawn siaf")
}

fn first_stderr_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().next().unwrap_or_default().to_string()
}

struct Model {
    dir: TempDir,
    config: PathBuf,
    weights: PathBuf,
}

impl Model {
    fn new(size: &str, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("m.toml");
        let weights = dir.path().join("m.siaf");
        let o = siaf(&[
            "gen",
            "--size",
            size,
            "--seed",
            &seed.to_string(),
            "--config",
            s(&config),
            "--weights",
            s(&weights),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        Self { dir, config, weights }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn args<'a>(&'a self, cmd: &'a str) -> Vec<&'a str> {
        vec![cmd, "--config", s(&self.config), "--weights", s(&self.weights)]
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_passes_for_both_schedules() {
    let m = Model::new("tiny", 3);
    for sched in ["serial", "parallel"] {
        for t in ["1", "2", "4"] {
            let mut a = m.args("verify");
            a.extend(["--schedule", sched, "--timesteps", t, "--seed", "9"]);
            let o = siaf(&a);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
            assert_eq!(v["verification"]["passed"], true);
            assert_eq!(v["schedule"]["time_steps"], t.parse::<u64>().unwrap());
        }
    }
}

#[test]
fn corrupt_magic_names_offset() {
    let m = Model::new("tiny", 1);
    let mut bytes = std::fs::read(&m.weights).unwrap();
    bytes[..4].copy_from_slice(b"NOPE");
    std::fs::write(&m.weights, bytes).unwrap();
    let o = siaf(&m.args("run"));
    assert_eq!(o.status.code(), Some(2));
    let line = first_stderr_line(&o);
    assert!(line.starts_with("siaf-error: code=2 location="), "{line}");
    assert!(line.contains("m.siaf@0"), "{line}");
    assert!(line.contains("offset 0"), "{line}");
}

#[test]
fn truncated_weights_are_input_errors() {
    let m = Model::new("tiny", 1);
    let bytes = std::fs::read(&m.weights).unwrap();
    std::fs::write(&m.weights, &bytes[..bytes.len() / 2]).unwrap();
    let o = siaf(&m.args("verify"));
    assert_eq!(o.status.code(), Some(2));
    assert!(first_stderr_line(&o).contains("offset"));
}

#[test]
fn missing_and_malformed_files() {
    let m = Model::new("tiny", 1);
    let o = siaf(&["run", "--config", "/nonexistent/x.toml", "--weights", s(&m.weights)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(first_stderr_line(&o).contains("location=/nonexistent/x.toml"));

    std::fs::write(&m.config, "name = \"x\"\ntime_steps = [").unwrap();
    let o = siaf(&m.args("run"));
    assert_eq!(o.status.code(), Some(2));
    assert!(first_stderr_line(&o).starts_with("siaf-error: code=2"));
}

#[test]
fn bad_arguments_exit_2() {
    let m = Model::new("tiny", 1);
    let mut a = m.args("run");
    a.extend(["--timesteps", "3"]);
    assert_eq!(siaf(&a).status.code(), Some(2));
    let mut a = m.args("run");
    a.extend(["--schedule", "diagonal"]);
    let o = siaf(&a);
    assert_eq!(o.status.code(), Some(2));
    assert!(first_stderr_line(&o).contains("location=--schedule"));
}

#[test]
fn undersized_sram_is_a_simulation_error() {
    let m = Model::new("tiny", 1);
    let text = std::fs::read_to_string(&m.config).unwrap();
    std::fs::write(&m.config, text.replace("temp_bytes = 32768", "temp_bytes = 64")).unwrap();
    let o = siaf(&m.args("run"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(first_stderr_line(&o).contains("temp"));
}

#[test]
fn flipped_weight_fails_verify_and_names_layer() {
    let m = Model::new("tiny", 2);
    for layer in ["tok.0.conv3x3", "tok.5.conv3x3", "block0.mlp.0.iand.0.linear"] {
        let mut a = m.args("verify");
        a.extend(["--fault-layer", layer]);
        let o = siaf(&a);
        assert_eq!(o.status.code(), Some(1), "{layer}");
        let err = String::from_utf8_lossy(&o.stderr);
        let line = err.lines().find(|l| l.starts_with("mismatch:")).unwrap();
        assert!(line.contains(&format!("layer={layer}")), "{line}");
        assert!(line.contains("time_step=") && line.contains("index="), "{line}");
    }
    let mut a = m.args("verify");
    a.extend(["--fault-layer", "no.such.layer"]);
    assert_eq!(siaf(&a).status.code(), Some(2));
}

#[test]
fn same_seed_same_report_bytes() {
    let a = Model::new("tiny", 5);
    let b = Model::new("tiny", 5);
    assert_eq!(std::fs::read(&a.weights).unwrap(), std::fs::read(&b.weights).unwrap());
    assert_eq!(std::fs::read(&a.config).unwrap(), std::fs::read(&b.config).unwrap());
    let (ra, rb) = (a.path("r.json"), b.path("r.json"));
    for (m, r) in [(&a, &ra), (&b, &rb)] {
        let mut args = m.args("run");
        args.extend(["--seed", "17", "--schedule", "serial", "--report", s(r)]);
        assert!(siaf(&args).status.success());
    }
    assert_eq!(std::fs::read(&ra).unwrap(), std::fs::read(&rb).unwrap());
}

#[test]
fn raw_image_input() {
    let m = Model::new("tiny", 6);
    let img = m.path("i.raw");
    let o = siaf(&[
        "gen",
        "--size",
        "tiny",
        "--seed",
        "6",
        "--config",
        s(&m.config),
        "--weights",
        s(&m.weights),
        "--image",
        s(&img),
    ]);
    assert!(o.status.success());
    let bytes = std::fs::read(&img).unwrap();
    assert_eq!(&bytes[..12], &[8, 0, 0, 0, 8, 0, 0, 0, 3, 0, 0, 0]);
    assert_eq!(bytes.len(), 12 + 3 * 64);

    let mut a = m.args("verify");
    a.extend(["--input", s(&img)]);
    assert_eq!(siaf(&a).status.code(), Some(0));

    std::fs::write(&img, &bytes[..40]).unwrap();
    let o = siaf(&a);
    assert_eq!(o.status.code(), Some(2));
    assert!(first_stderr_line(&o).contains("i.raw@"));
}

#[test]
fn compare_reports_weight_read_reduction() {
    let m = Model::new("tiny", 7);
    let o = siaf(&m.args("compare"));
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["weight_access_reduction_pct"], 75.0);
    assert_eq!(v["logits_match"], true);
}

#[test]
fn stats_without_model_files() {
    let o = siaf(&["stats"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model"]["total_pes"], 3456);
    assert_eq!(v["sram_budget_kb"], 139.25);
}

#[test]
fn log_level_from_environment() {
    let m = Model::new("tiny", 8);
    let o = Command::new(env!("CARGO_BIN_EXE_siaf")).args(m.args("run")).env("SIAF_LOG", "info").output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("INFO"));
    assert!(siaf(&m.args("run")).stderr.is_empty());
}
