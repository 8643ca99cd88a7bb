use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fbsde-ns"));
    c.env_remove("FBSDE_NS_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_file_takes_defaults_and_records_provenance() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = d.path().join("run");
    let o = run(
        &[
            "validate-geometry",
            "--config",
            cfg.to_str().unwrap(),
            "--samples",
            "10",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "pass");
    assert_eq!(m["config"]["nu"], 0.1);
    assert_eq!(m["provenance"]["nu"], "default");
    assert_eq!(m["provenance"]["samples"], "flag");
}

#[test]
fn flag_overrides_file_and_is_recorded() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "nu = 0.1\nsamples = 5\n").unwrap();
    let out = d.path().join("run");
    let o = run(
        &[
            "validate-geometry",
            "--config",
            cfg.to_str().unwrap(),
            "--nu",
            "0.2",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["config"]["nu"], 0.2);
    assert_eq!(m["provenance"]["nu"], "flag");
    assert_eq!(m["provenance"]["samples"], "file");
    assert_eq!(m["overrides"][0]["key"], "nu");
    assert_eq!(m["overrides"][0]["file"], 0.1);
    assert_eq!(m["overrides"][0]["flag"], 0.2);
}

#[test]
fn json_config_is_accepted() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"manifold": "sphere2", "samples": 5}"#).unwrap();
    let out = d.path().join("run");
    let o = run(
        &["validate-geometry", "--config", cfg.to_str().unwrap()],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest(&out)["config"]["manifold"], "sphere2");
}

#[test]
fn negative_paths_are_rejected_by_name() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "paths = -10\n").unwrap();
    let o = run(
        &["heat", "--config", cfg.to_str().unwrap()],
        &d.path().join("run"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paths"), "{}", stderr(&o));
}

#[test]
fn config_errors_report_line_and_field() {
    let d = tempfile::tempdir().unwrap();
    let bad_type = d.path().join("t.toml");
    std::fs::write(&bad_type, "seed = 3\nnu = \"fast\"\n").unwrap();
    let o = run(
        &["heat", "--config", bad_type.to_str().unwrap()],
        &d.path().join("a"),
    );
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 2") && e.contains("nu"), "{e}");

    let unknown = d.path().join("u.toml");
    std::fs::write(&unknown, "viscosity = 0.1\n").unwrap();
    let o = run(
        &["heat", "--config", unknown.to_str().unwrap()],
        &d.path().join("b"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("viscosity"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = bin().args(["heat", "--viscosity", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn output_directory_defaults_to_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["validate-geometry", "--samples", "3"])
        .env("FBSDE_NS_OUT", d.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(d.path().join("manifest.json").exists());
    assert_eq!(manifest(d.path())["provenance"]["out"], "default");
}

#[test]
fn resolved_config_reproduces_csv_bytes() {
    let d = tempfile::tempdir().unwrap();
    let first = d.path().join("first");
    let o = run(
        &[
            "heat",
            "--manifold",
            "sphere2",
            "--paths",
            "200",
            "--T",
            "0.1",
            "--seed",
            "4",
        ],
        &first,
    );
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    let second = d.path().join("second");
    let cfg = first.join("resolved_config.json");
    let o = run(&["heat", "--config", cfg.to_str().unwrap()], &second);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    let artifacts = manifest(&first)["artifacts"].clone();
    let names: Vec<&str> = artifacts
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|v| v.as_str())
        .collect();
    assert!(names.contains(&"heat_errors.csv"));
    for name in names.iter().filter(|n| n.ends_with(".csv")) {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn solver_warnings_reach_the_manifest() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "ns-solve",
            "--manifold",
            "torus2",
            "--paths",
            "50",
            "--max-iters",
            "1",
            "--tol",
            "1e-9",
        ],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m = manifest(d.path());
    assert_eq!(m["status"], "fail");
    let warnings = m["warnings"].as_array().unwrap();
    assert!(
        warnings
            .iter()
            .any(|w| w.as_str().unwrap_or("").contains("max_iters")),
        "{warnings:?}"
    );
    assert!(d.path().join("picard_trace.csv").exists());
}
