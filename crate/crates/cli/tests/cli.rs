use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vlsf_core::harness::ExperimentConfig;

fn vlsf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlsf"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut ExperimentConfig)) -> String {
    let mut c = ExperimentConfig::default();
    c.out_dir = dir.join("out");
    c.trials = 20;
    c.n_eval = 10;
    c.trace_count = 2;
    edit(&mut c);
    let path = dir.join("config.toml");
    fs::write(&path, c.to_toml_string().unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn config_command_prints_parseable_defaults() {
    let out = vlsf(&["config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        ExperimentConfig::from_toml_str(&text).unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), |_| {});
    let out_dir = tmp.path().join("elsewhere");
    let out = vlsf(&[
        "simulate",
        "--config",
        &config,
        "--seed",
        "7",
        "--trials",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(out_dir.join("simulate/summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("3,"));
    let manifest = fs::read_to_string(out_dir.join("simulate/manifest.toml")).unwrap();
    assert!(manifest.contains("master_seed = 7"));
    assert!(String::from_utf8(out.stdout).unwrap().contains("95% CI"));
}

#[test]
fn quiet_keeps_stdout_empty_and_logs_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), |_| {});
    let out = vlsf(&["trace", "--config", &config, "--quiet"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(out.stderr.is_empty());
    let loud = vlsf(&["trace", "--config", &config]);
    assert!(String::from_utf8(loud.stderr)
        .unwrap()
        .contains("running trace"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), |_| {});
    let read = |name: &str| fs::read(tmp.path().join("out/simulate").join(name)).unwrap();
    assert!(vlsf(&["simulate", "--config", &config, "--quiet"])
        .status
        .success());
    let first = (
        read("histogram.csv"),
        read("summary.csv"),
        read("records.csv"),
        read("manifest.toml"),
    );
    assert!(vlsf(&["simulate", "--config", &config, "--quiet"])
        .status
        .success());
    assert_eq!(
        first,
        (
            read("histogram.csv"),
            read("summary.csv"),
            read("records.csv"),
            read("manifest.toml")
        )
    );
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(
        vlsf(&["trace", "--config", missing.to_str().unwrap(), "--quiet"])
            .status
            .code(),
        Some(1)
    );

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "master_seed = \"one\"").unwrap();
    assert_eq!(
        vlsf(&["trace", "--config", bad.to_str().unwrap(), "--quiet"])
            .status
            .code(),
        Some(2)
    );

    let infeasible = write_config(tmp.path(), |c| c.reference.as_mut().unwrap().sigma_h2 = 1.0);
    let out = vlsf(&["szego", "--config", &infeasible]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("must exceed"));

    let empty_grid = write_config(tmp.path(), |c| {
        let t = c.tune.as_mut().unwrap();
        t.sigma_scale = vlsf_core::tuner::SigmaScale::Absolute;
        t.sigma_h2_values = vec![0.05, 0.1];
    });
    assert_eq!(
        vlsf(&["tune", "--config", &empty_grid, "--quiet"])
            .status
            .code(),
        Some(3)
    );

    assert_eq!(
        vlsf(&["simulate", "--trials", "0", "--quiet"])
            .status
            .code(),
        Some(2)
    );
}
