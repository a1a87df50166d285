//! Behavior of the `ensrf` binary: exit codes, output files, and
//! byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ensrf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ensrf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const SCALAR_CONFIG: &str = r#"
seed = 9

[problem]
type = "explicit"
mean = [0.0]
factor = [[1.0]]

[[problem.step]]
model = [[1.0]]
shift = [0.0]
observation = [[1.0]]
noise_cov = [[1.0]]
data = [2.0]

[srf]
ensemble_size = 8
"#;

const EMPTY_STEPS_CONFIG: &str = r#"
[problem]
type = "explicit"
mean = [0.0, 0.0]
factor = [[1.0, 0.0], [0.0, 1.0]]

[srf]
ensemble_size = 4
"#;

const CONVERGE_CONFIG: &str = r#"
seed = 77

[problem]
type = "synthetic"
state_dim = 3
obs_dim = 2
steps = 2
seed = 13

[experiment]
ensemble_sizes = [16, 32, 64]
replications = 20
p_values = [1.0, 2.0]
"#;

#[test]
fn missing_config_exits_2_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = ensrf(&["kf-run", "--config", "nope.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn kf_run_scalar_writes_expected_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SCALAR_CONFIG).unwrap();
    let out = ensrf(
        &["kf-run", "--config", "run.toml", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("res/kf_run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "step,stage,mean_0,cov_0_0");
    let analysis = lines.find(|l| l.contains("analysis")).unwrap();
    let fields: Vec<&str> = analysis.split(',').collect();
    assert_eq!(fields[0], "1");
    let mean: f64 = fields[2].parse().unwrap();
    let cov: f64 = fields[3].parse().unwrap();
    assert!((mean - 1.0).abs() < 1e-12);
    assert!((cov - 0.5).abs() < 1e-12);

    // every output is referenced by the manifest
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/manifest.json")).unwrap())
            .unwrap();
    let listed: Vec<String> = manifest["output_paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for entry in fs::read_dir(dir.path().join("res")).unwrap() {
        let name = entry.unwrap().path();
        if name.file_name().unwrap() == "manifest.json" {
            continue;
        }
        assert!(
            listed.iter().any(|p| name.ends_with(p) || p.ends_with(name.file_name().unwrap().to_str().unwrap())),
            "orphan output {name:?} not in manifest"
        );
    }
}

#[test]
fn kf_run_with_no_steps_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), EMPTY_STEPS_CONFIG).unwrap();
    let out = ensrf(
        &["kf-run", "--config", "run.toml", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("res/kf_run.csv")).unwrap();
    assert_eq!(csv, "step,stage,mean_0,mean_1,cov_0_0,cov_0_1,cov_1_0,cov_1_1\n");
}

#[test]
fn srf_run_matches_scalar_statistics() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SCALAR_CONFIG).unwrap();
    let out = ensrf(
        &[
            "srf-run",
            "--config",
            "run.toml",
            "--out",
            "res",
            "--dump-ensemble",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/srf_run.csv")).unwrap();
    assert!(csv.starts_with("step,stage,mean_0,cov_0_0\n"));
    assert_eq!(csv.lines().count(), 3);

    let dump = fs::read_to_string(dir.path().join("res/srf_ensemble.csv")).unwrap();
    // initial ensemble (step 0) plus one analysis ensemble, 8 members each
    assert_eq!(dump.lines().count(), 1 + 2 * 8);
}

#[test]
fn srf_run_with_no_steps_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), EMPTY_STEPS_CONFIG).unwrap();
    let out = ensrf(
        &["srf-run", "--config", "run.toml", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("res/srf_run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn srf_run_without_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let without_srf = SCALAR_CONFIG.split("[srf]").next().unwrap();
    fs::write(dir.path().join("run.toml"), without_srf).unwrap();
    let out = ensrf(
        &["srf-run", "--config", "run.toml", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_noise_covariance_exits_3_with_step_index() {
    let dir = tempfile::tempdir().unwrap();
    let config = SCALAR_CONFIG.replace("noise_cov = [[1.0]]", "noise_cov = [[0.0]]");
    fs::write(dir.path().join("run.toml"), config).unwrap();
    let out = ensrf(
        &["kf-run", "--config", "run.toml", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("step 1"), "stderr: {stderr}");
}

#[test]
fn converge_reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONVERGE_CONFIG).unwrap();
    for (out_dir, threads) in [("a", "1"), ("b", "4"), ("c", "2")] {
        let out = ensrf(
            &[
                "converge",
                "--config",
                "run.toml",
                "--out",
                out_dir,
                "--threads",
                threads,
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.path().join("a/converge.csv")).unwrap();
    let b = fs::read(dir.path().join("b/converge.csv")).unwrap();
    let c = fs::read(dir.path().join("c/converge.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);

    let sa = fs::read(dir.path().join("a/converge_summary.json")).unwrap();
    let sb = fs::read(dir.path().join("b/converge_summary.json")).unwrap();
    assert_eq!(sa, sb);

    // row count contract: |Ns| x |ps| x (K+1) data rows
    let csv = String::from_utf8(a).unwrap();
    assert_eq!(csv.lines().count() - 1, 3 * 2 * 3);
}

#[test]
fn converge_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONVERGE_CONFIG).unwrap();
    for (out_dir, seed) in [("a", None), ("b", Some("123"))] {
        let mut args = vec!["converge", "--config", "run.toml", "--out", out_dir];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let out = ensrf(&args, dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a/converge.csv")).unwrap();
    let b = fs::read(dir.path().join("b/converge.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn exact_moment_converge_has_negligible_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
seed = 5

[problem]
type = "synthetic"
state_dim = 3
obs_dim = 2
steps = 2
seed = 21

[experiment]
ensemble_sizes = [6, 8]
replications = 2
p_values = [1.0]
init = "exact-moments"
"#;
    fs::write(dir.path().join("run.toml"), config).unwrap();
    let out = ensrf(
        &["converge", "--config", "run.toml", "--out", "res"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/converge.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        for idx in 3..=5 {
            let err: f64 = fields[idx].parse().unwrap();
            assert!(err <= 1e-8, "error column {idx} too large in {line}");
        }
    }
}

#[test]
fn bounds_fuzz_passes_and_failure_hook_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = ensrf(
        &[
            "bounds-fuzz",
            "--state-dim",
            "3",
            "--obs-dim",
            "2",
            "--trials",
            "200",
            "--seed",
            "4",
            "--out",
            "res",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/bounds_fuzz.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    assert!(report["summary"]["worst"].as_object().unwrap().len() >= 9);

    let out = ensrf(
        &[
            "bounds-fuzz",
            "--trials",
            "1",
            "--seed",
            "4",
            "--out",
            "res2",
            "--inject-violation",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed=4"), "stderr: {stderr}");
}

#[test]
fn bounds_fuzz_single_trial_report_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    for out_dir in ["a", "b"] {
        let out = ensrf(
            &[
                "bounds-fuzz", "--trials", "1", "--seed", "11", "--out", out_dir,
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a/bounds_fuzz.json")).unwrap();
    let b = fs::read(dir.path().join("b/bounds_fuzz.json")).unwrap();
    assert_eq!(a, b);
}
