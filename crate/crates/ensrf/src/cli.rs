//! Library side of the `ensrf` binary: each command reads its inputs, runs,
//! and writes CSV data, a JSON summary, and a run manifest into the output
//! directory. The binary itself only parses arguments and maps errors to
//! exit codes.
//!
//! CSV files use full float64 round-trip precision (shortest exact decimal
//! form), a header row, and LF line endings, so reruns of the same config
//! are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds::{fuzz_all_bounds, BoundReport, FuzzConfig, FuzzSummary};
use crate::config::{build_problem, config_hash, load_run_config, RunConfig};
use crate::convergence::{
    srf_vs_kf_experiment, ConvergenceReport, ExperimentConfig, InitScheme,
};
use crate::ensemble::{exact_moment_ensemble, sample_initial_ensemble, srf_run, Ensemble};
use crate::error::{Error, Result};
use crate::kalman::{kf_run, GaussianState};
use crate::seeding::substream;

const SRF_RUN_STREAM: u64 = 0xe5;

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonOpts {
    pub out_dir: PathBuf,
    /// Overrides the config file's seed when set.
    pub seed: Option<u64>,
    /// Caps worker parallelism; never changes results.
    pub threads: Option<usize>,
}

/// Written next to every command's outputs; all output files are listed in
/// `output_paths`, so nothing in the directory is orphaned.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub output_paths: Vec<String>,
}

/// Exit code contract: 0 success, 2 config/usage error, 3 numerical error.
/// (bounds-fuzz additionally exits 1 when a violation is found.)
pub fn exit_code_for(error: &Error) -> i32 {
    if error.is_numerical() {
        3
    } else {
        2
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn run_in_pool<T, F>(threads: Option<usize>, job: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> Result<T> + Send,
{
    match threads {
        None => job(),
        Some(count) => rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(job),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn finish_manifest(
    out_dir: &Path,
    config_hash: String,
    master_seed: u64,
    started_at: String,
    outputs: Vec<PathBuf>,
) -> Result<RunManifest> {
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        master_seed,
        started_at,
        finished_at: now(),
        output_paths: outputs
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

// header: step,stage,mean_0..mean_{n-1},cov_0_0..cov_{n-1}_{n-1}
fn stats_csv_header(n: usize) -> String {
    let mut header = String::from("step,stage");
    for i in 0..n {
        header.push_str(&format!(",mean_{i}"));
    }
    for i in 0..n {
        for j in 0..n {
            header.push_str(&format!(",cov_{i}_{j}"));
        }
    }
    header
}

fn write_stats_csv(
    path: &Path,
    n: usize,
    rows: &[(usize, &str, &GaussianState)],
) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "{}", stats_csv_header(n))?;
    for (step, stage, state) in rows {
        let mut line = format!("{step},{stage}");
        for i in 0..n {
            line.push_str(&format!(",{}", state.mean[i]));
        }
        let cov = state.cov.matrix();
        for i in 0..n {
            for j in 0..n {
                line.push_str(&format!(",{}", cov[(i, j)]));
            }
        }
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StateDump {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl StateDump {
    fn of(state: &GaussianState) -> Self {
        let n = state.dim();
        StateDump {
            mean: state.mean.iter().copied().collect(),
            cov: (0..n)
                .map(|i| (0..n).map(|j| state.cov.matrix()[(i, j)]).collect())
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct FilterRunSummary {
    config_hash: String,
    state_dim: usize,
    obs_dim: usize,
    steps: usize,
    final_analysis: Option<StateDump>,
}

/// Exact Kalman filter run: per-step forecast/analysis means and
/// covariances to CSV plus a JSON summary.
pub fn cmd_kf_run(config_path: &Path, opts: &CommonOpts) -> Result<RunManifest> {
    let started = now();
    let (config, canonical) = load_run_config(config_path)?;
    let seed = opts.seed.or(config.seed).unwrap_or(0);
    let problem = build_problem(&config.problem)?;
    let init = GaussianState::new(problem.prior.mean().clone(), problem.prior.covariance())?;
    let steps = kf_run(&init, &problem.models, &problem.observations)?;

    ensure_out_dir(&opts.out_dir)?;
    let csv_path = opts.out_dir.join("kf_run.csv");
    let mut rows = Vec::with_capacity(2 * steps.len());
    for (k, step) in steps.iter().enumerate() {
        rows.push((k + 1, "forecast", &step.forecast));
        rows.push((k + 1, "analysis", &step.analysis));
    }
    write_stats_csv(&csv_path, problem.state_dim(), &rows)?;

    let summary_path = opts.out_dir.join("kf_run_summary.json");
    write_json(
        &summary_path,
        &FilterRunSummary {
            config_hash: config_hash(&canonical),
            state_dim: problem.state_dim(),
            obs_dim: problem.obs_dim(),
            steps: steps.len(),
            final_analysis: steps.last().map(|s| StateDump::of(&s.analysis)),
        },
    )?;

    finish_manifest(
        &opts.out_dir,
        config_hash(&canonical),
        seed,
        started,
        vec![csv_path, summary_path],
    )
}

fn initial_ensemble(config: &RunConfig, seed: u64) -> Result<(Ensemble, InitScheme)> {
    let srf = config
        .srf
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [srf] section".into()))?;
    let problem = build_problem(&config.problem)?;
    let ensemble = match srf.init {
        InitScheme::Sample => {
            let mut rng = substream(seed, &[SRF_RUN_STREAM]);
            sample_initial_ensemble(&problem.prior, srf.ensemble_size, &mut rng)?
        }
        InitScheme::ExactMoments => exact_moment_ensemble(&problem.prior)?,
    };
    Ok((ensemble, srf.init))
}

/// Square-root ensemble filter run: per-step sample statistics to CSV, an
/// optional full-ensemble dump, and a JSON summary.
pub fn cmd_srf_run(config_path: &Path, opts: &CommonOpts, dump_ensemble: bool) -> Result<RunManifest> {
    let started = now();
    let (config, canonical) = load_run_config(config_path)?;
    let seed = opts.seed.or(config.seed).unwrap_or(0);
    let problem = build_problem(&config.problem)?;
    let (init, _) = initial_ensemble(&config, seed)?;
    let dump = dump_ensemble || config.srf.as_ref().is_some_and(|s| s.dump_ensemble);

    let steps = srf_run(&init, &problem.models, &problem.observations)?;

    ensure_out_dir(&opts.out_dir)?;
    let csv_path = opts.out_dir.join("srf_run.csv");
    let mut rows = Vec::with_capacity(2 * steps.len());
    for (k, step) in steps.iter().enumerate() {
        rows.push((k + 1, "forecast", &step.forecast_stats));
        rows.push((k + 1, "analysis", &step.analysis_stats));
    }
    write_stats_csv(&csv_path, problem.state_dim(), &rows)?;

    let mut outputs = vec![csv_path];
    if dump {
        let dump_path = opts.out_dir.join("srf_ensemble.csv");
        let mut file = fs::File::create(&dump_path)?;
        let n = problem.state_dim();
        let mut header = String::from("step,member");
        for i in 0..n {
            header.push_str(&format!(",state_{i}"));
        }
        writeln!(file, "{header}")?;
        let mut dump_rows = vec![(0usize, &init)];
        dump_rows.extend(steps.iter().enumerate().map(|(k, s)| (k + 1, &s.analysis_ensemble)));
        for (step, ensemble) in dump_rows {
            for member in 0..ensemble.size() {
                let mut line = format!("{step},{member}");
                for i in 0..n {
                    line.push_str(&format!(",{}", ensemble.columns()[(i, member)]));
                }
                writeln!(file, "{line}")?;
            }
        }
        outputs.push(dump_path);
    }

    let summary_path = opts.out_dir.join("srf_run_summary.json");
    write_json(
        &summary_path,
        &FilterRunSummary {
            config_hash: config_hash(&canonical),
            state_dim: problem.state_dim(),
            obs_dim: problem.obs_dim(),
            steps: steps.len(),
            final_analysis: steps.last().map(|s| StateDump::of(&s.analysis_stats)),
        },
    )?;
    outputs.push(summary_path);

    finish_manifest(&opts.out_dir, config_hash(&canonical), seed, started, outputs)
}

#[derive(Serialize)]
struct ConvergeSummary<'a> {
    config_hash: String,
    seed: u64,
    slopes: &'a [crate::convergence::SlopeRow],
    failures: &'a [crate::convergence::ReplicateFailure],
}

/// Convergence experiment: tidy per-(step, p, N) error CSV plus a JSON
/// summary with the fitted slopes. Exits successfully iff the experiment
/// completed; judging the slopes is the test suite's job, not the CLI's.
pub fn cmd_converge(config_path: &Path, opts: &CommonOpts) -> Result<RunManifest> {
    let started = now();
    let (config, canonical) = load_run_config(config_path)?;
    let seed = opts.seed.or(config.seed).unwrap_or(0);
    let experiment = config
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [experiment] section".into()))?;
    let cfg = ExperimentConfig {
        problem: build_problem(&config.problem)?,
        ensemble_sizes: experiment.ensemble_sizes.clone(),
        replications: experiment.replications,
        p_values: experiment.p_values.clone(),
        seed,
        init: experiment.init,
    };
    let report: ConvergenceReport = run_in_pool(opts.threads, || srf_vs_kf_experiment(&cfg))?;

    ensure_out_dir(&opts.out_dir)?;
    let csv_path = opts.out_dir.join("converge.csv");
    let mut file = fs::File::create(&csv_path)?;
    writeln!(
        file,
        "step,p,ensemble_size,mean_err,cov_err_spectral,cov_err_hs,replicates"
    )?;
    for row in &report.rows {
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            row.step,
            row.p,
            row.ensemble_size,
            row.mean_err,
            row.cov_err_spectral,
            row.cov_err_hs,
            row.replicates
        )?;
    }
    drop(file);

    let summary_path = opts.out_dir.join("converge_summary.json");
    write_json(
        &summary_path,
        &ConvergeSummary {
            config_hash: config_hash(&canonical),
            seed,
            slopes: &report.slopes,
            failures: &report.failures,
        },
    )?;

    finish_manifest(
        &opts.out_dir,
        config_hash(&canonical),
        seed,
        started,
        vec![csv_path, summary_path],
    )
}

/// Flags of the bounds-fuzz command. `inject_violation` is a test hook that
/// plants one deliberately failing report to exercise the failure path.
#[derive(Debug, Clone)]
pub struct BoundsFuzzOpts {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub inject_violation: bool,
}

#[derive(Serialize)]
struct BoundsFuzzReport<'a> {
    config_hash: String,
    state_dim: usize,
    obs_dim: usize,
    trials: usize,
    seed: u64,
    max_condition: f64,
    passed: bool,
    summary: &'a FuzzSummary,
}

/// Randomized inequality campaign; the caller maps `summary.passed()` to
/// the exit code (0 iff no violations).
pub fn cmd_bounds_fuzz(
    fuzz: &BoundsFuzzOpts,
    opts: &CommonOpts,
) -> Result<(RunManifest, FuzzSummary)> {
    let started = now();
    let cfg = FuzzConfig::new(fuzz.state_dim, fuzz.obs_dim, fuzz.trials, fuzz.seed);
    let mut summary = run_in_pool(opts.threads, || fuzz_all_bounds(&cfg))?;
    if fuzz.inject_violation {
        summary.violations.push(BoundReport {
            check: "injected_violation",
            lhs: 1.0,
            rhs: 0.0,
            slack: -1.0,
            inputs_digest: format!("seed={};trial=injected", fuzz.seed),
        });
    }

    // flag-driven command: hash the canonicalized effective parameters
    let canonical = format!(
        "{{\"max_condition\"={},\"obs_dim\"={},\"seed\"={},\"state_dim\"={},\"trials\"={}}}",
        cfg.max_condition, cfg.obs_dim, cfg.seed, cfg.state_dim, cfg.trials
    );

    ensure_out_dir(&opts.out_dir)?;
    let report_path = opts.out_dir.join("bounds_fuzz.json");
    write_json(
        &report_path,
        &BoundsFuzzReport {
            config_hash: config_hash(&canonical),
            state_dim: cfg.state_dim,
            obs_dim: cfg.obs_dim,
            trials: cfg.trials,
            seed: cfg.seed,
            max_condition: cfg.max_condition,
            passed: summary.passed(),
            summary: &summary,
        },
    )?;

    let manifest = finish_manifest(
        &opts.out_dir,
        config_hash(&canonical),
        fuzz.seed,
        started,
        vec![report_path],
    )?;
    Ok((manifest, summary))
}
