//! Monte Carlo experiment engine: Lp law-of-large-numbers checks for sample
//! statistics, synthetic filtering problems, and the ensemble-vs-exact
//! convergence study with log-log rate fits.
//!
//! Replicates run in parallel; every replicate's random stream is derived
//! from (master seed, ensemble size, replicate index), so a report is
//! identical whatever the thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    ensemble_cov, ensemble_mean, ensemble_stats, exact_moment_ensemble, sample_initial_ensemble,
    srf_run, FactoredGaussian,
};
use crate::error::{Error, Result};
use crate::kalman::{kf_run, GaussianState, LinearModelStep, ObservationSpec};
use crate::linalg::{hs_norm, spectral_norm, sym_sqrt, symmetrize, SymmetricPsd};
use crate::seeding::substream;

const PROBLEM_STREAM: u64 = 0x90;
const LLN_STREAM: u64 = 0x11;
const SRF_STREAM: u64 = 0x5f;

/// Plug-in estimate of the Lp norm from replicate samples:
/// ((1/M) sum s_i^p)^{1/p}.
pub fn lp_estimate(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("lp_estimate needs at least one sample".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!("Lp order must be >= 1, got {p}")));
    }
    let m = samples.len() as f64;
    Ok((samples.iter().map(|s| s.powf(p)).sum::<f64>() / m).powf(1.0 / p))
}

/// Ordinary least squares of log err against log N, with a 2-standard-error
/// half width on the slope.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
}

/// Fits err ~ exp(intercept) * N^slope. Entries with err = 0 are dropped;
/// at least three distinct sizes must remain.
pub fn rate_fit(points: &[(usize, f64)]) -> Result<RateFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|&(n, e)| ((n as f64).ln(), e.ln()))
        .collect();
    let distinct = {
        let mut sizes: Vec<u64> = points
            .iter()
            .filter(|(_, e)| *e > 0.0 && e.is_finite())
            .map(|&(n, _)| n as u64)
            .collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes.len()
    };
    if distinct < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 distinct sizes with positive error, got {distinct}"
        )));
    }
    let count = kept.len() as f64;
    let x_mean = kept.iter().map(|(x, _)| x).sum::<f64>() / count;
    let y_mean = kept.iter().map(|(_, y)| y).sum::<f64>() / count;
    let sxx: f64 = kept.iter().map(|(x, _)| (x - x_mean).powi(2)).sum();
    let sxy: f64 = kept
        .iter()
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = kept
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (kept.len() - 2).max(1) as f64;
    let half_width = 2.0 * (ss_res / dof / sxx).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        half_width,
    })
}

/// A fully specified linear-Gaussian filtering problem.
#[derive(Debug, Clone)]
pub struct FilteringProblem {
    pub prior: FactoredGaussian,
    pub models: Vec<LinearModelStep>,
    pub observations: Vec<ObservationSpec>,
}

impl FilteringProblem {
    pub fn state_dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.first().map_or(0, |o| o.obs_dim())
    }

    pub fn steps(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() != self.observations.len() {
            return Err(Error::Config(format!(
                "problem has {} model steps but {} observations",
                self.models.len(),
                self.observations.len()
            )));
        }
        let n = self.state_dim();
        for (k, model) in self.models.iter().enumerate() {
            if model.dim() != n {
                return Err(Error::Shape(format!(
                    "model at step {} has dimension {}, state dimension is {n}",
                    k + 1,
                    model.dim()
                )));
            }
        }
        for (k, obs) in self.observations.iter().enumerate() {
            if obs.state_dim() != n {
                return Err(Error::Shape(format!(
                    "observation at step {} acts on dimension {}, state dimension is {n}",
                    k + 1,
                    obs.state_dim()
                )));
            }
        }
        Ok(())
    }

    /// Exact-filter reference: the initial state followed by the analysis
    /// state of every step (length steps + 1).
    pub fn kalman_reference(&self) -> Result<Vec<GaussianState>> {
        let init = GaussianState::new(self.prior.mean().clone(), self.prior.covariance())?;
        let run = kf_run(&init, &self.models, &self.observations)?;
        Ok(std::iter::once(init)
            .chain(run.into_iter().map(|s| s.analysis))
            .collect())
    }
}

/// Seed-deterministic synthetic problem: stable random affine models
/// (spectral radius capped at 1.05), a random full-rank observation
/// operator, ridge-regularized Wishart noise covariance, and data simulated
/// from a truth trajectory plus noise drawn from that covariance.
pub fn make_synthetic_problem(
    state_dim: usize,
    obs_dim: usize,
    steps: usize,
    seed: u64,
) -> Result<FilteringProblem> {
    if state_dim < 1 || obs_dim < 1 || steps < 1 {
        return Err(Error::Config(format!(
            "synthetic problem needs positive dimensions and steps, got n={state_dim}, m={obs_dim}, K={steps}"
        )));
    }
    let mut rng = substream(seed, &[PROBLEM_STREAM]);
    let root_n = (state_dim as f64).sqrt();

    let mean = DVector::from_fn(state_dim, |_, _| rng.sample(StandardNormal));
    let factor =
        DMatrix::from_fn(state_dim, state_dim, |_, _| rng.sample::<f64, _>(StandardNormal))
            / root_n;
    let prior = FactoredGaussian::new(mean, factor)?;

    let mut truth = prior.mean()
        + prior.factor() * DVector::from_fn(state_dim, |_, _| rng.sample::<f64, _>(StandardNormal));

    let mut models = Vec::with_capacity(steps);
    let mut observations = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut transition =
            DMatrix::from_fn(state_dim, state_dim, |_, _| rng.sample::<f64, _>(StandardNormal))
                / root_n;
        let radius = transition
            .complex_eigenvalues()
            .iter()
            .fold(0.0f64, |a, l| a.max(l.norm()));
        if radius > 1.05 {
            transition *= 1.05 / radius;
        }
        let shift =
            DVector::from_fn(state_dim, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.1;
        let model = LinearModelStep::new(transition, shift)?;

        let operator =
            DMatrix::from_fn(obs_dim, state_dim, |_, _| rng.sample::<f64, _>(StandardNormal))
                / root_n;
        let g = DMatrix::from_fn(obs_dim, obs_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise_cov = SymmetricPsd::new(
            symmetrize(&(&g * g.transpose() / obs_dim as f64))
                + DMatrix::identity(obs_dim, obs_dim) * 0.1,
        )?;
        let noise_root = sym_sqrt(&noise_cov)?;

        truth = model.apply(&truth);
        let noise = noise_root.matrix()
            * DVector::from_fn(obs_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let data = &operator * &truth + noise;

        models.push(model);
        observations.push(ObservationSpec::new(operator, noise_cov, data)?);
    }
    let problem = FilteringProblem {
        prior,
        models,
        observations,
    };
    problem.validate()?;
    Ok(problem)
}

/// Sizes, replications, and Lp orders for a law-of-large-numbers run.
#[derive(Debug, Clone)]
pub struct LlnConfig {
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub p_values: Vec<f64>,
    pub seed: u64,
}

impl LlnConfig {
    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 2) {
            return Err(Error::Config("ensemble sizes must all be >= 2".into()));
        }
        if self.replications < 1 {
            return Err(Error::Config("need at least one replication".into()));
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::Config("Lp orders must all be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnRow {
    pub p: f64,
    pub size: usize,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnFit {
    pub p: f64,
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnReport {
    pub rows: Vec<LlnRow>,
    pub fits: Vec<LlnFit>,
}

fn lln_experiment<F>(dist: &FactoredGaussian, cfg: &LlnConfig, per_replicate: F) -> Result<LlnReport>
where
    F: Fn(&crate::ensemble::Ensemble) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let errors: Vec<f64> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = substream(cfg.seed, &[LLN_STREAM, size as u64, rep as u64]);
                let e = sample_initial_ensemble(dist, size, &mut rng)?;
                per_replicate(&e)
            })
            .collect::<Result<Vec<f64>>>()?;
        for &p in &cfg.p_values {
            rows.push(LlnRow {
                p,
                size,
                error: lp_estimate(&errors, p)?,
            });
        }
    }
    let mut fits = Vec::new();
    for &p in &cfg.p_values {
        let points: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.p == p)
            .map(|r| (r.size, r.error))
            .collect();
        match rate_fit(&points) {
            Ok(fit) => fits.push(LlnFit {
                p,
                slope: fit.slope,
                intercept: fit.intercept,
                half_width: fit.half_width,
            }),
            Err(Error::InsufficientData(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(LlnReport { rows, fits })
}

/// Lp error of the sample mean against the distribution mean, per size,
/// with a rate fit per order.
pub fn lln_mean_experiment(dist: &FactoredGaussian, cfg: &LlnConfig) -> Result<LlnReport> {
    let target = dist.mean().clone();
    lln_experiment(dist, cfg, move |e| Ok((ensemble_mean(e) - &target).norm()))
}

/// Lp error of the sample covariance against the distribution covariance in
/// Hilbert-Schmidt norm, per size, with a rate fit per order.
pub fn lln_cov_experiment(dist: &FactoredGaussian, cfg: &LlnConfig) -> Result<LlnReport> {
    let target = dist.covariance();
    lln_experiment(dist, cfg, move |e| {
        hs_norm(&(ensemble_cov(e)?.matrix() - target.matrix()))
    })
}

/// How the initial ensemble of each replicate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Gaussian sampling through the prior factor.
    #[default]
    Sample,
    /// The deterministic exact-statistics fixture (2n members).
    ExactMoments,
}

/// Full specification of a convergence experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: FilteringProblem,
    pub ensemble_sizes: Vec<usize>,
    pub replications: usize,
    pub p_values: Vec<f64>,
    pub seed: u64,
    pub init: InitScheme,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.ensemble_sizes.is_empty() || self.ensemble_sizes.iter().any(|&n| n < 2) {
            return Err(Error::Config("ensemble sizes must all be >= 2".into()));
        }
        if self.replications < 1 {
            return Err(Error::Config("need at least one replication".into()));
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::Config("Lp orders must all be >= 1".into()));
        }
        if self.init == InitScheme::ExactMoments
            && self.problem.prior.factor().ncols() != self.problem.state_dim()
        {
            return Err(Error::Config(
                "exact-moment initialization needs a square prior factor".into(),
            ));
        }
        Ok(())
    }
}

/// Empirical Lp errors at one (step, order, size) cell. Step 0 is the
/// initial ensemble against the prior.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub step: usize,
    pub p: f64,
    pub ensemble_size: usize,
    pub mean_err: f64,
    pub cov_err_spectral: f64,
    pub cov_err_hs: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Mean,
    CovSpectral,
    CovHs,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeRow {
    pub step: usize,
    pub p: f64,
    pub kind: ErrorKind,
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateFailure {
    pub ensemble_size: usize,
    pub replicate: usize,
    pub digest: String,
    pub message: String,
}

/// Outcome of the convergence experiment. Rows and slopes are a pure
/// function of the config; wall-clock metadata lives in the run manifest,
/// not here.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ErrorRow>,
    pub slopes: Vec<SlopeRow>,
    pub failures: Vec<ReplicateFailure>,
}

struct ReplicateErrors {
    mean: Vec<f64>,
    cov_spectral: Vec<f64>,
    cov_hs: Vec<f64>,
}

fn stat_errors(stats: &GaussianState, reference: &GaussianState) -> Result<(f64, f64, f64)> {
    let mean_err = (&stats.mean - &reference.mean).norm();
    let diff = stats.cov.matrix() - reference.cov.matrix();
    Ok((mean_err, spectral_norm(&diff)?, hs_norm(&diff)?))
}

fn run_replicate(
    cfg: &ExperimentConfig,
    size: usize,
    replicate: usize,
    reference: &[GaussianState],
) -> Result<ReplicateErrors> {
    let init = match cfg.init {
        InitScheme::Sample => {
            let mut rng = substream(cfg.seed, &[SRF_STREAM, size as u64, replicate as u64]);
            sample_initial_ensemble(&cfg.problem.prior, size, &mut rng)?
        }
        InitScheme::ExactMoments => exact_moment_ensemble(&cfg.problem.prior)?,
    };
    let steps = cfg.problem.steps();
    let mut errors = ReplicateErrors {
        mean: Vec::with_capacity(steps + 1),
        cov_spectral: Vec::with_capacity(steps + 1),
        cov_hs: Vec::with_capacity(steps + 1),
    };
    let initial_stats = ensemble_stats(&init)?;
    let (m0, cs0, ch0) = stat_errors(&initial_stats, &reference[0])?;
    errors.mean.push(m0);
    errors.cov_spectral.push(cs0);
    errors.cov_hs.push(ch0);

    let run = srf_run(&init, &cfg.problem.models, &cfg.problem.observations)?;
    for (k, step) in run.iter().enumerate() {
        let (m, cs, ch) = stat_errors(&step.analysis_stats, &reference[k + 1])?;
        errors.mean.push(m);
        errors.cov_spectral.push(cs);
        errors.cov_hs.push(ch);
    }
    Ok(errors)
}

/// Runs the exact filter once as the reference, then for each ensemble size
/// `replications` independent ensemble-filter runs, and reports empirical
/// Lp errors of the analysis mean and covariance per step together with
/// log-log slope fits across sizes.
///
/// Replicate failures are recorded and the experiment continues; more than
/// 1% failures aborts with diagnostics.
pub fn srf_vs_kf_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let reference = cfg.problem.kalman_reference()?;
    let steps = cfg.problem.steps();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut attempted = 0usize;
    for &size in &cfg.ensemble_sizes {
        let outcomes: Vec<std::result::Result<ReplicateErrors, ReplicateFailure>> = (0..cfg
            .replications)
            .into_par_iter()
            .map(|replicate| {
                run_replicate(cfg, size, replicate, &reference).map_err(|e| ReplicateFailure {
                    ensemble_size: size,
                    replicate,
                    digest: format!("seed={};N={};replicate={}", cfg.seed, size, replicate),
                    message: e.to_string(),
                })
            })
            .collect();
        attempted += cfg.replications;

        let mut successes: Vec<ReplicateErrors> = Vec::with_capacity(cfg.replications);
        for outcome in outcomes {
            match outcome {
                Ok(errors) => successes.push(errors),
                Err(failure) => failures.push(failure),
            }
        }
        if (failures.len() as f64) > 0.01 * attempted as f64 {
            let digests: Vec<&str> = failures.iter().map(|f| f.digest.as_str()).collect();
            return Err(Error::Degenerate(format!(
                "{} of {} replicates failed (over the 1% budget): {}",
                failures.len(),
                attempted,
                digests.join(", ")
            )));
        }
        if successes.is_empty() {
            return Err(Error::Degenerate(format!(
                "no successful replicates at ensemble size {size}"
            )));
        }

        for step in 0..=steps {
            let mean_samples: Vec<f64> = successes.iter().map(|e| e.mean[step]).collect();
            let cov_spec_samples: Vec<f64> =
                successes.iter().map(|e| e.cov_spectral[step]).collect();
            let cov_hs_samples: Vec<f64> = successes.iter().map(|e| e.cov_hs[step]).collect();
            for &p in &cfg.p_values {
                rows.push(ErrorRow {
                    step,
                    p,
                    ensemble_size: size,
                    mean_err: lp_estimate(&mean_samples, p)?,
                    cov_err_spectral: lp_estimate(&cov_spec_samples, p)?,
                    cov_err_hs: lp_estimate(&cov_hs_samples, p)?,
                    replicates: successes.len(),
                });
            }
        }
    }

    let mut slopes = Vec::new();
    for step in 0..=steps {
        for &p in &cfg.p_values {
            for kind in [ErrorKind::Mean, ErrorKind::CovSpectral, ErrorKind::CovHs] {
                let points: Vec<(usize, f64)> = rows
                    .iter()
                    .filter(|r| r.step == step && r.p == p)
                    .map(|r| {
                        let err = match kind {
                            ErrorKind::Mean => r.mean_err,
                            ErrorKind::CovSpectral => r.cov_err_spectral,
                            ErrorKind::CovHs => r.cov_err_hs,
                        };
                        (r.ensemble_size, err)
                    })
                    .collect();
                match rate_fit(&points) {
                    Ok(fit) => slopes.push(SlopeRow {
                        step,
                        p,
                        kind,
                        slope: fit.slope,
                        intercept: fit.intercept,
                        half_width: fit.half_width,
                    }),
                    Err(Error::InsufficientData(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }

    Ok(ConvergenceReport {
        rows,
        slopes,
        failures,
    })
}
