//! Computable right-hand sides for the pointwise continuity and norm
//! inequalities of the gain and analysis operators, plus a randomized fuzz
//! campaign that evaluates every one of them on Wishart-style inputs with
//! condition numbers stressed up to a configurable cap.
//!
//! The inequalities are theorems: a violation beyond round-off means an
//! implementation bug, which is exactly what the campaign is for.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kalman::{analysis_cov, analysis_mean, kalman_gain, ObservationSpec};
use crate::linalg::{spd_inverse, spectral_norm, symmetrize, SymmetricPsd};
use crate::seeding::substream;

/// Relative slack below which a report counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-10;

const FUZZ_STREAM: u64 = 0xb0;

/// One evaluated inequality: lhs <= rhs up to round-off.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub check: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs; nonnegative when the inequality holds exactly.
    pub slack: f64,
    /// Reproducibility token: seed, trial index, and dimensions.
    pub inputs_digest: String,
}

impl BoundReport {
    fn new(check: &'static str, lhs: f64, rhs: f64, digest: String) -> Self {
        BoundReport {
            check,
            lhs,
            rhs,
            slack: rhs - lhs,
            inputs_digest: digest,
        }
    }

    pub fn passes(&self) -> bool {
        self.passes_with(VIOLATION_TOL)
    }

    /// slack >= -tol * max(1, rhs).
    pub fn passes_with(&self, tol: f64) -> bool {
        self.slack >= -tol * self.rhs.max(1.0)
    }

    /// Slack normalized by max(1, rhs); the campaign ranks worst cases by it.
    pub fn relative_slack(&self) -> f64 {
        self.slack / self.rhs.max(1.0)
    }
}

/// Norm constants shared by the bound right-hand sides:
/// c = |H|^2 |R^{-1}|.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ObsConstants {
    pub h_norm: f64,
    pub r_inv_norm: f64,
    pub c: f64,
}

impl ObsConstants {
    pub fn new(obs: &ObservationSpec) -> Result<Self> {
        let h_norm = spectral_norm(obs.operator())?;
        let r_inv_norm = spectral_norm(spd_inverse(obs.noise_cov())?.matrix())?;
        Ok(ObsConstants {
            h_norm,
            r_inv_norm,
            c: h_norm * h_norm * r_inv_norm,
        })
    }
}

fn dims_digest(n: usize, m: usize) -> String {
    format!("n={n};m={m}")
}

/// Gain continuity:
/// |K(Q)-K(P)| <= |Q-P| |H| |R^{-1}| (1 + min(|P|,|Q|) |H|^2 |R^{-1}|).
pub fn check_gain_continuity(
    p: &SymmetricPsd,
    q: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let lhs = spectral_norm(&(kalman_gain(q, obs)? - kalman_gain(p, obs)?))?;
    let diff = spectral_norm(&(q.matrix() - p.matrix()))?;
    let smaller = spectral_norm(p.matrix())?.min(spectral_norm(q.matrix())?);
    let rhs = diff * consts.h_norm * consts.r_inv_norm * (1.0 + smaller * consts.c);
    Ok(BoundReport::new(
        "gain_continuity",
        lhs,
        rhs,
        dims_digest(p.dim(), obs.obs_dim()),
    ))
}

/// Gain norm: |K(Q)| <= |Q| |H| |R^{-1}|.
pub fn check_gain_norm(q: &SymmetricPsd, obs: &ObservationSpec) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let lhs = spectral_norm(&kalman_gain(q, obs)?)?;
    let rhs = spectral_norm(q.matrix())? * consts.h_norm * consts.r_inv_norm;
    Ok(BoundReport::new(
        "gain_norm",
        lhs,
        rhs,
        dims_digest(q.dim(), obs.obs_dim()),
    ))
}

/// Mean update norm: |B(X,Q)| <= |X| + |Q| |H| |R^{-1}| |d - HX|.
pub fn check_mean_update_norm(
    x: &DVector<f64>,
    q: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let lhs = analysis_mean(x, q, obs)?.norm();
    let innovation = (obs.data() - obs.operator() * x).norm();
    let rhs =
        x.norm() + spectral_norm(q.matrix())? * consts.h_norm * consts.r_inv_norm * innovation;
    Ok(BoundReport::new(
        "mean_update_norm",
        lhs,
        rhs,
        dims_digest(q.dim(), obs.obs_dim()),
    ))
}

/// Covariance update continuity:
/// |A(Q)-A(P)| <= |Q-P| (1 + c|Q| + c|P| + c^2 |P||Q|).
pub fn check_cov_update_continuity(
    p: &SymmetricPsd,
    q: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let lhs = spectral_norm(&(analysis_cov(q, obs)?.matrix() - analysis_cov(p, obs)?.matrix()))?;
    let diff = spectral_norm(&(q.matrix() - p.matrix()))?;
    let (pn, qn) = (spectral_norm(p.matrix())?, spectral_norm(q.matrix())?);
    let rhs = diff * (1.0 + consts.c * qn + consts.c * pn + consts.c * consts.c * pn * qn);
    Ok(BoundReport::new(
        "cov_update_continuity",
        lhs,
        rhs,
        dims_digest(p.dim(), obs.obs_dim()),
    ))
}

/// The sharper, asymmetric variant of the covariance update continuity
/// bound, with min(|P|^2, |P||Q|, |Q|^2) in the quadratic term. Reported
/// alongside the symmetric form rather than instead of it.
pub fn check_cov_update_continuity_sharp(
    p: &SymmetricPsd,
    q: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let lhs = spectral_norm(&(analysis_cov(q, obs)?.matrix() - analysis_cov(p, obs)?.matrix()))?;
    let diff = spectral_norm(&(q.matrix() - p.matrix()))?;
    let (pn, qn) = (spectral_norm(p.matrix())?, spectral_norm(q.matrix())?);
    let quad = (pn * pn).min(pn * qn).min(qn * qn);
    let rhs = diff * (1.0 + consts.c * qn + consts.c * pn + consts.c * consts.c * quad);
    Ok(BoundReport::new(
        "cov_update_continuity_sharp",
        lhs,
        rhs,
        dims_digest(p.dim(), obs.obs_dim()),
    ))
}

/// Loewner sandwich 0 <= A(Q) <= Q, expressed as smallest-eigenvalue slacks:
/// the first report carries the smallest eigenvalue of A(Q), the second the
/// smallest eigenvalue of Q - A(Q).
pub fn check_loewner_sandwich(
    q: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<(BoundReport, BoundReport)> {
    let a = analysis_cov(q, obs)?;
    let digest = dims_digest(q.dim(), obs.obs_dim());
    let lower = a.min_eigenvalue();
    let upper = symmetrize(&(q.matrix() - a.matrix()))
        .symmetric_eigenvalues()
        .min();
    Ok((
        BoundReport::new("analysis_cov_lower", 0.0, lower, digest.clone()),
        BoundReport::new("analysis_cov_upper", 0.0, upper, digest),
    ))
}

/// Mean update continuity:
/// |B(X,Q)-B(Y,P)| <= |X-Y|(1 + c|Q|) + |Q-P| |H| |R^{-1}| (1 + c|P|) |d - HY|.
pub fn check_mean_update_continuity(
    x: &DVector<f64>,
    q: &SymmetricPsd,
    y: &DVector<f64>,
    p: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let lhs = (analysis_mean(x, q, obs)? - analysis_mean(y, p, obs)?).norm();
    let diff = spectral_norm(&(q.matrix() - p.matrix()))?;
    let (pn, qn) = (spectral_norm(p.matrix())?, spectral_norm(q.matrix())?);
    let innovation = (obs.data() - obs.operator() * y).norm();
    let rhs = (x - y).norm() * (1.0 + consts.c * qn)
        + diff * consts.h_norm * consts.r_inv_norm * (1.0 + consts.c * pn) * innovation;
    Ok(BoundReport::new(
        "mean_update_continuity",
        lhs,
        rhs,
        dims_digest(q.dim(), obs.obs_dim()),
    ))
}

/// Ordering of the two computed gain-continuity right-hand sides: the
/// min-form bound never exceeds the symmetric product form
/// |Q-P| |H| |R^{-1}| (1 + c|P|)(1 + c|Q|).
pub fn check_gain_rhs_monotonicity(
    p: &SymmetricPsd,
    q: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<BoundReport> {
    let consts = ObsConstants::new(obs)?;
    let diff = spectral_norm(&(q.matrix() - p.matrix()))?;
    let (pn, qn) = (spectral_norm(p.matrix())?, spectral_norm(q.matrix())?);
    let min_form = diff * consts.h_norm * consts.r_inv_norm * (1.0 + pn.min(qn) * consts.c);
    let symmetric_form =
        diff * consts.h_norm * consts.r_inv_norm * (1.0 + consts.c * pn) * (1.0 + consts.c * qn);
    Ok(BoundReport::new(
        "gain_rhs_monotonicity",
        min_form,
        symmetric_form,
        dims_digest(p.dim(), obs.obs_dim()),
    ))
}

/// Knobs for the randomized inequality campaign.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzConfig {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub trials: usize,
    pub seed: u64,
    /// Largest eigenvalue-respacing condition number for the random inputs.
    pub max_condition: f64,
}

impl FuzzConfig {
    pub fn new(state_dim: usize, obs_dim: usize, trials: usize, seed: u64) -> Self {
        FuzzConfig {
            state_dim,
            obs_dim,
            trials,
            seed,
            max_condition: 1e6,
        }
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

// Wishart base, then eigenvalues respaced log-linearly over
// [scale/kappa, scale] keeping the Wishart eigenvectors.
fn respaced_psd(n: usize, kappa: f64, scale: f64, rng: &mut impl Rng) -> SymmetricPsd {
    let g = gaussian_matrix(n, n, rng);
    let wishart = symmetrize(&(&g * g.transpose() / n as f64));
    let mut eig = wishart.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    for (rank, &idx) in order.iter().enumerate() {
        let t = if n == 1 {
            1.0
        } else {
            rank as f64 / (n - 1) as f64
        };
        eig.eigenvalues[idx] = scale * kappa.powf(t - 1.0);
    }
    let mat = symmetrize(
        &(&eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues)
            * eig.eigenvectors.transpose()),
    );
    SymmetricPsd::new(mat).expect("respaced spectrum is positive")
}

/// Random PSD matrix: Wishart G G^T / n with a log-uniform condition number
/// in [1, max_condition] and spectral norm log-uniform in [1e-2, 1e2].
pub fn random_psd(n: usize, max_condition: f64, rng: &mut impl Rng) -> SymmetricPsd {
    let kappa = 10f64.powf(rng.gen::<f64>() * max_condition.log10().max(0.0));
    let scale = 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0);
    respaced_psd(n, kappa, scale, rng)
}

/// Random SPD matrix for observation noise: ridge-regularized Wishart with
/// spectrum respaced to a log-uniform condition number, spectral norm
/// log-uniform in [1e-1, 1e1]. The smallest eigenvalue stays well above the
/// SPD floor for any condition cap up to 1e10.
pub fn random_spd(m: usize, max_condition: f64, rng: &mut impl Rng) -> SymmetricPsd {
    let g = gaussian_matrix(m, m, rng);
    let base = symmetrize(&(&g * g.transpose() / m as f64)) + DMatrix::identity(m, m) * 0.1;
    // the respacing overwrites the spectrum; keep the ridge-shifted
    // eigenvectors and draw the final spectrum directly
    let kappa = 10f64.powf(rng.gen::<f64>() * max_condition.log10().max(0.0));
    let scale = 10f64.powf(rng.gen::<f64>() * 2.0 - 1.0);
    let mut eig = base.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    for (rank, &idx) in order.iter().enumerate() {
        let t = if m == 1 {
            1.0
        } else {
            rank as f64 / (m - 1) as f64
        };
        eig.eigenvalues[idx] = scale * kappa.powf(t - 1.0);
    }
    let mat = symmetrize(
        &(&eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues)
            * eig.eigenvectors.transpose()),
    );
    SymmetricPsd::new(mat).expect("respaced spectrum is positive")
}

/// Everything drawn for one fuzz trial.
pub struct TrialInputs {
    pub p: SymmetricPsd,
    pub q: SymmetricPsd,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub obs: ObservationSpec,
}

/// Regenerates a trial's random inputs from (seed, trial index). The
/// campaign goes through this same function, so any reported digest can be
/// replayed exactly.
pub fn trial_inputs(cfg: &FuzzConfig, trial: usize) -> Result<TrialInputs> {
    let mut rng = substream(cfg.seed, &[FUZZ_STREAM, trial as u64]);
    let p = random_psd(cfg.state_dim, cfg.max_condition, &mut rng);
    let q = random_psd(cfg.state_dim, cfg.max_condition, &mut rng);
    let x = DVector::from_fn(cfg.state_dim, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(cfg.state_dim, |_, _| rng.sample(StandardNormal));
    let h = gaussian_matrix(cfg.obs_dim, cfg.state_dim, &mut rng);
    let r = random_spd(cfg.obs_dim, cfg.max_condition, &mut rng);
    let d = DVector::from_fn(cfg.obs_dim, |_, _| rng.sample(StandardNormal));
    let obs = ObservationSpec::new(h, r, d)?;
    Ok(TrialInputs { p, q, x, y, obs })
}

/// All reports evaluated on one set of inputs, tagged with a digest.
pub fn run_all_checks(inputs: &TrialInputs, digest: &str) -> Result<Vec<BoundReport>> {
    let TrialInputs { p, q, x, y, obs } = inputs;
    let (lower, upper) = check_loewner_sandwich(q, obs)?;
    let mut reports = vec![
        check_gain_continuity(p, q, obs)?,
        check_gain_norm(q, obs)?,
        check_mean_update_norm(x, q, obs)?,
        check_cov_update_continuity(p, q, obs)?,
        check_cov_update_continuity_sharp(p, q, obs)?,
        lower,
        upper,
        check_mean_update_continuity(x, q, y, p, obs)?,
        check_gain_rhs_monotonicity(p, q, obs)?,
    ];
    for r in &mut reports {
        r.inputs_digest = digest.to_string();
    }
    Ok(reports)
}

/// Outcome of a fuzz campaign: pass count, violations with reproduction
/// digests, and the worst (smallest relative slack) report per check.
#[derive(Debug, Serialize)]
pub struct FuzzSummary {
    pub trials: usize,
    pub checks_per_trial: usize,
    pub passes: usize,
    pub violations: Vec<BoundReport>,
    pub errors: Vec<String>,
    pub worst: BTreeMap<&'static str, BoundReport>,
}

impl FuzzSummary {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.errors.is_empty()
    }
}

/// Runs every check on `trials` independently randomized input sets.
/// Failing reports are collected, not thrown; trials are independent and
/// evaluated in parallel with per-trial derived seeds.
pub fn fuzz_all_bounds(cfg: &FuzzConfig) -> Result<FuzzSummary> {
    if cfg.trials < 1 {
        return Err(Error::Config("fuzz campaign needs at least one trial".into()));
    }
    if cfg.state_dim < 1 || cfg.obs_dim < 1 {
        return Err(Error::Config("fuzz campaign needs positive dimensions".into()));
    }
    use rayon::prelude::*;
    let per_trial: Vec<std::result::Result<Vec<BoundReport>, String>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let digest = format!(
                "seed={};trial={};n={};m={}",
                cfg.seed, trial, cfg.state_dim, cfg.obs_dim
            );
            trial_inputs(cfg, trial)
                .and_then(|inputs| run_all_checks(&inputs, &digest))
                .map_err(|e| format!("{digest}: {e}"))
        })
        .collect();

    let mut summary = FuzzSummary {
        trials: cfg.trials,
        checks_per_trial: 9,
        passes: 0,
        violations: Vec::new(),
        errors: Vec::new(),
        worst: BTreeMap::new(),
    };
    for outcome in per_trial {
        match outcome {
            Ok(reports) => {
                for report in reports {
                    if report.passes() {
                        summary.passes += 1;
                    } else {
                        summary.violations.push(report.clone());
                    }
                    summary
                        .worst
                        .entry(report.check)
                        .and_modify(|w| {
                            if report.relative_slack() < w.relative_slack() {
                                *w = report.clone();
                            }
                        })
                        .or_insert(report);
                }
            }
            Err(message) => summary.errors.push(message),
        }
    }
    Ok(summary)
}
