//! Unbiased square-root ensemble filtering: sample statistics, initial
//! sampling from a factored prior, member propagation, and a deterministic
//! analysis-ensemble construction whose sample mean and covariance land
//! exactly on the Kalman-updated values.
//!
//! The analysis deviations are rescaled by the symmetric inverse square root
//! of I_N + W^T W, where W collects the observed, noise-whitened deviations
//! scaled by 1/sqrt(N). That matrix differs from the identity only on the
//! (at most m-dimensional) range of W^T, so the transform is built from the
//! eigendecomposition of the small Gram matrix W W^T and applied in
//! O(N m (n + m)) instead of O(N^3).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kalman::{analysis_mean, GaussianState, LinearModelStep, ObservationSpec};
use crate::linalg::{check_finite_matrix, spd_inverse, sym_sqrt, symmetrize, SymmetricPsd};

/// An ordered collection of at least two equal-length state vectors, stored
/// as the columns of an n x N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(members: Vec<DVector<f64>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an ensemble needs at least two members, got {}",
                members.len()
            )));
        }
        let dim = members[0].len();
        if members.iter().any(|m| m.len() != dim) {
            return Err(Error::Shape(
                "ensemble members must all have the same length".into(),
            ));
        }
        Self::from_columns(DMatrix::from_columns(&members))
    }

    /// Wraps an n x N matrix whose columns are the members.
    pub fn from_columns(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "an ensemble needs at least two members, got {}",
                members.ncols()
            )));
        }
        check_finite_matrix(&members, "ensemble members")?;
        Ok(Ensemble { members })
    }

    /// Number of members N.
    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn member(&self, i: usize) -> DVector<f64> {
        self.members.column(i).into_owned()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.members
    }
}

/// Arithmetic mean of the members.
pub fn ensemble_mean(e: &Ensemble) -> DVector<f64> {
    column_average(e.columns())
}

// sum / n rather than sum * (1/n): keeps constant ensembles exact
fn column_average(m: &DMatrix<f64>) -> DVector<f64> {
    m.column_sum() / m.ncols() as f64
}

/// Sample covariance with divisor N (not N-1), symmetrized and clamped.
///
/// The divisor matters: it is what makes the deterministic analysis
/// construction below reproduce the prescribed covariance exactly.
pub fn ensemble_cov(e: &Ensemble) -> Result<SymmetricPsd> {
    let dev = deviations(e, &ensemble_mean(e));
    let cov = symmetrize(&(&dev * dev.transpose() / e.size() as f64));
    SymmetricPsd::clamped(cov)
}

/// Mean and covariance of the ensemble packaged as a Gaussian state.
pub fn ensemble_stats(e: &Ensemble) -> Result<GaussianState> {
    Ok(GaussianState {
        mean: ensemble_mean(e),
        cov: ensemble_cov(e)?,
    })
}

fn deviations(e: &Ensemble, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut dev = e.columns().clone();
    for mut col in dev.column_iter_mut() {
        col -= mean;
    }
    dev
}

/// Gaussian prior stored through a covariance factor: covariance = L L^T
/// for an n x r factor L. Only factor-times-vector products are needed to
/// sample from it.
#[derive(Debug, Clone)]
pub struct FactoredGaussian {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl FactoredGaussian {
    pub fn new(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        crate::linalg::check_finite_vector(&mean, "prior mean")?;
        check_finite_matrix(&factor, "prior covariance factor")?;
        if factor.nrows() != mean.len() {
            return Err(Error::Shape(format!(
                "factor has {} rows but the mean has length {}",
                factor.nrows(),
                mean.len()
            )));
        }
        Ok(FactoredGaussian { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// The implied covariance L L^T.
    pub fn covariance(&self) -> SymmetricPsd {
        SymmetricPsd::clamped(symmetrize(&(&self.factor * self.factor.transpose())))
            .expect("factor product is positive semidefinite")
    }
}

/// Draws members mean + L y with y ~ N(0, I), in member order from `rng`.
/// The same seeded stream always produces the same ensemble.
pub fn sample_initial_ensemble(
    prior: &FactoredGaussian,
    size: usize,
    rng: &mut impl Rng,
) -> Result<Ensemble> {
    if size < 2 {
        return Err(Error::InvalidInput(format!(
            "an ensemble needs at least two members, got {size}"
        )));
    }
    let rank = prior.factor().ncols();
    let mut members = DMatrix::zeros(prior.dim(), size);
    for j in 0..size {
        let draw = DVector::from_fn(rank, |_, _| rng.sample(StandardNormal));
        members.set_column(j, &(prior.mean() + prior.factor() * draw));
    }
    Ensemble::from_columns(members)
}

/// Deterministic 2n-member ensemble whose sample mean and covariance equal
/// the prior's exactly: members mean +- sqrt(n) s_j, with s_j the columns of
/// the symmetric square root of L L^T. Requires a square factor.
///
/// With the divisor-N covariance the deviations D satisfy D D^T / N = L L^T,
/// so this is an exact-statistics fixture, not a sample.
pub fn exact_moment_ensemble(prior: &FactoredGaussian) -> Result<Ensemble> {
    let n = prior.dim();
    if prior.factor().ncols() != n {
        return Err(Error::Shape(format!(
            "exact-moment construction needs a square factor, got {}x{}",
            n,
            prior.factor().ncols()
        )));
    }
    let root = sym_sqrt(&prior.covariance())?;
    let scale = (n as f64).sqrt();
    let mut members = DMatrix::zeros(n, 2 * n);
    for j in 0..n {
        let offset = root.matrix().column(j) * scale;
        members.set_column(j, &(prior.mean() + &offset));
        members.set_column(n + j, &(prior.mean() - &offset));
    }
    Ensemble::from_columns(members)
}

/// Member-wise application of the affine model. Sample statistics transform
/// exactly as the exact filter's forecast does: mean -> M mean + b,
/// covariance -> M Q M^T.
pub fn forecast_ensemble(e: &Ensemble, model: &LinearModelStep) -> Result<Ensemble> {
    if model.dim() != e.state_dim() {
        return Err(Error::Shape(format!(
            "model dimension {} does not match ensemble state dimension {}",
            model.dim(),
            e.state_dim()
        )));
    }
    let mut members = model.transition() * e.columns();
    for mut col in members.column_iter_mut() {
        col += model.shift();
    }
    Ensemble::from_columns(members)
}

/// The deviation transform T = I_N + V diag(coeffs) V^T, the symmetric
/// inverse square root of I_N + W^T W. V holds orthonormal columns of
/// length N; each coefficient is (1 + lambda)^{-1/2} - 1 for an eigenvalue
/// lambda of W W^T.
///
/// W^T W annihilates the all-ones vector (deviations have zero row sums), so
/// T fixes it and the transform never moves the ensemble mean.
pub(crate) struct DeviationTransform {
    basis: DMatrix<f64>,
    coeffs: DVector<f64>,
}

impl DeviationTransform {
    /// Builds the transform from W (m x N), via the eigendecomposition of
    /// the m x m Gram matrix W W^T.
    pub(crate) fn new(w: &DMatrix<f64>) -> Result<Self> {
        let gram = symmetrize(&(w * w.transpose()));
        check_finite_matrix(&gram, "deviation transform Gram matrix").map_err(|_| {
            Error::TransformDegenerate(format!(
                "Gram matrix of scaled observed deviations is not finite (|W| entries up to {:.3e})",
                w.amax()
            ))
        })?;
        let eig = gram.symmetric_eigen();
        let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
        let kept: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&j| eig.eigenvalues[j] > lam_max * 1e-13 && eig.eigenvalues[j] > 0.0)
            .collect();
        let mut basis = DMatrix::zeros(w.ncols(), kept.len());
        let mut coeffs = DVector::zeros(kept.len());
        for (idx, &j) in kept.iter().enumerate() {
            let lam = eig.eigenvalues[j];
            let direction = w.transpose() * eig.eigenvectors.column(j) / lam.sqrt();
            basis.set_column(idx, &direction);
            coeffs[idx] = (1.0 + lam).sqrt().recip() - 1.0;
        }
        if basis.iter().any(|x| !x.is_finite()) || coeffs.iter().any(|x| !x.is_finite()) {
            return Err(Error::TransformDegenerate(format!(
                "transform factors are not finite (largest Gram eigenvalue {lam_max:.3e}, kept {} of {})",
                kept.len(),
                eig.eigenvalues.len()
            )));
        }
        Ok(DeviationTransform { basis, coeffs })
    }

    /// delta T for a deviation matrix delta (n x N).
    pub(crate) fn apply_right(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        if self.coeffs.is_empty() {
            return delta.clone();
        }
        let projected = delta * &self.basis;
        let scaled = projected * DMatrix::from_diagonal(&self.coeffs);
        delta + scaled * self.basis.transpose()
    }

    /// T x for a length-N vector.
    #[cfg(test)]
    pub(crate) fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.coeffs.is_empty() {
            return x.clone();
        }
        let projected = (self.basis.transpose() * x).component_mul(&self.coeffs);
        x + &self.basis * projected
    }

    /// Materializes the N x N matrix; test support for small ensembles.
    #[cfg(test)]
    pub(crate) fn dense(&self, n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
            + &self.basis * DMatrix::from_diagonal(&self.coeffs) * self.basis.transpose()
    }
}

#[cfg(test)]
pub(crate) fn transform_for(e: &Ensemble, obs: &ObservationSpec) -> Result<DeviationTransform> {
    let dev = deviations(e, &ensemble_mean(e));
    let noise_root_inv = spd_inverse(&sym_sqrt(obs.noise_cov())?)?;
    let w = noise_root_inv.matrix() * (obs.operator() * dev) / (e.size() as f64).sqrt();
    DeviationTransform::new(&w)
}

/// Deterministic analysis step: moves the ensemble mean to the Kalman
/// analysis mean and rescales the deviations through the symmetric square
/// root transform, so the sample covariance lands on the analysis
/// covariance of the sample forecast covariance.
///
/// Deviations are recentred after the transform so round-off cannot drift
/// the ensemble mean away from the prescribed value.
pub fn etkf_analysis(e: &Ensemble, obs: &ObservationSpec) -> Result<Ensemble> {
    if obs.state_dim() != e.state_dim() {
        return Err(Error::Shape(format!(
            "observation operator columns {} do not match ensemble state dimension {}",
            obs.state_dim(),
            e.state_dim()
        )));
    }
    let mean = ensemble_mean(e);
    let cov = ensemble_cov(e)?;
    let updated_mean = analysis_mean(&mean, &cov, obs)?;

    let dev = deviations(e, &mean);
    let noise_root_inv = spd_inverse(&sym_sqrt(obs.noise_cov())?)?;
    let w = noise_root_inv.matrix() * (obs.operator() * &dev) / (e.size() as f64).sqrt();
    let transform = DeviationTransform::new(&w)?;
    let mut updated = transform.apply_right(&dev);

    let residual = column_average(&updated);
    for mut col in updated.column_iter_mut() {
        col -= &residual;
        col += &updated_mean;
    }
    Ensemble::from_columns(updated)
}

/// Sample statistics and analysis ensemble of one filter step.
#[derive(Debug, Clone)]
pub struct SrfStep {
    pub forecast_stats: GaussianState,
    pub analysis_stats: GaussianState,
    pub analysis_ensemble: Ensemble,
}

/// Runs the square-root ensemble filter: alternate member-wise model
/// propagation and the deterministic analysis step, emitting sample
/// statistics at each stage. Steps are numbered from 1 in error messages.
pub fn srf_run(
    init: &Ensemble,
    models: &[LinearModelStep],
    observations: &[ObservationSpec],
) -> Result<Vec<SrfStep>> {
    if models.len() != observations.len() {
        return Err(Error::Config(format!(
            "got {} model steps but {} observations",
            models.len(),
            observations.len()
        )));
    }
    let mut current = init.clone();
    let mut out = Vec::with_capacity(models.len());
    for (k, (model, obs)) in models.iter().zip(observations).enumerate() {
        let step = k + 1;
        let forecast = forecast_ensemble(&current, model).map_err(|e| e.at_step(step))?;
        let forecast_stats = ensemble_stats(&forecast).map_err(|e| e.at_step(step))?;
        let analysis = etkf_analysis(&forecast, obs).map_err(|e| e.at_step(step))?;
        let analysis_stats = ensemble_stats(&analysis).map_err(|e| e.at_step(step))?;
        current = analysis.clone();
        out.push(SrfStep {
            forecast_stats,
            analysis_stats,
            analysis_ensemble: analysis,
        });
    }
    Ok(out)
}
