//! Exact Kalman filter for linear-Gaussian systems, plus the gain and
//! analysis operators shared with the ensemble filter.
//!
//! The analysis step never inverts the observation noise covariance on its
//! own: the gain goes through a Cholesky solve of the innovation covariance
//! H Q H^T + R, which is strictly positive definite whenever R is.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    check_finite_matrix, check_finite_vector, symmetrize, SymmetricPsd, Tolerances,
};

/// One assimilation step's observation: linear operator, noise covariance,
/// and data vector.
#[derive(Debug, Clone)]
pub struct ObservationSpec {
    operator: DMatrix<f64>,
    noise_cov: SymmetricPsd,
    data: DVector<f64>,
}

impl ObservationSpec {
    /// Validates shapes and requires the noise covariance to be strictly
    /// positive definite (smallest eigenvalue at or above the SPD floor).
    pub fn new(operator: DMatrix<f64>, noise_cov: SymmetricPsd, data: DVector<f64>) -> Result<Self> {
        check_finite_matrix(&operator, "observation operator")?;
        check_finite_vector(&data, "observation data")?;
        let m = operator.nrows();
        if noise_cov.dim() != m || data.len() != m {
            return Err(Error::Shape(format!(
                "observation with {m}-row operator needs {m}x{m} noise covariance and length-{m} data, got {}x{} and {}",
                noise_cov.dim(),
                noise_cov.dim(),
                data.len()
            )));
        }
        let min_eig = noise_cov.min_eigenvalue();
        if min_eig < Tolerances::default().spd_floor {
            return Err(Error::NotSpd(format!(
                "observation noise covariance has smallest eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(ObservationSpec {
            operator,
            noise_cov,
            data,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.operator.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.operator.ncols()
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn noise_cov(&self) -> &SymmetricPsd {
        &self.noise_cov
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }
}

/// One step of the affine model x -> M x + b.
#[derive(Debug, Clone)]
pub struct LinearModelStep {
    transition: DMatrix<f64>,
    shift: DVector<f64>,
}

impl LinearModelStep {
    pub fn new(transition: DMatrix<f64>, shift: DVector<f64>) -> Result<Self> {
        check_finite_matrix(&transition, "model transition")?;
        check_finite_vector(&shift, "model shift")?;
        if !transition.is_square() || transition.nrows() != shift.len() {
            return Err(Error::Shape(format!(
                "model needs a square transition matching the shift length, got {}x{} and {}",
                transition.nrows(),
                transition.ncols(),
                shift.len()
            )));
        }
        Ok(LinearModelStep { transition, shift })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    /// M x + b.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transition * x + &self.shift
    }
}

/// Mean and covariance of a Gaussian state estimate.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: SymmetricPsd,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: SymmetricPsd) -> Result<Self> {
        check_finite_vector(&mean, "state mean")?;
        if mean.len() != cov.dim() {
            return Err(Error::Shape(format!(
                "mean length {} does not match covariance dimension {}",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(GaussianState { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Kalman gain Q H^T (H Q H^T + R)^{-1}; the inner inverse is applied
/// through a Cholesky solve of the innovation covariance.
pub fn kalman_gain(cov: &SymmetricPsd, obs: &ObservationSpec) -> Result<DMatrix<f64>> {
    if cov.dim() != obs.state_dim() {
        return Err(Error::Shape(format!(
            "covariance dimension {} does not match observation operator columns {}",
            cov.dim(),
            obs.state_dim()
        )));
    }
    let h = obs.operator();
    let hq = h * cov.matrix();
    let innovation_cov = symmetrize(&(&hq * h.transpose() + obs.noise_cov().matrix()));
    let chol = Cholesky::new(innovation_cov).ok_or_else(|| {
        Error::Degenerate("innovation covariance is not positive definite".into())
    })?;
    // Q H^T S^{-1} = (S^{-1} H Q)^T since S and Q are symmetric
    Ok(chol.solve(&hq).transpose())
}

/// Analysis mean X + K (d - H X).
pub fn analysis_mean(
    mean: &DVector<f64>,
    cov: &SymmetricPsd,
    obs: &ObservationSpec,
) -> Result<DVector<f64>> {
    check_finite_vector(mean, "analysis mean input")?;
    if mean.len() != obs.state_dim() {
        return Err(Error::Shape(format!(
            "mean length {} does not match observation operator columns {}",
            mean.len(),
            obs.state_dim()
        )));
    }
    let gain = kalman_gain(cov, obs)?;
    let innovation = obs.data() - obs.operator() * mean;
    Ok(mean + gain * innovation)
}

/// Analysis covariance Q - K H Q, explicitly symmetrized. The result sits
/// between 0 and Q in the Loewner order.
pub fn analysis_cov(cov: &SymmetricPsd, obs: &ObservationSpec) -> Result<SymmetricPsd> {
    let gain = kalman_gain(cov, obs)?;
    let hq = obs.operator() * cov.matrix();
    SymmetricPsd::new(symmetrize(&(cov.matrix() - gain * hq)))
}

/// Model propagation of mean and covariance: mean -> M mean + b,
/// covariance -> M Q M^T (symmetrized).
pub fn kf_forecast(prev: &GaussianState, model: &LinearModelStep) -> Result<GaussianState> {
    if model.dim() != prev.dim() {
        return Err(Error::Shape(format!(
            "model dimension {} does not match state dimension {}",
            model.dim(),
            prev.dim()
        )));
    }
    let mean = model.apply(&prev.mean);
    let cov = symmetrize(&(model.transition() * prev.cov.matrix() * model.transition().transpose()));
    Ok(GaussianState {
        mean,
        cov: SymmetricPsd::new(cov)?,
    })
}

/// Forecast and analysis states of one filter step.
#[derive(Debug, Clone)]
pub struct KfStep {
    pub forecast: GaussianState,
    pub analysis: GaussianState,
}

/// Runs the exact filter: alternate model propagation and analysis update,
/// starting from `init`. Steps are numbered from 1 in error messages.
pub fn kf_run(
    init: &GaussianState,
    models: &[LinearModelStep],
    observations: &[ObservationSpec],
) -> Result<Vec<KfStep>> {
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
        let forecast = kf_forecast(&current, model).map_err(|e| e.at_step(step))?;
        let mean =
            analysis_mean(&forecast.mean, &forecast.cov, obs).map_err(|e| e.at_step(step))?;
        let cov = analysis_cov(&forecast.cov, obs).map_err(|e| e.at_step(step))?;
        let analysis = GaussianState { mean, cov };
        current = analysis.clone();
        out.push(KfStep { forecast, analysis });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{loewner_leq, spd_inverse, spectral_norm};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar_obs(h: f64, r: f64, d: f64) -> ObservationSpec {
        ObservationSpec::new(
            DMatrix::from_element(1, 1, h),
            SymmetricPsd::new(DMatrix::from_element(1, 1, r)).unwrap(),
            DVector::from_element(1, d),
        )
        .unwrap()
    }

    #[test]
    fn gain_vanishes_for_zero_covariance() {
        let obs = scalar_obs(1.0, 1.0, 0.0);
        let gain = kalman_gain(&SymmetricPsd::zeros(1), &obs).unwrap();
        assert_eq!(gain[(0, 0)], 0.0);
    }

    #[test]
    fn gain_scalar_case() {
        let obs = scalar_obs(1.0, 1.0, 0.0);
        let gain = kalman_gain(&SymmetricPsd::identity(1), &obs).unwrap();
        assert_relative_eq!(gain[(0, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn gain_identity_system_halves() {
        let obs = ObservationSpec::new(
            DMatrix::identity(2, 2),
            SymmetricPsd::identity(2),
            DVector::zeros(2),
        )
        .unwrap();
        let gain = kalman_gain(&SymmetricPsd::identity(2), &obs).unwrap();
        assert_relative_eq!(gain, DMatrix::identity(2, 2) * 0.5, max_relative = 1e-14);
    }

    #[test]
    fn analysis_mean_fixed_points() {
        // zero covariance: gain vanishes, mean unchanged
        let obs = scalar_obs(1.0, 1.0, 2.0);
        let x = DVector::from_element(1, 3.0);
        let out = analysis_mean(&x, &SymmetricPsd::zeros(1), &obs).unwrap();
        assert_relative_eq!(out[0], 3.0);

        // zero innovation: d = Hx
        let obs = scalar_obs(1.0, 1.0, 3.0);
        let out = analysis_mean(&x, &SymmetricPsd::identity(1), &obs).unwrap();
        assert_relative_eq!(out[0], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn analysis_mean_scalar_case() {
        let obs = scalar_obs(1.0, 1.0, 2.0);
        let x = DVector::zeros(1);
        let out = analysis_mean(&x, &SymmetricPsd::identity(1), &obs).unwrap();
        assert_relative_eq!(out[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn analysis_cov_examples() {
        let obs = scalar_obs(1.0, 1.0, 0.0);
        let zero = analysis_cov(&SymmetricPsd::zeros(1), &obs).unwrap();
        assert_eq!(zero.matrix()[(0, 0)], 0.0);

        let half = analysis_cov(&SymmetricPsd::identity(1), &obs).unwrap();
        assert_relative_eq!(half.matrix()[(0, 0)], 0.5, max_relative = 1e-14);

        let obs2 = ObservationSpec::new(
            DMatrix::identity(2, 2),
            SymmetricPsd::identity(2),
            DVector::zeros(2),
        )
        .unwrap();
        let half2 = analysis_cov(&SymmetricPsd::identity(2), &obs2).unwrap();
        assert_relative_eq!(
            half2.matrix(),
            &(DMatrix::identity(2, 2) * 0.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn forecast_examples() {
        let prev = GaussianState::new(
            DVector::from_element(1, 3.0),
            SymmetricPsd::new(DMatrix::from_element(1, 1, 5.0)).unwrap(),
        )
        .unwrap();

        let identity =
            LinearModelStep::new(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let same = kf_forecast(&prev, &identity).unwrap();
        assert_relative_eq!(same.mean[0], 3.0);
        assert_relative_eq!(same.cov.matrix()[(0, 0)], 5.0);

        let collapse =
            LinearModelStep::new(DMatrix::zeros(1, 1), DVector::from_element(1, 7.0)).unwrap();
        let collapsed = kf_forecast(&prev, &collapse).unwrap();
        assert_relative_eq!(collapsed.mean[0], 7.0);
        assert_eq!(collapsed.cov.matrix()[(0, 0)], 0.0);

        let scalar = LinearModelStep::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let out = kf_forecast(&prev, &scalar).unwrap();
        assert_relative_eq!(out.mean[0], 7.0);
        assert_relative_eq!(out.cov.matrix()[(0, 0)], 20.0);
    }

    #[test]
    fn kf_run_empty_sequences() {
        let init = GaussianState::new(DVector::zeros(1), SymmetricPsd::identity(1)).unwrap();
        assert!(kf_run(&init, &[], &[]).unwrap().is_empty());
    }

    #[test]
    fn kf_run_rejects_length_mismatch() {
        let init = GaussianState::new(DVector::zeros(1), SymmetricPsd::identity(1)).unwrap();
        let model = LinearModelStep::new(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        assert!(matches!(
            kf_run(&init, &[model], &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kf_run_zero_covariance_keeps_mean() {
        let init = GaussianState::new(DVector::from_element(1, 4.0), SymmetricPsd::zeros(1))
            .unwrap();
        let model = LinearModelStep::new(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let obs = scalar_obs(1.0, 1.0, 9.0);
        let steps = kf_run(&init, &[model], &[obs]).unwrap();
        assert_relative_eq!(steps[0].forecast.mean[0], 4.0);
        assert_relative_eq!(steps[0].analysis.mean[0], 4.0);
    }

    #[test]
    fn kf_run_scalar_composition() {
        let init = GaussianState::new(DVector::zeros(1), SymmetricPsd::identity(1)).unwrap();
        let model = LinearModelStep::new(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let obs = scalar_obs(1.0, 1.0, 2.0);
        let steps = kf_run(&init, &[model], &[obs]).unwrap();
        assert_relative_eq!(steps[0].forecast.mean[0], 0.0);
        assert_relative_eq!(steps[0].forecast.cov.matrix()[(0, 0)], 1.0);
        assert_relative_eq!(steps[0].analysis.mean[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(steps[0].analysis.cov.matrix()[(0, 0)], 0.5, max_relative = 1e-14);
    }

    fn arb_psd(n: usize) -> impl Strategy<Value = SymmetricPsd> {
        proptest::collection::vec(-3.0..3.0f64, n * n).prop_map(move |v| {
            let g = DMatrix::from_vec(n, n, v);
            SymmetricPsd::clamped(symmetrize(&(&g * g.transpose() / n as f64))).unwrap()
        })
    }

    fn arb_obs(n: usize, m: usize) -> impl Strategy<Value = ObservationSpec> {
        (
            proptest::collection::vec(-2.0..2.0f64, m * n),
            proptest::collection::vec(-2.0..2.0f64, m * m),
            proptest::collection::vec(-5.0..5.0f64, m),
        )
            .prop_map(move |(h, g, d)| {
                let h = DMatrix::from_vec(m, n, h);
                let g = DMatrix::from_vec(m, m, g);
                let r = SymmetricPsd::new(
                    symmetrize(&(&g * g.transpose() / m as f64))
                        + DMatrix::identity(m, m) * 0.05,
                )
                .unwrap();
                ObservationSpec::new(h, r, DVector::from_vec(d)).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn analysis_cov_sits_between_zero_and_prior(
            q in arb_psd(4),
            obs in arb_obs(4, 3),
        ) {
            let a = analysis_cov(&q, &obs).unwrap();
            let zero = DMatrix::zeros(4, 4);
            prop_assert!(loewner_leq(&zero, a.matrix()).unwrap());
            prop_assert!(loewner_leq(a.matrix(), q.matrix()).unwrap());
        }

        #[test]
        fn analysis_cov_contracts_norm(q in arb_psd(4), obs in arb_obs(4, 3)) {
            let a = analysis_cov(&q, &obs).unwrap();
            let na = spectral_norm(a.matrix()).unwrap();
            let nq = spectral_norm(q.matrix()).unwrap();
            prop_assert!(na <= nq + 1e-8 * nq.max(1.0));
        }

        #[test]
        fn gain_norm_is_bounded(q in arb_psd(4), obs in arb_obs(4, 3)) {
            let gain = kalman_gain(&q, &obs).unwrap();
            let bound = spectral_norm(q.matrix()).unwrap()
                * spectral_norm(obs.operator()).unwrap()
                * spectral_norm(spd_inverse(obs.noise_cov()).unwrap().matrix()).unwrap();
            prop_assert!(spectral_norm(&gain).unwrap() <= bound + 1e-10);
        }

        #[test]
        fn analysis_cov_output_is_exactly_symmetric(q in arb_psd(3), obs in arb_obs(3, 2)) {
            let a = analysis_cov(&q, &obs).unwrap();
            prop_assert_eq!(a.matrix(), &a.matrix().transpose());
        }
    }
}
