//! Extended Kalman filtering over the kinematic models, with a
//! position-only observation model, and the forecast roll-out used as the
//! physics baseline.

use nalgebra::{Matrix2, Matrix6, SMatrix, Vector2, Vector6};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::physics::{jacobian, step, Gaussian, KinematicState, ModelKind, ProcessModel};
use crate::scene::AgentState;

/// Symmetrize and clamp slightly negative eigenvalues; anything beyond the
/// tolerance is filter divergence.
fn condition_covariance(cov: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let sym = (cov + cov.transpose()) / 2.0;
    let eig = sym.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-9 {
        return Err(Error::FilterDivergence(format!(
            "covariance eigenvalue {min_eig:.3e}"
        )));
    }
    if min_eig < 0.0 {
        let mut vals = eig.eigenvalues;
        for v in vals.iter_mut() {
            *v = v.max(0.0);
        }
        let rebuilt = eig.eigenvectors * Matrix6::from_diagonal(&vals) * eig.eigenvectors.transpose();
        return Ok((rebuilt + rebuilt.transpose()) / 2.0);
    }
    Ok(sym)
}

/// Propagate the belief: mean through the model flow, covariance through
/// the linearization, F·P·Fᵀ + Q.
pub fn ekf_predict(model: &ProcessModel, g: &Gaussian, dt: f64) -> Result<Gaussian> {
    let state = g.state();
    let next = step(model, &state, dt);
    let f = jacobian(model, &state, dt);
    let cov = f * g.cov * f.transpose() + model.discrete_noise(dt);
    Ok(Gaussian { mean: next.to_vector(), cov: condition_covariance(&cov)? })
}

/// Position-only measurement update (Joseph-form covariance).
pub fn ekf_update(g: &Gaussian, z: Vec2, r: &Matrix2<f64>) -> Result<Gaussian> {
    let mut h = SMatrix::<f64, 2, 6>::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;

    let innovation_cov = h * g.cov * h.transpose() + r;
    let inv = innovation_cov.try_inverse().ok_or(Error::SingularInnovation)?;
    let gain = g.cov * h.transpose() * inv;
    let residual = Vector2::new(z.x, z.y) - h * g.mean;

    let mut mean: Vector6<f64> = g.mean + gain * residual;
    mean[2] = wrap_angle(mean[2]);
    let identity = Matrix6::identity();
    let ikh = identity - gain * h;
    let cov = ikh * g.cov * ikh.transpose() + gain * r * gain.transpose();
    Ok(Gaussian { mean, cov: condition_covariance(&cov)? })
}

/// Per-run EKF settings: process model, position observation noise, and
/// the initial covariance diagonal.
#[derive(Debug, Clone, Copy)]
pub struct EkfConfig {
    pub model: ProcessModel,
    pub obs_noise: Matrix2<f64>,
    pub init_var: [f64; 6],
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            model: ProcessModel::default_noise(ModelKind::Ctrv),
            obs_noise: Matrix2::from_diagonal_element(0.25),
            init_var: [1.0, 1.0, 0.25, 1.0, 0.5, 0.05],
        }
    }
}

/// Filter over the history (predict + position update per step), then roll
/// predict-only for `horizon` steps of `pred_dt` and return the mean
/// positions.
pub fn ekf_forecast_with(
    history: &[AgentState],
    cfg: &EkfConfig,
    horizon: usize,
    pred_dt: f64,
) -> Result<Vec<Vec2>> {
    if history.len() < 2 {
        return Err(Error::EmptyInput("ekf forecast needs at least 2 history states".into()));
    }
    let init = KinematicState::from(&history[0]);
    let cov = Matrix6::from_diagonal(&Vector6::from_row_slice(&cfg.init_var));
    let mut belief = Gaussian::new(init, cov);

    for pair in history.windows(2) {
        let dt = pair[1].t - pair[0].t;
        belief = ekf_predict(&cfg.model, &belief, dt)?;
        belief = ekf_update(&belief, pair[1].position(), &cfg.obs_noise)?;
    }

    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        belief = ekf_predict(&cfg.model, &belief, pred_dt)?;
        out.push(Vec2::new(belief.mean[0], belief.mean[1]));
    }
    Ok(out)
}

/// [`ekf_forecast_with`] under the default observation noise and prior.
pub fn ekf_forecast(
    history: &[AgentState],
    model: &ProcessModel,
    horizon: usize,
    pred_dt: f64,
) -> Result<Vec<Vec2>> {
    let cfg = EkfConfig { model: *model, ..EkfConfig::default() };
    ekf_forecast_with(history, &cfg, horizon, pred_dt)
}
