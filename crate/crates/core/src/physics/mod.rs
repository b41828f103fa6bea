//! Kinematic process models and the extended-Kalman baseline predictor.

mod ekf;
mod models;

pub use ekf::{ekf_forecast, ekf_forecast_with, ekf_predict, ekf_update, EkfConfig};
pub use models::{jacobian, step, OMEGA_EPS};

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::wrap_angle;
use crate::scene::AgentState;

/// Kinematic state [x, y, θ, v, a, ω] without a timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub a: f64,
    pub omega: f64,
}

impl KinematicState {
    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.theta, self.v, self.a, self.omega)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        KinematicState { x: v[0], y: v[1], theta: wrap_angle(v[2]), v: v[3], a: v[4], omega: v[5] }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.x, self.y, self.theta, self.v, self.a, self.omega];
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidState("non-finite kinematic state".into()));
        }
        Ok(())
    }
}

impl From<&AgentState> for KinematicState {
    fn from(s: &AgentState) -> Self {
        KinematicState { x: s.x, y: s.y, theta: s.theta, v: s.v, a: s.a, omega: s.omega }
    }
}

/// Gaussian belief over the 6-dimensional kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
}

impl Gaussian {
    pub fn new(mean: KinematicState, cov: Matrix6<f64>) -> Self {
        Gaussian { mean: mean.to_vector(), cov }
    }

    pub fn state(&self) -> KinematicState {
        KinematicState::from_vector(&self.mean)
    }

    /// Symmetry within 1e-9 and eigenvalues ≥ −1e-9.
    pub fn validate(&self) -> Result<()> {
        let asym = (self.cov - self.cov.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::FilterDivergence(format!("covariance asymmetry {asym:.3e}")));
        }
        let eig = self.cov.symmetric_eigenvalues();
        let min_eig = eig.min();
        if min_eig < -1e-9 {
            return Err(Error::FilterDivergence(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(())
    }
}

/// The four kinematic model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cv,
    Ca,
    Ctrv,
    Ctra,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(ModelKind::Cv),
            "ca" => Ok(ModelKind::Ca),
            "ctrv" => Ok(ModelKind::Ctrv),
            "ctra" => Ok(ModelKind::Ctra),
            other => Err(Error::InvalidState(format!("unknown process model {other:?}"))),
        }
    }
}

/// A model family plus per-axis process-noise spectral densities for
/// [x, y, θ, v, a, ω]; the discrete-time noise is Q = dt · diag(q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessModel {
    pub kind: ModelKind,
    pub q: [f64; 6],
}

impl ProcessModel {
    pub fn new(kind: ModelKind, q: [f64; 6]) -> Result<Self> {
        if q.iter().any(|&qi| qi < 0.0 || !qi.is_finite()) {
            return Err(Error::InvalidState("process noise densities must be >= 0".into()));
        }
        Ok(ProcessModel { kind, q })
    }

    /// Noise-free model, useful for exactness checks.
    pub fn noiseless(kind: ModelKind) -> Self {
        ProcessModel { kind, q: [0.0; 6] }
    }

    /// Moderate default densities for vehicle tracking.
    pub fn default_noise(kind: ModelKind) -> Self {
        ProcessModel { kind, q: [0.05, 0.05, 0.01, 0.4, 0.2, 0.05] }
    }

    pub fn discrete_noise(&self, dt: f64) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_iterator(self.q.iter().map(|&qi| qi * dt)))
    }
}
