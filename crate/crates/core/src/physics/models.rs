//! Closed-form state transitions and their analytic Jacobians.
//!
//! The turning models divide by ω, so below |ω| = 1e-6 rad/s they switch
//! to second-order Taylor expansions; the expansions agree with the exact
//! flows to O(ω²·dt³), keeping the switch seam well under 1e-6 m.

use nalgebra::Matrix6;

use crate::geom::wrap_angle;
use crate::physics::{KinematicState, ModelKind, ProcessModel};

/// Turn-rate magnitude below which CTRV/CTRA use their straight-line limits.
pub const OMEGA_EPS: f64 = 1e-6;

/// Wider Taylor band for the Jacobians: the exact ∂/∂ω entries divide by
/// ω³ and lose too many digits below this.
const JACOBIAN_OMEGA_EPS: f64 = 1e-3;

/// Advance a kinematic state by `dt` seconds under the given model.
///
/// The exact turning displacements are evaluated in trig-product form,
/// e.g. sin(θ+ωdt) − sinθ = 2·cos(θ+ωdt/2)·sin(ωdt/2), which stays
/// accurate right down to the switch threshold.
pub fn step(model: &ProcessModel, s: &KinematicState, dt: f64) -> KinematicState {
    let KinematicState { x, y, theta, v, a, omega } = *s;
    let (sin1, cos1) = theta.sin_cos();
    let mut next = *s;
    match model.kind {
        ModelKind::Cv => {
            next.x = x + v * cos1 * dt;
            next.y = y + v * sin1 * dt;
        }
        ModelKind::Ca => {
            let vm = v + a * dt / 2.0;
            next.x = x + vm * cos1 * dt;
            next.y = y + vm * sin1 * dt;
            next.v = v + a * dt;
        }
        ModelKind::Ctrv => {
            if omega.abs() < OMEGA_EPS {
                next.x = x + v * dt * cos1 - v * omega * dt * dt / 2.0 * sin1;
                next.y = y + v * dt * sin1 + v * omega * dt * dt / 2.0 * cos1;
            } else {
                let half = omega * dt / 2.0;
                let (sin_mid, cos_mid) = (theta + half).sin_cos();
                let sinc = half.sin() / half;
                next.x = x + v * dt * cos_mid * sinc;
                next.y = y + v * dt * sin_mid * sinc;
            }
            next.theta = wrap_angle(theta + omega * dt);
        }
        ModelKind::Ctra => {
            if omega.abs() < OMEGA_EPS {
                let dist = v * dt + a * dt * dt / 2.0;
                let sweep = v * dt * dt / 2.0 + a * dt * dt * dt / 3.0;
                next.x = x + cos1 * dist - omega * sin1 * sweep;
                next.y = y + sin1 * dist + omega * cos1 * sweep;
            } else {
                let u = omega * dt;
                let half = u / 2.0;
                let (sin_mid, cos_mid) = (theta + half).sin_cos();
                let (sin_half, cos_half) = half.sin_cos();
                let sinc = sin_half / half;
                let w2 = omega * omega;
                // ∫(v+aτ)·cos/sin(θ+ωτ)dτ split into the v term and the
                // a term; the a-term brackets cancel only at O(u³).
                let gx = (sin_mid * (u * cos_half - 2.0 * sin_half)
                    + u * cos_mid * sin_half)
                    / w2;
                let gy = (cos_mid * (2.0 * sin_half - u * cos_half)
                    + u * sin_mid * sin_half)
                    / w2;
                next.x = x + v * dt * cos_mid * sinc + a * gx;
                next.y = y + v * dt * sin_mid * sinc + a * gy;
            }
            next.theta = wrap_angle(theta + omega * dt);
            next.v = v + a * dt;
        }
    }
    next
}

/// Analytic Jacobian of [`step`] with respect to the state, evaluated at `s`.
pub fn jacobian(model: &ProcessModel, s: &KinematicState, dt: f64) -> Matrix6<f64> {
    let KinematicState { theta, v, a, omega, .. } = *s;
    let (sin1, cos1) = theta.sin_cos();
    let mut f = Matrix6::identity();
    match model.kind {
        ModelKind::Cv => {
            f[(0, 2)] = -v * sin1 * dt;
            f[(0, 3)] = cos1 * dt;
            f[(1, 2)] = v * cos1 * dt;
            f[(1, 3)] = sin1 * dt;
        }
        ModelKind::Ca => {
            let vm = v + a * dt / 2.0;
            f[(0, 2)] = -vm * sin1 * dt;
            f[(0, 3)] = cos1 * dt;
            f[(0, 4)] = cos1 * dt * dt / 2.0;
            f[(1, 2)] = vm * cos1 * dt;
            f[(1, 3)] = sin1 * dt;
            f[(1, 4)] = sin1 * dt * dt / 2.0;
            f[(3, 4)] = dt;
        }
        ModelKind::Ctrv => {
            if omega.abs() < JACOBIAN_OMEGA_EPS {
                let half = dt * dt / 2.0;
                f[(0, 2)] = -v * dt * sin1 - v * omega * half * cos1;
                f[(0, 3)] = dt * cos1 - omega * half * sin1;
                f[(0, 5)] = -v * half * sin1;
                f[(1, 2)] = v * dt * cos1 - v * omega * half * sin1;
                f[(1, 3)] = dt * sin1 + omega * half * cos1;
                f[(1, 5)] = v * half * cos1;
            } else {
                let (sin2, cos2) = (theta + omega * dt).sin_cos();
                f[(0, 2)] = v / omega * (cos2 - cos1);
                f[(0, 3)] = (sin2 - sin1) / omega;
                f[(0, 5)] = v * (cos2 * dt * omega - (sin2 - sin1)) / (omega * omega);
                f[(1, 2)] = v / omega * (sin2 - sin1);
                f[(1, 3)] = (cos1 - cos2) / omega;
                f[(1, 5)] = v * (sin2 * dt * omega - (cos1 - cos2)) / (omega * omega);
            }
            f[(2, 5)] = dt;
        }
        ModelKind::Ctra => {
            if omega.abs() < JACOBIAN_OMEGA_EPS {
                let dist = v * dt + a * dt * dt / 2.0;
                let sweep = v * dt * dt / 2.0 + a * dt * dt * dt / 3.0;
                f[(0, 2)] = -sin1 * dist - omega * cos1 * sweep;
                f[(0, 3)] = cos1 * dt - omega * sin1 * dt * dt / 2.0;
                f[(0, 4)] = cos1 * dt * dt / 2.0 - omega * sin1 * dt * dt * dt / 3.0;
                f[(0, 5)] = -sin1 * sweep;
                f[(1, 2)] = cos1 * dist - omega * sin1 * sweep;
                f[(1, 3)] = sin1 * dt + omega * cos1 * dt * dt / 2.0;
                f[(1, 4)] = sin1 * dt * dt / 2.0 + omega * cos1 * dt * dt * dt / 3.0;
                f[(1, 5)] = cos1 * sweep;
            } else {
                let vf = v + a * dt;
                let (sin2, cos2) = (theta + omega * dt).sin_cos();
                let w2 = omega * omega;
                let num_x = vf * omega * sin2 + a * cos2 - v * omega * sin1 - a * cos1;
                let num_y = -vf * omega * cos2 + a * sin2 + v * omega * cos1 - a * sin1;
                f[(0, 2)] = (vf * omega * cos2 - a * sin2 - v * omega * cos1 + a * sin1) / w2;
                f[(0, 3)] = (sin2 - sin1) / omega;
                f[(0, 4)] = (dt * omega * sin2 + cos2 - cos1) / w2;
                let dnum_x = vf * sin2 + vf * omega * cos2 * dt - a * sin2 * dt - v * sin1;
                f[(0, 5)] = dnum_x / w2 - 2.0 * num_x / (w2 * omega);
                f[(1, 2)] = num_x / w2;
                f[(1, 3)] = (cos1 - cos2) / omega;
                f[(1, 4)] = (-dt * omega * cos2 + sin2 - sin1) / w2;
                let dnum_y = -vf * cos2 + vf * omega * sin2 * dt + a * cos2 * dt + v * cos1;
                f[(1, 5)] = dnum_y / w2 - 2.0 * num_y / (w2 * omega);
            }
            f[(2, 5)] = dt;
            f[(3, 4)] = dt;
        }
    }
    f
}
