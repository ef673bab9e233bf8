//! Discrete longitudinal vehicle model.
//!
//! Each vehicle carries the kinematic triple `[p, v, a]` and follows a
//! first-order lag from commanded to actual acceleration. The error model
//! measures the deviation of a follower from the leader shifted by `j * d`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters shared by one vehicle's model and constraint sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Sampling period (s).
    pub h: f64,
    /// Motor time constant (s).
    pub tau_motor: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub du_min: f64,
    pub du_max: f64,
    /// Half-widths of the error box `[ep, ev, ea]`.
    pub state_bound: [f64; 3],
    /// Magnitude bound on the scalar disturbance entering through `D`.
    pub w_bound: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            h: 0.05,
            tau_motor: 0.5,
            u_min: -6.0,
            u_max: 3.0,
            du_min: -0.5,
            du_max: 0.5,
            state_bound: [5.0, 5.0, 5.0],
            w_bound: 0.2,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.h,
            self.tau_motor,
            self.u_min,
            self.u_max,
            self.du_min,
            self.du_max,
            self.w_bound,
            self.state_bound[0],
            self.state_bound[1],
            self.state_bound[2],
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("vehicle", "all bounds must be finite"));
        }
        if self.h <= 0.0 {
            return Err(Error::param("h", "sampling period must be positive"));
        }
        if self.tau_motor <= self.h {
            return Err(Error::param(
                "tau_motor",
                format!("must exceed h = {}", self.h),
            ));
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return Err(Error::param("u_min/u_max", "need u_min < 0 < u_max"));
        }
        if !(self.du_min < 0.0 && self.du_max > 0.0) {
            return Err(Error::param("du_min/du_max", "need du_min < 0 < du_max"));
        }
        if self.state_bound.iter().any(|&b| b <= 0.0) {
            return Err(Error::param("state_bound", "box half-widths must be positive"));
        }
        if self.w_bound < 0.0 {
            return Err(Error::param("w_bound", "must be nonnegative"));
        }
        Ok(())
    }

    /// `sup ||x||` over the error box, i.e. the radius of its corner.
    pub fn state_radius(&self) -> f64 {
        Vector3::from(self.state_bound).norm()
    }
}

/// Absolute kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    pub fn new(p: f64, v: f64, a: f64) -> Self {
        VehicleState { p, v, a }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.p, self.v, self.a)
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        VehicleState::new(x[0], x[1], x[2])
    }
}

/// Deviation of a follower from its reference, `[ep, ev, ea]`.
pub type ErrorState = Vector3<f64>;

/// `A`, `B`, `D` of the sampled longitudinal model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMatrices {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub d: Vector3<f64>,
}

pub fn build_matrices(params: &VehicleParams) -> Result<SystemMatrices> {
    params.validate()?;
    let h = params.h;
    let ratio = h / params.tau_motor;
    #[rustfmt::skip]
    let a = Matrix3::new(
        1.0, h,   0.0,
        0.0, 1.0, h,
        0.0, 0.0, 1.0 - ratio,
    );
    Ok(SystemMatrices {
        a,
        b: Vector3::new(0.0, 0.0, ratio),
        d: Vector3::new(0.0, 0.0, h),
    })
}

/// One step of the disturbed plant: `A x + B u + D w`.
pub fn step_true(
    state: &VehicleState,
    u: f64,
    w: &Vector3<f64>,
    m: &SystemMatrices,
) -> VehicleState {
    let x = state.to_vector();
    let next = m.a * x + m.b * u + m.d.component_mul(w);
    VehicleState::from_vector(&next)
}

/// One step of the nominal (disturbance-free) error model.
pub fn step_nominal(x: &ErrorState, u: f64, m: &SystemMatrices) -> ErrorState {
    m.a * x + m.b * u
}

/// Error of follower `j` relative to the leader with constant spacing `d`.
pub fn to_error_state(j: usize, own: &VehicleState, leader: &VehicleState, d: f64) -> ErrorState {
    Vector3::new(
        own.p - leader.p + j as f64 * d,
        own.v - leader.v,
        own.a - leader.a,
    )
}

/// Membership test against the closed error box.
pub fn state_in_box(x: &ErrorState, params: &VehicleParams) -> bool {
    x.iter()
        .zip(params.state_bound.iter())
        .all(|(v, b)| v.abs() <= *b)
}

/// Membership of an input value in `[u_min, u_max]`.
pub fn input_in_box(u: f64, params: &VehicleParams) -> bool {
    u >= params.u_min && u <= params.u_max
}

/// Membership of an input increment in `[du_min, du_max]`.
pub fn increment_in_box(du: f64, params: &VehicleParams) -> bool {
    du >= params.du_min && du <= params.du_max
}
