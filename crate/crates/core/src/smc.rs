//! Sliding-mode wheel-slip controller.
//!
//! The surface is the slip error `s = λ − λ_ref`. Slip dynamics are
//! `dλ/dt = −R/(J v) (T − T_eq)`, so the switching torque `Ts = (η J v / R) a s`
//! inside the boundary layer gives `ds/dt = −η a s`, and the outer branches
//! saturate the correction at `±η J v / R`.

use serde::{Deserialize, Serialize};

use crate::error::{AebError, Result};
use crate::vehicle::{theoretical_slip, PlantSnapshot, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcParams {
    /// Reaching-law rate, 1/s.
    pub eta: f64,
    /// Boundary-layer slope.
    pub slope: f64,
    /// Width used when checking the reaching condition.
    pub layer_width: f64,
    /// Braking torque limit per axle, N·m.
    pub torque_max: f64,
}

impl Default for SmcParams {
    fn default() -> Self {
        Self {
            eta: 400.0,
            slope: 1.0,
            layer_width: 0.005,
            torque_max: 3000.0,
        }
    }
}

impl SmcParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("smc.eta", self.eta),
            ("smc.slope", self.slope),
            ("smc.layer_width", self.layer_width),
            ("smc.torque_max", self.torque_max),
        ];
        for (field, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(AebError::param(field, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Closed-loop decay rate of `s` inside the layer, 1/s.
    pub fn surface_rate(&self) -> f64 {
        self.eta * self.slope
    }
}

/// Practical slip on the pre-peak branch whose friction magnitude is
/// `|decel| / g`. Requests beyond adhesion clamp to the peak.
pub fn slip_target_from_decel(decel_desired: f64, params: &VehicleParams) -> f64 {
    let mu_req = decel_desired.abs() / params.gravity;
    if mu_req == 0.0 {
        return 0.0;
    }
    if mu_req >= params.tire_d {
        return params.peak_practical_slip();
    }
    let s = ((mu_req / params.tire_d).asin() / params.tire_c).tan() / params.tire_b;
    s / (1.0 + s)
}

/// Torque holding the slip constant at the current state.
pub fn equivalent_torque(force: f64, accel: f64, lambda: f64, params: &VehicleParams) -> f64 {
    let r = params.wheel_radius;
    force * r + params.wheel_inertia * accel / r * (1.0 - lambda)
}

pub fn switching_torque(s: f64, v: f64, smc: &SmcParams, params: &VehicleParams) -> f64 {
    let scale = smc.eta * params.wheel_inertia * v / params.wheel_radius;
    if s >= 1.0 {
        scale
    } else if s <= -1.0 {
        -scale
    } else {
        scale * smc.slope * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcAxle {
    pub torque: f64,
    pub equivalent: f64,
    pub switching: f64,
    pub surface: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcOutput {
    pub front: SmcAxle,
    pub rear: SmcAxle,
}

/// Per-axle braking torque for the target slip. `snap` must come from
/// `state` above the low-speed guard.
pub fn smc_torque(
    state: &VehicleState,
    snap: &PlantSnapshot,
    lambda_ref: f64,
    smc: &SmcParams,
    params: &VehicleParams,
) -> SmcOutput {
    let axle = |lambda: f64, force: f64| {
        let surface = lambda - lambda_ref;
        let equivalent = equivalent_torque(force, snap.accel, lambda, params);
        let switching = switching_torque(surface, state.v, smc, params);
        SmcAxle {
            torque: (equivalent + switching).clamp(-smc.torque_max, 0.0),
            equivalent,
            switching,
            surface,
        }
    };
    SmcOutput {
        front: axle(snap.slip_f, snap.forces.front),
        rear: axle(snap.slip_r, snap.forces.rear),
    }
}

/// Theoretical slip matching a practical slip target; exposed for diagnostics.
pub fn theoretical_target(lambda_ref: f64) -> f64 {
    theoretical_slip(lambda_ref)
}
