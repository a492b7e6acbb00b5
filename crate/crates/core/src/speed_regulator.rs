//! Cruise PID active between collision threats.
//!
//! The speed target is anchored at mode entry, the PID sum is saturated and
//! then split between the axles by their share of the normal load.

use serde::{Deserialize, Serialize};

use crate::error::{AebError, Result};
use crate::vehicle::AxleLoads;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Derivative filter coefficient, 1/s.
    pub filter_n: f64,
    /// Symmetric saturation of the PID output, N·m.
    pub torque_limit: f64,
}

/// `m R + 2 I / R`: torque needed per unit body acceleration with rolling wheels.
pub const DEFAULT_EFFECTIVE_INERTIA: f64 = 1420.0 * 0.3 + 2.0 * 0.6 / 0.3;

impl Default for PidGains {
    fn default() -> Self {
        Self::critically_damped(DEFAULT_EFFECTIVE_INERTIA, 6.0, 20.0, 50.0, 1500.0)
    }
}

impl PidGains {
    /// Gains placing a double pole at `-omega_n` for the rolling-wheel plant
    /// `effective_inertia * dv/dt = u`.
    ///
    /// With `e = v_des - v` the closed-loop error polynomial is
    /// `(M + kd) s² + kp s + ki`, so `kp = 2 omega_n (M + kd)` and
    /// `ki = omega_n² (M + kd)`. `omega_n = 6` settles in about one second.
    pub fn critically_damped(
        effective_inertia: f64,
        omega_n: f64,
        kd: f64,
        filter_n: f64,
        torque_limit: f64,
    ) -> Self {
        let m = effective_inertia + kd;
        Self {
            kp: 2.0 * omega_n * m,
            ki: omega_n * omega_n * m,
            kd,
            filter_n,
            torque_limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [("pid.kp", self.kp), ("pid.ki", self.ki), ("pid.kd", self.kd)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AebError::param(field, format!("must be finite and >= 0, got {value}")));
            }
        }
        if !(self.filter_n.is_finite() && self.filter_n > 0.0) {
            return Err(AebError::param("pid.filter_n", "must be finite and > 0"));
        }
        if !(self.torque_limit.is_finite() && self.torque_limit > 0.0) {
            return Err(AebError::param("pid.torque_limit", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Roots of `kd s² + kp s + ki` all lie in the open left half-plane.
    pub fn error_polynomial_is_hurwitz(&self) -> bool {
        if self.kd > 0.0 {
            self.kp > 0.0 && self.ki > 0.0
        } else {
            self.kp > 0.0 && self.ki >= 0.0
        }
    }

    pub fn integral_limit(&self) -> f64 {
        if self.ki > 0.0 {
            self.torque_limit / self.ki
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub deriv_filter: f64,
    pub prev_error: Option<f64>,
    pub v_desired: f64,
}

impl PidState {
    /// Fresh state anchored at the entry speed.
    pub fn anchored(v_entry: f64) -> Self {
        Self {
            v_desired: v_entry,
            ..Self::default()
        }
    }
}

/// Desired cruise speed: the entry speed plus the integral of the requested
/// acceleration, which is zero while regulating.
pub fn desired_speed(decel_history: &[f64], dt: f64, v0: f64) -> f64 {
    v0 + decel_history.iter().sum::<f64>() * dt
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    pub torque_f: f64,
    pub torque_r: f64,
    /// Saturated PID sum before allocation.
    pub total: f64,
}

/// One PID update. Integration is frozen while the output is saturated in
/// the direction of the error, and the integral is clamped to `limit / ki`.
/// The derivative is a backward-Euler first-order filter `kd N s / (s + N)`.
pub fn pid_torques(e: f64, state: &mut PidState, gains: &PidGains, loads: &AxleLoads, dt: f64) -> PidOutput {
    let prev = state.prev_error.unwrap_or(e);
    state.deriv_filter =
        (state.deriv_filter + gains.kd * gains.filter_n * (e - prev)) / (1.0 + gains.filter_n * dt);
    state.prev_error = Some(e);

    let limit = gains.torque_limit;
    let i_limit = gains.integral_limit();
    let candidate = (state.integral + e * dt).clamp(-i_limit, i_limit);
    let raw = gains.kp * e + gains.ki * candidate + state.deriv_filter;
    let raw = if raw.abs() > limit && raw * e > 0.0 {
        gains.kp * e + gains.ki * state.integral + state.deriv_filter
    } else {
        state.integral = candidate;
        raw
    };
    let total = raw.clamp(-limit, limit);
    let (share_f, share_r) = loads.shares();
    PidOutput {
        torque_f: share_f * total,
        torque_r: share_r * total,
        total,
    }
}

#[derive(Debug, Clone)]
pub struct SpeedRegulator {
    pub gains: PidGains,
    pub state: PidState,
}

impl SpeedRegulator {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            state: PidState::default(),
        }
    }

    /// Re-anchors on mode entry.
    pub fn reset(&mut self, v_entry: f64) {
        self.state = PidState::anchored(v_entry);
    }

    pub fn update(&mut self, v: f64, loads: &AxleLoads, dt: f64) -> PidOutput {
        let e = self.state.v_desired - v;
        pid_torques(e, &mut self.state, &self.gains, loads, dt)
    }
}
