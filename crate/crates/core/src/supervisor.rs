//! Rule-based supervisory layer and the switching logic that picks the live
//! low-level controller.
//!
//! The rule base is a single event-driven rule: while a lead vehicle is
//! tracked and the ego is moving, request the full-adhesion deceleration
//! whenever the gap falls to the speed-adaptive threshold, otherwise request
//! nothing.

use serde::{Deserialize, Serialize};

use crate::vehicle::LOW_SPEED_GUARD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerMode {
    WheelSlipControl,
    SpeedRegulation,
    Standstill,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::WheelSlipControl => "wheel_slip_control",
            ControllerMode::SpeedRegulation => "speed_regulation",
            ControllerMode::Standstill => "standstill",
        }
    }
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorInputs {
    pub v_ego: f64,
    /// Gap from ego to lead, m.
    pub delta_x: f64,
    pub mu_peak: f64,
    pub lead_detected: bool,
    /// Latched by the caller once an emergency has fired in the current
    /// encounter; lets the rule keep re-arming below the activation speed.
    pub engaged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorOutput {
    /// Requested deceleration, m/s², never positive.
    pub decel_desired: f64,
    pub threshold: f64,
    pub emergency_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorConfig {
    pub margin: f64,
    /// The rule only arms above this speed unless already engaged, m/s.
    pub activation_speed: f64,
    pub gravity: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            activation_speed: 4.0,
            gravity: 9.81,
        }
    }
}

pub fn min_braking_distance(v_ego: f64, mu_peak: f64, gravity: f64) -> f64 {
    v_ego * v_ego / (2.0 * mu_peak * gravity)
}

pub fn distance_threshold(min_braking_distance: f64, margin: f64) -> f64 {
    min_braking_distance + margin
}

/// `-v² / (2 x_br)`; zero at standstill.
pub fn target_deceleration(v_ego: f64, min_braking_distance: f64) -> f64 {
    if v_ego == 0.0 || min_braking_distance <= 0.0 {
        return 0.0;
    }
    -(v_ego * v_ego) / (2.0 * min_braking_distance)
}

pub fn rbsc_step(inputs: &SupervisorInputs, config: &SupervisorConfig) -> SupervisorOutput {
    let x_br = min_braking_distance(inputs.v_ego, inputs.mu_peak, config.gravity);
    let threshold = distance_threshold(x_br, config.margin);
    let armed = inputs.lead_detected && (inputs.v_ego > config.activation_speed || inputs.engaged);
    if armed && inputs.delta_x <= threshold {
        SupervisorOutput {
            decel_desired: target_deceleration(inputs.v_ego, x_br),
            threshold,
            emergency_active: true,
        }
    } else {
        SupervisorOutput {
            decel_desired: 0.0,
            threshold,
            emergency_active: false,
        }
    }
}

/// Picks exactly one mode. Below the low-speed guard nothing but the
/// standstill hold is meaningful, so that check comes first.
pub fn switch_mode(output: &SupervisorOutput, v_ego: f64) -> ControllerMode {
    if v_ego <= LOW_SPEED_GUARD {
        ControllerMode::Standstill
    } else if output.decel_desired.abs() > 0.0 {
        ControllerMode::WheelSlipControl
    } else {
        ControllerMode::SpeedRegulation
    }
}
