//! Nonlinear single-track longitudinal plant.
//!
//! Each axle is lumped into one equivalent wheel carrying the full axle load.
//! Friction coefficients follow the Magic Formula, normal loads include
//! longitudinal load transfer, and the body and both wheels are integrated as
//! a four-element state `(x, v, omega_f, omega_r)`.
//!
//! Sign convention: a braking wheel has positive practical slip and produces a
//! *negative* friction coefficient, so the load-transfer term moves load onto
//! the front axle while decelerating.

use serde::{Deserialize, Serialize};

use crate::error::{AebError, Result};
use crate::supervisor::ControllerMode;

/// Below this speed slip is undefined and the kinematic stop model is used.
pub const LOW_SPEED_GUARD: f64 = 0.1;

/// Upper clamp of the theoretical slip (reached as the wheel locks).
pub const THEORETICAL_SLIP_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Total vehicle mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Magic Formula stiffness coefficient B.
    pub tire_b: f64,
    /// Magic Formula shape factor C.
    pub tire_c: f64,
    /// Magic Formula peak coefficient D.
    pub tire_d: f64,
    /// C.O.G to front axle, m.
    pub lf: f64,
    /// C.O.G to rear axle, m.
    pub lr: f64,
    /// C.O.G height, m.
    pub cog_height: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Wheel moment of inertia, kg·m².
    pub wheel_inertia: f64,
    /// Yaw inertia, kg·m². Accepted for completeness; straight-line motion never reads it.
    pub yaw_inertia: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1420.0,
            gravity: 9.81,
            tire_b: 24.0,
            tire_c: 1.5,
            tire_d: 0.9,
            lf: 1.01,
            lr: 1.452,
            cog_height: 0.55,
            wheel_radius: 0.3,
            wheel_inertia: 0.6,
            yaw_inertia: 1027.8,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("tire_b", self.tire_b),
            ("tire_c", self.tire_c),
            ("tire_d", self.tire_d),
            ("lf", self.lf),
            ("lr", self.lr),
            ("cog_height", self.cog_height),
            ("wheel_radius", self.wheel_radius),
            ("wheel_inertia", self.wheel_inertia),
            ("yaw_inertia", self.yaw_inertia),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(AebError::param(field, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.tire_d > 1.2 {
            return Err(AebError::param("tire_d", format!("must be <= 1.2, got {}", self.tire_d)));
        }
        if self.tire_c <= 1.0 {
            return Err(AebError::param(
                "tire_c",
                format!("must be > 1 for the friction curve to peak, got {}", self.tire_c),
            ));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Theoretical slip at which the friction curve peaks.
    pub fn peak_slip(&self) -> f64 {
        (std::f64::consts::FRAC_PI_2 / self.tire_c).tan() / self.tire_b
    }

    /// Practical slip corresponding to [`peak_slip`](Self::peak_slip).
    pub fn peak_practical_slip(&self) -> f64 {
        let s = self.peak_slip();
        s / (1.0 + s)
    }

    /// Static (zero-acceleration) front/rear load shares; they sum to one.
    pub fn static_load_shares(&self) -> (f64, f64) {
        let l = self.wheelbase();
        (self.lr / l, self.lf / l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    /// Longitudinal position, m.
    pub x: f64,
    /// Longitudinal speed, m/s.
    pub v: f64,
    /// Front wheel speed, rad/s.
    pub omega_f: f64,
    /// Rear wheel speed, rad/s.
    pub omega_r: f64,
}

impl VehicleState {
    /// Body at `v` with both wheels rolling freely.
    pub fn rolling(x: f64, v: f64, params: &VehicleParams) -> Self {
        let omega = v / params.wheel_radius;
        Self {
            x,
            v,
            omega_f: omega,
            omega_r: omega,
        }
    }

    /// `self + h * rate`, used by the integrator stages.
    pub fn offset(&self, rate: &VehicleState, h: f64) -> Self {
        Self {
            x: self.x + h * rate.x,
            v: self.v + h * rate.v,
            omega_f: self.omega_f + h * rate.omega_f,
            omega_r: self.omega_r + h * rate.omega_r,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.omega_f.is_finite() && self.omega_r.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxleLoads {
    pub front: f64,
    pub rear: f64,
}

impl AxleLoads {
    pub fn total(&self) -> f64 {
        self.front + self.rear
    }

    /// Load-share allocation vector; components sum to one.
    pub fn shares(&self) -> (f64, f64) {
        let total = self.total();
        (self.front / total, self.rear / total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireForces {
    pub front: f64,
    pub rear: f64,
    pub mu_front: f64,
    pub mu_rear: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub torque_f: f64,
    pub torque_r: f64,
    pub mode: ControllerMode,
}

impl ControlCommand {
    pub fn new(torque_f: f64, torque_r: f64, mode: ControllerMode) -> Self {
        Self { torque_f, torque_r, mode }
    }

    pub fn zero(mode: ControllerMode) -> Self {
        Self::new(0.0, 0.0, mode)
    }
}

/// Practical slip `(v - omega R) / |v|`.
pub fn practical_slip(v: f64, omega: f64, wheel_radius: f64) -> Result<f64> {
    if v.abs() <= LOW_SPEED_GUARD {
        return Err(AebError::BelowLowSpeedGuard { speed: v });
    }
    Ok((v - omega * wheel_radius) / v.abs())
}

/// Practical to theoretical slip, `lambda / (1 - lambda)`, clamped at [`THEORETICAL_SLIP_MAX`].
pub fn theoretical_slip(lambda: f64) -> f64 {
    if lambda >= 1.0 {
        return THEORETICAL_SLIP_MAX;
    }
    (lambda / (1.0 - lambda)).min(THEORETICAL_SLIP_MAX)
}

/// Magic Formula friction coefficient `D sin(C atan(B s))`.
pub fn pacejka_mu(s: f64, params: &VehicleParams) -> f64 {
    params.tire_d * (params.tire_c * (params.tire_b * s).atan()).sin()
}

/// Signed longitudinal friction coefficient for a practical slip; negative when braking.
pub fn friction_coefficient(lambda: f64, params: &VehicleParams) -> f64 {
    -pacejka_mu(theoretical_slip(lambda), params)
}

/// Normal loads with longitudinal load transfer.
pub fn axle_loads(mu_f: f64, mu_r: f64, params: &VehicleParams) -> Result<AxleLoads> {
    let weight = params.weight();
    let h = params.cog_height;
    let denominator = params.wheelbase() + h * (mu_f - mu_r);
    if !(denominator > 0.0) {
        return Err(AebError::ModelValidity { denominator, mu_f, mu_r });
    }
    let front = (params.lr * weight - h * weight * mu_r) / denominator;
    Ok(AxleLoads {
        front,
        rear: weight - front,
    })
}

/// Everything the controllers need to know about the plant at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSnapshot {
    pub slip_f: f64,
    pub slip_r: f64,
    pub loads: AxleLoads,
    pub forces: TireForces,
    /// Body acceleration, m/s².
    pub accel: f64,
    /// True when `v` is at or below [`LOW_SPEED_GUARD`].
    pub low_speed: bool,
}

/// Evaluates slips, loads and forces.
///
/// Friction depends on slip only, so the coupled load/friction relations
/// resolve in a single pass: slip -> mu -> loads -> forces. At or below the
/// low-speed guard slips and forces are zero and loads are static.
pub fn evaluate_plant(state: &VehicleState, params: &VehicleParams) -> Result<PlantSnapshot> {
    if state.v <= LOW_SPEED_GUARD {
        let (share_f, share_r) = params.static_load_shares();
        let weight = params.weight();
        return Ok(PlantSnapshot {
            slip_f: 0.0,
            slip_r: 0.0,
            loads: AxleLoads {
                front: share_f * weight,
                rear: share_r * weight,
            },
            forces: TireForces {
                front: 0.0,
                rear: 0.0,
                mu_front: 0.0,
                mu_rear: 0.0,
            },
            accel: 0.0,
            low_speed: true,
        });
    }
    let slip_f = practical_slip(state.v, state.omega_f, params.wheel_radius)?;
    let slip_r = practical_slip(state.v, state.omega_r, params.wheel_radius)?;
    let mu_f = friction_coefficient(slip_f, params);
    let mu_r = friction_coefficient(slip_r, params);
    let loads = axle_loads(mu_f, mu_r, params)?;
    let forces = TireForces {
        front: mu_f * loads.front,
        rear: mu_r * loads.rear,
        mu_front: mu_f,
        mu_rear: mu_r,
    };
    Ok(PlantSnapshot {
        slip_f,
        slip_r,
        loads,
        forces,
        accel: (forces.front + forces.rear) / params.mass,
        low_speed: false,
    })
}

/// Time derivative of the state under the given axle torques.
///
/// At or below the low-speed guard the wheels roll with the body and the
/// commanded torque acts directly on it, capped at full adhesion.
pub fn state_derivative(
    state: &VehicleState,
    torque_f: f64,
    torque_r: f64,
    params: &VehicleParams,
) -> Result<VehicleState> {
    let snap = evaluate_plant(state, params)?;
    if snap.low_speed {
        let limit = params.tire_d * params.gravity;
        let accel = ((torque_f + torque_r) / (params.mass * params.wheel_radius)).clamp(-limit, limit);
        // a stopped vehicle is held by static friction
        let accel = if state.v <= 0.0 { accel.max(0.0) } else { accel };
        let omega_dot = accel / params.wheel_radius;
        return Ok(VehicleState {
            x: state.v,
            v: accel,
            omega_f: omega_dot,
            omega_r: omega_dot,
        });
    }
    let r = params.wheel_radius;
    let inertia = params.wheel_inertia;
    Ok(VehicleState {
        x: state.v,
        v: snap.accel,
        omega_f: (torque_f - snap.forces.front * r) / inertia,
        omega_r: (torque_r - snap.forces.rear * r) / inertia,
    })
}

/// Slip rates `d(lambda)/dt` for both axles given the state and its derivative.
pub fn slip_rates(state: &VehicleState, rate: &VehicleState, params: &VehicleParams) -> (f64, f64) {
    if state.v <= LOW_SPEED_GUARD {
        return (0.0, 0.0);
    }
    let r = params.wheel_radius;
    let v = state.v;
    let one = |omega: f64, omega_dot: f64| -r * omega_dot / v + omega * r * rate.v / (v * v);
    (one(state.omega_f, rate.omega_f), one(state.omega_r, rate.omega_r))
}

/// Upper bound on the magnitude of the fastest open-loop wheel mode, 1/s.
pub fn wheel_stiffness_bound(v: f64, params: &VehicleParams) -> f64 {
    let r = params.wheel_radius;
    let slope = params.tire_d * params.tire_c * params.tire_b;
    r * r * params.weight() * slope / (params.wheel_inertia * v.max(LOW_SPEED_GUARD))
}
