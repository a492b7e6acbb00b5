//! Gain-scheduled LQR about a constant-deceleration braking reference.
//!
//! The design model drives each axle with the slip-dependent friction
//! `μ(λ) = D sin(C atan(B λ))` and a fixed axle mass that includes the load
//! transfer of the reference deceleration:
//!
//! ```text
//! dv/dt = −g μ(λ)
//! dω/dt = (m_i g μ(λ) R + T) / J,      λ = 1 − ω R / v
//! ```
//!
//! Linearizing about the reference gives a 2×2 system in `(Δv, Δω)`. Gains
//! are solved on a speed grid and interpolated linearly during a run.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::care::{self, solve_care, CareProblem};
use crate::error::{AebError, Result};
use crate::vehicle::{VehicleParams, VehicleState, LOW_SPEED_GUARD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrParams {
    /// Speed error normalization for the state cost, m/s.
    pub speed_scale: f64,
    /// Wheel-speed error normalization for the state cost, rad/s.
    pub wheel_speed_scale: f64,
    pub r_cost: f64,
    /// Spacing of the scheduling grid, m/s.
    pub grid_spacing: f64,
    /// Highest scheduled reference speed, m/s.
    pub grid_max_speed: f64,
    pub torque_max: f64,
}

impl Default for LqrParams {
    fn default() -> Self {
        Self {
            speed_scale: 30.0,
            wheel_speed_scale: 100.0,
            r_cost: 1e-6,
            grid_spacing: 0.5,
            grid_max_speed: 45.0,
            torque_max: 3000.0,
        }
    }
}

impl LqrParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("lqr.speed_scale", self.speed_scale),
            ("lqr.wheel_speed_scale", self.wheel_speed_scale),
            ("lqr.r_cost", self.r_cost),
            ("lqr.grid_spacing", self.grid_spacing),
            ("lqr.torque_max", self.torque_max),
        ];
        for (field, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(AebError::param(field, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.grid_max_speed.is_finite() && self.grid_max_speed > LOW_SPEED_GUARD + self.grid_spacing) {
            return Err(AebError::param(
                "lqr.grid_max_speed",
                format!("must exceed the low-speed guard by one grid step, got {}", self.grid_max_speed),
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> LqrWeights {
        LqrWeights {
            q: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                self.speed_scale.powi(-2),
                self.wheel_speed_scale.powi(-2),
            ])),
            r_cost: self.r_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub r_cost: f64,
}

/// Friction magnitude used by the design model, evaluated directly on `λ`.
fn design_mu(lambda: f64, params: &VehicleParams) -> f64 {
    params.tire_d * (params.tire_c * (params.tire_b * lambda).atan()).sin()
}

fn design_mu_slope(lambda: f64, params: &VehicleParams) -> f64 {
    let (b, c) = (params.tire_b, params.tire_c);
    params.tire_d * (c * (b * lambda).atan()).cos() * c * b / (1.0 + (b * lambda).powi(2))
}

/// Right-hand side of the design model for one axle.
pub fn design_model_rate(v: f64, omega: f64, torque: f64, axle_mass: f64, params: &VehicleParams) -> (f64, f64) {
    let lambda = 1.0 - omega * params.wheel_radius / v;
    let mu = design_mu(lambda, params);
    let v_dot = -params.gravity * mu;
    let omega_dot = (axle_mass * params.gravity * mu * params.wheel_radius + torque) / params.wheel_inertia;
    (v_dot, omega_dot)
}

/// Axle masses including load transfer at a constant deceleration.
pub fn axle_masses(decel: f64, params: &VehicleParams) -> (f64, f64) {
    let l = params.wheelbase();
    let m = params.mass;
    let transfer = m * (decel.abs() / params.gravity) * params.cog_height / l;
    (m * params.lr / l + transfer, m * params.lf / l - transfer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub v: f64,
    pub omega: f64,
    pub v_dot: f64,
    pub omega_dot: f64,
    pub torque_f: f64,
    pub torque_r: f64,
}

/// Constant-deceleration reference starting at `v0` and holding `λ_ref` on both axles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTrajectory {
    pub v0: f64,
    pub lambda_ref: f64,
    pub v_dot: f64,
    pub mass_f: f64,
    pub mass_r: f64,
    params: VehicleParams,
}

impl ReferenceTrajectory {
    pub fn new(v0: f64, lambda_ref: f64, params: &VehicleParams) -> Result<Self> {
        if !(v0 > LOW_SPEED_GUARD) {
            return Err(AebError::BelowLowSpeedGuard { speed: v0 });
        }
        if !(lambda_ref >= 0.0 && lambda_ref <= params.peak_practical_slip() + 1e-12) {
            return Err(AebError::param(
                "lambda_ref",
                format!("must lie in [0, {}], got {lambda_ref}", params.peak_practical_slip()),
            ));
        }
        let v_dot = -params.gravity * design_mu(lambda_ref, params);
        let (mass_f, mass_r) = axle_masses(v_dot, params);
        Ok(Self {
            v0,
            lambda_ref,
            v_dot,
            mass_f,
            mass_r,
            params: *params,
        })
    }

    /// Time for the reference to reach the low-speed guard.
    pub fn duration(&self) -> f64 {
        if self.v_dot < 0.0 {
            (self.v0 - LOW_SPEED_GUARD) / -self.v_dot
        } else {
            f64::INFINITY
        }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        (self.v0 + self.v_dot * t.clamp(0.0, self.duration())).max(LOW_SPEED_GUARD)
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        let p = &self.params;
        let r = p.wheel_radius;
        let v = self.speed_at(t);
        let running = t < self.duration();
        let v_dot = if running { self.v_dot } else { 0.0 };
        let keep = 1.0 - self.lambda_ref;
        let omega = v * keep / r;
        let omega_dot = v_dot * keep / r;
        let mu = design_mu(self.lambda_ref, p);
        let torque = |mass: f64| p.wheel_inertia * omega_dot - mass * p.gravity * mu * r;
        ReferenceSample {
            v,
            omega,
            v_dot,
            omega_dot,
            torque_f: torque(self.mass_f),
            torque_r: torque(self.mass_r),
        }
    }

    /// Tabulates the reference on a uniform time grid up to the low-speed guard.
    pub fn tabulate(&self, dt: f64) -> Vec<(f64, ReferenceSample)> {
        let end = self.duration();
        let n = (end / dt).floor() as usize;
        (0..=n).map(|k| k as f64 * dt).map(|t| (t, self.sample(t))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Maps `(Δv, Δω)` to `Δλ`.
    pub c_out: DMatrix<f64>,
}

pub fn linearize(v_ref: f64, omega_ref: f64, axle_mass: f64, params: &VehicleParams) -> Result<LinearizedPlant> {
    if !(v_ref > LOW_SPEED_GUARD) {
        return Err(AebError::BelowLowSpeedGuard { speed: v_ref });
    }
    let r = params.wheel_radius;
    let j = params.wheel_inertia;
    let lambda = 1.0 - omega_ref * r / v_ref;
    let k = -params.gravity * design_mu_slope(lambda, params);
    let a11 = k * (1.0 - lambda) / v_ref;
    let a12 = -k * r / v_ref;
    let coupling = -r * axle_mass / j;
    Ok(LinearizedPlant {
        a: DMatrix::from_row_slice(2, 2, &[a11, a12, coupling * a11, coupling * a12]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / j]),
        c_out: DMatrix::from_row_slice(1, 2, &[omega_ref * r / (v_ref * v_ref), -r / v_ref]),
    })
}

pub fn scheduled_gain(plant: &LinearizedPlant, weights: &LqrWeights) -> Result<[f64; 2], care::CareError> {
    let problem = CareProblem::new(
        plant.a.clone(),
        plant.b.clone(),
        weights.q.clone(),
        DMatrix::from_element(1, 1, weights.r_cost),
    )?;
    let sol = solve_care(&problem)?;
    Ok([sol.k[(0, 0)], sol.k[(0, 1)]])
}

/// Gains on a uniform speed grid for both axles.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub speeds: Vec<f64>,
    pub front: Vec<[f64; 2]>,
    pub rear: Vec<[f64; 2]>,
}

impl GainSchedule {
    pub fn build(lambda_ref: f64, lqr: &LqrParams, params: &VehicleParams) -> Result<Self> {
        let weights = lqr.weights();
        let reference = ReferenceTrajectory::new(lqr.grid_max_speed, lambda_ref, params)?;
        let n = ((lqr.grid_max_speed - LOW_SPEED_GUARD) / lqr.grid_spacing).ceil() as usize;
        let speeds: Vec<f64> = (0..=n).map(|k| LOW_SPEED_GUARD + k as f64 * lqr.grid_spacing).collect();
        let mut front = Vec::with_capacity(speeds.len());
        let mut rear = Vec::with_capacity(speeds.len());
        for &v in &speeds {
            // the guard itself is excluded from linearization; nudge the first point
            let v_lin = v.max(LOW_SPEED_GUARD * (1.0 + 1e-9));
            let omega = v_lin * (1.0 - lambda_ref) / params.wheel_radius;
            for (mass, out) in [(reference.mass_f, &mut front), (reference.mass_r, &mut rear)] {
                let plant = linearize(v_lin, omega, mass, params)?;
                let k = scheduled_gain(&plant, &weights).map_err(|source| AebError::Scheduling { v_ref: v, source })?;
                out.push(k);
            }
        }
        Ok(Self { speeds, front, rear })
    }

    fn interpolate(&self, table: &[[f64; 2]], v: f64) -> [f64; 2] {
        let first = self.speeds[0];
        let last = *self.speeds.last().unwrap();
        if v <= first {
            return table[0];
        }
        if v >= last {
            return *table.last().unwrap();
        }
        let step = self.speeds[1] - first;
        let i = (((v - first) / step).floor() as usize).min(self.speeds.len() - 2);
        let w = (v - self.speeds[i]) / step;
        let (a, b) = (table[i], table[i + 1]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }

    pub fn gains(&self, v_ref: f64) -> ([f64; 2], [f64; 2]) {
        (self.interpolate(&self.front, v_ref), self.interpolate(&self.rear, v_ref))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrOutput {
    pub torque_f: f64,
    pub torque_r: f64,
    pub reference: ReferenceSample,
}

/// `T = T_ref − K [v − v_ref, ω − ω_ref]`, clamped to braking only.
pub fn lqr_torque(state: &VehicleState, reference: &ReferenceSample, gains: ([f64; 2], [f64; 2]), torque_max: f64) -> LqrOutput {
    let dv = state.v - reference.v;
    let law = |t_ref: f64, k: [f64; 2], omega: f64| {
        (t_ref - k[0] * dv - k[1] * (omega - reference.omega)).clamp(-torque_max, 0.0)
    };
    LqrOutput {
        torque_f: law(reference.torque_f, gains.0, state.omega_f),
        torque_r: law(reference.torque_r, gains.1, state.omega_r),
        reference: *reference,
    }
}
