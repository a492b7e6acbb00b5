//! Fixed-step simulation loop: kinematic lead vehicle, supervisor, switching
//! logic, the active low-level controller and the ego plant.
//!
//! The supervisor and PID run on a fixed control period (1 ms by default),
//! independent of the plant step. The slip controllers are evaluated as
//! continuous state feedback inside every integrator stage. The plant is
//! integrated with classical RK4, subdividing each step so that the product
//! of substep and the fastest wheel mode stays bounded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AebError, Result};
use crate::lqr::{GainSchedule, LqrParams, ReferenceTrajectory};
use crate::smc::{slip_target_from_decel, smc_torque, SmcParams};
use crate::speed_regulator::{PidGains, SpeedRegulator};
use crate::supervisor::{rbsc_step, switch_mode, ControllerMode, SupervisorConfig, SupervisorInputs};
use crate::vehicle::{
    evaluate_plant, slip_rates, state_derivative, wheel_stiffness_bound, ControlCommand, VehicleParams, VehicleState,
    LOW_SPEED_GUARD,
};

/// Upper bound on `substep * stiffness` for the RK4 substeps.
pub const STIFFNESS_STEP_BOUND: f64 = 0.5;

/// Slip error statistics skip this long after emergency activation, s.
pub const SLIP_ERROR_SETTLE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Smc,
    Lqr,
}

impl Controller {
    pub fn as_str(&self) -> &'static str {
        match self {
            Controller::Smc => "smc",
            Controller::Lqr => "lqr",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Controller {
    type Err = AebError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smc" => Ok(Controller::Smc),
            "lqr" => Ok(Controller::Lqr),
            other => Err(AebError::param("controller", format!("expected `smc` or `lqr`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub v0_ego: f64,
    pub v0_lead: f64,
    /// Initial gap from ego to lead, m.
    pub gap0: f64,
    /// Lead deceleration, m/s², not positive.
    pub lead_decel: f64,
    pub lead_detected: bool,
    pub mu_peak: f64,
    pub margin: f64,
    /// Speed above which an emergency may start, m/s.
    pub activation_speed: f64,
    pub controller: Controller,
    /// Plant integration step, s.
    pub dt: f64,
    /// Supervisor and PID update period, s.
    pub control_period: f64,
    pub t_max: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            v0_ego: 100.0 / 3.6,
            v0_lead: 100.0 / 3.6,
            gap0: 10.0,
            lead_decel: -8.0,
            lead_detected: true,
            mu_peak: 0.9,
            margin: 1.0,
            activation_speed: 4.0,
            controller: Controller::Smc,
            dt: 1e-3,
            control_period: 1e-3,
            t_max: 10.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = [
            ("scenario.v0_ego", self.v0_ego),
            ("scenario.v0_lead", self.v0_lead),
            ("scenario.margin", self.margin),
            ("scenario.activation_speed", self.activation_speed),
        ];
        for (field, value) in finite_nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AebError::param(field, format!("must be finite and >= 0, got {value}")));
            }
        }
        if !(self.gap0.is_finite() && self.gap0 > 0.0) {
            return Err(AebError::param("scenario.gap0", format!("must be > 0, got {}", self.gap0)));
        }
        if !(self.lead_decel.is_finite() && self.lead_decel <= 0.0) {
            return Err(AebError::param(
                "scenario.lead_decel",
                format!("must be finite and <= 0, got {}", self.lead_decel),
            ));
        }
        if !(self.mu_peak > 0.0 && self.mu_peak <= 1.2) {
            return Err(AebError::param("scenario.mu_peak", format!("must lie in (0, 1.2], got {}", self.mu_peak)));
        }
        if !(self.dt >= 1e-4 && self.dt <= 1e-2) {
            return Err(AebError::param("scenario.dt", format!("must lie in [1e-4, 1e-2], got {}", self.dt)));
        }
        if !(self.control_period.is_finite() && self.control_period > 0.0) {
            return Err(AebError::param(
                "scenario.control_period",
                format!("must be finite and > 0, got {}", self.control_period),
            ));
        }
        if !(self.t_max.is_finite() && self.t_max > self.dt) {
            return Err(AebError::param("scenario.t_max", format!("must exceed dt, got {}", self.t_max)));
        }
        Ok(())
    }

    /// Plant steps per supervisor update.
    pub fn ticks_per_control(&self) -> usize {
        ((self.control_period / self.dt).round() as usize).max(1)
    }
}

/// All tunables for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub vehicle: VehicleParams,
    pub smc: SmcParams,
    pub lqr: LqrParams,
    pub pid: PidGains,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.vehicle.validate()?;
        self.smc.validate()?;
        self.lqr.validate()?;
        self.pid.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadState {
    pub x: f64,
    pub v: f64,
}

/// Exact constant-deceleration kinematics, stopping at rest.
pub fn lead_vehicle_step(state: LeadState, decel: f64, dt: f64) -> LeadState {
    if state.v <= 0.0 {
        return LeadState { x: state.x, v: 0.0 };
    }
    if decel < 0.0 {
        let t_stop = -state.v / decel;
        if t_stop <= dt {
            return LeadState {
                x: state.x + state.v * t_stop + 0.5 * decel * t_stop * t_stop,
                v: 0.0,
            };
        }
    }
    LeadState {
        x: state.x + state.v * dt + 0.5 * decel * dt * dt,
        v: state.v + decel * dt,
    }
}

/// Axle torques as a function of time and state, evaluated at every stage.
pub trait TorqueLaw {
    fn torque(&self, t: f64, state: &VehicleState) -> Result<(f64, f64)>;

    /// Extra closed-loop stiffness the law adds to the wheel modes, 1/s.
    fn stiffness(&self) -> f64 {
        0.0
    }
}

impl TorqueLaw for ControlCommand {
    fn torque(&self, _t: f64, _state: &VehicleState) -> Result<(f64, f64)> {
        Ok((self.torque_f, self.torque_r))
    }
}

pub struct SmcLaw<'a> {
    pub lambda_ref: f64,
    pub smc: &'a SmcParams,
    pub params: &'a VehicleParams,
}

impl TorqueLaw for SmcLaw<'_> {
    fn torque(&self, _t: f64, state: &VehicleState) -> Result<(f64, f64)> {
        let snap = evaluate_plant(state, self.params)?;
        let out = smc_torque(state, &snap, self.lambda_ref, self.smc, self.params);
        Ok((out.front.torque, out.rear.torque))
    }

    fn stiffness(&self) -> f64 {
        self.smc.surface_rate()
    }
}

pub struct LqrLaw<'a> {
    pub reference: &'a ReferenceTrajectory,
    /// Time at which the reference started, s.
    pub t0: f64,
    pub schedule: &'a GainSchedule,
    pub torque_max: f64,
    pub wheel_inertia: f64,
}

impl LqrLaw<'_> {
    pub fn evaluate(&self, t: f64, state: &VehicleState) -> crate::lqr::LqrOutput {
        let sample = self.reference.sample(t - self.t0);
        let gains = self.schedule.gains(sample.v);
        crate::lqr::lqr_torque(state, &sample, gains, self.torque_max)
    }
}

impl TorqueLaw for LqrLaw<'_> {
    fn torque(&self, t: f64, state: &VehicleState) -> Result<(f64, f64)> {
        let out = self.evaluate(t, state);
        Ok((out.torque_f, out.torque_r))
    }

    fn stiffness(&self) -> f64 {
        let max_k2 = self
            .schedule
            .front
            .iter()
            .chain(&self.schedule.rear)
            .map(|k| k[1].abs())
            .fold(0.0, f64::max);
        max_k2 / self.wheel_inertia
    }
}

fn apply_clamp(mut s: VehicleState) -> VehicleState {
    s.omega_f = s.omega_f.max(0.0);
    s.omega_r = s.omega_r.max(0.0);
    if s.v < 0.0 {
        s.v = 0.0;
        s.omega_f = 0.0;
        s.omega_r = 0.0;
    }
    s
}

/// Number of RK4 substeps for one plant step at speed `v`.
pub fn substeps(dt: f64, v: f64, law_stiffness: f64, params: &VehicleParams) -> usize {
    let p = wheel_stiffness_bound(v, params) + law_stiffness;
    ((dt * p / STIFFNESS_STEP_BOUND).ceil() as usize).max(1)
}

/// Advances the ego by `dt` with RK4, applying the standstill clamp after each substep.
pub fn integrate_step(
    state: &VehicleState,
    law: &dyn TorqueLaw,
    t: f64,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState> {
    let n = substeps(dt, state.v, law.stiffness(), params);
    let h = dt / n as f64;
    let mut s = *state;
    let rate = |t: f64, s: &VehicleState| -> Result<VehicleState> {
        let (tf, tr) = law.torque(t, s)?;
        let d = state_derivative(s, tf, tr, params)?;
        if d.is_finite() {
            Ok(d)
        } else {
            Err(AebError::NonFinite { t })
        }
    };
    for j in 0..n {
        let tj = t + j as f64 * h;
        let k1 = rate(tj, &s)?;
        let k2 = rate(tj + 0.5 * h, &s.offset(&k1, 0.5 * h))?;
        let k3 = rate(tj + 0.5 * h, &s.offset(&k2, 0.5 * h))?;
        let k4 = rate(tj + h, &s.offset(&k3, h))?;
        let next = VehicleState {
            x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            v: s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
            omega_f: s.omega_f + h / 6.0 * (k1.omega_f + 2.0 * k2.omega_f + 2.0 * k3.omega_f + k4.omega_f),
            omega_r: s.omega_r + h / 6.0 * (k1.omega_r + 2.0 * k2.omega_r + 2.0 * k3.omega_r + k4.omega_r),
        };
        if !next.is_finite() {
            return Err(AebError::NonFinite { t: tj + h });
        }
        s = apply_clamp(next);
    }
    Ok(s)
}

/// One row of the trace, logged at the start of every plant step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub omega_f: f64,
    pub omega_r: f64,
    pub lead_x: f64,
    pub lead_v: f64,
    pub gap: f64,
    pub threshold: f64,
    pub slip_f: f64,
    pub slip_r: f64,
    pub slip_ref_f: f64,
    pub slip_ref_r: f64,
    pub torque_f: f64,
    pub torque_r: f64,
    pub wsc_torque_f: f64,
    pub wsc_torque_r: f64,
    pub pid_torque_f: f64,
    pub pid_torque_r: f64,
    pub mode: ControllerMode,
    pub decel_desired: f64,
    /// Body acceleration, m/s².
    pub accel: f64,
    pub slip_rate_f: f64,
    pub slip_rate_r: f64,
    /// Reference speed of the LQR, zero otherwise.
    pub v_ref: f64,
}

impl TraceRecord {
    pub const HEADER: [&'static str; 25] = [
        "t",
        "x",
        "v",
        "omega_f",
        "omega_r",
        "lead_x",
        "lead_v",
        "gap",
        "threshold",
        "slip_f",
        "slip_r",
        "slip_ref_f",
        "slip_ref_r",
        "torque_f",
        "torque_r",
        "wsc_torque_f",
        "wsc_torque_r",
        "pid_torque_f",
        "pid_torque_r",
        "mode",
        "decel_desired",
        "accel",
        "slip_rate_f",
        "slip_rate_r",
        "v_ref",
    ];

    /// Numeric columns in header order, skipping `mode`.
    pub fn numeric(&self) -> [(&'static str, f64); 24] {
        [
            ("t", self.t),
            ("x", self.x),
            ("v", self.v),
            ("omega_f", self.omega_f),
            ("omega_r", self.omega_r),
            ("lead_x", self.lead_x),
            ("lead_v", self.lead_v),
            ("gap", self.gap),
            ("threshold", self.threshold),
            ("slip_f", self.slip_f),
            ("slip_r", self.slip_r),
            ("slip_ref_f", self.slip_ref_f),
            ("slip_ref_r", self.slip_ref_r),
            ("torque_f", self.torque_f),
            ("torque_r", self.torque_r),
            ("wsc_torque_f", self.wsc_torque_f),
            ("wsc_torque_r", self.wsc_torque_r),
            ("pid_torque_f", self.pid_torque_f),
            ("pid_torque_r", self.pid_torque_r),
            ("decel_desired", self.decel_desired),
            ("accel", self.accel),
            ("slip_rate_f", self.slip_rate_f),
            ("slip_rate_r", self.slip_rate_r),
            ("v_ref", self.v_ref),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub controller: Controller,
    pub collision: bool,
    pub min_gap: f64,
    pub final_gap: f64,
    pub final_v_ego: f64,
    /// First time the ego is below the low-speed guard.
    pub stop_time_ego: Option<f64>,
    pub emergency_intervals: Vec<(f64, f64)>,
    /// Mean `|λ − λ_ref| / λ_ref` over the first emergency interval.
    pub slip_rel_error_mean_f: f64,
    pub slip_rel_error_mean_r: f64,
    /// Largest body deceleration magnitude while in wheel-slip control.
    pub max_decel_emergency: f64,
    pub duration: f64,
}

impl RunMetrics {
    pub fn slip_rel_error_mean(&self) -> f64 {
        0.5 * (self.slip_rel_error_mean_f + self.slip_rel_error_mean_r)
    }

    pub fn first_interval(&self) -> Option<(f64, f64)> {
        self.emergency_intervals.first().copied()
    }
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub config: SimConfig,
    pub trace: Vec<TraceRecord>,
    pub metrics: RunMetrics,
}

enum Active {
    Hold(ControlCommand),
    Smc { lambda_ref: f64 },
    Lqr { reference: ReferenceTrajectory, t0: f64 },
}

pub fn run_scenario(config: &SimConfig) -> Result<SimRun> {
    config.validate()?;
    let sc = &config.scenario;
    let params = &config.vehicle;
    let sup_cfg = SupervisorConfig {
        margin: sc.margin,
        activation_speed: sc.activation_speed,
        gravity: params.gravity,
    };
    let dt = sc.dt;
    let tpc = sc.ticks_per_control();
    let control_dt = tpc as f64 * dt;
    let max_ticks = (sc.t_max / dt).round() as usize;

    let mut ego = VehicleState::rolling(0.0, sc.v0_ego, params);
    let mut lead = LeadState { x: sc.gap0, v: sc.v0_lead };
    let mut regulator = SpeedRegulator::new(config.pid);
    let mut schedule: Option<(f64, GainSchedule)> = None;

    let mut mode: Option<ControllerMode> = None;
    let mut engaged = false;
    let mut active = Active::Hold(ControlCommand::zero(ControllerMode::SpeedRegulation));
    let mut threshold = 0.0;
    let mut decel_desired = 0.0;
    let mut lambda_ref = 0.0;
    let mut pid_cmd = (0.0, 0.0);
    let mut trace = Vec::with_capacity(max_ticks.min(1 << 20) + 1);

    for k in 0..=max_ticks {
        let t = k as f64 * dt;
        let gap = lead.x - ego.x;

        if k % tpc == 0 {
            let inputs = SupervisorInputs {
                v_ego: ego.v,
                delta_x: gap,
                mu_peak: sc.mu_peak,
                lead_detected: sc.lead_detected,
                engaged,
            };
            let out = rbsc_step(&inputs, &sup_cfg);
            threshold = out.threshold;
            decel_desired = out.decel_desired;
            let next = switch_mode(&out, ego.v);
            match next {
                ControllerMode::WheelSlipControl => engaged = true,
                ControllerMode::Standstill => engaged = false,
                ControllerMode::SpeedRegulation => {}
            }
            if !sc.lead_detected {
                engaged = false;
            }
            let entering = mode != Some(next);
            mode = Some(next);
            pid_cmd = (0.0, 0.0);
            lambda_ref = 0.0;
            active = match next {
                ControllerMode::WheelSlipControl => {
                    lambda_ref = slip_target_from_decel(decel_desired, params);
                    match sc.controller {
                        Controller::Smc => Active::Smc { lambda_ref },
                        Controller::Lqr => {
                            let stale = schedule.as_ref().is_none_or(|(l, _)| *l != lambda_ref);
                            if stale {
                                schedule = Some((lambda_ref, GainSchedule::build(lambda_ref, &config.lqr, params)?));
                            }
                            match (&active, entering) {
                                (Active::Lqr { reference, t0 }, false) if reference.lambda_ref == lambda_ref => {
                                    Active::Lqr { reference: *reference, t0: *t0 }
                                }
                                _ => Active::Lqr {
                                    reference: ReferenceTrajectory::new(ego.v, lambda_ref, params)?,
                                    t0: t,
                                },
                            }
                        }
                    }
                }
                ControllerMode::SpeedRegulation => {
                    if entering {
                        regulator.reset(ego.v);
                    }
                    let snap = evaluate_plant(&ego, params)?;
                    let out = regulator.update(ego.v, &snap.loads, control_dt);
                    pid_cmd = (out.torque_f, out.torque_r);
                    Active::Hold(ControlCommand::new(out.torque_f, out.torque_r, next))
                }
                ControllerMode::Standstill => Active::Hold(standstill_hold(params)),
            };
        }

        let lqr_schedule = schedule.as_ref().map(|(_, s)| s);
        let smc_law;
        let lqr_law;
        let law: &dyn TorqueLaw = match &active {
            Active::Hold(cmd) => cmd,
            Active::Smc { lambda_ref } => {
                smc_law = SmcLaw { lambda_ref: *lambda_ref, smc: &config.smc, params };
                &smc_law
            }
            Active::Lqr { reference, t0 } => {
                lqr_law = LqrLaw {
                    reference,
                    t0: *t0,
                    schedule: lqr_schedule.expect("schedule built on entry"),
                    torque_max: config.lqr.torque_max,
                    wheel_inertia: params.wheel_inertia,
                };
                &lqr_law
            }
        };

        let (torque_f, torque_r) = law.torque(t, &ego)?;
        let snap = evaluate_plant(&ego, params)?;
        let rate = state_derivative(&ego, torque_f, torque_r, params)?;
        let (slip_rate_f, slip_rate_r) = slip_rates(&ego, &rate, params);
        let current = mode.expect("mode set on first tick");
        let wsc = current == ControllerMode::WheelSlipControl;
        let v_ref = match &active {
            Active::Lqr { reference, t0 } => reference.speed_at(t - t0),
            _ => 0.0,
        };
        trace.push(TraceRecord {
            t,
            x: ego.x,
            v: ego.v,
            omega_f: ego.omega_f,
            omega_r: ego.omega_r,
            lead_x: lead.x,
            lead_v: lead.v,
            gap,
            threshold,
            slip_f: snap.slip_f,
            slip_r: snap.slip_r,
            slip_ref_f: lambda_ref,
            slip_ref_r: lambda_ref,
            torque_f,
            torque_r,
            wsc_torque_f: if wsc { torque_f } else { 0.0 },
            wsc_torque_r: if wsc { torque_r } else { 0.0 },
            pid_torque_f: pid_cmd.0,
            pid_torque_r: pid_cmd.1,
            mode: current,
            decel_desired,
            accel: rate.v,
            slip_rate_f,
            slip_rate_r,
            v_ref,
        });

        if (ego.v < LOW_SPEED_GUARD && lead.v < LOW_SPEED_GUARD) || k == max_ticks {
            break;
        }
        ego = integrate_step(&ego, law, t, dt, params)?;
        lead = lead_vehicle_step(lead, sc.lead_decel, dt);
    }

    let metrics = compute_metrics(&trace, sc.controller);
    Ok(SimRun {
        config: *config,
        trace,
        metrics,
    })
}

/// Full-adhesion holding torque split by static load.
pub fn standstill_hold(params: &VehicleParams) -> ControlCommand {
    let (share_f, share_r) = params.static_load_shares();
    let total = -params.tire_d * params.weight() * params.wheel_radius;
    ControlCommand::new(share_f * total, share_r * total, ControllerMode::Standstill)
}

/// Maximal runs of wheel-slip control as `(start, end)`; `end` is the first
/// tick outside the run, or the last tick.
pub fn emergency_intervals(trace: &[TraceRecord]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for r in trace {
        let wsc = r.mode == ControllerMode::WheelSlipControl;
        match (wsc, start) {
            (true, None) => start = Some(r.t),
            (false, Some(s)) => {
                out.push((s, r.t));
                start = None;
            }
            _ => {}
        }
    }
    if let (Some(s), Some(last)) = (start, trace.last()) {
        out.push((s, last.t));
    }
    out
}

pub fn compute_metrics(trace: &[TraceRecord], controller: Controller) -> RunMetrics {
    let intervals = emergency_intervals(trace);
    let min_gap = trace.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let last = trace.last();

    let (mut sum_f, mut sum_r, mut n) = (0.0, 0.0, 0usize);
    if let Some(&(t0, t1)) = intervals.first() {
        for r in trace {
            if r.t >= t0 + SLIP_ERROR_SETTLE
                && r.t < t1
                && r.mode == ControllerMode::WheelSlipControl
                && r.slip_ref_f > 0.0
                && r.slip_ref_r > 0.0
            {
                sum_f += (r.slip_f - r.slip_ref_f).abs() / r.slip_ref_f;
                sum_r += (r.slip_r - r.slip_ref_r).abs() / r.slip_ref_r;
                n += 1;
            }
        }
    }
    let mean = |s: f64| if n > 0 { s / n as f64 } else { 0.0 };

    RunMetrics {
        controller,
        collision: min_gap <= 0.0,
        min_gap,
        final_gap: last.map_or(f64::NAN, |r| r.gap),
        final_v_ego: last.map_or(f64::NAN, |r| r.v),
        stop_time_ego: trace.iter().find(|r| r.v < LOW_SPEED_GUARD).map(|r| r.t),
        slip_rel_error_mean_f: mean(sum_f),
        slip_rel_error_mean_r: mean(sum_r),
        max_decel_emergency: trace
            .iter()
            .filter(|r| r.mode == ControllerMode::WheelSlipControl)
            .map(|r| -r.accel)
            .fold(0.0, f64::max),
        emergency_intervals: intervals,
        duration: last.map_or(0.0, |r| r.t),
    }
}
