use aeb_core::config::{load_config, to_toml};
use aeb_core::supervisor::ControllerMode;
use aeb_core::vehicle::LOW_SPEED_GUARD;
use aeb_core::{run_scenario, Controller, SimConfig, SimRun, TraceRecord};
use proptest::prelude::*;

fn run(controller: Controller) -> SimRun {
    let mut c = SimConfig::default();
    c.scenario.controller = controller;
    run_scenario(&c).unwrap()
}

fn first_emergency(run: &SimRun) -> (f64, f64) {
    run.metrics.first_interval().expect("default scenario triggers an emergency")
}

fn window(trace: &[TraceRecord], t0: f64, t1: f64) -> impl Iterator<Item = &TraceRecord> {
    trace
        .iter()
        .filter(move |r| r.t >= t0 && r.t <= t1 && r.mode == ControllerMode::WheelSlipControl)
}

#[test]
fn speed_never_rises_while_braking_for_slip() {
    for c in [Controller::Smc, Controller::Lqr] {
        let r = run(c);
        for pair in r.trace.windows(2) {
            if pair[0].mode == ControllerMode::WheelSlipControl && pair[1].mode == ControllerMode::WheelSlipControl {
                assert!(pair[1].v <= pair[0].v + 1e-12, "{c}: speed rose at t = {}", pair[1].t);
            }
        }
    }
}

#[test]
fn only_the_active_controller_commands_torque() {
    for c in [Controller::Smc, Controller::Lqr] {
        let r = run(c);
        for rec in &r.trace {
            match rec.mode {
                ControllerMode::WheelSlipControl => {
                    assert_eq!((rec.pid_torque_f, rec.pid_torque_r), (0.0, 0.0), "t = {}", rec.t);
                    assert_eq!((rec.torque_f, rec.torque_r), (rec.wsc_torque_f, rec.wsc_torque_r));
                }
                ControllerMode::SpeedRegulation => {
                    assert_eq!((rec.wsc_torque_f, rec.wsc_torque_r), (0.0, 0.0), "t = {}", rec.t);
                    assert_eq!((rec.torque_f, rec.torque_r), (rec.pid_torque_f, rec.pid_torque_r));
                }
                ControllerMode::Standstill => {
                    assert_eq!((rec.wsc_torque_f, rec.pid_torque_f), (0.0, 0.0));
                }
            }
        }
    }
}

#[test]
fn braking_torque_stays_within_limits() {
    let c = SimConfig::default();
    for ctrl in [Controller::Smc, Controller::Lqr] {
        let r = run(ctrl);
        for rec in &r.trace {
            for tq in [rec.wsc_torque_f, rec.wsc_torque_r] {
                assert!((-c.smc.torque_max..=0.0).contains(&tq), "{ctrl}: {tq} at t = {}", rec.t);
            }
            let pid = rec.pid_torque_f + rec.pid_torque_r;
            assert!(pid.abs() <= c.pid.torque_limit * (1.0 + 1e-12));
        }
    }
}

#[test]
fn gap_follows_threshold_once_regulating() {
    for c in [Controller::Smc, Controller::Lqr] {
        let r = run(c);
        let (_, t1) = first_emergency(&r);
        for rec in r.trace.iter().filter(|rec| rec.t > t1 && rec.mode == ControllerMode::SpeedRegulation) {
            assert!(rec.gap >= rec.threshold - 0.05, "{c}: gap {} thr {} at t = {}", rec.gap, rec.threshold, rec.t);
        }
    }
}

#[test]
fn sliding_surface_is_reached_quickly() {
    let r = run(Controller::Smc);
    let layer = SimConfig::default().smc.layer_width;
    let (t0, t1) = first_emergency(&r);
    for (name, pick) in [
        ("front", (|rec: &TraceRecord| rec.slip_f - rec.slip_ref_f) as fn(&TraceRecord) -> f64),
        ("rear", |rec: &TraceRecord| rec.slip_r - rec.slip_ref_r),
    ] {
        let reached = window(&r.trace, t0, t1)
            .find(|rec| pick(rec).abs() <= layer)
            .map(|rec| rec.t - t0)
            .expect("surface reached");
        assert!(reached < 0.3, "{name} reached after {reached} s");
        // and it stays there
        assert!(window(&r.trace, t0 + reached, t1).all(|rec| pick(rec).abs() <= layer));
    }
}

#[test]
fn smc_torque_does_not_chatter() {
    let r = run(Controller::Smc);
    let (t0, t1) = first_emergency(&r);
    let torques: Vec<f64> = window(&r.trace, t0 + 0.3, t1).map(|rec| rec.wsc_torque_f + rec.wsc_torque_r).collect();
    let mean = torques.iter().sum::<f64>() / torques.len() as f64;
    let (lo, hi) = torques.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    assert!((hi - lo) / mean.abs() < 0.05, "torque band {lo}..{hi} around {mean}");
}

#[test]
fn smc_tracks_slip_on_each_axle() {
    let m = run(Controller::Smc).metrics;
    assert!(m.slip_rel_error_mean_f < 0.01, "{}", m.slip_rel_error_mean_f);
    assert!(m.slip_rel_error_mean_r < 0.01, "{}", m.slip_rel_error_mean_r);
}

#[test]
fn runs_end_at_rest_behind_the_lead() {
    for c in [Controller::Smc, Controller::Lqr] {
        let m = run(c).metrics;
        assert!(!m.collision);
        assert!(m.final_v_ego < LOW_SPEED_GUARD);
        assert!(m.final_gap > 0.0 && m.final_gap < 1.5, "{c}: {}", m.final_gap);
    }
}

#[test]
fn config_file_round_trip_reproduces_the_run() {
    let mut c = SimConfig::default();
    c.scenario.controller = Controller::Lqr;
    c.scenario.gap0 = 11.25;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("effective.toml");
    std::fs::write(&path, to_toml(&c).unwrap()).unwrap();
    let loaded = load_config(&path).unwrap();
    assert_eq!(loaded, c);
    let (a, b) = (run_scenario(&c).unwrap(), run_scenario(&loaded).unwrap());
    assert_eq!(a.trace.len(), b.trace.len());
    assert!(a.trace.iter().zip(&b.trace).all(|(x, y)| x.numeric() == y.numeric() && x.mode == y.mode));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn varied_scenarios_stay_physical(
        v0 in 10.0f64..35.0,
        gap0 in 6.0f64..40.0,
        lead_decel in -8.0f64..-2.0,
        lqr in any::<bool>(),
    ) {
        let mut c = SimConfig::default();
        c.scenario.v0_ego = v0;
        c.scenario.v0_lead = v0;
        c.scenario.gap0 = gap0;
        c.scenario.lead_decel = lead_decel;
        c.scenario.controller = if lqr { Controller::Lqr } else { Controller::Smc };
        let r = run_scenario(&c).unwrap();
        for rec in &r.trace {
            prop_assert!(rec.numeric().iter().all(|(_, x)| x.is_finite()));
            prop_assert!(rec.v >= 0.0 && rec.omega_f >= 0.0 && rec.omega_r >= 0.0);
            prop_assert!(rec.v <= v0 + 1e-9);
        }
        prop_assert!(!r.metrics.collision);
    }
}
