//! Acceptance criteria AC1..AC11. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use aeb_core::care::{solve_care, CareProblem};
use aeb_core::lqr::{axle_masses, linearize};
use aeb_core::output::write_trace_csv;
use aeb_core::supervisor::{rbsc_step, SupervisorConfig, SupervisorInputs};
use aeb_core::vehicle::state_derivative;
use aeb_core::{run_scenario, Controller, ControllerMode, RunMetrics, SimConfig, SimRun, VehicleParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const V_EPS: f64 = 0.1;

struct Outcome {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn run(controller: Controller, dt: f64) -> SimRun {
    let mut cfg = SimConfig::default();
    cfg.scenario.controller = controller;
    cfg.scenario.dt = dt;
    run_scenario(&cfg).expect("scenario runs")
}

fn ac1() -> Outcome {
    let inputs = SupervisorInputs {
        v_ego: 100.0 / 3.6,
        delta_x: 100.0,
        mu_peak: 0.9,
        lead_detected: true,
        engaged: false,
    };
    let thr = rbsc_step(&inputs, &SupervisorConfig::default()).threshold;
    // oracle: v² / (2 μ g) + margin
    let oracle = (100.0f64 / 3.6).powi(2) / (2.0 * 0.9 * 9.81) + 1.0;
    Outcome {
        id: "AC1",
        title: "threshold at 100 km/h",
        passed: (thr - 44.69).abs() <= 0.5 && (thr - oracle).abs() < 1e-9,
        detail: format!("threshold {thr:.3} m (target 44.69 +/- 0.5)"),
    }
}

fn avoidance(id: &'static str, title: &'static str, r: &SimRun) -> Outcome {
    let m = &r.metrics;
    let min_gap = r.trace.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let last = r.trace.last().unwrap();
    let passed = min_gap > 0.0 && !m.collision && (last.gap - 1.0).abs() <= 0.3 && last.v < V_EPS;
    Outcome {
        id,
        title,
        passed,
        detail: format!(
            "collision {}, min gap {:.4} m, final gap {:.4} m, final v {:.2e} m/s",
            m.collision, min_gap, last.gap, last.v
        ),
    }
}

/// Independent slip error over the first emergency interval, 50 ms settle.
fn slip_error(r: &SimRun) -> (f64, f64) {
    let first = r.trace.iter().position(|x| x.mode == ControllerMode::WheelSlipControl).unwrap();
    let t0 = r.trace[first].t;
    let (mut ef, mut er, mut n) = (0.0, 0.0, 0.0);
    for x in r.trace[first..].iter().take_while(|x| x.mode == ControllerMode::WheelSlipControl) {
        if x.t >= t0 + 0.05 {
            ef += (x.slip_f - x.slip_ref_f).abs() / x.slip_ref_f;
            er += (x.slip_r - x.slip_ref_r).abs() / x.slip_ref_r;
            n += 1.0;
        }
    }
    (ef / n, er / n)
}

fn ac4(smc: &SimRun, lqr: &SimRun) -> Outcome {
    let (sf, sr) = slip_error(smc);
    let (lf, lr) = slip_error(lqr);
    let smc_err = sf.max(sr);
    let lqr_err = 0.5 * (lf + lr);
    let agrees = (smc.metrics.slip_rel_error_mean() - 0.5 * (sf + sr)).abs() < 1e-12
        && (lqr.metrics.slip_rel_error_mean() - lqr_err).abs() < 1e-12;
    Outcome {
        id: "AC4",
        title: "slip tracking ordering",
        passed: smc_err < 0.01 && (0.02..=0.08).contains(&lqr_err) && smc_err < lqr_err && agrees,
        detail: format!(
            "SMC {:.4}% (f {:.4}%, r {:.4}%), LQR {:.3}% (f {:.3}%, r {:.3}%)",
            100.0 * smc_err,
            100.0 * sf,
            100.0 * sr,
            100.0 * lqr_err,
            100.0 * lf,
            100.0 * lr
        ),
    }
}

fn first_interval(r: &SimRun) -> (f64, f64) {
    r.metrics.first_interval().expect("an emergency occurs")
}

fn ac5(smc: &SimRun, lqr: &SimRun) -> Outcome {
    let (s0, s1) = first_interval(smc);
    let (l0, l1) = first_interval(lqr);
    Outcome {
        id: "AC5",
        title: "SMC repels the threat no later than LQR",
        passed: s1 <= l1,
        detail: format!("SMC ({s0:.3}, {s1:.3}) s, LQR ({l0:.3}, {l1:.3}) s"),
    }
}

fn ac6(runs: &[&SimRun]) -> Outcome {
    let mu_g = 0.9 * 9.81;
    let mut passed = true;
    let mut parts = Vec::new();
    for r in runs {
        let dt = r.config.scenario.dt;
        let (t0, t1) = first_interval(r);
        // finite difference of the logged speed over the steady phase
        let steady: Vec<f64> = r
            .trace
            .windows(2)
            .filter(|w| w[0].t >= t0 + 0.3 && w[1].t <= t1)
            .map(|w| -(w[1].v - w[0].v) / dt)
            .collect();
        let lo = steady.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = steady.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let peak = r
            .trace
            .iter()
            .filter(|x| x.mode == ControllerMode::WheelSlipControl)
            .map(|x| -x.accel)
            .fold(0.0, f64::max);
        passed &= !steady.is_empty() && lo >= 8.0 && hi <= 8.83 && peak <= mu_g + 1e-6;
        parts.push(format!(
            "{} steady [{lo:.4}, {hi:.4}], peak {peak:.6}",
            r.config.scenario.controller
        ));
    }
    Outcome {
        id: "AC6",
        title: "peak deceleration",
        passed,
        detail: parts.join("; "),
    }
}

fn ac7() -> Outcome {
    let start = Instant::now();
    let p = VehicleParams::default();
    let (g, d, b, c, r, j) = (p.gravity, p.tire_d, p.tire_b, p.tire_c, p.wheel_radius, p.wheel_inertia);
    let mass = axle_masses(-d * g, &p).0;
    // design model written out independently
    let model = |v: f64, w: f64| {
        let lambda = 1.0 - w * r / v;
        let mu = d * (c * (b * lambda).atan()).sin();
        (-g * mu, (mass * g * mu * r - 500.0) / j, lambda)
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..10 {
        let v = 1.5 + 3.2 * i as f64;
        for lambda in [0.004, 0.015, 0.03, 0.045, 0.058, 0.09, 0.12, 0.15, 0.18, 0.21] {
            let w = v * (1.0 - lambda) / r;
            let lin = linearize(v, w, mass, &p).unwrap();
            let (hv, hw) = (1e-6 * v, 1e-6 * w);
            let (vp, vm) = (model(v + hv, w), model(v - hv, w));
            let (wp, wm) = (model(v, w + hw), model(v, w - hw));
            let pairs = [
                (lin.a[(0, 0)], (vp.0 - vm.0) / (2.0 * hv)),
                (lin.a[(0, 1)], (wp.0 - wm.0) / (2.0 * hw)),
                (lin.a[(1, 0)], (vp.1 - vm.1) / (2.0 * hv)),
                (lin.a[(1, 1)], (wp.1 - wm.1) / (2.0 * hw)),
                (lin.c_out[(0, 0)], (vp.2 - vm.2) / (2.0 * hv)),
                (lin.c_out[(0, 1)], (wp.2 - wm.2) / (2.0 * hw)),
            ];
            for (analytic, numeric) in pairs {
                worst = worst.max((analytic - numeric).abs() / numeric.abs());
            }
            count += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        id: "AC7",
        title: "Jacobian property suite",
        passed: count == 100 && worst <= 1e-4 && elapsed < 1.0,
        detail: format!("{count} points, max rel error {worst:.2e}, {elapsed:.3} s"),
    }
}

fn eig_max_real(m: &DMatrix<f64>) -> f64 {
    // 2×2 closed form: trace / 2 ± sqrt(disc)
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        tr / 2.0 + disc.sqrt()
    } else {
        tr / 2.0
    }
}

fn ac8() -> Outcome {
    let start = Instant::now();
    let di = CareProblem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
    )
    .unwrap();
    let k = solve_care(&di).unwrap().k;
    let di_err = (k[(0, 0)] - 1.0).abs().max((k[(0, 1)] - 3f64.sqrt()).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(0xACE8);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-3.0..3.0));
        let shift = eig_max_real(&a);
        if shift >= 0.0 {
            a -= DMatrix::identity(2, 2) * (shift + rng.random_range(0.05..1.0));
        }
        let b = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-3.0..3.0));
        let m = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-3.0..3.0));
        let q = m.transpose() * &m;
        let prob = CareProblem::new(a.clone(), b.clone(), q.clone(), DMatrix::identity(1, 1)).unwrap();
        let Ok(sol) = solve_care(&prob) else {
            failures += 1;
            continue;
        };
        let p = &sol.p;
        // residual recomputed here with R = I
        let res = (a.transpose() * p + p * &a - p * &b * b.transpose() * p + &q).norm();
        let tol = 1e-9 * (1.0 + q.norm());
        worst = worst.max(res / tol);
        let sym = (p - p.transpose()).norm() <= 1e-10 * p.norm();
        let psd = p[(0, 0)] >= -1e-12 && p[(1, 1)] >= -1e-12 && p.determinant() >= -1e-10 * p.norm().powi(2);
        let k_ok = (&sol.k - b.transpose() * p).norm() <= 1e-12 * (1.0 + sol.k.norm());
        let hurwitz = eig_max_real(&(&a - &b * &sol.k)) < 0.0;
        if !(res < tol && sym && psd && k_ok && hurwitz) {
            failures += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        id: "AC8",
        title: "CARE property suite",
        passed: failures == 0 && di_err <= 1e-9 && elapsed < 5.0,
        detail: format!(
            "1000 instances, {failures} failures, max residual/tol {worst:.1e}, double integrator err {di_err:.1e}, {elapsed:.3} s"
        ),
    }
}

fn ac9(smc: &SimRun) -> Outcome {
    let p = smc.config.vehicle;
    let r = p.wheel_radius;
    let (mut checked, mut bad, mut worst) = (0, 0, 0.0f64);
    for x in smc.trace.iter().filter(|x| x.mode == ControllerMode::WheelSlipControl && x.v > V_EPS) {
        let state = aeb_core::VehicleState { x: x.x, v: x.v, omega_f: x.omega_f, omega_r: x.omega_r };
        let d = state_derivative(&state, x.torque_f, x.torque_r, &p).unwrap();
        // dλ/dt from λ = 1 − ωR/v
        for (omega, omega_dot, slip_ref) in [(x.omega_f, d.omega_f, x.slip_ref_f), (x.omega_r, d.omega_r, x.slip_ref_r)] {
            let s = 1.0 - omega * r / x.v - slip_ref;
            let s_dot = -r * omega_dot / x.v + omega * r * d.v / (x.v * x.v);
            if s.abs() > 0.005 {
                checked += 1;
                if s * s_dot > 0.0 {
                    bad += 1;
                    worst = worst.max(s * s_dot);
                }
            }
        }
    }
    Outcome {
        id: "AC9",
        title: "Lyapunov decrease on the SMC run",
        passed: checked > 0 && bad == 0,
        detail: format!("{checked} samples outside the layer, {bad} violations (worst {worst:.2e})"),
    }
}

fn compare(a: &RunMetrics, b: &RunMetrics) -> (bool, String) {
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs());
    let (a0, a1) = a.first_interval().unwrap();
    let (b0, b1) = b.first_interval().unwrap();
    let relative = [
        ("min_gap", rel(a.min_gap, b.min_gap)),
        ("final_gap", rel(a.final_gap, b.final_gap)),
        ("stop_time", rel(a.stop_time_ego.unwrap(), b.stop_time_ego.unwrap())),
        ("interval_end", rel(a1, b1)),
    ];
    let absolute = [
        ("interval_start", (a0 - b0).abs()),
        ("slip_err_f", (a.slip_rel_error_mean_f - b.slip_rel_error_mean_f).abs()),
        ("slip_err_r", (a.slip_rel_error_mean_r - b.slip_rel_error_mean_r).abs()),
    ];
    let worst_rel = relative.iter().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
    let worst_abs = absolute.iter().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
    let ok = relative.iter().all(|x| x.1 < 1e-3) && absolute.iter().all(|x| x.1 < 1e-3);
    (
        ok,
        format!(
            "{} worst rel {} {:.2e}, worst abs {} {:.2e}",
            a.controller, worst_rel.0, worst_rel.1, worst_abs.0, worst_abs.1
        ),
    )
}

fn ac10(smc: &SimRun, lqr: &SimRun) -> Outcome {
    let (s_ok, s_msg) = compare(&smc.metrics, &run(Controller::Smc, 5e-4).metrics);
    let (l_ok, l_msg) = compare(&lqr.metrics, &run(Controller::Lqr, 5e-4).metrics);
    Outcome {
        id: "AC10",
        title: "integrator convergence, dt 1 ms vs 0.5 ms",
        passed: s_ok && l_ok,
        detail: format!("{s_msg}; {l_msg}"),
    }
}

fn csv_bytes(r: &SimRun) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &r.trace).unwrap();
    buf
}

fn ac11(smc: &SimRun, lqr: &SimRun) -> Outcome {
    let same_smc = csv_bytes(smc) == csv_bytes(&run(Controller::Smc, 1e-3));
    let same_lqr = csv_bytes(lqr) == csv_bytes(&run(Controller::Lqr, 1e-3));
    Outcome {
        id: "AC11",
        title: "determinism",
        passed: same_smc && same_lqr,
        detail: format!("smc identical {same_smc}, lqr identical {same_lqr}"),
    }
}

fn main() -> ExitCode {
    let smc = run(Controller::Smc, 1e-3);
    let lqr = run(Controller::Lqr, 1e-3);
    let outcomes = [
        ac1(),
        avoidance("AC2", "collision avoidance, SMC", &smc),
        avoidance("AC3", "collision avoidance, LQR", &lqr),
        ac4(&smc, &lqr),
        ac5(&smc, &lqr),
        ac6(&[&smc, &lqr]),
        ac7(),
        ac8(),
        ac9(&smc),
        ac10(&smc, &lqr),
        ac11(&smc, &lqr),
    ];
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<5} {:<42} {}", o.id, o.title, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
