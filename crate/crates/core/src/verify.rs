//! Built-in property suites behind the `verify` command.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::care::{is_hurwitz, solve_care, spectral_abscissa, CareProblem};
use crate::error::{AebError, Result};
use crate::lqr::{design_model_rate, linearize};
use crate::sim::{run_scenario, Controller, SimConfig};
use crate::supervisor::ControllerMode;
use crate::vehicle::{pacejka_mu, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Pacejka,
    Jacobian,
    Care,
    Lyapunov,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Pacejka, Suite::Jacobian, Suite::Care, Suite::Lyapunov];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Pacejka => "pacejka",
            Suite::Jacobian => "jacobian",
            Suite::Care => "care",
            Suite::Lyapunov => "lyapunov",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = AebError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                AebError::param("only", format!("unknown suite `{s}`; expected pacejka, jacobian, care or lyapunov"))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status}  {:<9} {:<34} {}\n", c.suite.as_str(), c.name, c.detail));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }

    fn push(&mut self, suite: Suite, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            suite,
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Runs the selected suites (all when `only` is `None`) against `config`.
/// The vehicle parameters are used as given, without validation, so a
/// corrupted configuration shows up as failed checks.
pub fn run_verify(config: &SimConfig, only: Option<Suite>) -> VerifyReport {
    let mut report = VerifyReport::default();
    for suite in Suite::ALL {
        if only.is_some_and(|o| o != suite) {
            continue;
        }
        match suite {
            Suite::Pacejka => pacejka_suite(&config.vehicle, &mut report),
            Suite::Jacobian => jacobian_suite(&config.vehicle, &mut report),
            Suite::Care => care_suite(&mut report),
            Suite::Lyapunov => lyapunov_suite(config, &mut report),
        }
    }
    report
}

fn pacejka_suite(p: &VehicleParams, report: &mut VerifyReport) {
    let s_peak = p.peak_slip();
    let ok = s_peak.is_finite() && s_peak > 0.0;
    report.push(Suite::Pacejka, "peak slip positive", ok, format!("s_peak = {s_peak:.6}"));

    let mu_peak = pacejka_mu(s_peak, p);
    let ok = (mu_peak - p.tire_d).abs() <= 1e-12 && p.tire_d > 0.0;
    report.push(Suite::Pacejka, "peak friction equals D", ok, format!("mu(s_peak) = {mu_peak:.12}"));

    // the peak is a maximum of the rising branch
    let h = 1e-4 * s_peak.abs().max(1e-9);
    let ok = ok && pacejka_mu(s_peak - h, p) < mu_peak && pacejka_mu(s_peak + h, p) < mu_peak;
    report.push(Suite::Pacejka, "peak is a local maximum", ok, String::new());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let worst = (0..1000)
        .map(|_| {
            let s: f64 = rng.random_range(-50.0..50.0);
            (pacejka_mu(-s, p) + pacejka_mu(s, p)).abs()
        })
        .fold(0.0, f64::max);
    report.push(Suite::Pacejka, "odd symmetry (1000 samples)", worst == 0.0, format!("max |mu(-s)+mu(s)| = {worst:.1e}"));
}

/// Slips for the Jacobian grid; the flat top of the design curve is avoided
/// because relative error there is meaningless.
pub const JACOBIAN_SLIPS: [f64; 10] = [0.005, 0.02, 0.035, 0.05, 0.06, 0.09, 0.11, 0.14, 0.17, 0.2];

pub fn jacobian_speeds() -> [f64; 10] {
    std::array::from_fn(|i| 1.0 + 3.0 * i as f64)
}

/// Worst relative mismatch between the analytic linearization and central
/// differences over the 100-point grid.
pub fn jacobian_max_rel_error(p: &VehicleParams) -> Result<f64> {
    let mass = crate::lqr::axle_masses(-p.tire_d * p.gravity, p).0;
    let mut worst: f64 = 0.0;
    for v in jacobian_speeds() {
        for lambda in JACOBIAN_SLIPS {
            let omega = v * (1.0 - lambda) / p.wheel_radius;
            let lin = linearize(v, omega, mass, p)?;
            let (hv, hw) = (1e-6 * v, 1e-6 * omega);
            let f = |v, w| design_model_rate(v, w, -1000.0, mass, p);
            let (a, b) = (f(v + hv, omega), f(v - hv, omega));
            let (c, d) = (f(v, omega + hw), f(v, omega - hw));
            let fd = [
                (a.0 - b.0) / (2.0 * hv),
                (c.0 - d.0) / (2.0 * hw),
                (a.1 - b.1) / (2.0 * hv),
                (c.1 - d.1) / (2.0 * hw),
            ];
            let slip = |v: f64, w: f64| 1.0 - w * p.wheel_radius / v;
            let c_fd = [
                (slip(v + hv, omega) - slip(v - hv, omega)) / (2.0 * hv),
                (slip(v, omega + hw) - slip(v, omega - hw)) / (2.0 * hw),
            ];
            let analytic = [lin.a[(0, 0)], lin.a[(0, 1)], lin.a[(1, 0)], lin.a[(1, 1)], lin.c_out[(0, 0)], lin.c_out[(0, 1)]];
            let numeric = [fd[0], fd[1], fd[2], fd[3], c_fd[0], c_fd[1]];
            for (x, y) in analytic.iter().zip(numeric) {
                let rel = (x - y).abs() / y.abs();
                worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
            }
        }
    }
    Ok(worst)
}

fn jacobian_suite(p: &VehicleParams, report: &mut VerifyReport) {
    match jacobian_max_rel_error(p) {
        Ok(worst) => report.push(
            Suite::Jacobian,
            "A and C_out vs central differences",
            worst <= 1e-4,
            format!("100 points, max rel error {worst:.2e}"),
        ),
        Err(e) => report.push(Suite::Jacobian, "A and C_out vs central differences", false, e.to_string()),
    }
}

/// Random stable `A`, random `B`, `Q = MᵀM`, `R = I`.
pub fn random_care_instance(rng: &mut ChaCha8Rng) -> CareProblem {
    let mut a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
    let abscissa = spectral_abscissa(&a);
    if abscissa >= 0.0 {
        a -= DMatrix::identity(2, 2) * (abscissa + rng.random_range(0.1..1.0));
    }
    let b = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-2.0..2.0));
    let m = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
    CareProblem::new(a, b, m.transpose() * m, DMatrix::identity(1, 1)).expect("consistent dimensions")
}

fn care_suite(report: &mut VerifyReport) {
    let di = CareProblem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
    )
    .expect("consistent dimensions");
    match solve_care(&di) {
        Ok(sol) => {
            let err = (sol.k[(0, 0)] - 1.0).abs().max((sol.k[(0, 1)] - 3f64.sqrt()).abs());
            report.push(Suite::Care, "double integrator K = [1, sqrt 3]", err <= 1e-9, format!("error {err:.1e}"));
        }
        Err(e) => report.push(Suite::Care, "double integrator K = [1, sqrt 3]", false, e.to_string()),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut failures, mut worst_ratio) = (0usize, 0.0f64);
    let mut first_failure = String::new();
    for i in 0..1000 {
        let prob = random_care_instance(&mut rng);
        let verdict = solve_care(&prob).map_err(|e| e.to_string()).and_then(|sol| {
            let residual = prob.residual(&sol.p).map_err(|e| e.to_string())?.norm();
            worst_ratio = worst_ratio.max(residual / prob.tolerance());
            let sym = (&sol.p - sol.p.transpose()).norm() <= 1e-10 * sol.p.norm();
            let psd = sol.p.clone().symmetric_eigenvalues().min() >= -1e-10 * sol.p.norm();
            let hurwitz = is_hurwitz(&(&prob.a - &prob.b * &sol.k));
            match (residual < prob.tolerance(), sym, psd, hurwitz) {
                (true, true, true, true) => Ok(()),
                flags => Err(format!("residual/symmetric/psd/hurwitz = {flags:?}")),
            }
        });
        if let Err(msg) = verdict {
            if failures == 0 {
                first_failure = format!("instance {i}: {msg}");
            }
            failures += 1;
        }
    }
    let detail = if failures == 0 {
        format!("1000 instances, max residual/tolerance {worst_ratio:.1e}")
    } else {
        format!("{failures} failures; {first_failure}")
    };
    report.push(Suite::Care, "random instances", failures == 0, detail);
}

fn lyapunov_suite(config: &SimConfig, report: &mut VerifyReport) {
    let mut cfg = *config;
    cfg.scenario.controller = Controller::Smc;
    let run = match run_scenario(&cfg) {
        Ok(run) => run,
        Err(e) => {
            report.push(Suite::Lyapunov, "s * ds/dt <= 0 outside layer", false, e.to_string());
            return;
        }
    };
    let width = cfg.smc.layer_width;
    let (mut checked, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    for r in run.trace.iter().filter(|r| r.mode == ControllerMode::WheelSlipControl) {
        for (s, s_dot) in [(r.slip_f - r.slip_ref_f, r.slip_rate_f), (r.slip_r - r.slip_ref_r, r.slip_rate_r)] {
            if s.abs() > width {
                checked += 1;
                if s * s_dot > 0.0 {
                    violations += 1;
                    worst = worst.max(s * s_dot);
                }
            }
        }
    }
    report.push(
        Suite::Lyapunov,
        "s * ds/dt <= 0 outside layer",
        violations == 0,
        format!("{checked} samples, {violations} violations, worst {worst:.2e}"),
    );

    let reach = run.metrics.first_interval().and_then(|(t0, t1)| {
        run.trace
            .iter()
            .filter(|r| r.t >= t0 && r.t < t1)
            .find(|r| (r.slip_f - r.slip_ref_f).abs() < width && (r.slip_r - r.slip_ref_r).abs() < width)
            .map(|r| r.t - t0)
    });
    report.push(
        Suite::Lyapunov,
        "reaching time < 0.3 s",
        reach.is_some_and(|t| t < 0.3),
        reach.map_or_else(|| "surface never reached".to_string(), |t| format!("{t:.3} s")),
    );
}
