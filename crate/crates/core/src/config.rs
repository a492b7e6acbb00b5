//! TOML run configuration with sections `scenario`, `vehicle`, `smc`, `lqr`
//! and `pid`. Every key is optional and falls back to its default.

use std::path::Path;

use crate::error::{AebError, Result};
use crate::sim::SimConfig;

/// Annotated configuration equal to [`SimConfig::default`].
pub const REFERENCE_CONFIG: &str = r#"# Reference configuration. Every key is optional; omitted keys take the
# values shown here.

[scenario]
v0_ego = 27.77777777777778    # initial ego speed, m/s (100 km/h)
v0_lead = 27.77777777777778   # initial lead speed, m/s (100 km/h)
gap0 = 10.0                   # initial gap, m
lead_decel = -8.0             # lead deceleration, m/s²
lead_detected = true
mu_peak = 0.9                 # road peak friction seen by the supervisor
margin = 1.0                  # static safety margin added to the braking distance, m
activation_speed = 4.0        # an emergency can only start above this speed, m/s
controller = "smc"            # "smc" or "lqr"
dt = 0.001                    # plant step, s, in [1e-4, 1e-2]
control_period = 0.001        # supervisor and PID update period, s
t_max = 10.0                  # hard stop, s

[vehicle]
mass = 1420.0                 # kg
gravity = 9.81                # m/s²
tire_b = 24.0                 # Magic Formula B
tire_c = 1.5                  # Magic Formula C, must exceed 1
tire_d = 0.9                  # Magic Formula D, in (0, 1.2]
lf = 1.01                     # C.O.G to front axle, m
lr = 1.452                    # C.O.G to rear axle, m
cog_height = 0.55             # m
wheel_radius = 0.3            # m
wheel_inertia = 0.6           # kg·m²
yaw_inertia = 1027.8          # kg·m², unused in straight-line motion

[smc]
eta = 400.0                   # reaching rate, 1/s
slope = 1.0                   # boundary-layer slope
layer_width = 0.005           # surface band excluded from the reaching check
torque_max = 3000.0           # braking torque limit per axle, N·m

[lqr]
speed_scale = 30.0            # Q = diag(1/speed_scale², 1/wheel_speed_scale²)
wheel_speed_scale = 100.0
r_cost = 1e-6                 # input weight
grid_spacing = 0.5            # scheduling grid step, m/s
grid_max_speed = 45.0         # top of the scheduling grid, m/s
torque_max = 3000.0           # braking torque limit per axle, N·m

[pid]
# double pole at -6 rad/s for (m R + 2 I / R + kd) dv/dt = u
kp = 5400.0
ki = 16200.0
kd = 20.0
filter_n = 50.0               # derivative filter coefficient, 1/s
torque_limit = 1500.0         # symmetric saturation of the PID sum, N·m
"#;

/// Parses without range checks, for callers that probe out-of-range parameters.
pub fn parse_unvalidated(text: &str) -> Result<SimConfig> {
    toml::from_str(text).map_err(|e| AebError::Config(e.to_string()))
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let config = parse_unvalidated(text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        AebError::Config(msg) => AebError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Serializes the full effective configuration; parsing it back gives an identical value.
pub fn to_toml(config: &SimConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| AebError::Config(e.to_string()))
}
