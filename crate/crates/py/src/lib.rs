//! Python bindings: configuration, simulation runs, tire helpers, the Riccati
//! solver and the property suites.

use aeb_core::care::{solve_care as core_solve_care, CareProblem};
use aeb_core::config::{parse_config, to_toml, REFERENCE_CONFIG};
use aeb_core::output::{metrics_text, write_trace_csv};
use aeb_core::verify::{run_verify, Suite};
use aeb_core::{vehicle, AebError, SimConfig, TraceRecord};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};

fn py_err(e: AebError) -> PyErr {
    match e {
        AebError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Full run configuration. Values are read and written per `section` and `key`,
/// using the same names as the TOML file.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

impl PyConfig {
    fn table(&self) -> PyResult<toml::Table> {
        let text = to_toml(&self.inner).map_err(py_err)?;
        text.parse().map_err(|e: toml::de::Error| PyValueError::new_err(e.to_string()))
    }
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: SimConfig::default() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        parse_config(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        aeb_core::config::load_config(path.as_ref()).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn reference_toml() -> &'static str {
        REFERENCE_CONFIG
    }

    fn to_toml(&self) -> PyResult<String> {
        to_toml(&self.inner).map_err(py_err)
    }

    fn get<'py>(&self, py: Python<'py>, section: &str, key: &str) -> PyResult<Bound<'py, PyAny>> {
        let table = self.table()?;
        let value = table
            .get(section)
            .and_then(|s| s.get(key))
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {section}.{key}")))?;
        Ok(match value {
            toml::Value::Float(x) => x.into_pyobject(py)?.into_any(),
            toml::Value::Integer(i) => i.into_pyobject(py)?.into_any(),
            toml::Value::Boolean(b) => PyBool::new(py, *b).to_owned().into_any(),
            toml::Value::String(s) => s.into_pyobject(py)?.into_any(),
            other => return Err(PyValueError::new_err(format!("unsupported value {other}"))),
        })
    }

    /// Sets one value; the whole configuration is validated before it is accepted.
    fn set(&mut self, section: &str, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let mut table = self.table()?;
        let new = if value.is_instance_of::<PyBool>() {
            toml::Value::Boolean(value.extract()?)
        } else if let Ok(x) = value.extract::<f64>() {
            toml::Value::Float(x)
        } else {
            toml::Value::String(value.extract()?)
        };
        let sect = table
            .get_mut(section)
            .and_then(|s| s.as_table_mut())
            .ok_or_else(|| PyValueError::new_err(format!("unknown section {section}")))?;
        sect.insert(key.to_string(), new);
        let text = toml::to_string(&table).map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.inner = parse_config(&text).map_err(py_err)?;
        Ok(())
    }

    fn __repr__(&self) -> String {
        let s = &self.inner.scenario;
        format!("Config(controller={}, v0_ego={}, gap0={}, dt={})", s.controller, s.v0_ego, s.gap0, s.dt)
    }
}

/// Result of one closed-loop simulation.
#[pyclass(name = "SimRun")]
struct PySimRun {
    run: aeb_core::SimRun,
}

#[pymethods]
impl PySimRun {
    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig { inner: self.run.config }
    }

    /// Column name to list of values; `mode` holds strings.
    #[getter]
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        let trace = &self.run.trace;
        let mut columns: Vec<Vec<f64>> = (0..24).map(|_| Vec::with_capacity(trace.len())).collect();
        for r in trace {
            for (col, (_, x)) in columns.iter_mut().zip(r.numeric()) {
                col.push(x);
            }
        }
        let names = TraceRecord::HEADER.iter().filter(|n| **n != "mode");
        for (name, column) in names.zip(columns) {
            dict.set_item(*name, column)?;
        }
        let modes: Vec<&str> = trace.iter().map(|r| r.mode.as_str()).collect();
        dict.set_item("mode", modes)?;
        Ok(dict)
    }

    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.run.metrics;
        let dict = PyDict::new(py);
        dict.set_item("controller", m.controller.as_str())?;
        dict.set_item("collision", m.collision)?;
        dict.set_item("min_gap", m.min_gap)?;
        dict.set_item("final_gap", m.final_gap)?;
        dict.set_item("final_v_ego", m.final_v_ego)?;
        dict.set_item("stop_time_ego", m.stop_time_ego)?;
        dict.set_item("emergency_intervals", m.emergency_intervals.clone())?;
        dict.set_item("first_emergency", m.first_interval())?;
        dict.set_item("slip_rel_error_mean_f", m.slip_rel_error_mean_f)?;
        dict.set_item("slip_rel_error_mean_r", m.slip_rel_error_mean_r)?;
        dict.set_item("slip_rel_error_mean", m.slip_rel_error_mean())?;
        dict.set_item("max_decel_emergency", m.max_decel_emergency)?;
        dict.set_item("duration", m.duration)?;
        Ok(dict)
    }

    fn metrics_toml(&self) -> String {
        metrics_text(&self.run.metrics)
    }

    fn write_trace_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        write_trace_csv(std::io::BufWriter::new(file), &self.run.trace).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.run.trace.len()
    }
}

/// Runs one scenario; the GIL is released while integrating.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_scenario(py: Python<'_>, config: Option<PyConfig>) -> PyResult<PySimRun> {
    let config = config.map_or_else(SimConfig::default, |c| c.inner);
    let run = py.detach(|| aeb_core::run_scenario(&config)).map_err(py_err)?;
    Ok(PySimRun { run })
}

#[pyfunction]
#[pyo3(signature = (v, omega, wheel_radius=0.3))]
fn practical_slip(v: f64, omega: f64, wheel_radius: f64) -> PyResult<f64> {
    vehicle::practical_slip(v, omega, wheel_radius).map_err(py_err)
}

#[pyfunction]
fn theoretical_slip(lam: f64) -> f64 {
    vehicle::theoretical_slip(lam)
}

/// Friction coefficient at practical slip `lam` for the tire of `config`.
#[pyfunction]
#[pyo3(signature = (lam, config=None))]
fn friction_coefficient(lam: f64, config: Option<PyConfig>) -> f64 {
    let params = config.map_or_else(SimConfig::default, |c| c.inner).vehicle;
    vehicle::friction_coefficient(lam, &params)
}

fn matrix(rows: Vec<Vec<f64>>, name: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!("{name} is ragged")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

type Nested = Vec<Vec<f64>>;

fn nested(mat: &DMatrix<f64>) -> Nested {
    (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
}

/// Stabilizing solution of AᵀP + PA − PBR⁻¹BᵀP + Q = 0. Returns `(P, K)` with K = R⁻¹BᵀP.
#[pyfunction]
fn solve_care(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
) -> PyResult<(Nested, Nested)> {
    let problem = CareProblem::new(matrix(a, "a")?, matrix(b, "b")?, matrix(q, "q")?, matrix(r, "r")?)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let sol = core_solve_care(&problem).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((nested(&sol.p), nested(&sol.k)))
}

/// Runs the property suites; returns `(suite, check, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (only=None, config=None))]
fn verify(
    py: Python<'_>,
    only: Option<&str>,
    config: Option<PyConfig>,
) -> PyResult<Vec<(String, String, bool, String)>> {
    let suite = only
        .map(|s| s.parse::<Suite>())
        .transpose()
        .map_err(py_err)?;
    let config = config.map_or_else(SimConfig::default, |c| c.inner);
    let report = py.detach(|| run_verify(&config, suite));
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.suite.to_string(), c.name, c.passed, c.detail))
        .collect())
}

#[pymodule]
fn aeb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySimRun>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(practical_slip, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_slip, m)?)?;
    m.add_function(wrap_pyfunction!(friction_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(solve_care, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("TRACE_COLUMNS", PyList::new(m.py(), TraceRecord::HEADER)?)?;
    Ok(())
}
