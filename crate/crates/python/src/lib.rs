//! Python bindings for the `uavmesh` simulator.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use uavmesh::connectivity::{uav_probability_vector, AdjacencyMatrix};
use uavmesh::experiment::config::DataConfig;
use uavmesh::experiment::{run_experiment, trace_waypoints, ExperimentConfig, RunPolicy, TaskData};
use uavmesh::geometry::Position3;
use uavmesh::learning::metropolis_weights;
use uavmesh::validate;

create_exception!(pyuavmesh, UavmeshError, PyException);

fn py_err(e: uavmesh::Error) -> PyErr {
    UavmeshError::new_err(format!("{}: {e}", e.kind()))
}

/// Experiment configuration. `Config()` holds the built-in defaults.
#[pyclass(name = "Config", module = "pyuavmesh")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = ExperimentConfig::load(&path).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = ExperimentConfig::from_toml_str(text).map_err(py_err)?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    /// Points the four dataset paths at the standard file names in `dir`.
    fn set_data_dir(&mut self, dir: PathBuf) {
        self.inner.data = DataConfig::in_dir(&dir);
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.learning.rounds
    }

    #[setter]
    fn set_rounds(&mut self, rounds: usize) {
        self.inner.learning.rounds = rounds;
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    #[getter]
    fn policy(&self) -> String {
        self.inner.policy.name.clone()
    }

    #[setter]
    fn set_policy(&mut self, name: String) {
        self.inner.policy.name = name;
    }

    #[getter]
    fn positions(&self) -> PyResult<Vec<(f64, f64)>> {
        let dep = self.inner.deployment().map_err(py_err)?;
        Ok(dep.ground().iter().map(|p| (p.x, p.y)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(nodes={}, rounds={}, policy={:?}, seeds={:?})",
            self.inner.deployment.positions.len(),
            self.inner.learning.rounds,
            self.inner.policy.name,
            self.inner.seeds
        )
    }
}

fn resolve(cfg: &PyConfig, policy: Option<&str>) -> PyResult<(ExperimentConfig, RunPolicy)> {
    let mut c = cfg.inner.clone();
    if let Some(p) = policy {
        c.policy.name = p.to_string();
    }
    c.validate().map_err(py_err)?;
    let policy = c.run_policy().map_err(py_err)?;
    Ok((c, policy))
}

/// One training run. Returns a dict with `metrics` (list of dicts),
/// `waypoints` (list of `(round, x, y)`) and `final_mean`.
#[pyfunction]
#[pyo3(signature = (config, policy=None, seed=None))]
fn run<'py>(
    py: Python<'py>,
    config: &PyConfig,
    policy: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let (cfg, policy) = resolve(config, policy)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let result = py
        .detach(|| {
            let task = TaskData::load(&cfg)?;
            run_experiment(&cfg, &task, policy, seed)
        })
        .map_err(py_err)?;

    let metrics = result
        .metrics
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("round", m.round)?;
            d.set_item("test_accuracy", m.test_accuracy_mean_estimate)?;
            d.set_item("consensus_error", m.consensus_error)?;
            d.set_item("n_ground_links", m.n_ground_links)?;
            d.set_item("n_relay_links", m.n_relay_links)?;
            d.set_item("uav", (m.uav_x, m.uav_y))?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let waypoints: Vec<(usize, f64, f64)> = result
        .waypoints
        .iter()
        .map(|w| (w.event.round, w.event.point.x, w.event.point.y))
        .collect();

    let out = PyDict::new(py);
    out.set_item("policy", policy.to_string())?;
    out.set_item("seed", seed)?;
    out.set_item("metrics", metrics)?;
    out.set_item("waypoints", waypoints)?;
    out.set_item("final_mean", result.final_mean)?;
    Ok(out)
}

/// Trajectory only, as `(round, x, y)` tuples.
#[pyfunction]
#[pyo3(signature = (config, policy=None, seed=None))]
fn waypoints(
    config: &PyConfig,
    policy: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let (cfg, policy) = resolve(config, policy)?;
    let RunPolicy::Uav(p) = policy else {
        return Err(UavmeshError::new_err("fully_connected has no trajectory"));
    };
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let rows = trace_waypoints(&cfg, p, seed).map_err(py_err)?;
    Ok(rows
        .iter()
        .map(|w| (w.event.round, w.event.point.x, w.event.point.y))
        .collect())
}

/// Expected ground link probabilities as a nested list.
#[pyfunction]
fn ground_link_probabilities(config: &PyConfig) -> PyResult<Vec<Vec<f64>>> {
    let ctx = config.inner.planning_context().map_err(py_err)?;
    Ok(ctx
        .ground_probs
        .as_array()
        .outer_iter()
        .map(|row| row.to_vec())
        .collect())
}

/// Link probability of every ground node to a UAV hovering at `(x, y)`.
#[pyfunction]
fn uav_link_probabilities(config: &PyConfig, x: f64, y: f64) -> PyResult<Vec<f64>> {
    let cfg = &config.inner;
    let dep = cfg.deployment().map_err(py_err)?;
    let pos = Position3::new(x, y, cfg.uav.altitude);
    Ok(uav_probability_vector(
        &pos,
        &dep,
        &cfg.air,
        cfg.ground.threshold_db,
    ))
}

/// Metropolis weights for a symmetric 0/1 adjacency with ones on the diagonal.
#[pyfunction]
fn metropolis(adjacency: Vec<Vec<u8>>) -> PyResult<Vec<Vec<f64>>> {
    let m = adjacency.len();
    if adjacency.iter().any(|r| r.len() != m) {
        return Err(UavmeshError::new_err("adjacency must be square"));
    }
    let a = ndarray::Array2::from_shape_fn((m, m), |(i, j)| adjacency[i][j]);
    let a = AdjacencyMatrix::from_array(a).map_err(py_err)?;
    let w = metropolis_weights(&a).map_err(py_err)?;
    Ok(w.as_array().outer_iter().map(|row| row.to_vec()).collect())
}

/// Runs the self-check suite; returns `(name, passed, detail)` per check.
#[pyfunction]
#[pyo3(signature = (seed=1))]
fn run_validation(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let checks = py.detach(|| validate::run_all(seed)).map_err(py_err)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect())
}

#[pymodule]
fn pyuavmesh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("UavmeshError", m.py().get_type::<UavmeshError>())?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(waypoints, m)?)?;
    m.add_function(wrap_pyfunction!(ground_link_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(uav_link_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(metropolis, m)?)?;
    m.add_function(wrap_pyfunction!(run_validation, m)?)?;
    Ok(())
}
