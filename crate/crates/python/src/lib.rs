//! Python bindings for the `hdqnn` toolkit.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hdqnn::gradient::{finite_diff_jacobian, parameter_shift_jacobian, shift_cost_report, Jacobian};
use hdqnn::harness::commands::train_seeds;
use hdqnn::harness::RunConfig;
use hdqnn::pqc::{self, CallCounter, ControlVector};
use hdqnn::quantum::NoiseConfig;

fn value_err(e: hdqnn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "StateVector", module = "hdqnn_py")]
struct PyStateVector {
    inner: hdqnn::quantum::StateVector,
}

#[pymethods]
impl PyStateVector {
    /// |0…0⟩ on `num_qubits` qubits.
    #[new]
    fn new(num_qubits: usize) -> PyResult<Self> {
        let inner = hdqnn::quantum::StateVector::zero(num_qubits).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    fn apply_rotation(&mut self, qubit: usize, theta: f64, phi: f64) -> PyResult<()> {
        self.inner.apply_rotation(qubit, theta, phi).map_err(value_err)
    }

    fn apply_cz(&mut self, p: usize, k: usize) -> PyResult<()> {
        self.inner.apply_cz(p, k).map_err(value_err)
    }

    fn norm_sqr(&self) -> f64 {
        self.inner.norm_sqr()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities()
    }

    fn exact_marginals(&self) -> Vec<f64> {
        self.inner.exact_marginals()
    }

    fn __repr__(&self) -> String {
        format!("StateVector(num_qubits={})", self.inner.num_qubits())
    }
}

#[pyclass(name = "PqcConfig", module = "hdqnn_py", from_py_object)]
#[derive(Clone)]
struct PyPqcConfig {
    inner: pqc::PqcConfig,
}

#[pymethods]
impl PyPqcConfig {
    #[new]
    #[pyo3(signature = (num_qubits, num_layers, shots, bit_flip_rate = 0.0, phase_flip_rate = 0.0))]
    fn new(num_qubits: usize, num_layers: usize, shots: usize, bit_flip_rate: f64, phase_flip_rate: f64) -> PyResult<Self> {
        let noise = NoiseConfig::new(bit_flip_rate, phase_flip_rate).map_err(value_err)?;
        let inner = pqc::PqcConfig::new(num_qubits, num_layers, shots)
            .and_then(|c| c.with_noise(noise))
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits
    }

    #[getter]
    fn num_layers(&self) -> usize {
        self.inner.num_layers
    }

    #[getter]
    fn shots(&self) -> usize {
        self.inner.shots
    }

    #[getter]
    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }

    #[getter]
    fn angle_dim(&self) -> usize {
        self.inner.angle_dim()
    }

    fn __repr__(&self) -> String {
        format!(
            "PqcConfig(num_qubits={}, num_layers={}, shots={})",
            self.inner.num_qubits, self.inner.num_layers, self.inner.shots
        )
    }
}

fn controls(config: &pqc::PqcConfig, q_i: Vec<f64>) -> PyResult<ControlVector> {
    let q_i = ControlVector::new(q_i);
    q_i.check(config).map_err(value_err)?;
    Ok(q_i)
}

fn rows(j: &Jacobian) -> Vec<Vec<f64>> {
    (0..j.rows()).map(|r| j.row(r).to_vec()).collect()
}

/// Runs the shot-sampled layer once and returns per-qubit marginals.
#[pyfunction]
#[pyo3(signature = (config, q_i, seed = 0))]
fn run_quantum_layer(config: &PyPqcConfig, q_i: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
    let q_i = controls(&config.inner, q_i)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = pqc::run_quantum_layer(&q_i, &config.inner, &mut rng, &CallCounter::new()).map_err(value_err)?;
    Ok(out.into_inner())
}

/// Noiseless infinite-shot marginals.
#[pyfunction]
fn exact_layer_map(config: &PyPqcConfig, q_i: Vec<f64>) -> PyResult<Vec<f64>> {
    let q_i = controls(&config.inner, q_i)?;
    pqc::exact_layer_map(&q_i, &config.inner).map_err(value_err)
}

/// `N × 2NM` Jacobian of the exact map with respect to the angles.
#[pyfunction]
fn shift_jacobian(config: &PyPqcConfig, q_i: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let q_i = controls(&config.inner, q_i)?;
    Ok(rows(&parameter_shift_jacobian(&q_i, &config.inner).map_err(value_err)?))
}

#[pyfunction]
#[pyo3(signature = (config, q_i, h = 1e-4))]
fn fd_jacobian(config: &PyPqcConfig, q_i: Vec<f64>, h: f64) -> PyResult<Vec<Vec<f64>>> {
    let q_i = controls(&config.inner, q_i)?;
    Ok(rows(&finite_diff_jacobian(&q_i, &config.inner, h).map_err(value_err)?))
}

#[pyfunction]
#[pyo3(signature = (inputs, outputs, shots, batch, per_shot_time, updates = 1))]
fn shift_cost<'py>(
    py: Python<'py>,
    inputs: u64,
    outputs: u64,
    shots: u64,
    batch: u64,
    per_shot_time: f64,
    updates: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = shift_cost_report(inputs, outputs, shots, batch, updates, per_shot_time).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("total_shots_per_update", r.total_shots_per_update)?;
    d.set_item("total_seconds_per_update", r.total_seconds_per_update)?;
    d.set_item("total_seconds_full_run", r.total_seconds_full_run)?;
    d.set_item("surrogate_pqc_calls", r.surrogate_pqc_calls)?;
    d.set_item("surrogate_shots", r.surrogate_shots)?;
    d.set_item("shift_extra_shots_full_run", r.shift_extra_shots_full_run)?;
    Ok(d)
}

#[pyfunction]
fn surrogate_param_count(num_qubits: u64, num_layers: u64, hidden: u64) -> u64 {
    hdqnn::surrogate::surrogate_param_count(num_qubits, num_layers, hidden)
}

/// Mean binary cross-entropy between predicted and target probabilities.
#[pyfunction]
fn bce_loss(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    Ok(hdqnn::neural::bce_loss(&pred, &target).map_err(value_err)?.0)
}

/// Trains every seed of a JSON run configuration into `out_dir` and returns
/// `{seed: final mean return}` (None for seeds without an evaluation).
#[pyfunction]
fn train<'py>(py: Python<'py>, config_json: &str, out_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let config = RunConfig::from_json_str(config_json, &[]).map_err(value_err)?;
    let mut log = Vec::new();
    let runs = train_seeds(&config, &out_dir, &mut log).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    for run in runs {
        if let Some(e) = run.entry.error {
            return Err(PyRuntimeError::new_err(format!("seed {}: {e}", run.entry.seed)));
        }
        d.set_item(run.entry.seed, run.entry.final_mean_return)?;
    }
    Ok(d)
}

#[pymodule]
pub fn hdqnn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyPqcConfig>()?;
    m.add_function(wrap_pyfunction!(run_quantum_layer, m)?)?;
    m.add_function(wrap_pyfunction!(exact_layer_map, m)?)?;
    m.add_function(wrap_pyfunction!(shift_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(fd_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(shift_cost, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_param_count, m)?)?;
    m.add_function(wrap_pyfunction!(bce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
