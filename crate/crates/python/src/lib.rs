//! Python bindings for trajq.
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trajq::encoding::{self, build_encoding, EncodingKind};
use trajq::hardware::{self, ChimeraGraph};
use trajq::metrics::{self, PerturbationSettings, ProblemFamily, SolverConfig};
use trajq::model::{self, GenParams, Trajectory};
use trajq::qubo::{self, CompiledQubo};
use trajq::solvers::{self, AnnealParams, PipelineConfig};
use trajq::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Guard(_) | Error::Numeric(_) | Error::Embedding(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn encoding_kind(name: &str) -> PyResult<EncodingKind> {
    name.parse().map_err(to_py)
}

/// A multi-period portfolio instance.
#[pyclass(name = "ProblemSpec", module = "pytrajq", skip_from_py_object)]
#[derive(Clone)]
struct PySpec {
    inner: model::ProblemSpec,
}

#[pymethods]
impl PySpec {
    /// Seeded random instance with the default generator settings.
    #[staticmethod]
    #[pyo3(signature = (n_assets, n_steps, budget, seed=0))]
    fn random(n_assets: usize, n_steps: usize, budget: u64, seed: u64) -> PyResult<Self> {
        let params = GenParams::default().with_dims(n_assets, n_steps, budget);
        let inner = model::random_instance(&params, seed).map_err(to_py)?;
        Ok(PySpec { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: model::ProblemSpec = serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        inner.validate().map_err(to_py)?;
        Ok(PySpec { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.inner.n_assets
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps
    }

    #[getter]
    fn budget(&self) -> u64 {
        self.inner.budget
    }

    #[getter]
    fn penalty_strength(&self) -> f64 {
        self.inner.penalty_strength
    }

    /// Objective of `holdings[asset][step]` (maximized).
    fn objective(&self, holdings: Vec<Vec<u64>>) -> PyResult<f64> {
        model::objective(&self.inner, &Trajectory { holdings }).map_err(to_py)
    }

    fn is_feasible(&self, holdings: Vec<Vec<u64>>) -> bool {
        model::is_feasible(&self.inner, &Trajectory { holdings })
    }

    fn __repr__(&self) -> String {
        format!(
            "ProblemSpec(n_assets={}, n_steps={}, budget={})",
            self.inner.n_assets, self.inner.n_steps, self.inner.budget
        )
    }
}

/// A compiled QUBO with the layout needed to decode bit vectors.
#[pyclass(name = "Qubo", module = "pytrajq", skip_from_py_object)]
#[derive(Clone)]
struct PyQubo {
    inner: CompiledQubo,
}

#[pymethods]
impl PyQubo {
    #[getter]
    fn dimension(&self) -> usize {
        self.inner.program.dimension()
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.inner.program.offset
    }

    fn density(&self) -> PyResult<f64> {
        self.inner.program.density().map_err(to_py)
    }

    /// Upper-triangle `(i, j, value)` terms.
    fn terms(&self) -> Vec<(usize, usize, f64)> {
        self.inner.program.terms()
    }

    fn evaluate(&self, bits: Vec<u8>) -> PyResult<f64> {
        self.inner.program.evaluate(&bits).map_err(to_py)
    }

    /// Holdings `[asset][step]` encoded by `bits`.
    fn decode(&self, bits: Vec<u8>) -> PyResult<Vec<Vec<u64>>> {
        let d = qubo::decode_solution(&self.inner.layout, &bits).map_err(to_py)?;
        Ok(d.trajectory.holdings)
    }

    fn __repr__(&self) -> String {
        format!("Qubo(dimension={})", self.inner.program.dimension())
    }
}

#[pyfunction]
#[pyo3(signature = (spec, encoding="binary"))]
fn compile(spec: &PySpec, encoding: &str) -> PyResult<PyQubo> {
    let s = &spec.inner;
    let scheme = build_encoding(encoding_kind(encoding)?, s.max_holding, s.budget, s.n_assets).map_err(to_py)?;
    let inner = qubo::compile(s, &scheme).map_err(to_py)?;
    Ok(PyQubo { inner })
}

#[pyfunction]
fn variable_count(encoding: &str, n_assets: usize, n_steps: usize, budget: u64, max_value: u64) -> PyResult<usize> {
    Ok(encoding::variable_count(encoding_kind(encoding)?, n_assets, n_steps, budget, max_value))
}

#[pyfunction]
fn max_clique_size(side: usize) -> usize {
    hardware::max_clique_size(side)
}

/// Minimizing bit vector and its energy.
#[pyfunction]
fn exhaustive_qubo(py: Python<'_>, qubo: &PyQubo) -> PyResult<(Vec<u8>, f64)> {
    let qp = &qubo.inner.program;
    let opt = py.detach(|| solvers::exhaustive_qubo(qp)).map_err(to_py)?;
    Ok((opt.bits, opt.energy))
}

/// Best feasible trajectory and its objective.
#[pyfunction]
fn exhaustive_integer(py: Python<'_>, spec: &PySpec) -> PyResult<(Vec<Vec<u64>>, f64)> {
    let s = &spec.inner;
    let opt = py.detach(|| solvers::exhaustive_integer(s)).map_err(to_py)?;
    Ok((opt.trajectory.holdings, opt.value))
}

/// Lowest-energy read of a simulated annealing run.
#[pyfunction]
#[pyo3(signature = (qubo, reads=1000, sweeps=1000, seed=0))]
fn simulated_annealing(py: Python<'_>, qubo: &PyQubo, reads: usize, sweeps: usize, seed: u64) -> PyResult<(Vec<u8>, f64)> {
    let qp = &qubo.inner.program;
    let set = py
        .detach(|| solvers::simulated_annealing(qp, &AnnealParams::new(reads, sweeps, seed)))
        .map_err(to_py)?;
    let best = set
        .lowest()
        .ok_or_else(|| PyRuntimeError::new_err("no samples"))?;
    Ok((best.bits.clone(), best.energy))
}

/// Embedded, noisy, gauge-averaged annealing on a full Chimera graph.
/// Returns `(bits, holdings, value, energy, feasible, qubits, max_chain)`.
#[pyfunction]
#[pyo3(signature = (spec, qubo, chimera_side=8, reads=1000, gauges=5, epsilon=0.03, seed=0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn annealer_pipeline(
    py: Python<'_>,
    spec: &PySpec,
    qubo: &PyQubo,
    chimera_side: usize,
    reads: usize,
    gauges: usize,
    epsilon: f64,
    seed: u64,
) -> PyResult<(Vec<u8>, Vec<Vec<u64>>, f64, f64, bool, usize, usize)> {
    let graph = ChimeraGraph::full(chimera_side).map_err(to_py)?;
    let config = PipelineConfig {
        reads,
        gauges,
        epsilon,
        seed,
        ..PipelineConfig::default()
    };
    let (s, c) = (&spec.inner, &qubo.inner);
    let r = py
        .detach(|| solvers::annealer_pipeline(s, c, &graph, &config))
        .map_err(to_py)?;
    Ok((
        r.bits,
        r.trajectory.holdings,
        r.value,
        r.energy,
        r.feasible,
        r.diagnostics.qubits,
        r.diagnostics.max_chain,
    ))
}

/// `S(α)` in percent for each alpha, for the exhaustive or `sa` solver.
#[pyfunction]
#[pyo3(signature = (n_assets, n_steps, budget, alphas, encoding="binary", solver="exhaustive", n_instances=20, n_perturbations=20, seed=0))]
#[allow(clippy::too_many_arguments)]
fn success_rate(
    py: Python<'_>,
    n_assets: usize,
    n_steps: usize,
    budget: u64,
    alphas: Vec<f64>,
    encoding: &str,
    solver: &str,
    n_instances: usize,
    n_perturbations: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let family = ProblemFamily::new(n_assets, n_steps, budget, encoding_kind(encoding)?);
    let solver = match solver {
        "exhaustive" => SolverConfig::Exhaustive,
        "sa" => SolverConfig::Annealing(AnnealParams::default()),
        other => return Err(PyValueError::new_err(format!("unknown solver '{other}'"))),
    };
    let settings = PerturbationSettings {
        n_perturbations,
        ..PerturbationSettings::default()
    };
    let (row, _) = py
        .detach(|| metrics::success_rate(&family, &solver, None, &alphas, n_instances, &settings, seed))
        .map_err(to_py)?;
    Ok(row.s_values)
}

#[pymodule]
fn pytrajq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_class::<PyQubo>()?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(variable_count, m)?)?;
    m.add_function(wrap_pyfunction!(max_clique_size, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_qubo, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_integer, m)?)?;
    m.add_function(wrap_pyfunction!(simulated_annealing, m)?)?;
    m.add_function(wrap_pyfunction!(annealer_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(success_rate, m)?)?;
    Ok(())
}
