//! Python bindings: the SIR reference model, ensembles, calibration,
//! equilibrium statistics and the RK4 baseline.
//!
//! Structured results come back as plain dicts, lists and tuples.

use agentsim_core::calibrate::{calibrate_b as core_calibrate, CalibrationSpec};
use agentsim_core::environment::{LatticeEnv, Topology};
use agentsim_core::montecarlo::{self, EnsembleSpec, SirEnsemble};
use agentsim_core::ode::{self, OdeSirParams};
use agentsim_core::sir::{self, EpidemicRun, SirParams};
use agentsim_core::{stats, OrderPolicy, SeedSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use std::path::PathBuf;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(xs) => {
            let list = PyList::empty(py);
            for x in xs {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(err)?)
}

/// Parses a snake_case enum name the same way config files do.
fn named<T: DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(Value::String(s.to_owned())).map_err(|_| err(format!("unknown {what} `{s}`")))
}

/// Parameters of the SIR reference model; keyword arguments override the
/// reference configuration.
#[pyclass(name = "SirParams", module = "agentsim", skip_from_py_object)]
#[derive(Clone)]
struct PySirParams {
    inner: SirParams,
}

#[pymethods]
impl PySirParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = Self {
            inner: SirParams::default(),
        };
        if let Some(kwargs) = kwargs {
            for (k, v) in kwargs.iter() {
                p.set(&k.extract::<String>()?, &v)?;
            }
        }
        p.inner.validate().map_err(err)?;
        Ok(p)
    }

    /// A copy with the transmission probability replaced.
    fn with_b(&self, b: f64) -> PyResult<Self> {
        let inner = self.inner.with_b(b);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        dict(py, &self.inner)
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    fn __repr__(&self) -> String {
        format!("SirParams({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

impl PySirParams {
    fn set(&mut self, key: &str, v: &Bound<'_, PyAny>) -> PyResult<()> {
        let p = &mut self.inner;
        match key {
            "b" => p.b = v.extract()?,
            "period_min" => p.period_min = v.extract()?,
            "period_max" => p.period_max = v.extract()?,
            "contacts_min" => p.contacts_min = v.extract()?,
            "contacts_max" => p.contacts_max = v.extract()?,
            "contact_scheme" => p.contact_scheme = v.extract::<String>()?.parse().map_err(err)?,
            "width" => p.width = v.extract()?,
            "height" => p.height = v.extract()?,
            "neighborhood" => p.neighborhood = named("neighborhood", &v.extract::<String>()?)?,
            "boundary" => p.boundary = named("boundary", &v.extract::<String>()?)?,
            "network" => p.network = v.extract::<Option<PathBuf>>()?,
            "initial_infected" => p.initial_infected = v.extract()?,
            other => return Err(err(format!("unknown SIR parameter `{other}`"))),
        }
        Ok(())
    }
}

fn params_or_default(params: Option<PyRef<'_, PySirParams>>) -> SirParams {
    params.map(|p| p.inner.clone()).unwrap_or_default()
}

/// A seeded random stream, identical to the one the engine hands to replicate
/// `stream_id` of an ensemble with master seed `master_seed`.
#[pyclass(name = "RngStream", module = "agentsim")]
struct PyRngStream {
    inner: agentsim_core::RngStream,
}

#[pymethods]
impl PyRngStream {
    #[new]
    #[pyo3(signature = (master_seed, stream_id = 0))]
    fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            inner: agentsim_core::RngStream::new(SeedSpec::new(master_seed, stream_id)),
        }
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn uniform01(&mut self) -> f64 {
        self.inner.uniform01()
    }

    /// Uniform integer on the closed range `[lo, hi]`.
    fn uniform_int(&mut self, lo: i64, hi: i64) -> PyResult<i64> {
        self.inner.uniform_int(lo, hi).map_err(err)
    }
}

/// One epidemic realisation.
#[pyclass(name = "EpidemicRun", module = "agentsim", frozen)]
struct PyEpidemicRun {
    inner: EpidemicRun,
}

#[pymethods]
impl PyEpidemicRun {
    /// `(S, I, R)` per recorded step.
    #[getter]
    fn counts(&self) -> Vec<(usize, usize, usize)> {
        self.inner.counts.iter().map(|c| (c[0], c[1], c[2])).collect()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// `(infectee, infector, time)` for every non-index infection.
    #[getter]
    fn infections(&self) -> Vec<(usize, usize, i64)> {
        self.inner
            .records
            .iter()
            .map(|r| (r.infectee, r.infector, r.time))
            .collect()
    }

    #[getter]
    fn total_infected(&self) -> usize {
        self.inner.total_infected()
    }

    #[getter]
    fn peak_infected(&self) -> usize {
        self.inner.peak_infected()
    }

    /// Secondary cases caused by the index agent.
    fn secondary_cases(&self) -> PyResult<usize> {
        sir::count_secondary_cases(&self.inner).map_err(err)
    }

    /// Final global state as a JSON snapshot.
    fn final_state_json(&self) -> PyResult<String> {
        self.inner.final_state.to_json().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.counts.len()
    }
}

/// Monte Carlo ensemble of SIR runs.
#[pyclass(name = "Ensemble", module = "agentsim", frozen)]
struct PyEnsemble {
    inner: SirEnsemble,
}

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.result.times.clone()
    }

    /// Per-step ensemble mean of `[S, I, R]`.
    #[getter]
    fn mean(&self) -> Vec<Vec<f64>> {
        self.inner.result.mean.clone()
    }

    #[getter]
    fn variance(&self) -> Vec<Vec<f64>> {
        self.inner.result.variance.clone()
    }

    fn extinction_fraction(&self) -> f64 {
        self.inner.extinction_fraction()
    }

    fn peak_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        dict(py, &self.inner.peak_stats())
    }

    fn final_sizes(&self) -> Vec<usize> {
        self.inner.final_sizes()
    }

    fn run(&self, i: usize) -> PyResult<PyEpidemicRun> {
        let run = self
            .inner
            .epidemics
            .get(i)
            .ok_or_else(|| err(format!("run {i} out of range for {} runs", self.__len__())))?;
        Ok(PyEpidemicRun { inner: run.clone() })
    }

    fn __len__(&self) -> usize {
        self.inner.epidemics.len()
    }
}

/// Runs one epidemic with the stream `(seed, stream_id)`.
#[pyfunction]
#[pyo3(signature = (params = None, steps = 120, seed = 7, stream_id = 0, policy = "fixed"))]
fn run_epidemic(
    py: Python<'_>,
    params: Option<PyRef<'_, PySirParams>>,
    steps: usize,
    seed: u64,
    stream_id: u64,
    policy: &str,
) -> PyResult<PyEpidemicRun> {
    let params = params_or_default(params);
    let policy: OrderPolicy = policy.parse().map_err(err)?;
    let run = py
        .detach(|| sir::run_epidemic_with(&params, steps, SeedSpec::new(seed, stream_id), policy))
        .map_err(err)?;
    Ok(PyEpidemicRun { inner: run })
}

#[pyfunction]
#[pyo3(signature = (params = None, runs = 500, steps = 120, seed = 7, workers = None, policy = "fixed"))]
fn run_ensemble(
    py: Python<'_>,
    params: Option<PyRef<'_, PySirParams>>,
    runs: usize,
    steps: usize,
    seed: u64,
    workers: Option<usize>,
    policy: &str,
) -> PyResult<PyEnsemble> {
    let params = params_or_default(params);
    let spec = EnsembleSpec::new(runs, steps, seed)
        .workers(workers)
        .policy(policy.parse().map_err(err)?);
    let ens = py.detach(|| montecarlo::run_sir_ensemble(&params, &spec)).map_err(err)?;
    Ok(PyEnsemble { inner: ens })
}

/// Mean secondary cases of the index agent: `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (params = None, runs = 500, seed = 7, workers = None))]
fn estimate_r0(
    py: Python<'_>,
    params: Option<PyRef<'_, PySirParams>>,
    runs: usize,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<(f64, f64)> {
    let params = params_or_default(params);
    let est = py
        .detach(|| montecarlo::estimate_r0(&params, runs, seed, workers))
        .map_err(err)?;
    Ok((est.mean, est.std_error))
}

/// Transmission probability whose estimated R0 is closest to `target`.
#[pyfunction]
#[pyo3(signature = (target, params = None, runs = 500, seed = 7, b_min = 0.0, b_max = 0.2, tol = 0.05, max_evaluations = 40, workers = None))]
#[allow(clippy::too_many_arguments)]
fn calibrate_b<'py>(
    py: Python<'py>,
    target: f64,
    params: Option<PyRef<'_, PySirParams>>,
    runs: usize,
    seed: u64,
    b_min: f64,
    b_max: f64,
    tol: f64,
    max_evaluations: usize,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let template = params_or_default(params);
    let mut spec = CalibrationSpec::new(target, b_min, b_max, runs, seed);
    spec.tolerance = tol;
    spec.max_evaluations = max_evaluations;
    spec.workers = workers;
    let c = py.detach(|| core_calibrate(&spec, &template)).map_err(err)?;
    dict(py, &c)
}

/// Probability that a susceptible with `k` infectious contacts is infected.
#[pyfunction]
fn infection_probability(k: u32, b: f64) -> PyResult<f64> {
    sir::infection_probability(k, b).map_err(err)
}

/// Wald-Wolfowitz runs test about the median.
#[pyfunction]
fn runs_test<'py>(py: Python<'py>, series: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    dict(py, &stats::runs_test(&series).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (series, window = 30, alpha = 0.05))]
fn classify_equilibrium<'py>(
    py: Python<'py>,
    series: Vec<f64>,
    window: usize,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    dict(py, &stats::classify_equilibrium(&series, window, alpha).map_err(err)?)
}

/// Cross-seed invariance of the order-`q` equilibrium moment.
#[pyfunction]
#[pyo3(signature = (a, b, q = 1, window = 30, alpha = 0.05))]
fn ergodicity_moment_test<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: i32,
    window: usize,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    dict(py, &stats::ergodicity_moment_test(&a, &b, q, window, alpha).map_err(err)?)
}

#[pyfunction]
fn autocov(series: Vec<f64>, lag: usize) -> PyResult<f64> {
    stats::autocov(&series, lag).map_err(err)
}

/// RK4 solution of the compartmental SIR equations as `(t, S, I, R)` rows.
#[pyfunction]
#[pyo3(signature = (beta, gamma, s0 = 399.0, i0 = 1.0, r0 = 0.0, dt = 0.1, horizon = 120.0))]
#[allow(clippy::too_many_arguments)]
fn integrate_sir(
    beta: f64,
    gamma: f64,
    s0: f64,
    i0: f64,
    r0: f64,
    dt: f64,
    horizon: f64,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let params = OdeSirParams {
        beta,
        gamma,
        s0,
        i0,
        r0,
    };
    let pts = ode::integrate_sir(&params, dt, horizon).map_err(err)?;
    Ok(pts.into_iter().map(|p| (p.t, p.s, p.i, p.r)).collect())
}

/// Neighbour lists of every cell of a row-major lattice.
#[pyfunction]
#[pyo3(signature = (width, height, neighborhood = "moore8", boundary = "clamp"))]
fn lattice_neighbors(width: usize, height: usize, neighborhood: &str, boundary: &str) -> PyResult<Vec<Vec<usize>>> {
    let env = LatticeEnv::new(
        width,
        height,
        named("neighborhood", neighborhood)?,
        named("boundary", boundary)?,
    )
    .map_err(err)?;
    (0..env.size()).map(|i| env.neighbors(i).map_err(err)).collect()
}

#[pymodule]
fn agentsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", agentsim_core::VERSION)?;
    m.add_class::<PySirParams>()?;
    m.add_class::<PyRngStream>()?;
    m.add_class::<PyEpidemicRun>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(run_epidemic, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_r0, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_b, m)?)?;
    m.add_function(wrap_pyfunction!(infection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(runs_test, m)?)?;
    m.add_function(wrap_pyfunction!(classify_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(ergodicity_moment_test, m)?)?;
    m.add_function(wrap_pyfunction!(autocov, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_sir, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_neighbors, m)?)?;
    Ok(())
}
