//! Python bindings for the streaming estimators.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use asymstream::clustering::{self, Objective, SummaryConfig};
use asymstream::f2::{self, F2Config, F2Estimate};
use asymstream::linalg::{self, ScheduleMode, SketchSchedule};
use asymstream::stream::{self, CheckpointSchedule, GeneratorSpec, RunConfig, Source, StreamItem, Task};
use asymstream::Error;

create_exception!(asymstream_py, NotReadyError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotReady(msg) => NotReadyError::new_err(msg),
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::Contract(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Second frequency moment of a stream over `1..=universe`.
#[pyclass(name = "F2Estimator")]
struct PyF2Estimator {
    inner: f2::F2Estimator,
}

#[pymethods]
impl PyF2Estimator {
    #[new]
    #[pyo3(signature = (universe=1 << 20, policy="parallel", n0=64, epsilon0=0.5, delta=0.1, seed=0))]
    fn new(universe: u64, policy: &str, n0: u64, epsilon0: f64, delta: f64, seed: u64) -> PyResult<Self> {
        let config = F2Config {
            policy: policy.parse().map_err(to_py)?,
            universe,
            base_block: n0,
            epsilon0,
            delta,
            seed,
            ..F2Config::default()
        };
        Ok(Self { inner: f2::F2Estimator::new(config).map_err(to_py)? })
    }

    fn insert(&mut self, item: u64) -> PyResult<()> {
        self.inner.insert(item).map_err(to_py)
    }

    fn extend(&mut self, items: Vec<u64>) -> PyResult<()> {
        items.into_iter().try_for_each(|i| self.inner.insert(i)).map_err(to_py)
    }

    /// `(value, bound)`; `value` is `None` until some sketch has a finite bound.
    fn estimate(&self) -> PyResult<(Option<f64>, f64)> {
        Ok(match self.inner.estimate().map_err(to_py)? {
            F2Estimate::Ready { value, bound } => (Some(value), bound),
            F2Estimate::NotReady { best_bound } => (None, best_bound),
        })
    }

    #[getter]
    fn items_total(&self) -> u64 {
        self.inner.items_total()
    }

    #[getter]
    fn memory_words(&self) -> u64 {
        self.inner.memory_words()
    }

    #[getter]
    fn active_sketches(&self) -> usize {
        self.inner.active().len()
    }
}

/// Union of block coresets over a point stream.
#[pyclass(name = "CoresetSummary")]
struct PyCoresetSummary {
    inner: clustering::CoresetSummary,
}

#[pymethods]
impl PyCoresetSummary {
    #[new]
    #[pyo3(signature = (k, dim, objective="means", epsilon0=0.5, delta=0.05, seed=0))]
    fn new(k: usize, dim: usize, objective: &str, epsilon0: f64, delta: f64, seed: u64) -> PyResult<Self> {
        let config = SummaryConfig {
            k,
            dim,
            objective: objective.parse().map_err(to_py)?,
            epsilon0,
            delta,
            seed,
            ..SummaryConfig::default()
        };
        Ok(Self { inner: clustering::CoresetSummary::new(config).map_err(to_py)? })
    }

    fn insert(&mut self, point: Vec<f64>) -> PyResult<()> {
        self.inner.insert(&point).map_err(to_py)
    }

    fn extend(&mut self, points: Vec<Vec<f64>>) -> PyResult<()> {
        points.iter().try_for_each(|p| self.inner.insert(p)).map_err(to_py)
    }

    /// Weighted summary points as `(coords, weight)` pairs.
    fn points(&self) -> Vec<(Vec<f64>, f64)> {
        self.inner.points().into_iter().map(|p| (p.coords, p.weight)).collect()
    }

    /// `(centers, cost, min_cluster_size)` from the configured objective.
    #[pyo3(signature = (restarts=10, seed=0))]
    fn solve(&self, restarts: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, f64, u64)> {
        let k = self.inner.config().k;
        let r = match self.inner.config().objective {
            Objective::Means => clustering::solve_kmeans(&self.inner, k, restarts, seed),
            Objective::Median => clustering::solve_kmedian(&self.inner, k, restarts, seed),
        }
        .map_err(to_py)?;
        Ok((r.centers, r.cost, r.min_cluster_size))
    }

    #[getter]
    fn points_total(&self) -> u64 {
        self.inner.points_total()
    }

    fn __len__(&self) -> usize {
        self.inner.summary_len()
    }
}

/// Sketched least squares over a row stream.
#[pyclass(name = "RegressionSketch")]
struct PyRegressionSketch {
    inner: linalg::RegressionSketch,
}

#[pymethods]
impl PyRegressionSketch {
    #[new]
    #[pyo3(signature = (d, mode="regression", n0=64, epsilon0=0.5, delta=0.1, seed=0))]
    fn new(d: usize, mode: &str, n0: u64, epsilon0: f64, delta: f64, seed: u64) -> PyResult<Self> {
        let mode: ScheduleMode = mode.parse().map_err(to_py)?;
        let schedule = SketchSchedule { base_block: n0, epsilon0, delta, ..SketchSchedule::new(mode, d) };
        Ok(Self { inner: linalg::RegressionSketch::new(schedule, seed).map_err(to_py)? })
    }

    fn ingest_row(&mut self, a_row: Vec<f64>, b_val: f64) -> PyResult<()> {
        self.inner.ingest_row(&a_row, b_val).map_err(to_py)
    }

    /// `(coefficients, sketched_residual, rank_deficient)`.
    fn solve(&self) -> PyResult<(Vec<f64>, f64, bool)> {
        let s = self.inner.solve().map_err(to_py)?;
        Ok((s.coefficients, s.sketched_residual, s.rank_deficient))
    }

    #[getter]
    fn rows_total(&self) -> u64 {
        self.inner.rows_total()
    }
}

fn item_to_py(py: Python<'_>, item: StreamItem) -> PyResult<Py<PyAny>> {
    Ok(match item {
        StreamItem::Item(i) => i.into_pyobject(py)?.into_any().unbind(),
        StreamItem::Point(p) => p.into_pyobject(py)?.into_any().unbind(),
        StreamItem::Row(a, b) => (a, b).into_pyobject(py)?.into_any().unbind(),
        StreamItem::RowPair(a, b) => (a, b).into_pyobject(py)?.into_any().unbind(),
    })
}

/// First `n` items of a generator such as `"uniform-int:16"`.
#[pyfunction]
#[pyo3(signature = (spec, n, seed=0))]
fn generate_stream(py: Python<'_>, spec: &str, n: usize, seed: u64) -> PyResult<Vec<Py<PyAny>>> {
    let spec: GeneratorSpec = spec.parse().map_err(to_py)?;
    stream::generate_stream(&spec, seed, n)
        .map_err(to_py)?
        .into_iter()
        .map(|it| item_to_py(py, it))
        .collect()
}

#[pyfunction]
fn exact_f2(items: Vec<u64>) -> u128 {
    asymstream::oracles::exact_f2(&items)
}

/// Runs one generated trajectory and returns its records as dicts.
#[pyfunction]
#[pyo3(signature = (task, gen, n, seed=0, n0=64, mode=None, k=3, d=2, universe=1 << 20, checkpoints="pow2"))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    task: &str,
    gen: &str,
    n: u64,
    seed: u64,
    n0: u64,
    mode: Option<String>,
    k: usize,
    d: usize,
    universe: u64,
    checkpoints: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = RunConfig::new(task.parse::<Task>().map_err(to_py)?, Source::Generator(gen.parse().map_err(to_py)?));
    cfg.n = Some(n);
    cfg.seed = seed;
    cfg.n0 = n0;
    cfg.mode = mode;
    cfg.k = k;
    cfg.d = d;
    cfg.universe = universe;
    cfg.checkpoints = checkpoints.parse::<CheckpointSchedule>().map_err(to_py)?;
    let records = py.detach(|| stream::run_experiment(&cfg)).map_err(to_py)?;
    records
        .into_iter()
        .map(|r| {
            let dict = PyDict::new(py);
            dict.set_item("n", r.n)?;
            dict.set_item("value", r.value)?;
            dict.set_item("bound", r.bound)?;
            dict.set_item("oracle", r.oracle)?;
            dict.set_item("rel_err", r.rel_err)?;
            dict.set_item("mem_words", r.mem_words)?;
            dict.set_item("elapsed_ns", r.elapsed_ns)?;
            Ok(dict)
        })
        .collect()
}

#[pymodule]
fn asymstream_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyF2Estimator>()?;
    m.add_class::<PyCoresetSummary>()?;
    m.add_class::<PyRegressionSketch>()?;
    m.add_function(wrap_pyfunction!(generate_stream, m)?)?;
    m.add_function(wrap_pyfunction!(exact_f2, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("NotReadyError", m.py().get_type::<NotReadyError>())?;
    Ok(())
}
