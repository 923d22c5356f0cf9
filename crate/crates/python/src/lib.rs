//! Python module `qefb`.
//!
//! Matrices and vectors cross the boundary as nested lists of floats.
//! Structured results (predictions, result tables, validation reports) are
//! returned as plain dicts.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qefb::design::{NoiseModel as CoreNoiseModel, DEFAULT_GRAMIAN_TOL};
use qefb::filters::{self, ArmaBranch, ArmaFilter, FeedbackMode, FeedbackPlan, FirFilter};
use qefb::graph::{self, Connectivity, ResModel, ShiftKind, ShiftOperator};
use qefb::harness::validate::{run_suite, Suite, ValidateOptions};
use qefb::harness::{self, Scenario};
use qefb::quantizer::{self, Dither, QuantizerConfig};
use qefb::{Error, Matrix, Vector};

fn py_err(e: Error) -> PyErr {
    let msg = format!("[{}] {}", e.kind(), e);
    match e {
        Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for qefb::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_str<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{text}`")))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn shift_kind(name: &str) -> PyResult<ShiftKind> {
    match name {
        "adjacency" => Ok(ShiftKind::Adjacency),
        "laplacian" => Ok(ShiftKind::Laplacian),
        "scaled_laplacian" => Ok(ShiftKind::ScaledLaplacian),
        _ => Err(PyValueError::new_err(format!("unknown shift `{name}`"))),
    }
}

#[pyclass(module = "qefb", skip_from_py_object)]
#[derive(Clone)]
struct Graph {
    inner: graph::Graph,
}

#[pymethods]
impl Graph {
    #[new]
    fn new(nodes: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        Ok(Graph {
            inner: graph::Graph::new(nodes, edges).py()?,
        })
    }

    /// Random geometric sensor graph. Pass either `edges` or `radius`.
    #[staticmethod]
    #[pyo3(signature = (nodes, edges=None, radius=None, seed=1))]
    fn generate(nodes: usize, edges: Option<usize>, radius: Option<f64>, seed: u64) -> PyResult<Self> {
        let conn = match (edges, radius) {
            (Some(_), Some(_)) => return Err(PyValueError::new_err("pass edges or radius, not both")),
            (_, Some(r)) => Connectivity::Radius(r),
            (Some(m), None) => Connectivity::Edges(m),
            (None, None) => Connectivity::Edges(236),
        };
        Ok(Graph {
            inner: graph::generate_sensor_graph(nodes, conn, seed).py()?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Graph {
            inner: graph::load_graph(&path).py()?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Graph {
            inner: graph::parse_graph(text).py()?,
        })
    }

    fn to_text(&self) -> String {
        graph::write_graph(&self.inner)
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.u, e.v, e.w)).collect()
    }

    fn degrees(&self) -> Vec<f64> {
        self.inner.degrees()
    }

    fn is_connected(&self) -> bool {
        self.inner.is_connected()
    }

    #[pyo3(signature = (kind="scaled_laplacian"))]
    fn shift(&self, kind: &str) -> PyResult<Shift> {
        Ok(Shift {
            graph: self.inner.clone(),
            kind: shift_kind(kind)?,
            op: graph::build_shift(&self.inner, &shift_kind(kind)?).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.inner.node_count(), self.inner.edge_count())
    }
}

/// A graph shift operator together with the graph it came from.
#[pyclass(module = "qefb")]
struct Shift {
    graph: graph::Graph,
    kind: ShiftKind,
    op: ShiftOperator,
}

impl Shift {
    fn res(&self, p: f64) -> PyResult<ResModel> {
        ResModel::new(self.graph.clone(), p, self.kind.clone()).py()
    }
}

#[pymethods]
impl Shift {
    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(self.op.matrix())
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.op.rho()
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.op.node_count()
    }

    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        Ok(graph::spectral_decompose(&self.op).py()?.eigenvalues.iter().copied().collect())
    }

    /// Expected shift under random edge sampling with retention `p`.
    fn mean(&self, p: f64) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&graph::mean_shift(&self.res(p)?)))
    }

    /// One random edge sampling realization.
    fn sample(&self, p: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(rows(graph::sample_res(&self.res(p)?, &mut rng).matrix()))
    }
}

#[derive(Clone)]
enum Kind {
    Fir(FirFilter),
    Arma(ArmaFilter),
}

#[pyclass(module = "qefb")]
struct Filter {
    kind: Kind,
}

#[pymethods]
impl Filter {
    #[staticmethod]
    fn fir(taps: Vec<f64>) -> PyResult<Self> {
        Ok(Filter {
            kind: Kind::Fir(FirFilter::new(taps).py()?),
        })
    }

    /// Least-squares low-pass taps on the shift's spectral interval.
    #[staticmethod]
    #[pyo3(signature = (shift, order, cutoff=0.5))]
    fn lowpass(shift: PyRef<'_, Shift>, order: usize, cutoff: f64) -> PyResult<Self> {
        let d = filters::design_lowpass_fir(&shift.op, order, cutoff).py()?;
        Ok(Filter { kind: Kind::Fir(d.filter) })
    }

    /// Branches as `(psi, phi)` pairs.
    #[staticmethod]
    fn arma(branches: Vec<(f64, f64)>) -> PyResult<Self> {
        let b = branches.into_iter().map(|(psi, phi)| ArmaBranch { psi, phi }).collect();
        Ok(Filter {
            kind: Kind::Arma(ArmaFilter::new(b).py()?),
        })
    }

    /// `(I + c S)^{-1}`.
    #[staticmethod]
    fn arma1(c: f64, shift: PyRef<'_, Shift>) -> PyResult<Self> {
        Ok(Filter {
            kind: Kind::Arma(filters::arma1(c, &shift.op).py()?),
        })
    }

    #[getter]
    fn is_arma(&self) -> bool {
        matches!(self.kind, Kind::Arma(_))
    }

    fn taps(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Fir(f) => Some(f.taps().to_vec()),
            Kind::Arma(_) => None,
        }
    }

    fn branches(&self) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            Kind::Fir(_) => None,
            Kind::Arma(a) => Some(a.branches().iter().map(|b| (b.psi, b.phi)).collect()),
        }
    }

    fn response(&self, lambda: f64) -> f64 {
        match &self.kind {
            Kind::Fir(f) => f.response(lambda),
            Kind::Arma(a) => a.response(lambda),
        }
    }

    /// Exact output on a fixed shift. ARMA filters iterate to convergence.
    #[pyo3(signature = (shift, x, tol=1e-12, max_iter=100_000))]
    fn apply(&self, shift: PyRef<'_, Shift>, x: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
        let x = Vector::from_vec(x);
        let y = match &self.kind {
            Kind::Fir(f) => filters::run_fir_exact(&shift.op, f, &x).py()?,
            Kind::Arma(a) => filters::run_arma_exact(&shift.op, a, &x, tol, max_iter).py()?.output,
        };
        Ok(y.iter().copied().collect())
    }
}

/// Quadratic output-noise model of a filter on a fixed (`p = None`) or
/// randomly sampled (`p` given) topology.
#[pyclass(module = "qefb")]
struct NoiseModel {
    inner: CoreNoiseModel,
}

impl NoiseModel {
    fn plan(&self, mode: &str, params: Option<Vec<f64>>) -> PyResult<FeedbackPlan> {
        let mode: FeedbackMode = from_str("feedback mode", mode)?;
        let (n, k) = (self.inner.nodes, self.inner.stages());
        match params {
            Some(p) => FeedbackPlan::from_params(mode, n, k, &p).py(),
            None if mode == FeedbackMode::Off => Ok(FeedbackPlan::off(n, k)),
            None => Ok(self.inner.solve(mode).py()?.0),
        }
    }
}

#[pymethods]
impl NoiseModel {
    #[new]
    #[pyo3(signature = (shift, filter, sigma2, p=None))]
    fn new(shift: PyRef<'_, Shift>, filter: PyRef<'_, Filter>, sigma2: Vec<f64>, p: Option<f64>) -> PyResult<Self> {
        let inner = match (&filter.kind, p) {
            (Kind::Fir(f), None) => CoreNoiseModel::fir_deterministic(&shift.op, f, &sigma2),
            (Kind::Arma(a), None) => CoreNoiseModel::arma_deterministic(&shift.op, a, &sigma2, DEFAULT_GRAMIAN_TOL),
            (Kind::Fir(f), Some(p)) => CoreNoiseModel::fir_stochastic(&shift.res(p)?, f, &sigma2),
            (Kind::Arma(a), Some(p)) => {
                CoreNoiseModel::arma_stochastic(&shift.res(p)?, a, &sigma2, DEFAULT_GRAMIAN_TOL)
            }
        }
        .py()?;
        Ok(NoiseModel { inner })
    }

    #[getter]
    fn stages(&self) -> usize {
        self.inner.stages()
    }

    /// Closed-form parameters for `mode` and their predicted noise power.
    fn solve(&self, mode: &str) -> PyResult<(Vec<f64>, f64)> {
        let mode: FeedbackMode = from_str("feedback mode", mode)?;
        let (plan, _) = self.inner.solve(mode).py()?;
        let zeta = self.inner.predict(&plan).py()?.zeta;
        Ok((plan.params(), zeta))
    }

    /// Noise prediction for explicit parameters, or the closed form when
    /// `params` is omitted.
    #[pyo3(signature = (mode="off", params=None))]
    fn predict<'py>(&self, py: Python<'py>, mode: &str, params: Option<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
        let plan = self.plan(mode, params)?;
        to_py(py, &self.inner.predict(&plan).py()?)
    }

    #[pyo3(signature = (mode, params=None))]
    fn gradient(&self, mode: &str, params: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let plan = self.plan(mode, params)?;
        self.inner.gradient(&plan).py()
    }
}

/// Quantizes `values`; returns `(quantized, error)` with
/// `values + error == quantized`.
#[pyfunction]
#[pyo3(signature = (values, bits, range=1.0, dither=true, seed=0))]
fn quantize(values: Vec<f64>, bits: u32, range: f64, dither: bool, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let d = if dither { Dither::Subtractive } else { Dither::Off };
    let cfg = QuantizerConfig::new(bits, range, d).py()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = quantizer::quantize(&Vector::from_vec(values), &cfg, &mut rng);
    Ok((r.quantized.iter().copied().collect(), r.error.iter().copied().collect()))
}

/// Per-sample noise variance of a `bits`-bit quantizer over `[-range, range]`.
#[pyfunction]
#[pyo3(signature = (bits, range=1.0))]
fn noise_variance(bits: u32, range: f64) -> PyResult<f64> {
    Ok(QuantizerConfig::new(bits, range, Dither::Subtractive).py()?.noise_variance())
}

/// Runs a scenario given as JSON text and returns the result table.
#[pyfunction]
#[pyo3(signature = (scenario, trials=None))]
fn simulate<'py>(py: Python<'py>, scenario: &str, trials: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let mut sc = Scenario::from_json(scenario).py()?;
    if let Some(t) = trials {
        sc.trials = t;
    }
    let table = py.detach(|| harness::run_experiment(&sc)).py()?;
    to_py(py, &table)
}

/// Closed-form plans and noise predictions for every cell of a scenario.
#[pyfunction]
fn predict<'py>(py: Python<'py>, scenario: &str) -> PyResult<Bound<'py, PyAny>> {
    let sc = Scenario::from_json(scenario).py()?;
    let cells = harness::predict_scenario(&sc.resolve().py()?).py()?;
    to_py(py, &cells)
}

/// Runs one oracle suite (`kernel`, `gramian`, `optimality`, `prediction`).
#[pyfunction]
#[pyo3(signature = (suite, quick=true, seed=None))]
fn validate<'py>(py: Python<'py>, suite: &str, quick: bool, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let suite = *Suite::ALL
        .iter()
        .find(|s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(|n| n == suite)) == Some(true))
        .ok_or_else(|| PyValueError::new_err(format!("unknown suite `{suite}`")))?;
    let mut opts = if quick {
        ValidateOptions::quick()
    } else {
        ValidateOptions::full()
    };
    if let Some(s) = seed {
        opts.seed = s;
    }
    let report = py.detach(|| run_suite(suite, &opts)).py()?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "qefb")]
fn qefb_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Shift>()?;
    m.add_class::<Filter>()?;
    m.add_class::<NoiseModel>()?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(noise_variance, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add("SNR_CAP_DB", harness::SNR_CAP_DB)?;
    Ok(())
}
