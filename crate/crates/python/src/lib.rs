//! Python bindings: sampling plans, coherence analysis, CoSaMP recovery and
//! scenario runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mass_core::coherence::{
    mutual_coherence_with, overlap_probability_closed_form, overlap_probability_monte_carlo,
    prop2_success_bound, CoherenceMethod,
};
use mass_core::harness::{self, OperatingPoints, ResolvedScenario};
use mass_core::recovery::{self, SparseRecoveryConfig};
use mass_core::rng::{stream, Purpose};
use mass_core::sampler::{self, StackedSystem};
use mass_core::MassError;

fn py_err(e: MassError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Branch lengths over an `N`-bin Nyquist grid.
#[pyclass(name = "SamplingPlan", module = "mass_py", frozen)]
pub struct PySamplingPlan {
    inner: sampler::SamplingPlan,
}

#[pymethods]
impl PySamplingPlan {
    #[new]
    #[pyo3(signature = (nyquist_n, branch_lengths, observation_s = 1.0))]
    fn new(nyquist_n: usize, branch_lengths: Vec<usize>, observation_s: f64) -> PyResult<Self> {
        let inner = sampler::SamplingPlan::new(nyquist_n, observation_s, branch_lengths).map_err(py_err)?;
        Ok(PySamplingPlan { inner })
    }

    /// `v` consecutive primes starting at the first prime `>= ceil(a·sqrt(N))`.
    #[staticmethod]
    #[pyo3(signature = (nyquist_n, v, a = 1.0))]
    fn select(nyquist_n: usize, v: usize, a: f64) -> PyResult<Self> {
        Ok(PySamplingPlan { inner: sampler::select_primes(nyquist_n, v, a).map_err(py_err)? })
    }

    #[getter]
    fn nyquist_n(&self) -> usize {
        self.inner.nyquist_n()
    }

    #[getter]
    fn branch_lengths(&self) -> Vec<usize> {
        self.inner.branch_lengths().to_vec()
    }

    #[getter]
    fn rates_hz(&self) -> Vec<f64> {
        self.inner.rates_hz()
    }

    #[getter]
    fn sum_ratio(&self) -> f64 {
        self.inner.sum_ratio()
    }

    #[getter]
    fn mean_ratio(&self) -> f64 {
        self.inner.mean_ratio()
    }

    fn is_valid(&self) -> bool {
        self.inner.is_valid()
    }

    /// Dense 0/1 aliasing matrix of branch `i` as a list of rows.
    fn alias_matrix(&self, i: usize) -> PyResult<Vec<Vec<u8>>> {
        self.inner
            .alias_matrices()
            .get(i)
            .map(|a| a.dense())
            .ok_or_else(|| PyValueError::new_err(format!("branch {i} out of range")))
    }

    /// Noiseless stacked measurements `y = Φx`.
    fn measure(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(StackedSystem::measure(&self.inner, &x).map_err(py_err)?.y().to_vec())
    }

    /// Mutual coherence of the stacked operator.
    fn coherence(&self) -> PyResult<f64> {
        let sys = StackedSystem::new(&self.inner, vec![0.0; self.inner.total_samples()]).map_err(py_err)?;
        Ok(mutual_coherence_with(&sys, CoherenceMethod::Auto).map_err(py_err)?.mu)
    }

    /// Lower bound on the exact-recovery probability of a `k`-sparse spectrum.
    fn success_bound(&self, k: usize) -> PyResult<f64> {
        if k == 0 {
            return Err(PyValueError::new_err("k must be >= 1"));
        }
        Ok(prop2_success_bound(k, &self.inner))
    }

    /// CoSaMP on measurements `y`; returns a dict with `magnitude`, `support`,
    /// `residual_norm`, `iterations`, `converged` and `rank_deficient`.
    #[pyo3(signature = (y, k, max_iterations = 50, residual_tolerance = 1e-6))]
    fn recover<'py>(
        &self,
        py: Python<'py>,
        y: Vec<f64>,
        k: usize,
        max_iterations: usize,
        residual_tolerance: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sys = StackedSystem::new(&self.inner, y).map_err(py_err)?;
        let cfg = SparseRecoveryConfig { sparsity: k, max_iterations, residual_tolerance };
        let rec = recovery::cosamp(&sys, &cfg).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("magnitude", rec.magnitude)?;
        d.set_item("support", rec.support)?;
        d.set_item("residual_norm", rec.residual_norm)?;
        d.set_item("iterations", rec.iterations)?;
        d.set_item("converged", rec.converged)?;
        d.set_item("rank_deficient", rec.rank_deficient)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("SamplingPlan(nyquist_n={}, branch_lengths={:?})", self.inner.nyquist_n(), self.inner.branch_lengths())
    }
}

/// A scenario loaded from JSON and resolved.
#[pyclass(name = "Scenario", module = "mass_py", frozen)]
pub struct PyScenario {
    inner: ResolvedScenario,
}

fn resolve(mut s: harness::Scenario, trials: Option<usize>, seed: Option<u64>) -> PyResult<PyScenario> {
    if let Some(t) = trials {
        s.trials = t;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(PyScenario { inner: s.resolve().map_err(py_err)? })
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (text, trials = None, seed = None))]
    fn from_json(text: &str, trials: Option<usize>, seed: Option<u64>) -> PyResult<Self> {
        resolve(harness::Scenario::from_json(text).map_err(py_err)?, trials, seed)
    }

    #[staticmethod]
    #[pyo3(signature = (path, trials = None, seed = None))]
    fn load(path: PathBuf, trials: Option<usize>, seed: Option<u64>) -> PyResult<Self> {
        resolve(harness::Scenario::load(&path).map_err(py_err)?, trials, seed)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.scenario.to_json().map_err(py_err)
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn nyquist_n(&self) -> usize {
        self.inner.signal.nyquist_n()
    }

    #[getter]
    fn sparsity(&self) -> usize {
        self.inner.recovery.sparsity
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db()
    }

    #[getter]
    fn plan(&self) -> PySamplingPlan {
        PySamplingPlan { inner: self.inner.plan.clone() }
    }

    /// ROC of the target band; `pfas` defaults to the scenario's targets.
    #[pyo3(signature = (pfas = None))]
    fn roc<'py>(&self, py: Python<'py>, pfas: Option<Vec<f64>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let targets = pfas.unwrap_or_else(|| self.inner.scenario.detection.roc_pfas.clone());
        let ctx = &self.inner;
        let points = py
            .detach(|| harness::roc_sweep(ctx, &OperatingPoints::TargetPfas(targets)))
            .map_err(py_err)?;
        points
            .iter()
            .map(|p| {
                let d = PyDict::new(py);
                d.set_item("pfa", p.pfa)?;
                d.set_item("pd", p.pd)?;
                d.set_item("threshold", p.threshold)?;
                d.set_item("trials", p.trials)?;
                Ok(d)
            })
            .collect()
    }

    /// Runs every trial and returns per-band occupancy summaries.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let ctx = &self.inner;
        let out = py.detach(|| harness::run_pipeline(ctx)).map_err(py_err)?;
        harness::band_summaries(ctx, &out)
            .iter()
            .map(|b| {
                let d = PyDict::new(py);
                d.set_item("band", b.band)?;
                d.set_item("low_hz", b.low_hz)?;
                d.set_item("high_hz", b.high_hz)?;
                d.set_item("threshold", b.threshold)?;
                d.set_item("pd", b.pd)?;
                d.set_item("pfa", b.pfa)?;
                Ok(d)
            })
            .collect()
    }
}

/// Probability that at most one occupied bin folds onto a fullest row.
#[pyfunction]
fn overlap_probability(k: usize, n: usize, m: usize) -> PyResult<f64> {
    if !(m > 0 && m < n && k <= n) {
        return Err(PyValueError::new_err("need 0 < m < n and k <= n"));
    }
    Ok(overlap_probability_closed_form(k, n, m))
}

/// Monte-Carlo estimate of [`overlap_probability`] as `(value, three_sigma)`.
#[pyfunction]
#[pyo3(signature = (k, n, m, trials = 100_000, seed = 0))]
fn overlap_monte_carlo(k: usize, n: usize, m: usize, trials: usize, seed: u64) -> PyResult<(f64, f64)> {
    if !(m > 0 && m < n && k <= n && trials > 0) {
        return Err(PyValueError::new_err("need 0 < m < n, k <= n and trials > 0"));
    }
    let mut rng = stream(seed, Purpose::Overlap, 0, 0);
    let e = overlap_probability_monte_carlo(k, n, m, trials, &mut rng);
    Ok((e.value, e.half_width))
}

#[pymodule]
fn mass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySamplingPlan>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(overlap_probability, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_monte_carlo, m)?)?;
    Ok(())
}
