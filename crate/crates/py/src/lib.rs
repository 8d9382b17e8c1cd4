//! Python module `branchlaw`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use branchlaw_core::dists::{self, MixedDist};
use branchlaw_core::kernel::{self, RawParams, Regime};
use branchlaw_core::mc::{self, SuiteConfig};
use branchlaw_core::quadrature::QuadratureConfig;
use branchlaw_core::sim::{self, RngStream};
use branchlaw_core::tree::{self as core_tree, ReconTree};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Birth and death rates after accounting for sampling.
#[pyclass(name = "Params", module = "branchlaw", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyParams(kernel::Params);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (lam, mu = 0.0))]
    fn new(lam: f64, mu: f64) -> PyResult<Self> {
        kernel::Params::new(lam, mu).map(Self).map_err(value_err)
    }

    /// Rates seen in a reconstructed tree when each species is sampled with
    /// probability `f`.
    #[staticmethod]
    #[pyo3(signature = (lambda_hat, mu_hat, f = 1.0))]
    fn from_raw(lambda_hat: f64, mu_hat: f64, f: f64) -> PyResult<Self> {
        let raw = RawParams::new(lambda_hat, mu_hat, f).map_err(value_err)?;
        kernel::transform_params(&raw).map(Self).map_err(value_err)
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn regime(&self) -> &'static str {
        match self.0.regime() {
            Regime::Critical => "critical",
            Regime::Yule => "yule",
            Regime::Subcritical => "subcritical",
        }
    }

    fn p0(&self, s: f64) -> f64 {
        kernel::p0(s, &self.0)
    }

    fn p1(&self, s: f64) -> f64 {
        kernel::p1(s, &self.0)
    }

    fn prob_n_given_age(&self, n: u64, x1: f64) -> PyResult<f64> {
        kernel::prob_n_given_age(n, x1, &self.0).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Params(lam={}, mu={})", self.0.lambda, self.0.mu)
    }
}

/// A law on `[0, support_end]`, possibly with a point mass at the end.
#[pyclass(name = "Law", module = "branchlaw", frozen)]
struct PyLaw(MixedDist);

#[pymethods]
impl PyLaw {
    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn support_end(&self) -> f64 {
        self.0.support_end()
    }

    #[getter]
    fn atom(&self) -> f64 {
        self.0.atom_weight()
    }

    fn pdf(&self, s: f64) -> f64 {
        self.0.density(s)
    }

    /// Distribution function including the atom.
    fn cdf(&self, s: f64) -> f64 {
        self.0.cdf(s)
    }

    fn continuous_cdf(&self, s: f64) -> f64 {
        self.0.continuous_cdf(s)
    }

    fn mean(&self) -> PyResult<f64> {
        self.0.mean(&QuadratureConfig::default()).map_err(value_err)
    }

    fn variance(&self) -> PyResult<f64> {
        self.0.variance(&QuadratureConfig::default()).map_err(value_err)
    }

    fn total_mass(&self) -> PyResult<f64> {
        self.0.total_mass(&QuadratureConfig::tight()).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Law({:?})", self.0.name())
    }
}

fn law(r: Result<MixedDist, dists::LawError>) -> PyResult<PyLaw> {
    r.map(PyLaw).map_err(value_err)
}

#[pyfunction]
fn pendant_given_n(p: PyParams) -> PyLaw {
    PyLaw(dists::pendant_dist_given_n(&p.0))
}

#[pyfunction]
fn pendant_given_n_age(n: u64, x1: f64, p: PyParams) -> PyResult<PyLaw> {
    law(dists::pendant_dist_given_n_age(n, x1, &p.0))
}

#[pyfunction]
fn pendant_given_age(x1: f64, p: PyParams) -> PyResult<PyLaw> {
    law(dists::pendant_dist_given_age(x1, &p.0))
}

#[pyfunction]
fn interior_yule(p: PyParams) -> PyResult<PyLaw> {
    law(dists::interior_dist_yule(&p.0))
}

#[pyfunction]
fn root_edge_given_n(n: u64, p: PyParams) -> PyResult<PyLaw> {
    law(dists::root_edge_dist_given_n(n, &p.0))
}

#[pyfunction]
fn speciation_time(k: u64, n: u64, x1: f64, p: PyParams) -> PyResult<PyLaw> {
    law(dists::speciation_time_dist(k, n, x1, &p.0))
}

#[pyfunction]
fn hypoexp(k: u64, p: PyParams) -> PyResult<PyLaw> {
    law(dists::hypoexp_dist(k, &p.0))
}

#[pyfunction]
fn diversity_given_n(n: u64, p: PyParams) -> PyResult<PyLaw> {
    law(dists::diversity_dist_given_n(n, &p.0))
}

#[pyfunction]
fn root_edge_survival_given_n_age(l: f64, n: u64, x1: f64, p: PyParams) -> PyResult<f64> {
    dists::root_edge_survival_given_n_age(l, n, x1, &p.0).map_err(value_err)
}

#[pyfunction]
fn diversity_mgf_given_n_age(s: f64, n: u64, x1: f64, p: PyParams) -> PyResult<f64> {
    dists::diversity_mgf_given_n_age(s, n, x1, &p.0).map_err(value_err)
}

#[pyfunction]
fn root_edge_limit_constant() -> PyResult<f64> {
    dists::root_edge_limit_constant(&QuadratureConfig::tight()).map_err(value_err)
}

/// Expected branch lengths and diversities as `(label, value or None)` pairs.
#[pyfunction]
fn expectations(p: PyParams, n: u64, x1: f64) -> PyResult<Vec<(String, Option<f64>)>> {
    let rows = branchlaw_core::cli::expectation_table(&p.0, n, x1).map_err(value_err)?;
    Ok(rows.into_iter().map(|r| (r.quantity, r.value)).collect())
}

/// An ultrametric binary tree of sampled extant species.
#[pyclass(name = "Tree", module = "branchlaw", frozen)]
struct PyTree(ReconTree);

#[pymethods]
impl PyTree {
    #[staticmethod]
    fn from_newick(text: &str) -> PyResult<Self> {
        core_tree::from_newick(text).map(Self).map_err(value_err)
    }

    fn newick(&self) -> String {
        core_tree::to_newick(&self.0)
    }

    #[getter]
    fn n_leaves(&self) -> usize {
        self.0.n_leaves()
    }

    #[getter]
    fn age(&self) -> f64 {
        self.0.age()
    }

    fn pendant_lengths(&self) -> Vec<f64> {
        core_tree::tree_stats(&self.0).pendant_lengths
    }

    fn interior_lengths(&self) -> Vec<f64> {
        core_tree::tree_stats(&self.0).interior_lengths
    }

    /// `(shorter, longer)`.
    fn root_edge_lengths(&self) -> (f64, f64) {
        let [a, b] = core_tree::tree_stats(&self.0).root_edge_lengths;
        (a, b)
    }

    fn speciation_times(&self) -> Vec<f64> {
        core_tree::tree_stats(&self.0).speciation_times
    }

    fn diversity(&self) -> f64 {
        core_tree::tree_stats(&self.0).diversity
    }

    fn __repr__(&self) -> String {
        format!("Tree(n_leaves={}, age={})", self.0.n_leaves(), self.0.age())
    }
}

fn draw<F>(count: usize, seed: u64, stream: u64, mut f: F) -> PyResult<Vec<PyTree>>
where
    F: FnMut(&mut RngStream) -> Result<ReconTree, sim::SimError>,
{
    let mut rng = RngStream::new(seed, stream);
    (0..count)
        .map(|_| f(&mut rng).map(PyTree).map_err(|e| PyRuntimeError::new_err(e.to_string())))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (n, p, count = 1, seed = 0, stream = 0))]
fn sample_yule_given_n(n: usize, p: PyParams, count: usize, seed: u64, stream: u64) -> PyResult<Vec<PyTree>> {
    draw(count, seed, stream, |rng| sim::sample_yule_given_n(n, &p.0, rng))
}

#[pyfunction]
#[pyo3(signature = (n, x1, p, count = 1, seed = 0, stream = 0))]
fn sample_given_n_age(n: usize, x1: f64, p: PyParams, count: usize, seed: u64, stream: u64) -> PyResult<Vec<PyTree>> {
    draw(count, seed, stream, |rng| sim::sample_given_n_age(n, x1, &p.0, rng))
}

#[pyfunction]
#[pyo3(signature = (x1, p, count = 1, seed = 0, stream = 0))]
fn sample_given_age(x1: f64, p: PyParams, count: usize, seed: u64, stream: u64) -> PyResult<Vec<PyTree>> {
    draw(count, seed, stream, |rng| sim::sample_given_age(x1, &p.0, rng))
}

/// Forward simulation of the raw process, keeping runs whose reconstructed
/// root age equals `x1`.
#[pyfunction]
#[pyo3(signature = (x1, lambda_hat, mu_hat, f, count = 1, seed = 0, stream = 0, max_attempts = sim::DEFAULT_MAX_ATTEMPTS))]
#[allow(clippy::too_many_arguments)]
fn sample_rejection_given_age(
    x1: f64,
    lambda_hat: f64,
    mu_hat: f64,
    f: f64,
    count: usize,
    seed: u64,
    stream: u64,
    max_attempts: u64,
) -> PyResult<Vec<PyTree>> {
    let raw = RawParams::new(lambda_hat, mu_hat, f).map_err(value_err)?;
    draw(count, seed, stream, |rng| {
        sim::sample_rejection_given_age(x1, &raw, max_attempts, rng).map(|r| r.tree)
    })
}

/// Runs named checks (or `"full"`) and returns the reports as a JSON string.
#[pyfunction]
#[pyo3(signature = (checks, seed = 7, reps = 100_000))]
fn verify(py: Python<'_>, checks: Vec<String>, seed: u64, reps: usize) -> PyResult<String> {
    let cfg = SuiteConfig { seed, reps, n: None };
    let reports = py
        .detach(|| mc::verify_suite(&checks, &cfg))
        .map_err(value_err)?;
    serde_json::to_string(&reports).map_err(value_err)
}

#[pymodule]
fn branchlaw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyLaw>()?;
    m.add_class::<PyTree>()?;
    m.add("CHECKS", mc::CHECKS.to_vec())?;
    m.add_function(wrap_pyfunction!(pendant_given_n, m)?)?;
    m.add_function(wrap_pyfunction!(pendant_given_n_age, m)?)?;
    m.add_function(wrap_pyfunction!(pendant_given_age, m)?)?;
    m.add_function(wrap_pyfunction!(interior_yule, m)?)?;
    m.add_function(wrap_pyfunction!(root_edge_given_n, m)?)?;
    m.add_function(wrap_pyfunction!(speciation_time, m)?)?;
    m.add_function(wrap_pyfunction!(hypoexp, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_given_n, m)?)?;
    m.add_function(wrap_pyfunction!(root_edge_survival_given_n_age, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_mgf_given_n_age, m)?)?;
    m.add_function(wrap_pyfunction!(root_edge_limit_constant, m)?)?;
    m.add_function(wrap_pyfunction!(expectations, m)?)?;
    m.add_function(wrap_pyfunction!(sample_yule_given_n, m)?)?;
    m.add_function(wrap_pyfunction!(sample_given_n_age, m)?)?;
    m.add_function(wrap_pyfunction!(sample_given_age, m)?)?;
    m.add_function(wrap_pyfunction!(sample_rejection_given_age, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
