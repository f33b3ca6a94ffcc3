//! Python bindings. Matrices cross the boundary as lists of rows.

use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use cpfm_core::dcfm::{self, Architecture, PairData, Role, TrainConfig, TrainState};
use cpfm_core::gwot::{self, AdaptiveOptions, EmbeddingSet, GwotOptions};
use cpfm_core::kernels::{self, Dataset, GramMatrix};
use cpfm_core::plan_ops::PlanSampler;
use cpfm_core::sinkhorn::{CostMatrix, SinkhornOptions, TransportPlan};
use cpfm_core::{lowrank, metrics, oracle, sampler, synth};

fn err(e: cpfm_core::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn role(name: &str) -> PyResult<Role> {
    match name {
        "x" => Ok(Role::X),
        "y" => Ok(Role::Y),
        other => Err(PyValueError::new_err(format!("role must be `x` or `y`, got `{other}`"))),
    }
}

fn dataset(features: Vec<Vec<f64>>, labels: Option<Vec<i64>>) -> PyResult<Dataset> {
    Dataset::new(to_array(features)?, labels, None).map_err(err)
}

/// Labeled Gaussian mixture; returns `(features, labels)`.
#[pyfunction]
#[pyo3(signature = (n=512, d_x=10, classes=2, separation=6.0, sigma=1.0, seed=0))]
fn make_synthetic(
    n: usize,
    d_x: usize,
    classes: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<i64>)> {
    let spec = synth::MixtureSpec {
        classes,
        d_x,
        n,
        separation,
        sigma,
        seed,
    };
    let ds = synth::make_synthetic(&spec).map_err(err)?;
    Ok((to_rows(ds.features()), ds.labels().unwrap_or_default().to_vec()))
}

/// `gaussian`, `uniform_square` or `unit_circle` draws.
#[pyfunction]
#[pyo3(signature = (n, d_y, dist="gaussian", seed=0))]
fn draw_target(n: usize, d_y: usize, dist: &str, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let dist = dist.parse().map_err(err)?;
    Ok(to_rows(synth::draw_target(dist, n, d_y, seed).map_err(err)?.y()))
}

/// Label-aware Gaussian kernel; `sigma` defaults to the mean pairwise distance.
#[pyfunction]
#[pyo3(signature = (features, labels, sigma=None))]
fn image_kernel(features: Vec<Vec<f64>>, labels: Vec<i64>, sigma: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let ds = dataset(features, Some(labels))?;
    let sigma = match sigma {
        Some(s) => s,
        None => kernels::gaussian_bandwidth(&ds).map_err(err)?,
    };
    Ok(to_rows(kernels::image_kernel(&ds, sigma).map_err(err)?.entries()))
}

#[pyfunction]
fn rbf_kernel(features: Vec<Vec<f64>>, sigma: f64) -> PyResult<Vec<Vec<f64>>> {
    let ds = dataset(features, None)?;
    Ok(to_rows(kernels::rbf_kernel(&ds, sigma).map_err(err)?.entries()))
}

/// Entropic OT plan for a square cost matrix.
#[pyfunction]
fn sinkhorn(cost: Vec<Vec<f64>>, eps: f64) -> PyResult<Vec<Vec<f64>>> {
    let c = CostMatrix::new(to_array(cost)?).map_err(err)?;
    let plan = cpfm_core::sinkhorn::sinkhorn(&c, eps, &SinkhornOptions::default()).map_err(err)?;
    Ok(to_rows(plan.entries()))
}

/// Low-rank factor `G ≈ Φ Φᵀ`.
#[pyclass(name = "GramFactor", frozen)]
struct PyGramFactor(lowrank::GramFactor);

#[pymethods]
impl PyGramFactor {
    /// Pivoted Cholesky for PSD matrices.
    #[staticmethod]
    #[pyo3(signature = (gram, eta=lowrank::DEFAULT_ETA))]
    fn pivoted_cholesky(gram: Vec<Vec<f64>>, eta: f64) -> PyResult<Self> {
        let g = GramMatrix::new(to_array(gram)?).map_err(err)?;
        lowrank::pivoted_cholesky(&g, eta).map(Self).map_err(err)
    }

    /// Eigendecomposition with negative eigenvalues clipped.
    #[staticmethod]
    #[pyo3(signature = (gram, eta=lowrank::DEFAULT_ETA))]
    fn eigen(gram: Vec<Vec<f64>>, eta: f64) -> PyResult<Self> {
        let g = GramMatrix::new(to_array(gram)?).map_err(err)?;
        lowrank::eigen_factor(&g, eta).map(Self).map_err(err)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn phi(&self) -> Vec<Vec<f64>> {
        to_rows(self.0.phi())
    }

    #[getter]
    fn residual_trace(&self) -> f64 {
        self.0.residual_trace()
    }

    #[getter]
    fn clipped_mass(&self) -> f64 {
        self.0.clipped_mass()
    }

    fn __repr__(&self) -> String {
        format!("GramFactor(n={}, rank={})", self.0.n(), self.0.rank())
    }
}

#[pyclass(name = "GwotResult", frozen)]
struct PyGwotResult(gwot::GwotResult);

#[pymethods]
impl PyGwotResult {
    #[getter]
    fn plan(&self) -> Vec<Vec<f64>> {
        to_rows(self.0.plan.entries())
    }

    #[getter]
    fn objective_trace(&self) -> Vec<f64> {
        self.0.objective_trace.clone()
    }

    #[getter]
    fn unregularized_trace(&self) -> Vec<f64> {
        self.0.unregularized_trace.clone()
    }

    #[getter]
    fn final_epsilon(&self) -> f64 {
        self.0.final_epsilon
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn epsilon_history(&self) -> Vec<(f64, bool)> {
        self.0.epsilon_history.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "GwotResult(n={}, final_epsilon={:e}, iterations={})",
            self.0.plan.n(),
            self.0.final_epsilon,
            self.0.iterations
        )
    }
}

/// GWOT solve at a fixed ε.
#[pyfunction]
fn gwot_solve(factor: &PyGramFactor, embeddings: Vec<Vec<f64>>, eps: f64) -> PyResult<PyGwotResult> {
    let emb = EmbeddingSet::new(to_array(embeddings)?).map_err(err)?;
    gwot::solve(&factor.0, &emb, eps, &GwotOptions::default())
        .map(PyGwotResult)
        .map_err(err)
}

/// GWOT solve with the adaptive ε schedule; `delta` defaults to `eps_init / 1024`.
#[pyfunction]
#[pyo3(signature = (factor, embeddings, eps_init=0.01, delta=None))]
fn gwot_solve_adaptive(
    factor: &PyGramFactor,
    embeddings: Vec<Vec<f64>>,
    eps_init: f64,
    delta: Option<f64>,
) -> PyResult<PyGwotResult> {
    let emb = EmbeddingSet::new(to_array(embeddings)?).map_err(err)?;
    let mut opts = AdaptiveOptions::new(eps_init);
    if let Some(d) = delta {
        opts.delta = d;
    }
    gwot::solve_adaptive(&factor.0, &emb, &opts).map(PyGwotResult).map_err(err)
}

/// Dual-headed drift network.
#[pyclass(name = "DriftNet")]
struct PyDriftNet(dcfm::DriftNet);

#[pymethods]
impl PyDriftNet {
    #[new]
    #[pyo3(signature = (d_x, d_y, hidden=None, seed=0))]
    fn new(d_x: usize, d_y: usize, hidden: Option<Vec<usize>>, seed: u64) -> PyResult<Self> {
        let mut arch = Architecture::new(d_x, d_y);
        if let Some(h) = hidden {
            arch = arch.with_hidden(h);
        }
        dcfm::DriftNet::new(arch, seed).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        dcfm::load_checkpoint(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dcfm::save_checkpoint(path, &self.0).map_err(err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    /// Drift for role `x` (output in ℝ^{d_x}) or `y` (output in ℝ^{d_y}).
    fn forward(&self, x: Vec<f64>, y: Vec<f64>, t: f64, role_name: &str) -> PyResult<Vec<f64>> {
        let out = self
            .0
            .forward(ndarray::aview1(&x), ndarray::aview1(&y), t, role(role_name)?)
            .map_err(err)?;
        Ok(out.to_vec())
    }

    /// Trains on a coupling between the rows of `x` and `y`; returns the
    /// per-epoch `(mean_loss_x, mean_loss_y)`.
    #[pyo3(signature = (plan, x, y, epochs=200, lr=1e-4, alpha=0.5, batch=128, steps_per_epoch=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        plan: Vec<Vec<f64>>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        epochs: usize,
        lr: f64,
        alpha: f64,
        batch: usize,
        steps_per_epoch: Option<usize>,
        seed: u64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let plan = TransportPlan::new(to_array(plan)?, 1e-6).map_err(err)?;
        let (x, y) = (to_array(x)?, to_array(y)?);
        let cfg = TrainConfig {
            alpha,
            lr,
            batch,
            epochs,
            seed,
            steps_per_epoch,
            ..Default::default()
        };
        let mut state = TrainState::new(self.0.clone(), cfg).map_err(err)?;
        let mut sampler = PlanSampler::new(plan, seed.wrapping_add(1));
        let data = PairData {
            x: x.view(),
            y: y.view(),
        };
        let logs = dcfm::train(&mut state, &mut sampler, &data, |_| {}).map_err(err)?;
        self.0 = state.net;
        Ok(logs.iter().map(|l| (l.mean_loss_x, l.mean_loss_y)).collect())
    }

    /// Euler samples, one per condition row: role `y` maps data rows to
    /// embeddings, role `x` maps embeddings to data. Row i uses `seed + i`.
    #[pyo3(signature = (conditions, role_name, steps=sampler::DEFAULT_STEPS, seed=0))]
    fn sample(&self, conditions: Vec<Vec<f64>>, role_name: &str, steps: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let cond = to_array(conditions)?;
        let seeds: Vec<u64> = (0..cond.nrows() as u64).map(|i| seed.wrapping_add(i)).collect();
        let out = sampler::euler_sample_batch(&self.0, cond.view(), role(role_name)?, steps, &seeds).map_err(err)?;
        Ok(to_rows(&out))
    }

    fn __repr__(&self) -> String {
        let a = self.0.arch();
        format!("DriftNet(d_x={}, d_y={}, hidden={:?})", a.d_x, a.d_y, a.hidden)
    }
}

/// Entropic OT objective against a seeded standard-normal reference.
#[pyfunction]
#[pyo3(signature = (y, eps=metrics::DEFAULT_METRIC_EPSILON, seed=0))]
fn wasserstein_to_gaussian(y: Vec<Vec<f64>>, eps: f64, seed: u64) -> PyResult<f64> {
    metrics::wasserstein_to_gaussian(to_array(y)?.view(), eps, seed).map_err(err)
}

/// Every brute-force oracle as `(name, max_error, tolerance, passed)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn run_oracles(seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let reports = oracle::run_all(seed).map_err(err)?;
    Ok(reports
        .into_iter()
        .map(|r| (r.name.to_string(), r.max_error, r.tolerance, r.passed()))
        .collect())
}

#[pymodule]
fn cpfm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGramFactor>()?;
    m.add_class::<PyGwotResult>()?;
    m.add_class::<PyDriftNet>()?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(draw_target, m)?)?;
    m.add_function(wrap_pyfunction!(image_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(gwot_solve, m)?)?;
    m.add_function(wrap_pyfunction!(gwot_solve_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_to_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(run_oracles, m)?)?;
    Ok(())
}
