//! Python bindings: targets, grids, the sampler, metrics and the verification checks.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use slips::experiment::{self, ExperimentConfig, Overrides};
use slips::metrics::{self, Bins, Samples};
use slips::rng::seeded;
use slips::{localization, mcmc, sampler, verify, SlipsError};

create_exception!(pyslips, SlipsRuntimeError, PyException);

fn to_py(e: SlipsError) -> PyErr {
    match e {
        SlipsError::Io(msg) => PyOSError::new_err(msg),
        SlipsError::Step { .. } | SlipsError::NonFinite(_) => SlipsRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for slips::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Isotropic Gaussian mixture `sum_i w_i N(m_i, variance I)`.
#[pyclass(name = "GaussianMixture", module = "pyslips", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGaussianMixture {
    inner: slips::GaussianMixture,
}

#[pymethods]
impl PyGaussianMixture {
    #[new]
    fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variance: f64) -> PyResult<Self> {
        Ok(Self { inner: slips::GaussianMixture::new(weights, means, variance).py_err()? })
    }

    /// Two components at `+c 1` and `-c 1` with weights `w` and `1 - w`.
    #[staticmethod]
    #[pyo3(signature = (dim, c, variance, w = 0.5))]
    fn symmetric_bimodal(dim: usize, c: f64, variance: f64, w: f64) -> PyResult<Self> {
        Ok(Self { inner: slips::GaussianMixture::symmetric_bimodal(dim, c, variance, w).py_err()? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means().to_vec()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.inner.component_variance()
    }

    /// `E ||X - E X||^2`.
    #[getter]
    fn variance_proxy(&self) -> f64 {
        self.inner.variance_proxy()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&x).py_err()
    }

    fn grad_log_density(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_log_density(&x).py_err()
    }

    /// Closed-form posterior mean `E[X | tX + sigma B_t = y]`.
    fn denoiser(&self, t: f64, sigma: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.oracle_denoiser(t, sigma, &y).py_err()
    }

    fn posterior_trace_cov(&self, t: f64, sigma: f64, y: Vec<f64>) -> PyResult<f64> {
        self.inner.oracle_posterior_trace_cov(t, sigma, &y).py_err()
    }

    /// `n` exact draws.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, py: Python<'_>, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let g = &self.inner;
        py.detach(|| metrics::reference_samples(g, g.dim(), n, seed).rows().map(<[f64]>::to_vec).collect())
    }

    fn marginal(&self, i: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.marginal(i).py_err()? })
    }

    fn __repr__(&self) -> String {
        format!(
            "GaussianMixture(dim={}, components={}, variance={})",
            self.inner.dim(),
            self.inner.weights().len(),
            self.inner.component_variance()
        )
    }
}

/// A time grid `t_0 < ... < t_K`.
#[pyclass(name = "Discretization", module = "pyslips", frozen)]
struct PyDiscretization {
    inner: localization::Discretization,
}

#[pymethods]
impl PyDiscretization {
    /// Geometric grid `t_k = t0 (T / t0)^(k / K)`.
    #[staticmethod]
    fn log_snr(t0: f64, t_final: f64, k: usize) -> PyResult<Self> {
        Ok(Self { inner: localization::Discretization::log_snr(t0, t_final, k).py_err()? })
    }

    #[staticmethod]
    fn uniform(t0: f64, t_final: f64, k: usize) -> PyResult<Self> {
        Ok(Self { inner: localization::Discretization::uniform(t0, t_final, k).py_err()? })
    }

    #[staticmethod]
    fn custom(times: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: localization::Discretization::custom(times).py_err()? })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn c_disc(&self) -> f64 {
        self.inner.c_disc()
    }

    fn __len__(&self) -> usize {
        self.inner.times().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Discretization(kind={}, t0={}, t_final={}, k={})",
            self.inner.kind(),
            self.inner.t0(),
            self.inner.t_final(),
            self.inner.steps()
        )
    }
}

/// Sampler settings. `sigma=None` picks the default noise level.
#[pyclass(name = "SlipsConfig", module = "pyslips", frozen)]
struct PySlipsConfig {
    inner: sampler::SlipsConfig,
}

#[pymethods]
impl PySlipsConfig {
    #[new]
    #[pyo3(signature = (
        t0 = 0.02, t_final = 1000.0, k = 200, m = 200, n_init = 20, sigma = None, seed = 0,
        denoiser = "mala", grid = "log-snr", mala_step = 0.5, mala_adapt = true,
        burn_in_fraction = 0.2, warm_start_init = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        t0: f64,
        t_final: f64,
        k: usize,
        m: usize,
        n_init: usize,
        sigma: Option<f64>,
        seed: u64,
        denoiser: &str,
        grid: &str,
        mala_step: f64,
        mala_adapt: bool,
        burn_in_fraction: f64,
        warm_start_init: bool,
    ) -> PyResult<Self> {
        let inner = sampler::SlipsConfig {
            t0,
            t_final,
            k,
            m,
            n_init,
            sigma: sigma.map_or(sampler::SigmaSpec::Auto, sampler::SigmaSpec::Value),
            mala: mcmc::MalaSettings { step_size: mala_step, adapt: mala_adapt, burn_in_fraction },
            seed,
            denoiser_mode: denoiser.parse().py_err()?,
            grid: grid.parse().py_err()?,
            warm_start_init,
        };
        inner.validate().py_err()?;
        Ok(Self { inner })
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn denoiser(&self) -> String {
        match self.inner.denoiser_mode {
            sampler::DenoiserMode::Mala => "mala".into(),
            sampler::DenoiserMode::Oracle => "oracle".into(),
        }
    }

    fn discretization(&self) -> PyResult<PyDiscretization> {
        Ok(PyDiscretization { inner: self.inner.discretization().py_err()? })
    }

    fn resolve_sigma(&self, target: &PyGaussianMixture) -> PyResult<f64> {
        self.inner.resolve_sigma(&target.inner).py_err()
    }
}

/// A check outcome.
#[pyclass(name = "CheckReport", module = "pyslips", frozen, get_all)]
struct PyCheckReport {
    name: String,
    passed: bool,
    observed: Vec<f64>,
    bound_or_target: Vec<f64>,
    tolerance: f64,
    n_samples: usize,
    notes: String,
    seed: Option<u64>,
    /// Check-specific extras as a JSON string.
    details_json: String,
}

impl From<verify::CheckReport> for PyCheckReport {
    fn from(r: verify::CheckReport) -> Self {
        Self {
            name: r.name,
            passed: r.passed,
            observed: r.observed,
            bound_or_target: r.bound_or_target,
            tolerance: r.tolerance,
            n_samples: r.n_samples,
            notes: r.notes,
            seed: r.seed,
            details_json: r.details.to_string(),
        }
    }
}

#[pymethods]
impl PyCheckReport {
    fn __repr__(&self) -> String {
        format!("CheckReport(name={:?}, passed={})", self.name, self.passed)
    }
}

/// Runs `n_runs` independent trajectories; returns the samples and the number of failed runs.
#[pyfunction]
#[pyo3(signature = (target, config, n_runs, workers = 0))]
fn run_batch(
    py: Python<'_>,
    target: &PyGaussianMixture,
    config: &PySlipsConfig,
    n_runs: usize,
    workers: usize,
) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let out = py.detach(|| sampler::run_batch(&target.inner, &config.inner, n_runs, workers, false)).py_err()?;
    Ok((out.samples(), out.failures.len()))
}

/// One trajectory on generator stream `run_index`; returns `(sample, grid, states)`.
#[pyfunction]
#[pyo3(signature = (target, config, run_index = 0))]
fn run_slips(
    py: Python<'_>,
    target: &PyGaussianMixture,
    config: &PySlipsConfig,
    run_index: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let r = py
        .detach(|| {
            let mut rng = slips::rng::stream_rng(config.inner.seed, run_index);
            sampler::run_slips(&target.inner, &config.inner, &mut rng)
        })
        .py_err()?;
    Ok((r.sample, r.grid, r.states))
}

/// Denoiser estimation error against the closed form, as `(value, std_error)`.
#[pyfunction]
#[pyo3(signature = (target, config, n_paths, seed = 0))]
fn estimate_eps0(
    py: Python<'_>,
    target: &PyGaussianMixture,
    config: &PySlipsConfig,
    n_paths: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let e = py.detach(|| mcmc::estimate_eps0(&target.inner, &config.inner, n_paths, seed)).py_err()?;
    Ok((e.value, e.std_error))
}

fn samples(rows: &[Vec<f64>]) -> PyResult<Samples> {
    Samples::from_rows(rows).py_err()
}

/// Sliced total variation between two sample sets, as `(value, std_error)`.
#[pyfunction]
#[pyo3(signature = (a, b, n_projections = 64, seed = 0, bins = None))]
fn sliced_tv(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    n_projections: usize,
    seed: u64,
    bins: Option<usize>,
) -> PyResult<(f64, f64)> {
    let (a, b) = (samples(&a)?, samples(&b)?);
    let bins = bins.map_or(Bins::FreedmanDiaconis, Bins::Fixed);
    let r = py
        .detach(|| metrics::sliced_tv(&a, &b, n_projections, bins, &mut seeded(seed)))
        .py_err()?;
    Ok((r.value(), r.std_error()))
}

/// Fraction of samples nearest to each mode.
#[pyfunction]
fn mode_weights(rows: Vec<Vec<f64>>, mode_means: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(metrics::mode_weights(&samples(&rows)?, &mode_means).py_err()?.values)
}

/// `[mean error / R, second-moment error / R^2]` against the target.
#[pyfunction]
fn moment_error(rows: Vec<Vec<f64>>, target: &PyGaussianMixture) -> PyResult<Vec<f64>> {
    Ok(metrics::moment_error(&samples(&rows)?, &target.inner).py_err()?.values)
}

#[pyfunction]
fn c_disc(times: Vec<f64>) -> PyResult<f64> {
    Ok(localization::Discretization::custom(times).py_err()?.c_disc())
}

/// Score `(t u - y) / (sigma^2 t)` of `p_t` from a denoiser value.
#[pyfunction]
fn tweedie_score(t: f64, sigma: f64, y: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
    localization::tweedie_score(t, sigma, &y, &u).py_err()
}

/// `0.5 * score_norm * sqrt(dim sigma^2 / t)`.
#[pyfunction]
fn tv_information_bound(score_norm: f64, dim: usize, sigma: f64, t: f64) -> PyResult<f64> {
    localization::tv_information_bound(score_norm, dim, sigma, t).py_err()
}

#[pyfunction]
fn sigma_default(variance_proxy: f64, dim: usize) -> PyResult<f64> {
    localization::sigma_default(variance_proxy, dim).py_err()
}

#[pyfunction]
#[pyo3(signature = (t0, t_final, k, n_restarts = 8, seed = 0))]
fn check_grid_optimality(t0: f64, t_final: f64, k: usize, n_restarts: usize, seed: u64) -> PyResult<PyCheckReport> {
    Ok(verify::check_grid_optimality(t0, t_final, k, n_restarts, seed).py_err()?.into())
}

#[pyfunction]
#[pyo3(signature = (target, sigma, times, n_paths = 100_000, seed = 0))]
fn check_martingale(
    py: Python<'_>,
    target: &PyGaussianMixture,
    sigma: f64,
    times: Vec<f64>,
    n_paths: usize,
    seed: u64,
) -> PyResult<PyCheckReport> {
    let r = py.detach(|| verify::check_martingale(&target.inner, sigma, &times, n_paths, seed)).py_err()?;
    Ok(r.into())
}

/// Runs a CLI command (`sample`, `verify` or `compare`) from a config file and
/// returns `(exit_code, output_directory)`.
#[pyfunction]
#[pyo3(signature = (command, config, out = None, seed = None, checks = Vec::new()))]
fn run_command(
    py: Python<'_>,
    command: &str,
    config: std::path::PathBuf,
    out: Option<std::path::PathBuf>,
    seed: Option<u64>,
    checks: Vec<String>,
) -> PyResult<(i32, String)> {
    let mut cfg = ExperimentConfig::load(&config).py_err()?;
    Overrides { seed, out, ..Overrides::default() }.apply(&mut cfg);
    let result = py.detach(|| match command {
        "sample" => experiment::cmd_sample(&cfg),
        "verify" => experiment::cmd_verify(&cfg, &checks),
        "compare" => experiment::cmd_compare(&cfg),
        other => Err(SlipsError::Config(format!("unknown command \"{other}\"; expected sample, verify or compare"))),
    });
    let out = result.py_err()?;
    Ok((out.outcome.exit_code(), out.directory.display().to_string()))
}

#[pymodule]
fn pyslips(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SlipsRuntimeError", m.py().get_type::<SlipsRuntimeError>())?;
    m.add_class::<PyGaussianMixture>()?;
    m.add_class::<PyDiscretization>()?;
    m.add_class::<PySlipsConfig>()?;
    m.add_class::<PyCheckReport>()?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(run_slips, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_eps0, m)?)?;
    m.add_function(wrap_pyfunction!(sliced_tv, m)?)?;
    m.add_function(wrap_pyfunction!(mode_weights, m)?)?;
    m.add_function(wrap_pyfunction!(moment_error, m)?)?;
    m.add_function(wrap_pyfunction!(c_disc, m)?)?;
    m.add_function(wrap_pyfunction!(tweedie_score, m)?)?;
    m.add_function(wrap_pyfunction!(tv_information_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_default, m)?)?;
    m.add_function(wrap_pyfunction!(check_grid_optimality, m)?)?;
    m.add_function(wrap_pyfunction!(check_martingale, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
