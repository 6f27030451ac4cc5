//! Python bindings for `exitwalk`.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use exitwalk::coeffs;
use exitwalk::harness;
use exitwalk::{Error, Side};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::SigmaBelowFloor { .. } => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

type Skeleton = (PyExitSample, Vec<(f64, f64)>, Vec<f64>);
type EulerRow = (f64, f64, Option<&'static str>, bool);

fn side_str(side: Option<Side>) -> Option<&'static str> {
    side.map(Side::as_str)
}

/// Calls a Python function of one float; failures become NaN, which the
/// numerical routines report as errors.
fn py_scalar(f: Py<PyAny>) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    move |t| Python::attach(|py| f.call1(py, (t,)).and_then(|v| v.extract::<f64>(py)).unwrap_or(f64::NAN))
}

/// Coefficients `α, β, σ` of `dX = (α(t) X + β(t)) dt + σ(t) dW`.
#[pyclass(name = "Coefficients", module = "exitwalk_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCoefficients {
    inner: exitwalk::CoefficientSet,
}

#[pymethods]
impl PyCoefficients {
    #[staticmethod]
    fn brownian() -> Self {
        Self { inner: exitwalk::CoefficientSet::brownian() }
    }

    #[staticmethod]
    fn constant(alpha0: f64, beta0: f64, sigma0: f64) -> PyResult<Self> {
        Ok(Self { inner: exitwalk::CoefficientSet::constant(alpha0, beta0, sigma0).map_err(to_py)? })
    }

    #[staticmethod]
    fn ou(k: f64, mu: f64, sigma0: f64) -> PyResult<Self> {
        Ok(Self { inner: exitwalk::CoefficientSet::ornstein_uhlenbeck(k, mu, sigma0).map_err(to_py)? })
    }

    #[staticmethod]
    fn sinusoidal() -> Self {
        Self { inner: exitwalk::CoefficientSet::sinusoidal() }
    }

    /// Coefficients given by Python callables. Every evaluation takes the
    /// interpreter lock, so these are much slower than the presets.
    #[staticmethod]
    fn from_callables(alpha: Py<PyAny>, beta: Py<PyAny>, sigma: Py<PyAny>, sigma_floor: f64) -> PyResult<Self> {
        let inner = exitwalk::CoefficientSet::new(py_scalar(alpha), py_scalar(beta), py_scalar(sigma), sigma_floor)
            .map_err(to_py)?
            .named("python");
        Ok(Self { inner })
    }

    /// The same coefficients with every primitive computed by quadrature.
    fn without_closed_forms(&self) -> Self {
        Self { inner: self.inner.without_closed_forms() }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn alpha(&self, t: f64) -> f64 {
        self.inner.alpha(t)
    }

    fn beta(&self, t: f64) -> f64 {
        self.inner.beta(t)
    }

    fn sigma(&self, t: f64) -> PyResult<f64> {
        self.inner.sigma(t).map_err(to_py)
    }

    fn theta(&self, t: f64) -> PyResult<f64> {
        coeffs::theta(&self.inner, t).map_err(to_py)
    }

    fn rho(&self, t: f64) -> PyResult<f64> {
        coeffs::rho(&self.inner, t).map_err(to_py)
    }

    fn rho_inv(&self, u: f64) -> PyResult<f64> {
        coeffs::rho_inv(&self.inner, u).map_err(to_py)
    }

    fn c(&self, t: f64) -> PyResult<f64> {
        coeffs::c_func(&self.inner, t).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Coefficients('{}')", self.inner.name())
    }
}

#[pyclass(name = "ExitSample", module = "exitwalk_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyExitSample {
    time: f64,
    position: f64,
    side: Option<&'static str>,
    steps: u64,
    censored: bool,
}

impl From<exitwalk::ExitSample> for PyExitSample {
    fn from(s: exitwalk::ExitSample) -> Self {
        Self { time: s.time, position: s.position, side: side_str(s.side), steps: s.steps, censored: s.censored }
    }
}

#[pymethods]
impl PyExitSample {
    fn __repr__(&self) -> String {
        format!(
            "ExitSample(time={}, position={}, side={:?}, steps={}, censored={})",
            self.time, self.position, self.side, self.steps, self.censored
        )
    }
}

/// Exit of an L-class diffusion from `[a, b]`.
#[pyclass(name = "ExitProblem", module = "exitwalk_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyExitProblem {
    inner: exitwalk::ExitProblem,
}

#[pymethods]
impl PyExitProblem {
    #[new]
    #[pyo3(signature = (coefficients, a, b, x0, *, t0=0.0, eps=1e-2, gamma=1e-4, m=None, max_steps=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        coefficients: &PyCoefficients,
        a: f64,
        b: f64,
        x0: f64,
        t0: f64,
        eps: f64,
        gamma: f64,
        m: Option<f64>,
        max_steps: Option<u64>,
    ) -> PyResult<Self> {
        let mut p = exitwalk::ExitProblem::new(coefficients.inner.clone(), a, b, x0)
            .and_then(|p| p.with_t0(t0))
            .and_then(|p| p.with_eps(eps))
            .and_then(|p| p.with_gamma(gamma))
            .map_err(to_py)?;
        if let Some(m) = m {
            p = p.with_m(m).map_err(to_py)?;
        }
        if let Some(n) = max_steps {
            p = p.with_max_steps(n);
        }
        Ok(Self { inner: p })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a()
    }
    #[getter]
    fn b(&self) -> f64 {
        self.inner.b()
    }
    #[getter]
    fn x0(&self) -> f64 {
        self.inner.x0()
    }
    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0()
    }
    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps()
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma_shell()
    }
    #[getter]
    fn m(&self) -> f64 {
        self.inner.m()
    }

    fn delta_m(&self, t0: f64, x0: f64) -> PyResult<f64> {
        self.inner.delta_m(t0, x0).map_err(to_py)
    }

    fn spheroid_scale(&self, t0: f64, x0: f64) -> PyResult<f64> {
        self.inner.spheroid_scale(t0, x0).map_err(to_py)
    }

    /// `(lower, upper)` boundary of the spheroid of scale `d` started at `(t0, x0)`, `t` after its start.
    fn psi_l(&self, t: f64, t0: f64, x0: f64, d: f64) -> PyResult<(f64, f64)> {
        self.inner.psi_l(t, t0, x0, d).map_err(to_py)
    }

    /// One walk on replica stream `replica` of `seed`.
    #[pyo3(signature = (seed, replica=0))]
    fn run(&self, seed: u64, replica: u64) -> PyResult<PyExitSample> {
        self.inner.run_sample(&mut exitwalk::replica_rng(seed, replica)).map(Into::into).map_err(to_py)
    }

    /// One walk with its skeleton: `(sample, [(t, x), ...], [d, ...])`.
    #[pyo3(signature = (seed, replica=0))]
    fn run_with_skeleton(&self, seed: u64, replica: u64) -> PyResult<Skeleton> {
        let (s, sk) = self.inner.run(&mut exitwalk::replica_rng(seed, replica)).map_err(to_py)?;
        Ok((s.into(), sk.nodes, sk.scales))
    }

    #[pyo3(signature = (t_max, seed, replica=0))]
    fn run_capped(&self, t_max: f64, seed: u64, replica: u64) -> PyResult<PyExitSample> {
        self.inner.run_capped_sample(t_max, &mut exitwalk::replica_rng(seed, replica)).map(Into::into).map_err(to_py)
    }

    /// `n` walks on replicas `0..n`, in parallel, without holding the interpreter lock.
    fn sample_many(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<PyExitSample>> {
        let p = &self.inner;
        let out = py.detach(|| exitwalk::sample_many(n, seed, |rng| p.run_sample(rng))).map_err(to_py)?;
        Ok(out.into_iter().map(Into::into).collect())
    }

    fn exit_times(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let p = &self.inner;
        py.detach(|| exitwalk::sample_many(n, seed, |rng| p.run_sample(rng).map(|s| s.time))).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ExitProblem('{}', a={}, b={}, x0={}, eps={}, gamma={}, m={})",
            p.coefficients().name(),
            p.a(),
            p.b(),
            p.x0(),
            p.eps(),
            p.gamma_shell(),
            p.m()
        )
    }
}

/// Exit of the growth diffusion `dY = (α̃ Y + β̃ Y log Y) dt + σ̃ Y dW` with
/// constant coefficients from `[a, b] ⊂ (0, ∞)`.
#[pyclass(name = "GrowthProblem", module = "exitwalk_py", frozen, skip_from_py_object)]
struct PyGrowthProblem {
    inner: exitwalk::GExitProblem,
}

#[pymethods]
impl PyGrowthProblem {
    #[new]
    #[pyo3(signature = (alpha_g, beta_g, sigma_g, a, b, x0, *, eps_g=1e-2, gamma=1e-4, m=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha_g: f64,
        beta_g: f64,
        sigma_g: f64,
        a: f64,
        b: f64,
        x0: f64,
        eps_g: f64,
        gamma: f64,
        m: Option<f64>,
    ) -> PyResult<Self> {
        let g = exitwalk::GCoefficientSet::constant(alpha_g, beta_g, sigma_g).map_err(to_py)?;
        let mut p =
            exitwalk::GExitProblem::new(&g, a, b, x0, eps_g).and_then(|p| p.with_gamma(gamma)).map_err(to_py)?;
        if let Some(m) = m {
            p = p.with_m(m).map_err(to_py)?;
        }
        Ok(Self { inner: p })
    }

    #[getter]
    fn eps_log(&self) -> f64 {
        self.inner.eps_log()
    }

    /// The log-space linear problem that is actually walked.
    fn linear(&self) -> PyExitProblem {
        PyExitProblem { inner: self.inner.linear().clone() }
    }

    #[pyo3(signature = (seed, replica=0))]
    fn run(&self, seed: u64, replica: u64) -> PyResult<PyExitSample> {
        self.inner.run_sample(&mut exitwalk::replica_rng(seed, replica)).map(Into::into).map_err(to_py)
    }

    fn sample_many(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<PyExitSample>> {
        let p = &self.inner;
        let out = py.detach(|| exitwalk::sample_many(n, seed, |rng| p.run_sample(rng))).map_err(to_py)?;
        Ok(out.into_iter().map(Into::into).collect())
    }
}

/// `G(t, w)` for constant growth coefficients.
#[pyfunction]
fn g_solution(alpha_g: f64, beta_g: f64, sigma_g: f64, t: f64, w: f64) -> PyResult<f64> {
    let g = exitwalk::GCoefficientSet::constant(alpha_g, beta_g, sigma_g).map_err(to_py)?;
    exitwalk::g_solution(&g, t, w).map_err(to_py)
}

/// Heat-ball boundary `ψ±` of scale `d` at time `t`.
#[pyfunction]
fn spheroid_psi(d: f64, t: f64) -> PyResult<(f64, f64)> {
    exitwalk::Spheroid::new(d).and_then(|s| s.psi(t)).map_err(to_py)
}

#[pyfunction]
fn spheroid_exit_pdf(d: f64, t: f64) -> PyResult<f64> {
    exitwalk::Spheroid::new(d).and_then(|s| s.exit_pdf(t)).map_err(to_py)
}

/// `n` exact Brownian exit times from the heat ball of scale `d`.
#[pyfunction]
fn spheroid_exit_times(py: Python<'_>, d: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let sph = exitwalk::Spheroid::new(d).map_err(to_py)?;
    py.detach(|| exitwalk::sample_many(n, seed, |rng| Ok(sph.sample_exit(rng).tau))).map_err(to_py)
}

/// Euler reference exits: list of `(time, position, side, censored)`.
#[pyfunction]
#[pyo3(signature = (coefficients, a, b, x0, n, seed, *, h=1e-4, bridge=true, t_cap=1e3, t0=0.0))]
#[allow(clippy::too_many_arguments)]
fn euler_exits(
    py: Python<'_>,
    coefficients: &PyCoefficients,
    a: f64,
    b: f64,
    x0: f64,
    n: usize,
    seed: u64,
    h: f64,
    bridge: bool,
    t_cap: f64,
    t0: f64,
) -> PyResult<Vec<EulerRow>> {
    let cfg = exitwalk::EulerConfig { h, bridge_correction: bridge, t_cap };
    let cs = &coefficients.inner;
    let out = py
        .detach(|| exitwalk::sample_many(n, seed, |rng| exitwalk::euler_exit(cs, a, b, t0, x0, &cfg, rng)))
        .map_err(to_py)?;
    Ok(out.into_iter().map(|e| (e.time, e.position, side_str(e.side), e.censored)).collect())
}

#[pyfunction]
fn ks_distance(a: Vec<f64>, b: Vec<f64>) -> f64 {
    harness::ks_distance(&a, &b)
}

#[pyfunction]
fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    harness::ks_critical(alpha, n, m)
}

#[pyfunction]
fn empirical_cdf(times: Vec<f64>, grid: Vec<f64>) -> Vec<(f64, f64)> {
    harness::empirical_cdf(&times, &grid)
}

/// Mean steps per shell width and the affine fit in `|log ε|`.
#[pyfunction]
fn steps_vs_logeps<'py>(
    py: Python<'py>,
    problem: &PyExitProblem,
    eps_list: Vec<f64>,
    n: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = &problem.inner;
    let fit = py.detach(|| harness::steps_vs_logeps(p, &eps_list, n, seed)).map_err(to_py)?;
    let d = PyDict::new(py);
    let rows: Vec<(f64, f64, f64)> = fit.rows.iter().map(|r| (r.eps, r.mean_steps, r.se_steps)).collect();
    d.set_item("rows", rows)?;
    d.set_item("slope", fit.slope)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("r2", fit.r2)?;
    d.set_item("nondecreasing", fit.nondecreasing)?;
    Ok(d)
}

/// Horizon step `m` of the sinusoidal preset on `[a, b]`.
#[pyfunction]
fn sinusoidal_horizon(a: f64, b: f64) -> f64 {
    coeffs::sinusoidal_horizon(a, b)
}

/// Module initializer for `exitwalk_py`.
#[pymodule]
pub fn exitwalk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoefficients>()?;
    m.add_class::<PyExitSample>()?;
    m.add_class::<PyExitProblem>()?;
    m.add_class::<PyGrowthProblem>()?;
    m.add_function(wrap_pyfunction!(g_solution, m)?)?;
    m.add_function(wrap_pyfunction!(spheroid_psi, m)?)?;
    m.add_function(wrap_pyfunction!(spheroid_exit_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(spheroid_exit_times, m)?)?;
    m.add_function(wrap_pyfunction!(euler_exits, m)?)?;
    m.add_function(wrap_pyfunction!(ks_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ks_critical, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(steps_vs_logeps, m)?)?;
    m.add_function(wrap_pyfunction!(sinusoidal_horizon, m)?)?;
    Ok(())
}
