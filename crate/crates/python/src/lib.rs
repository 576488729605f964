//! Python bindings for `pdqkd`.
//!
//! Build with `maturin develop -m crates/python/Cargo.toml --features
//! extension-module`, or `cargo build --release -p pdqkd-python --features
//! extension-module` and copy the shared library to `pdqkd_py.so`.

use pdqkd::optimizer::{self, OptimizationSpec, RateMode, Setup};
use pdqkd::{keylength, oracle, ProtocolBudget, SecurityBudget, XSearch};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(err: pdqkd::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn rate_mode(pulses: Option<f64>) -> RateMode {
    match pulses {
        Some(pulses) => RateMode::Finite { pulses },
        None => RateMode::Asymptotic,
    }
}

#[pyclass(name = "SourceModel", frozen)]
#[derive(Clone)]
struct PySourceModel {
    inner: pdqkd::SourceModel,
}

#[pymethods]
impl PySourceModel {
    #[new]
    #[pyo3(signature = (mu, eta_a = 0.5, dark_a = 1e-6))]
    fn new(mu: f64, eta_a: f64, dark_a: f64) -> PyResult<Self> {
        let inner = pdqkd::SourceModel::new(mu, eta_a, dark_a).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn eta_a(&self) -> f64 {
        self.inner.eta_a
    }

    #[getter]
    fn dark_a(&self) -> f64 {
        self.inner.dark_a
    }

    fn photon_prob(&self, n: usize) -> f64 {
        self.inner.photon_prob(n)
    }

    fn trigger_prob(&self, n: usize) -> f64 {
        self.inner.trigger_prob(n)
    }

    fn delta(&self, n: usize) -> PyResult<f64> {
        self.inner.delta(n).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SourceModel(mu={}, eta_a={}, dark_a={})",
            self.inner.mu, self.inner.eta_a, self.inner.dark_a
        )
    }
}

#[pyclass(name = "ChannelModel", frozen)]
#[derive(Clone)]
struct PyChannelModel {
    inner: pdqkd::ChannelModel,
}

#[pymethods]
impl PyChannelModel {
    #[new]
    #[pyo3(signature = (length_km, alpha_db_per_km = 0.2, eta_b = 0.1, dark_b = 6e-7, misalignment = 0.005))]
    fn new(length_km: f64, alpha_db_per_km: f64, eta_b: f64, dark_b: f64, misalignment: f64) -> PyResult<Self> {
        let inner = pdqkd::ChannelModel::new(alpha_db_per_km, length_km, eta_b, dark_b, misalignment)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn length_km(&self) -> f64 {
        self.inner.length_km
    }

    fn transmittance(&self) -> f64 {
        self.inner.transmittance()
    }

    /// Gains and QBERs this channel produces for `source`.
    fn observables(&self, source: &PySourceModel) -> PyResult<PyObservables> {
        let inner = pdqkd::simulate_observables(&source.inner, &self.inner).map_err(py_err)?;
        Ok(PyObservables { inner })
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ChannelModel(length_km={}, alpha_db_per_km={}, eta_b={}, dark_b={}, misalignment={})",
            c.length_km, c.alpha_db_per_km, c.eta_b, c.dark_b, c.misalignment
        )
    }
}

#[pyclass(name = "Observables", frozen)]
#[derive(Clone)]
struct PyObservables {
    inner: pdqkd::Observables,
}

#[pymethods]
impl PyObservables {
    #[new]
    fn new(gain_t: f64, gain_nt: f64, qber_t: f64, qber_nt: f64) -> PyResult<Self> {
        let inner = pdqkd::Observables::new(gain_t, gain_nt, qber_t, qber_nt).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn gain_t(&self) -> f64 {
        self.inner.gain_t
    }

    #[getter]
    fn gain_nt(&self) -> f64 {
        self.inner.gain_nt
    }

    #[getter]
    fn qber_t(&self) -> f64 {
        self.inner.qber_t
    }

    #[getter]
    fn qber_nt(&self) -> f64 {
        self.inner.qber_nt
    }

    fn __repr__(&self) -> String {
        let o = &self.inner;
        format!(
            "Observables(gain_t={:e}, gain_nt={:e}, qber_t={}, qber_nt={})",
            o.gain_t, o.gain_nt, o.qber_t, o.qber_nt
        )
    }
}

fn result_dict<'py>(py: Python<'py>, r: &pdqkd::KeyLengthResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rate", r.rate)?;
    d.set_item("ell", r.ell)?;
    d.set_item("ell_t", r.ell_t())?;
    d.set_item("ell_b", r.ell_b())?;
    let chosen = r.chosen();
    d.set_item("scheme", format!("{:?}", chosen.scheme))?;
    d.set_item("x_opt", chosen.x_opt)?;
    d.set_item("phase_error_t", chosen.phase_error_t)?;
    d.set_item("phase_error_nt", chosen.phase_error_nt)?;
    Ok(d)
}

/// Key length for measured (or simulated) observables. Returns a dict with
/// the rate, both key lengths and the chosen scheme.
#[pyfunction]
#[pyo3(signature = (source, observables, pulses, p_pe, eps_sec = 1e-10, eps_cor = 1e-12, f_ec = 1.16))]
#[allow(clippy::too_many_arguments)]
fn key_length<'py>(
    py: Python<'py>,
    source: &PySourceModel,
    observables: &PyObservables,
    pulses: f64,
    p_pe: f64,
    eps_sec: f64,
    eps_cor: f64,
    f_ec: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let security = SecurityBudget::new(eps_sec, eps_cor, f_ec).map_err(py_err)?;
    let budget = ProtocolBudget::new(pulses, p_pe, security).map_err(py_err)?;
    let r = keylength::key_length(&source.inner, &observables.inner, &budget, &XSearch::default())
        .map_err(py_err)?;
    result_dict(py, &r)
}

/// Rate maximized over intensity and sampling fraction at the reference
/// setup. `pulses=None` gives the asymptotic rate.
#[pyfunction]
#[pyo3(signature = (length_km, pulses = None, p_pe = None))]
fn optimize_rate<'py>(
    py: Python<'py>,
    length_km: f64,
    pulses: Option<f64>,
    p_pe: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let setup = Setup::reference();
    let mut spec = OptimizationSpec::for_detector(setup.source.eta_a);
    if let Some(p) = p_pe {
        spec = spec.with_fixed_p_pe(p);
    }
    let mode = rate_mode(pulses);
    let found = py.allow_threads(|| optimizer::optimize_rate(&setup, length_km, mode, &spec));
    match found {
        Ok(p) => {
            let d = result_dict(py, &p.result)?;
            d.set_item("mu", p.mu)?;
            d.set_item("p_pe", p.p_pe)?;
            Ok(d)
        }
        Err(pdqkd::Error::AllVacuous) => {
            let d = PyDict::new(py);
            d.set_item("rate", 0.0)?;
            Ok(d)
        }
        Err(e) => Err(py_err(e)),
    }
}

/// Largest distance in km with a positive optimized rate.
#[pyfunction]
#[pyo3(signature = (pulses = None, p_pe = None, step_km = 5.0, max_km = 300.0))]
fn max_distance(py: Python<'_>, pulses: Option<f64>, p_pe: Option<f64>, step_km: f64, max_km: f64) -> PyResult<f64> {
    let setup = Setup::reference();
    let mut spec = OptimizationSpec::for_detector(setup.source.eta_a);
    if let Some(p) = p_pe {
        spec = spec.with_fixed_p_pe(p);
    }
    let mode = rate_mode(pulses);
    py.allow_threads(|| optimizer::max_distance(&setup, mode, &spec, step_km, max_km))
        .map_err(py_err)
}

/// Monte Carlo checks of the sampling bounds, one dict per check.
#[pyfunction]
#[pyo3(signature = (seed = 1, trials = 100_000))]
fn verify<'py>(py: Python<'py>, seed: u64, trials: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = py.allow_threads(|| oracle::verify_suite(seed, trials)).map_err(py_err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("check", r.check)?;
            d.set_item("first", r.first)?;
            d.set_item("second", r.second)?;
            d.set_item("eps", r.eps)?;
            d.set_item("trials", r.report.trials)?;
            d.set_item("violations", r.report.violations)?;
            d.set_item("frequency", r.report.frequency())?;
            d.set_item("upper_confidence", r.report.upper_confidence())?;
            d.set_item("passed", r.report.passed())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pdqkd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySourceModel>()?;
    m.add_class::<PyChannelModel>()?;
    m.add_class::<PyObservables>()?;
    m.add_function(wrap_pyfunction!(key_length, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_rate, m)?)?;
    m.add_function(wrap_pyfunction!(max_distance, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
