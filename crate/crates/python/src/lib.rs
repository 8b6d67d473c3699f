//! Python bindings. Build with `--features extension-module` and load the
//! resulting shared library as `irs_wet_py`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use irs_wet::dynamic_sca::{self, DynamicOptions, InitStrategy};
use irs_wet::experiments::{self, ConfigFile};
use irs_wet::static_sdr::{self, SdrResult};
use irs_wet::{tdma, C64};

fn err(e: irs_wet::Error) -> PyErr {
    match e {
        irs_wet::Error::InvalidConfig(_) | irs_wet::Error::InvalidArgument(_) | irs_wet::Error::Parse(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// System parameters in linear SI units.
#[pyclass(name = "SystemConfig")]
#[derive(Clone)]
struct PySystemConfig {
    inner: irs_wet::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    /// Reference deployment with `n` elements and `k` receivers.
    #[staticmethod]
    fn reference(n: usize, k: usize) -> Self {
        Self {
            inner: irs_wet::SystemConfig::reference(n, k),
        }
    }

    /// From TOML text in the CLI config format, with `key=value` overrides.
    #[staticmethod]
    #[pyo3(signature = (text, overrides = Vec::new()))]
    fn from_toml(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let f = ConfigFile::from_toml(text, &ConfigFile::desk(), &overrides).map_err(err)?;
        Ok(Self {
            inner: f.system_config(),
        })
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements
    }

    #[getter]
    fn n_ers(&self) -> usize {
        self.inner.n_ers
    }

    #[getter]
    fn total_energy(&self) -> f64 {
        self.inner.total_energy
    }

    #[setter]
    fn set_total_energy(&mut self, v: f64) {
        self.inner.total_energy = v;
    }

    #[getter]
    fn max_power(&self) -> f64 {
        self.inner.max_power
    }

    #[setter]
    fn set_max_power(&mut self, v: f64) {
        self.inner.max_power = v;
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[setter]
    fn set_horizon(&mut self, v: f64) {
        self.inner.horizon = v;
    }

    #[getter]
    fn fairness_weights(&self) -> Vec<f64> {
        self.inner.fairness_weights.clone()
    }

    #[setter]
    fn set_fairness_weights(&mut self, v: Vec<f64>) {
        self.inner.fairness_weights = v;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(n_elements={}, n_ers={}, total_energy={}, max_power={}, horizon={})",
            self.inner.n_elements, self.inner.n_ers, self.inner.total_energy, self.inner.max_power, self.inner.horizon
        )
    }
}

/// Sigmoidal harvester parameters.
#[pyclass(name = "EhParams")]
#[derive(Clone, Copy)]
struct PyEhParams {
    inner: irs_wet::EhParams,
}

#[pymethods]
impl PyEhParams {
    #[new]
    #[pyo3(signature = (a = 150.0, b = 0.014, m = 0.024))]
    fn new(a: f64, b: f64, m: f64) -> PyResult<Self> {
        Ok(Self {
            inner: irs_wet::EhParams::derive_constants(a, b, m).map_err(err)?,
        })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    fn dc_power(&self, p_rf: f64) -> PyResult<f64> {
        self.inner.dc_power(p_rf).map_err(err)
    }

    fn required_rf_power(&self, phi: f64) -> PyResult<f64> {
        self.inner.required_rf_power(phi).map_err(err)
    }
}

/// One channel realization.
#[pyclass(name = "Channel")]
struct PyChannel {
    inner: irs_wet::ChannelRealization,
}

#[pymethods]
impl PyChannel {
    #[staticmethod]
    fn sample(cfg: &PySystemConfig, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: irs_wet::ChannelRealization::sample(&cfg.inner, seed).map_err(err)?,
        })
    }

    #[getter]
    fn h_d(&self) -> Vec<C64> {
        self.inner.h_d.clone()
    }

    /// Cascaded rows, one list per receiver.
    #[getter]
    fn q(&self) -> Vec<Vec<C64>> {
        self.inner.q.row_iter().map(|r| r.iter().cloned().collect()).collect()
    }

    fn channel_gain(&self, k: usize, theta: Vec<C64>) -> PyResult<f64> {
        self.check(k, Some(&theta))?;
        Ok(self.inner.channel_gain(k, &theta))
    }

    fn matched_gain(&self, k: usize) -> PyResult<f64> {
        self.check(k, None)?;
        Ok(self.inner.matched_gain(k))
    }

    fn matched_phase(&self, k: usize) -> PyResult<Vec<C64>> {
        self.check(k, None)?;
        Ok(tdma::matched_phase(&self.inner, k))
    }

    fn fingerprint(&self) -> u64 {
        self.inner.fingerprint()
    }
}

impl PyChannel {
    fn check(&self, k: usize, theta: Option<&[C64]>) -> PyResult<()> {
        if k >= self.inner.n_ers {
            return Err(PyValueError::new_err(format!("receiver index {k} out of range")));
        }
        if let Some(t) = theta {
            if t.len() != self.inner.n_elements {
                return Err(PyValueError::new_err(format!(
                    "expected {} phases, got {}",
                    self.inner.n_elements,
                    t.len()
                )));
            }
        }
        Ok(())
    }
}

fn eh_vec(eh: &PyEhParams, ch: &PyChannel) -> Vec<irs_wet::EhParams> {
    vec![eh.inner; ch.inner.n_ers]
}

/// Relaxed upper bound of the static scheme.
#[pyclass(name = "SdrResult")]
struct PySdrResult {
    inner: SdrResult,
}

#[pymethods]
impl PySdrResult {
    #[getter]
    fn e_upper(&self) -> f64 {
        self.inner.e_upper
    }

    #[getter]
    fn power(&self) -> f64 {
        self.inner.power
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank_estimate
    }

    #[getter]
    fn bisection_iterations(&self) -> usize {
        self.inner.bisection_iterations
    }
}

/// Audited schedule and objective.
#[pyclass(name = "Solution")]
struct PySolution {
    inner: irs_wet::Solution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn e(&self) -> f64 {
        self.inner.e
    }

    #[getter]
    fn per_er_energy(&self) -> Vec<f64> {
        self.inner.per_er_energy.clone()
    }

    #[getter]
    fn durations(&self) -> Vec<f64> {
        self.inner.schedule.durations.clone()
    }

    #[getter]
    fn powers(&self) -> Vec<f64> {
        self.inner.schedule.powers.clone()
    }

    #[getter]
    fn phases(&self) -> Vec<Vec<C64>> {
        self.inner.schedule.phases.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn history(&self) -> Vec<f64> {
        self.inner.history.clone()
    }
}

#[pyfunction]
fn solve_sdr(ch: &PyChannel, eh: &PyEhParams, cfg: &PySystemConfig) -> PyResult<PySdrResult> {
    Ok(PySdrResult {
        inner: static_sdr::solve_sdr_upper_bound(&ch.inner, &eh_vec(eh, ch), &cfg.inner).map_err(err)?,
    })
}

/// Best unit-modulus pattern among `n_samples` randomized candidates;
/// returns `(e, theta)`.
#[pyfunction]
#[pyo3(signature = (sdr, ch, eh, cfg, n_samples = 1000, seed = 0))]
fn gaussian_randomization(
    sdr: &PySdrResult,
    ch: &PyChannel,
    eh: &PyEhParams,
    cfg: &PySystemConfig,
    n_samples: usize,
    seed: u64,
) -> PyResult<(f64, Vec<C64>)> {
    let r = static_sdr::gaussian_randomization(&sdr.inner, &ch.inner, &eh_vec(eh, ch), &cfg.inner, n_samples, seed)
        .map_err(err)?;
    Ok((r.e, r.theta))
}

/// Dynamic scheme with `j` slots. With `sdr` given, its lifted solution is an
/// extra starting point.
#[pyfunction]
#[pyo3(signature = (ch, eh, cfg, j, sdr = None))]
fn solve_dynamic(
    ch: &PyChannel,
    eh: &PyEhParams,
    cfg: &PySystemConfig,
    j: usize,
    sdr: Option<&PySdrResult>,
) -> PyResult<PySolution> {
    let mut opts = DynamicOptions::default();
    if let Some(s) = sdr {
        opts.starts.push(InitStrategy::Lifted(s.inner.theta_lift.clone()));
    }
    let sol = dynamic_sca::solve_dynamic_with(&ch.inner, &eh_vec(eh, ch), &cfg.inner, j, &opts).map_err(err)?;
    Ok(PySolution { inner: sol })
}

#[pyfunction]
fn solve_tdma(ch: &PyChannel, eh: &PyEhParams, cfg: &PySystemConfig) -> PyResult<PySolution> {
    Ok(PySolution {
        inner: tdma::solve_tdma(&ch.inner, &eh_vec(eh, ch), &cfg.inner).map_err(err)?,
    })
}

/// Runs a scenario given in the CLI config format; returns one dict per
/// record.
#[pyfunction]
#[pyo3(signature = (text = "", overrides = Vec::new()))]
fn run_scenario<'py>(py: Python<'py>, text: &str, overrides: Vec<String>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let f = ConfigFile::from_toml(text, &ConfigFile::desk(), &overrides).map_err(err)?;
    let sc = f.scenario().map_err(err)?;
    let recs = py.allow_threads(|| experiments::run_scenario(&sc)).map_err(err)?;
    recs.into_iter()
        .map(|r| {
            let d = PyDict::new_bound(py);
            d.set_item("scheme", r.scheme.name())?;
            d.set_item("k", r.k)?;
            d.set_item("j", r.j)?;
            d.set_item("seed", r.seed)?;
            d.set_item("e_joules", r.e_joules)?;
            d.set_item("total_energy_joules", r.total_energy_joules)?;
            d.set_item("rank", r.rank)?;
            d.set_item("iterations", r.iterations)?;
            d.set_item("wall_ms", r.wall_ms)?;
            d.set_item("status", r.status)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn irs_wet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyEhParams>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PySdrResult>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve_sdr, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_randomization, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dynamic, m)?)?;
    m.add_function(wrap_pyfunction!(solve_tdma, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
