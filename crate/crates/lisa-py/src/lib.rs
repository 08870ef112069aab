//! Python bindings: simulate benchmark systems, train the spectral
//! forecaster from a TOML config, roll out corrected forecasts, and score
//! them. Data crosses the boundary as plain lists of row lists so no numpy
//! ABI coupling is needed.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use lisa::dynsys::{integrate, OdeSystem, TrajectoryConfig};
use lisa::gplm::RbfKernel;
use lisa::harness::{prepare, ExperimentConfig, PreparedData, TrainedModel};
use lisa::icm::{IcmConfig, IcmMode};
use lisa::metrics::{evaluate, MetricConfig};
use lisa::rollout::{roll, Method, RolloutConfig};

fn py_err(e: lisa::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows_to_array(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what} has no rows")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!(
            "{what} must be rectangular with at least one column"
        )));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, d), flat).expect("rectangular"))
}

fn array_to_rows(a: ndarray::ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Integrate a named benchmark system; returns (rows, dt).
#[pyfunction]
#[pyo3(signature = (system, n_steps=11_000, burn_in=1_000, dt=None, seed=1))]
fn simulate(
    system: &str,
    n_steps: usize,
    burn_in: usize,
    dt: Option<f64>,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let sys = OdeSystem::from_name(system).map_err(py_err)?;
    let dt = dt.unwrap_or_else(|| sys.default_dt());
    let cfg = TrajectoryConfig::new(dt, n_steps, burn_in, seed);
    let series = integrate(&sys, &cfg).map_err(py_err)?;
    Ok((array_to_rows(series.data()), series.dt()))
}

/// Score a forecast against ground truth; returns a metric dict.
#[pyfunction]
#[pyo3(signature = (forecast, truth, mmd_seed=0))]
fn score(
    forecast: Vec<Vec<f64>>,
    truth: Vec<Vec<f64>>,
    mmd_seed: u64,
) -> PyResult<HashMap<String, f64>> {
    let f = rows_to_array(forecast, "forecast")?;
    let t = rows_to_array(truth, "truth")?;
    let cfg = MetricConfig {
        mmd_seed,
        ..MetricConfig::default()
    };
    let report = evaluate(f.view(), t.view(), &cfg).map_err(py_err)?;
    Ok(HashMap::from([
        ("mse".to_string(), report.mse),
        ("spec_div".to_string(), report.spec_div),
        ("acf_mse".to_string(), report.acf_mse),
        ("mmd2".to_string(), report.mmd2),
    ]))
}

/// Trained forecaster plus its prepared dataset split.
#[pyclass]
struct Model {
    inner: TrainedModel,
    prep: PreparedData,
}

#[pymethods]
impl Model {
    /// Prepare the dataset described by a TOML config string and fit.
    #[staticmethod]
    fn train(config_toml: &str) -> PyResult<Model> {
        let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
        let prep = prepare(&cfg).map_err(py_err)?;
        let inner = lisa::harness::train(&cfg, &prep).map_err(py_err)?;
        Ok(Model { inner, prep })
    }

    /// Reload a model artifact written by `save`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        let inner = TrainedModel::load(Path::new(path)).map_err(py_err)?;
        let prep = prepare(&inner.config).map_err(py_err)?;
        if prep.train_hash != inner.train_hash {
            return Err(PyValueError::new_err(
                "artifact was trained on different data than its config prepares",
            ));
        }
        Ok(Model { inner, prep })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(py_err)
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.config.model.rank
    }

    #[getter]
    fn train_hash(&self) -> String {
        self.inner.train_hash.clone()
    }

    #[getter]
    fn test_len(&self) -> usize {
        self.prep.test.nrows()
    }

    /// Standardized test segment the forecaster is evaluated on.
    fn test_segment(&self) -> Vec<Vec<f64>> {
        array_to_rows(self.prep.test.view())
    }

    /// Spectral coordinates of one delay window (list of `window` rows).
    fn encode(&self, window: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let w = rows_to_array(window, "window")?;
        let z = self.inner.encoder.encode(w.view()).map_err(py_err)?;
        Ok(z.to_vec())
    }

    /// Roll out a forecast starting at `start` (index into the test
    /// segment), in standardized units. Methods: nlsa, lisa, alsa.
    #[pyo3(signature = (method, start, context_multiple=1, horizon=None, temperature=1.0, seed=0))]
    fn forecast(
        &self,
        method: &str,
        start: usize,
        context_multiple: usize,
        horizon: Option<usize>,
        temperature: f64,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let method = Method::from_name(method).map_err(py_err)?;
        let context_len = context_multiple * self.inner.window;
        if start < context_len || start > self.prep.test.nrows() {
            return Err(PyValueError::new_err(format!(
                "start {start} incompatible with context of {context_len} samples"
            )));
        }
        let horizon = horizon.unwrap_or(self.inner.config.sweep.horizon);
        let icm = &self.inner.config.icm;
        let cfg = RolloutConfig {
            horizon,
            method,
            context_length: context_len,
            icm: IcmConfig {
                kernel: RbfKernel {
                    beta: 1.0,
                    epsilon: self.inner.icm_epsilon,
                },
                sigma2: icm.sigma2,
                tau2: icm.tau2,
                k0: icm.k0,
                gain: icm.gain,
                temperature,
                mode: IcmMode::None, // the method picks its own mode
            },
            stochastic: icm.stochastic,
            seed,
        };
        let prefix = self
            .prep
            .test
            .slice(ndarray::s![start - context_len..start, ..]);
        let fc = roll(prefix, &self.inner.encoder, &self.inner.decoder, &cfg).map_err(py_err)?;
        Ok(array_to_rows(fc.values.view()))
    }
}

#[pymodule]
fn lisa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
