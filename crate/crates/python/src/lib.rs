//! Python bindings: a thin veneer over the core pipeline, forecasters, and
//! synthetic generator. Builds as the extension module `pmcf`; see
//! python/smoke_test.py for an end-to-end exercise.
//!
//! Timestamps cross the boundary as epoch seconds, matching the price CSV
//! format, and are floored to whole minutes internally.

use pmcf_core::data::{PricePoint, PriceSeries, SplitSpec};
use pmcf_core::hmc::HeadMode;
use pmcf_core::models::{BaseKind, GarchParams};
use pmcf_core::optim::AdamConfig;
use pmcf_core::synth::{generate, RegimeSpec, BENCHMARK_HOURS};
use pmcf_core::train::{
    evaluate_test, train, Dataset as CoreDataset, ForecastModel, ModelSpec, TrainConfig,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_base_kind(raw: &str) -> PyResult<BaseKind> {
    BaseKind::parse(raw).ok_or_else(|| {
        value_error(format!(
            "unknown base kind {raw:?} (expected garch, fnn2, fnn3, or fnn23)"
        ))
    })
}

/// A normalized hourly feature series with its chronological split.
///
/// Built from 1-minute open prices; each window yields one (sigma2, u60sq)
/// sample, normalization statistics come from the training segment only.
#[pyclass]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Dataset(opens, timestamps=None, window=60, split=(0.4, 0.4, 0.2))
    ///
    /// `timestamps` are epoch seconds, strictly increasing; omitted, the
    /// prices are taken as consecutive minutes.
    #[new]
    #[pyo3(signature = (opens, timestamps = None, window = 60, split = (0.4, 0.4, 0.2)))]
    fn new(
        opens: Vec<f64>,
        timestamps: Option<Vec<i64>>,
        window: usize,
        split: (f64, f64, f64),
    ) -> PyResult<Self> {
        let prices = match timestamps {
            Some(ts) => {
                if ts.len() != opens.len() {
                    return Err(value_error(format!(
                        "{} timestamps for {} opens",
                        ts.len(),
                        opens.len()
                    )));
                }
                PriceSeries::new(
                    ts.iter()
                        .zip(&opens)
                        .map(|(&t, &open)| PricePoint {
                            timestamp: t.div_euclid(60),
                            open,
                        })
                        .collect(),
                )
                .map_err(value_error)?
            }
            None => PriceSeries::from_opens(&opens).map_err(value_error)?,
        };
        let spec = SplitSpec {
            train_frac: split.0,
            val_frac: split.1,
            test_frac: split.2,
        };
        let inner = CoreDataset::from_prices(&prices, window, spec).map_err(value_error)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.features.len()
    }

    fn __repr__(&self) -> String {
        let b = &self.inner.boundaries;
        format!(
            "Dataset({} rows, window {}, split {}/{}/{})",
            b.total,
            self.inner.window,
            b.train_end,
            b.val_end - b.train_end,
            b.total - b.val_end
        )
    }

    /// (train_end, val_end, total) row indices of the chronological split.
    #[getter]
    fn boundaries(&self) -> (usize, usize, usize) {
        let b = &self.inner.boundaries;
        (b.train_end, b.val_end, b.total)
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    /// Normalized (sigma2, u60sq) pairs, one per window.
    fn pairs(&self) -> PyResult<Vec<(f64, f64)>> {
        Ok(self
            .inner
            .all_pairs()
            .map_err(value_error)?
            .into_iter()
            .map(|[a, b]| (a, b))
            .collect())
    }

    /// Raw (sigma2, u60sq) pairs before normalization.
    fn raw(&self) -> Vec<(f64, f64)> {
        self.inner
            .features
            .samples()
            .iter()
            .map(|s| (s.sigma2, s.u60sq))
            .collect()
    }
}

/// Any forecaster in the toolkit, selected by kind string.
///
/// Kinds: "garch", "fnn2", "fnn3", "fnn23", "pmc" (with `n_states` and
/// `base`), and "hmc" (with `n_states` and `head_mode` of "affine" or
/// "constants"). Initialization is deterministic in `seed`.
#[pyclass]
struct Model {
    inner: ForecastModel,
}

#[pymethods]
impl Model {
    /// Model(kind, seed=0, n_states=None, base=None, head_mode=None)
    #[new]
    #[pyo3(signature = (kind, seed = 0, n_states = None, base = None, head_mode = None))]
    fn new(
        kind: &str,
        seed: u64,
        n_states: Option<usize>,
        base: Option<&str>,
        head_mode: Option<&str>,
    ) -> PyResult<Self> {
        let reject = |flag: &str| -> PyResult<()> {
            Err(value_error(format!(
                "{flag} is not valid with kind {kind:?}"
            )))
        };
        let spec = match kind {
            "pmc" => {
                if head_mode.is_some() {
                    reject("head_mode")?;
                }
                ModelSpec::Pmc {
                    n_states: n_states.unwrap_or(2),
                    base: parse_base_kind(base.unwrap_or("garch"))?,
                }
            }
            "hmc" => {
                if base.is_some() {
                    reject("base")?;
                }
                let mode = match head_mode.unwrap_or("affine") {
                    "affine" => HeadMode::Affine,
                    "constants" => HeadMode::ConstantsOnly,
                    other => {
                        return Err(value_error(format!(
                            "unknown head mode {other:?} (expected affine or constants)"
                        )))
                    }
                };
                ModelSpec::Hmc {
                    n_states: n_states.unwrap_or(2),
                    head_mode: mode,
                }
            }
            other => {
                if n_states.is_some() {
                    reject("n_states")?;
                }
                if base.is_some() {
                    reject("base")?;
                }
                if head_mode.is_some() {
                    reject("head_mode")?;
                }
                ModelSpec::Base(parse_base_kind(other)?)
            }
        };
        let inner = spec.init(seed).map_err(value_error)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.inner.label())
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    /// Fits on the dataset's training segment with early stopping on its
    /// validation segment, keeping the best-validation parameters.
    /// Returns the loss history as a dict.
    #[pyo3(signature = (dataset, epochs = 300, patience = 50, learning_rate = 0.05))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        dataset: &Dataset,
        epochs: usize,
        patience: usize,
        learning_rate: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let train_pairs = dataset.inner.train_pairs().map_err(value_error)?;
        let val_pairs = dataset.inner.val_pairs().map_err(value_error)?;
        let mut config = TrainConfig {
            epochs,
            patience: patience.min(epochs.max(1)),
            adam: AdamConfig::default(),
        };
        config.adam.learning_rate = learning_rate;
        let model = self.inner.clone();
        let result = py
            .detach(move || train(&model, &train_pairs, &val_pairs, &config))
            .map_err(value_error)?;
        self.inner = result.model;
        let out = PyDict::new(py);
        out.set_item("train_losses", result.train_losses)?;
        out.set_item("val_losses", result.val_losses)?;
        out.set_item("best_epoch", result.best_epoch)?;
        out.set_item("epochs_run", result.epochs_run)?;
        Ok(out)
    }

    /// One-step-ahead predictions over the full series, length len - 1;
    /// prediction t targets the normalized sigma2 channel at t + 1.
    fn predict(&self, py: Python<'_>, dataset: &Dataset) -> PyResult<Vec<f64>> {
        let pairs = dataset.inner.all_pairs().map_err(value_error)?;
        let model = self.inner.clone();
        py.detach(move || model.predictions(&pairs))
            .map_err(value_error)
    }

    /// Posterior path over the full series, for kinds that carry a filter.
    /// Returns a dict with per-step state probabilities, the most probable
    /// state per step, and the predictions.
    fn filter<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let pairs = dataset.inner.all_pairs().map_err(value_error)?;
        let model = self.inner.clone();
        let run = py
            .detach(move || model.filter_run(&pairs))
            .map_err(value_error)?
            .ok_or_else(|| {
                value_error(format!(
                    "model kind {:?} carries no filter",
                    self.inner.kind_name()
                ))
            })?;
        let posteriors: Vec<Vec<f64>> = run.posteriors.iter().map(|p| p.probs().to_vec()).collect();
        let argmax: Vec<usize> = run.posteriors.iter().map(|p| p.argmax()).collect();
        let out = PyDict::new(py);
        out.set_item("posteriors", posteriors)?;
        out.set_item("argmax", argmax)?;
        out.set_item("predictions", run.predictions)?;
        Ok(out)
    }

    /// Test-segment mean squared error, entered with a warm filter, in
    /// both the normalized and the original sigma2 scale.
    fn test_mse<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let score = evaluate_test(&self.inner, &dataset.inner).map_err(value_error)?;
        let out = PyDict::new(py);
        out.set_item("mse_normalized", score.mse_normalized)?;
        out.set_item("mse_original", score.mse_original)?;
        out.set_item("n_targets", score.n_targets)?;
        Ok(out)
    }

    /// Serializes the parameters as JSON, interchangeable with the model
    /// files the command-line tool writes.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_error)
    }

    /// Restores a model from `to_json` output or a trained model file.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ForecastModel = serde_json::from_str(text).map_err(value_error)?;
        inner.validate().map_err(value_error)?;
        Ok(Self { inner })
    }
}

/// One-step volatility forecast omega + alpha * u2 + beta * sigma2.
#[pyfunction]
fn garch_forecast(omega: f64, alpha: f64, beta: f64, sigma2: f64, u2: f64) -> f64 {
    GarchParams::new(omega, alpha, beta).forecast(sigma2, u2)
}

/// Generates the built-in two-regime benchmark series. Returns a dict of
/// epoch-second timestamps, 1-minute opens, and the true regime per hour.
#[pyfunction]
#[pyo3(signature = (seed = 0, hours = BENCHMARK_HOURS))]
fn synthetic_benchmark(py: Python<'_>, seed: u64, hours: usize) -> PyResult<Bound<'_, PyDict>> {
    let series = py
        .detach(move || generate(&RegimeSpec::benchmark(seed), hours, 60))
        .map_err(value_error)?;
    let timestamps: Vec<i64> = series
        .prices
        .points()
        .iter()
        .map(|p| p.timestamp * 60)
        .collect();
    let opens: Vec<f64> = series.prices.points().iter().map(|p| p.open).collect();
    let out = PyDict::new(py);
    out.set_item("timestamps", timestamps)?;
    out.set_item("opens", opens)?;
    out.set_item("regimes", series.regimes)?;
    Ok(out)
}

/// Fraction of positions where two state paths agree, maximized over
/// relabelings of the predicted states.
#[pyfunction]
fn state_agreement(predicted: Vec<usize>, truth: Vec<usize>, n_states: usize) -> PyResult<f64> {
    pmcf_core::train::state_agreement(&predicted, &truth, n_states).map_err(value_error)
}

#[pymodule]
fn pmcf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(garch_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(state_agreement, m)?)?;
    Ok(())
}
