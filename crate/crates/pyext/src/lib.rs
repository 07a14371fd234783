//! Python bindings for the diffusion imputation and hallucination toolkit.
//!
//! Exposes model training/loading, RePaint imputation, the combined-error
//! metric, quartile calibration, classification, and argmin-CE mitigation.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tsdh_core::data::{make_synthetic2d, DatasetKind, Normalizer};
use tsdh_core::diffusion::{DiffusionModel, PromptSpec, VarianceSchedule};
use tsdh_core::halluc;
use tsdh_core::metrics;
use tsdh_core::nn::{MlpConfig, MlpNetwork, TrainConfig};
use tsdh_core::tasks::{make_mask, TaskKind};

fn to_py_err(err: tsdh_core::Error) -> PyErr {
    match &err {
        tsdh_core::Error::Config(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn rows_to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("empty window list"));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("ragged window list"));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, dim), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_task(name: &str) -> PyResult<TaskKind> {
    name.parse::<TaskKind>().map_err(to_py_err)
}

/// A trained diffusion model over flattened windows.
#[pyclass(name = "Model")]
struct PyModel {
    inner: DiffusionModel,
}

#[pymethods]
impl PyModel {
    /// Load a checkpoint file written by training.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = tsdh_core::checkpoint::load_checkpoint(&path).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Train from scratch on windows in original units.
    ///
    /// `train_windows` and `val_windows` are lists of equal-length rows;
    /// rows are flattened V x L windows indexed by i = v*L + tau.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (train_windows, val_windows, var_count, window_len,
                        hidden=vec![512; 5], time_embed_dim=64, t_steps=1000,
                        batch_size=1024, max_epochs=8000, patience=100,
                        max_lr=1e-3, seed=0))]
    fn train(
        train_windows: Vec<Vec<f64>>,
        val_windows: Vec<Vec<f64>>,
        var_count: usize,
        window_len: usize,
        hidden: Vec<usize>,
        time_embed_dim: usize,
        t_steps: usize,
        batch_size: usize,
        max_epochs: usize,
        patience: usize,
        max_lr: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let train = rows_to_array(train_windows)?;
        let val = rows_to_array(val_windows)?;
        let normalizer =
            Normalizer::fit(train.view(), var_count, window_len).map_err(to_py_err)?;
        let config = MlpConfig {
            data_dim: train.ncols(),
            time_embed_dim,
            hidden,
        };
        let net = MlpNetwork::new(config, seed).map_err(to_py_err)?;
        let schedule = VarianceSchedule::linear(t_steps, 1e-4, 1e-2).map_err(to_py_err)?;
        let mut inner = DiffusionModel::new(net, schedule, normalizer).map_err(to_py_err)?;
        inner
            .train(
                train.view(),
                val.view(),
                &TrainConfig {
                    batch_size,
                    max_epochs,
                    patience,
                    val_interval: 1,
                    max_lr,
                    seed,
                },
            )
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf, dataset: &str, seed: u64) -> PyResult<()> {
        tsdh_core::checkpoint::save_checkpoint(&self.inner, &path, dataset, seed, 1e-4, 1e-2)
            .map_err(to_py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Complete a prompt: given values at `prompt_idx`, impute the rest.
    /// Returns the full window in original units.
    fn impute(
        &self,
        prompt_idx: Vec<usize>,
        prompt_values: Vec<f64>,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let prompt = PromptSpec::new(self.inner.dim(), prompt_idx, prompt_values)
            .map_err(to_py_err)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        self.inner.repaint_impute(&prompt, &mut rng).map_err(to_py_err)
    }

    /// Impute a named task (oc/uc/fc) for a complete ground-truth window.
    fn impute_task(&self, window: Vec<f64>, task: &str, seed: u64) -> PyResult<Vec<f64>> {
        let task = parse_task(task)?;
        let prompt = tsdh_core::tasks::assemble_prompt(&window, task).map_err(to_py_err)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        self.inner.repaint_impute(&prompt, &mut rng).map_err(to_py_err)
    }

    /// Combined error of a complete prompt-response pair. `k_draws` > 1
    /// averages the t=1 corruption over several noise draws.
    #[pyo3(signature = (x_hat, seed, k_draws=1))]
    fn combined_error(&self, x_hat: Vec<f64>, seed: u64, k_draws: usize) -> PyResult<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        metrics::combined_error_avg(&self.inner, &x_hat, &mut rng, k_draws).map_err(to_py_err)
    }

    /// Quartile thresholds from training windows over all three tasks.
    /// Returns (q2, q3).
    fn calibrate(&self, train_windows: Vec<Vec<f64>>, seed: u64) -> PyResult<(f64, f64)> {
        if self.inner.dim() != 72 {
            return Err(PyValueError::new_err(
                "calibration runs the three imputation tasks and needs a 72-dim model",
            ));
        }
        let windows = rows_to_array(train_windows)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let q = halluc::calibrate(&self.inner, windows.view(), "python", &mut rng)
            .map_err(to_py_err)?;
        Ok((q.q2, q.q3))
    }

    /// Draw N responses, score each with CE, return
    /// (samples, ce_values, selected_index).
    fn mitigate(
        &self,
        prompt_idx: Vec<usize>,
        prompt_values: Vec<f64>,
        n: usize,
        seed: u64,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, usize)> {
        let prompt = PromptSpec::new(self.inner.dim(), prompt_idx, prompt_values)
            .map_err(to_py_err)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let result = halluc::mitigate(&self.inner, &prompt, n, &mut rng).map_err(to_py_err)?;
        Ok((result.samples, result.ce_values, result.selected))
    }

    /// Training-set mean response, the weak baseline.
    fn baseline_response(&self) -> Vec<f64> {
        let prompt = PromptSpec::new(self.inner.dim(), vec![], vec![]).expect("empty prompt");
        halluc::baseline_respond(&self.inner.normalizer, &prompt)
    }
}

/// Classify a CE value against (q2, q3): "low", "medium", or "high".
#[pyfunction]
fn classify_ce(ce: f64, q2: f64, q3: f64) -> PyResult<String> {
    if q2 > q3 {
        return Err(PyValueError::new_err("q2 must not exceed q3"));
    }
    let quartiles = halluc::CalibrationQuartiles {
        q2,
        q3,
        n: 0,
        dataset: String::new(),
        model_tag: String::new(),
    };
    Ok(match halluc::classify(ce, &quartiles) {
        halluc::HallucinationLevel::Low => "low",
        halluc::HallucinationLevel::Medium => "medium",
        halluc::HallucinationLevel::High => "high",
    }
    .to_string())
}

/// Prompt and response index lists of a named task over the 3 x 24 grid.
#[pyfunction]
fn task_mask(task: &str) -> PyResult<(Vec<usize>, Vec<usize>)> {
    Ok(make_mask(parse_task(task)?))
}

/// Mean over time-steps of |f| for a window of a named dataset recipe.
#[pyfunction]
fn relational_error(window: Vec<f64>, dataset: &str) -> PyResult<f64> {
    let kind: DatasetKind = dataset.parse().map_err(to_py_err)?;
    let (var_count, window_len) = if kind == DatasetKind::Synthetic2d {
        (2, 1)
    } else {
        (tsdh_core::data::VAR_COUNT, tsdh_core::data::WINDOW_LEN)
    };
    metrics::relational_error(&window, kind.relation(), var_count, window_len)
        .map_err(to_py_err)
}

/// Overlap coefficient between two samples over 50 shared bins.
#[pyfunction]
fn overlap_coefficient(low: Vec<f64>, high: Vec<f64>) -> PyResult<f64> {
    metrics::overlap_coefficient(&low, &high, metrics::DEFAULT_OVERLAP_BINS).map_err(to_py_err)
}

/// Linear-interpolation quantile.
#[pyfunction]
fn quantile(values: Vec<f64>, q: f64) -> PyResult<f64> {
    halluc::quantile(&values, q).map_err(to_py_err)
}

/// (x, sin(2 pi x) + noise) toy points as a list of [x, y] rows.
#[pyfunction]
fn synthetic2d(n_points: usize, noise_std: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let dataset = make_synthetic2d(n_points, noise_std, seed).map_err(to_py_err)?;
    Ok(dataset
        .windows
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect())
}

#[pymodule]
fn tsdh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(classify_ce, m)?)?;
    m.add_function(wrap_pyfunction!(task_mask, m)?)?;
    m.add_function(wrap_pyfunction!(relational_error, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic2d, m)?)?;
    Ok(())
}
