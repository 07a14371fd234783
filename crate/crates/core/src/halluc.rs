//! Hallucination detection and mitigation: quartile calibration of the CE
//! metric, low/medium/high classification, argmin-CE sample filtering, the
//! training-mean baseline, and ingestion of externally produced responses.

use std::path::Path;

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::diffusion::{DiffusionModel, PromptSpec};
use crate::metrics::combined_error_batch;
use crate::tasks::{TaskKind, ALL_TASKS};
use crate::{Error, Result};

/// Dataset-specific CE thresholds: Q2 and Q3 of the train-set CE values
/// pooled over all imputation tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationQuartiles {
    pub q2: f64,
    pub q3: f64,
    pub n: usize,
    pub dataset: String,
    pub model_tag: String,
}

impl CalibrationQuartiles {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Expected relational hallucination level of a prompt-response pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HallucinationLevel {
    Low,
    Medium,
    High,
}

impl std::fmt::Display for HallucinationLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HallucinationLevel::Low => "low",
            HallucinationLevel::Medium => "medium",
            HallucinationLevel::High => "high",
        })
    }
}

/// Linear-interpolation quantile between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Quartile thresholds from a pooled set of CE values.
pub fn quartiles_from_values(
    ce_values: &[f64],
    dataset: &str,
    model_tag: &str,
) -> Result<CalibrationQuartiles> {
    if ce_values.len() < 4 {
        return Err(Error::Data(format!(
            "calibration needs at least 4 CE values, got {}",
            ce_values.len()
        )));
    }
    let q2 = quantile(ce_values, 0.5)?;
    let q3 = quantile(ce_values, 0.75)?;
    Ok(CalibrationQuartiles {
        q2,
        q3,
        n: ce_values.len(),
        dataset: dataset.to_string(),
        model_tag: model_tag.to_string(),
    })
}

/// Impute every train window under every task and collect the CE values.
pub fn calibration_ce_values(
    model: &DiffusionModel,
    train_windows: ArrayView2<f64>,
    tasks: &[TaskKind],
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if train_windows.nrows() < 4 {
        return Err(Error::Data(format!(
            "calibration needs at least 4 train windows, got {}",
            train_windows.nrows()
        )));
    }
    let mut ce_values = Vec::with_capacity(train_windows.nrows() * tasks.len());
    for &task in tasks {
        let mask = task.mask();
        let imputed = model.repaint_impute_masked_batch(train_windows, &mask, rng)?;
        ce_values.extend(combined_error_batch(model, imputed.view(), rng)?);
    }
    Ok(ce_values)
}

/// Calibration CE values with the k-draw averaged corruption.
pub fn calibration_ce_values_avg(
    model: &DiffusionModel,
    train_windows: ArrayView2<f64>,
    tasks: &[TaskKind],
    rng: &mut ChaCha12Rng,
    k_draws: usize,
) -> Result<Vec<f64>> {
    if train_windows.nrows() < 4 {
        return Err(Error::Data(format!(
            "calibration needs at least 4 train windows, got {}",
            train_windows.nrows()
        )));
    }
    let mut ce_values = Vec::with_capacity(train_windows.nrows() * tasks.len());
    for &task in tasks {
        let mask = task.mask();
        let imputed = model.repaint_impute_masked_batch(train_windows, &mask, rng)?;
        for row in imputed.rows() {
            ce_values.push(crate::metrics::combined_error_avg(
                model,
                row.as_slice().unwrap(),
                rng,
                k_draws,
            )?);
        }
    }
    Ok(ce_values)
}

/// Quartile calibration over the training set and all three tasks.
pub fn calibrate(
    model: &DiffusionModel,
    train_windows: ArrayView2<f64>,
    dataset: &str,
    rng: &mut ChaCha12Rng,
) -> Result<CalibrationQuartiles> {
    let ce_values = calibration_ce_values(model, train_windows, &ALL_TASKS, rng)?;
    quartiles_from_values(&ce_values, dataset, "dm")
}

/// Quartile calibration with the k-draw averaged corruption.
pub fn calibrate_avg(
    model: &DiffusionModel,
    train_windows: ArrayView2<f64>,
    dataset: &str,
    rng: &mut ChaCha12Rng,
    k_draws: usize,
) -> Result<CalibrationQuartiles> {
    let ce_values = calibration_ce_values_avg(model, train_windows, &ALL_TASKS, rng, k_draws)?;
    quartiles_from_values(&ce_values, dataset, "dm")
}

/// Low below Q2, medium in [Q2, Q3], high above Q3.
pub fn classify(ce: f64, quartiles: &CalibrationQuartiles) -> HallucinationLevel {
    if ce < quartiles.q2 {
        HallucinationLevel::Low
    } else if ce <= quartiles.q3 {
        HallucinationLevel::Medium
    } else {
        HallucinationLevel::High
    }
}

/// Outcome of sample-N argmin-CE filtering for one prompt.
#[derive(Debug, Clone)]
pub struct MitigationResult {
    pub samples: Vec<Vec<f64>>,
    pub ce_values: Vec<f64>,
    /// argmin over CE; ties break toward the lowest index.
    pub selected: usize,
    pub e_r_values: Option<Vec<f64>>,
    /// E_r of the selected sample over the mean E_r of all samples.
    pub delta_e_r: Option<f64>,
}

impl MitigationResult {
    pub fn selected_response(&self) -> &[f64] {
        &self.samples[self.selected]
    }

    /// Attach ground-truth relational errors and the relative change.
    pub fn with_relational_errors(mut self, e_r: Vec<f64>) -> Result<Self> {
        if e_r.len() != self.samples.len() {
            return Err(Error::ShapeMismatch {
                expected: self.samples.len(),
                got: e_r.len(),
            });
        }
        let mean = e_r.iter().sum::<f64>() / e_r.len() as f64;
        self.delta_e_r = if mean > 0.0 {
            Some(e_r[self.selected] / mean)
        } else {
            None
        };
        self.e_r_values = Some(e_r);
        Ok(self)
    }
}

pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Draw N responses with independent sub-seeds, score each with CE, and
/// select the argmin.
pub fn mitigate(
    model: &DiffusionModel,
    prompt: &PromptSpec,
    n_samples: usize,
    rng: &mut ChaCha12Rng,
) -> Result<MitigationResult> {
    mitigate_avg(model, prompt, n_samples, rng, 1)
}

/// Mitigation with the CE corruption averaged over `k_draws` noise draws,
/// which sharpens the sample ranking.
pub fn mitigate_avg(
    model: &DiffusionModel,
    prompt: &PromptSpec,
    n_samples: usize,
    rng: &mut ChaCha12Rng,
    k_draws: usize,
) -> Result<MitigationResult> {
    if n_samples < 1 {
        return Err(Error::Config("mitigation needs N >= 1".into()));
    }
    let mut samples = Vec::with_capacity(n_samples);
    let mut ce_values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut sub = ChaCha12Rng::seed_from_u64(rng.gen());
        let x_hat = model.repaint_impute(prompt, &mut sub)?;
        ce_values.push(crate::metrics::combined_error_avg(
            model, &x_hat, &mut sub, k_draws,
        )?);
        samples.push(x_hat);
    }
    let selected = argmin(&ce_values);
    Ok(MitigationResult {
        samples,
        ce_values,
        selected,
        e_r_values: None,
        delta_e_r: None,
    })
}

/// Weak baseline: every index of the window, prompt and response alike, is
/// set to its variable's training-set mean.
pub fn baseline_respond(normalizer: &Normalizer, _prompt: &PromptSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(normalizer.dim());
    for v in 0..normalizer.var_count() {
        out.extend(std::iter::repeat(normalizer.means[v]).take(normalizer.window_len));
    }
    out
}

/// One externally produced prompt-response pair.
#[derive(Debug, Clone)]
pub struct ExternalResponse {
    pub window_id: usize,
    pub task: TaskKind,
    pub model_tag: String,
    /// Sample-group id; rows sharing (window id, task, group) form the N
    /// samples of one mitigation-style selection.
    pub group: String,
    pub values: Vec<f64>,
}

/// Rows rejected during ingestion, with the 1-based file line and reason.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub responses: Vec<ExternalResponse>,
    pub rejected: Vec<(usize, String)>,
}

pub const EXTERNAL_VALUE_COLUMNS: usize = crate::data::VAR_COUNT * crate::data::WINDOW_LEN;

/// Parse the external-response CSV.
///
/// Schema: `window_id,task,model,group` followed by the 72 response values
/// `v0..v71` in original units. Schema violations are hard errors with the
/// offending line; rows with non-finite values are rejected and reported.
pub fn ingest_external_responses(path: &Path) -> Result<IngestReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let expected_cols = 4 + EXTERNAL_VALUE_COLUMNS;
    let mut responses = Vec::new();
    let mut rejected = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != expected_cols {
            return Err(Error::Parse {
                line,
                msg: format!("expected {expected_cols} columns, got {}", record.len()),
            });
        }
        let window_id: usize = record[0].trim().parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad window id '{}': {e}", &record[0]),
        })?;
        let task: TaskKind = record[1].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad task '{}'", &record[1]),
        })?;
        let mut values = Vec::with_capacity(EXTERNAL_VALUE_COLUMNS);
        let mut bad = None;
        for k in 0..EXTERNAL_VALUE_COLUMNS {
            let field = record[4 + k].trim();
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    bad = Some(format!("non-finite or unparseable value '{field}' in column v{k}"));
                    break;
                }
            }
        }
        match bad {
            Some(reason) => rejected.push((line, reason)),
            None => responses.push(ExternalResponse {
                window_id,
                task,
                model_tag: record[2].trim().to_string(),
                group: record[3].trim().to_string(),
                values,
            }),
        }
    }
    Ok(IngestReport {
        responses,
        rejected,
    })
}

/// Argmin-CE selection over externally supplied sample groups. Returns, per
/// (window id, task, group) in first-appearance order, the indices into
/// `responses` of the group and the selected member.
pub fn select_external_groups(
    responses: &[ExternalResponse],
    ce_values: &[f64],
) -> Result<Vec<(Vec<usize>, usize)>> {
    if responses.len() != ce_values.len() {
        return Err(Error::ShapeMismatch {
            expected: responses.len(),
            got: ce_values.len(),
        });
    }
    let mut order: Vec<(usize, TaskKind, String)> = Vec::new();
    let mut groups: std::collections::HashMap<(usize, TaskKind, String), Vec<usize>> =
        std::collections::HashMap::new();
    for (i, r) in responses.iter().enumerate() {
        let key = (r.window_id, r.task, r.group.clone());
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(i);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let members = groups.remove(&key).expect("group recorded");
            let ce: Vec<f64> = members.iter().map(|&i| ce_values[i]).collect();
            let best = members[argmin(&ce)];
            (members, best)
        })
        .collect())
}
