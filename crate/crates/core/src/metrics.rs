//! Hallucination metrics: ground-truth relational error, the combined-error
//! proxy extracted from a diffusion model, the trajectory-based appendix
//! metrics, and the histogram overlap coefficient.

use std::path::Path;

use ndarray::ArrayView1;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Relation, RelationalDataset};
use crate::diffusion::{DiffusionModel, PromptSpec, TrajectoryRecord};
use crate::tasks::TaskKind;
use crate::{Error, Result};

/// A prompt-response pair with its recorded metric values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredPair {
    pub window_id: usize,
    pub task: TaskKind,
    pub model_tag: String,
    pub x_hat: Vec<f64>,
    pub ce: f64,
    pub pe: Option<f64>,
    pub tv: Option<f64>,
    pub rts: Option<f64>,
    pub pts: Option<f64>,
    pub cts: Option<f64>,
    pub e_r: Option<f64>,
}

/// Mean over time-steps of |f| for one window, in original units.
pub fn relational_error(
    window: &[f64],
    relation: Relation,
    var_count: usize,
    window_len: usize,
) -> Result<f64> {
    if window.len() != var_count * window_len {
        return Err(Error::ShapeMismatch {
            expected: var_count * window_len,
            got: window.len(),
        });
    }
    if var_count == 2 {
        // 2D point datasets carry a single residual.
        return Ok(relation.residual(window[0], window[1], 0.0).abs());
    }
    let l = window_len;
    let sum: f64 = (0..l)
        .map(|tau| relation.residual(window[tau], window[l + tau], window[2 * l + tau]).abs())
        .sum();
    Ok(sum / l as f64)
}

/// Relational error of a window against its dataset's relation.
pub fn dataset_relational_error(dataset: &RelationalDataset, window: &[f64]) -> Result<f64> {
    relational_error(window, dataset.relation, dataset.var_count, dataset.window_len)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt()
}

/// Combined Error: RMSE between a complete prompt-response pair and its
/// single-step re-denoising, computed in the model's standardized units so
/// variables of different scales contribute comparably.
pub fn combined_error(model: &DiffusionModel, x_hat: &[f64], rng: &mut ChaCha12Rng) -> Result<f64> {
    let x_hh = model.denoise_full_vector(x_hat, rng)?;
    let a = model.normalizer.normalize(x_hat);
    let b = model.normalizer.normalize(&x_hh);
    Ok(rmse(&a, &b))
}

/// Combined error with the t=1 corruption averaged over `k_draws` noise
/// draws. Averaging shrinks the irreducible single-draw noise floor and
/// widens the gap between plausible and implausible responses.
pub fn combined_error_avg(
    model: &DiffusionModel,
    x_hat: &[f64],
    rng: &mut ChaCha12Rng,
    k_draws: usize,
) -> Result<f64> {
    let x_hh = model.denoise_full_vector_avg(x_hat, rng, k_draws)?;
    let a = model.normalizer.normalize(x_hat);
    let b = model.normalizer.normalize(&x_hh);
    Ok(rmse(&a, &b))
}

/// Batched combined error, one value per row.
pub fn combined_error_batch(
    model: &DiffusionModel,
    x_hat: ndarray::ArrayView2<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let x_hh = model.denoise_full_batch(x_hat, rng)?;
    let a = model.normalizer.normalize_batch(x_hat);
    let b = model.normalizer.normalize_batch(x_hh.view());
    Ok(a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(ra, rb)| rmse(ra.as_slice().unwrap(), rb.as_slice().unwrap()))
        .collect())
}

/// RMSE of the output against the prompt values, over prompt indices only.
pub fn prompt_error(x_hat: &[f64], prompt: &PromptSpec) -> Result<f64> {
    if prompt.prompt_idx().is_empty() {
        return Err(Error::UndefinedMetric("prompt error with empty prompt".into()));
    }
    if x_hat.len() != prompt.dim() {
        return Err(Error::ShapeMismatch {
            expected: prompt.dim(),
            got: x_hat.len(),
        });
    }
    let got: Vec<f64> = prompt.prompt_idx().iter().map(|&i| x_hat[i]).collect();
    Ok(rmse(&got, prompt.prompt_values()))
}

fn column_variance(col: ArrayView1<f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Mean over the data dimension of the population variance of the predicted
/// mean across diffusion steps.
pub fn trajectory_variance(traj: &TrajectoryRecord) -> Result<f64> {
    if traj.t_steps() == 0 || traj.dim() == 0 {
        return Err(Error::UndefinedMetric("empty trajectory".into()));
    }
    let sum: f64 = traj.mus.columns().into_iter().map(column_variance).sum();
    Ok(sum / traj.dim() as f64)
}

/// Mean over response indices of the standard deviation of the predicted
/// mean across diffusion steps.
pub fn rts(traj: &TrajectoryRecord, response_idx: &[usize]) -> Result<f64> {
    if response_idx.is_empty() {
        return Err(Error::UndefinedMetric("RTS with empty response set".into()));
    }
    let sum: f64 = response_idx
        .iter()
        .map(|&i| column_variance(traj.mus.column(i)).sqrt())
        .sum();
    Ok(sum / response_idx.len() as f64)
}

fn rmse_over_steps(col: ArrayView1<f64>, target: f64) -> f64 {
    let n = col.len() as f64;
    (col.iter().map(|x| (x - target) * (x - target)).sum::<f64>() / n).sqrt()
}

/// Mean over the given indices of the RMSE across diffusion steps between
/// the predicted mean and a per-index target value.
pub fn trajectory_rmse(traj: &TrajectoryRecord, idx: &[usize], targets: &[f64]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::UndefinedMetric("trajectory RMSE with empty index set".into()));
    }
    if idx.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            expected: idx.len(),
            got: targets.len(),
        });
    }
    let sum: f64 = idx
        .iter()
        .zip(targets)
        .map(|(&i, &x)| rmse_over_steps(traj.mus.column(i), x))
        .sum();
    Ok(sum / idx.len() as f64)
}

/// PTS: trajectory RMSE against the prompt values, over prompt indices.
/// Targets are taken in the model's standardized units to match the
/// trajectory.
pub fn pts(model: &DiffusionModel, traj: &TrajectoryRecord, prompt: &PromptSpec) -> Result<f64> {
    if prompt.prompt_idx().is_empty() {
        return Err(Error::UndefinedMetric("PTS with empty prompt".into()));
    }
    let mut full = vec![0.0; prompt.dim()];
    for (&i, &v) in prompt.prompt_idx().iter().zip(prompt.prompt_values()) {
        full[i] = v;
    }
    let normed = model.normalizer.normalize(&full);
    let targets: Vec<f64> = prompt.prompt_idx().iter().map(|&i| normed[i]).collect();
    trajectory_rmse(traj, prompt.prompt_idx(), &targets)
}

/// CTS: a full second conditioned pass with the whole pair as the prompt,
/// scored as trajectory RMSE against the pair over all indices.
pub fn cts(model: &DiffusionModel, x_hat: &[f64], rng: &mut ChaCha12Rng) -> Result<f64> {
    let prompt = PromptSpec::new(x_hat.len(), (0..x_hat.len()).collect(), x_hat.to_vec())?;
    let (_, traj) = model.repaint_impute_with_trajectory(&prompt, rng)?;
    let normed = model.normalizer.normalize(x_hat);
    let idx: Vec<usize> = (0..x_hat.len()).collect();
    trajectory_rmse(&traj, &idx, &normed)
}

/// Probability histogram over shared bin edges.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Histogram {
    /// Equal-width bins spanning [lo, hi]; values outside are clamped into
    /// the end bins.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::UndefinedMetric("histogram of empty sample".into()));
        }
        if n_bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let width = (hi - lo).max(0.0);
        let mut counts = vec![0usize; n_bins];
        for &v in values {
            let bin = if width == 0.0 {
                0
            } else {
                (((v - lo) / width * n_bins as f64).floor() as isize)
                    .clamp(0, n_bins as isize - 1) as usize
            };
            counts[bin] += 1;
        }
        let n = values.len() as f64;
        let edges = (0..=n_bins)
            .map(|k| lo + width * k as f64 / n_bins as f64)
            .collect();
        Ok(Self {
            edges,
            probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }
}

pub const DEFAULT_OVERLAP_BINS: usize = 50;

/// Overlap coefficient between two samples: shared-edge histograms over the
/// pooled range, then sum of per-bin minima. In [0, 1]; one means identical
/// binned distributions, zero means disjoint support.
pub fn overlap_coefficient(low: &[f64], high: &[f64], n_bins: usize) -> Result<f64> {
    if low.is_empty() || high.is_empty() {
        return Err(Error::UndefinedMetric("overlap of empty sample".into()));
    }
    let lo = low.iter().chain(high).cloned().fold(f64::INFINITY, f64::min);
    let hi = low.iter().chain(high).cloned().fold(f64::NEG_INFINITY, f64::max);
    let p = Histogram::from_values(low, lo, hi, n_bins)?;
    let q = Histogram::from_values(high, lo, hi, n_bins)?;
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| a.min(*b)).sum())
}

/// Scored pairs exported as CSV: the raw material for metric-vs-error
/// scatter plots.
pub fn write_scored_pairs_csv(pairs: &[ScoredPair], path: &Path, comment: Option<&str>) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    if let Some(c) = comment {
        writeln!(file, "# {c}")?;
    }
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record([
        "window_id", "task", "model", "ce", "pe", "tv", "rts", "pts", "cts", "e_r",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    for p in pairs {
        writer.write_record([
            p.window_id.to_string(),
            p.task.name().to_string(),
            p.model_tag.clone(),
            format!("{:.12e}", p.ce),
            fmt(p.pe),
            fmt(p.tv),
            fmt(p.rts),
            fmt(p.pts),
            fmt(p.cts),
            fmt(p.e_r),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relational_error_constructed_sum_window_is_zero() {
        let mut w = vec![0.0; 72];
        for tau in 0..24 {
            w[tau] = tau as f64;
            w[24 + tau] = 2.0 * tau as f64;
            w[48 + tau] = 3.0 * tau as f64;
        }
        assert_eq!(relational_error(&w, Relation::Sum, 3, 24).unwrap(), 0.0);
    }

    #[test]
    fn relational_error_single_step_magnitude() {
        // One broken step |1+2-7| = 4 averaged over 24 steps.
        let mut w = vec![0.0; 72];
        w[0] = 1.0;
        w[24] = 2.0;
        w[48] = 7.0;
        let e = relational_error(&w, Relation::Sum, 3, 24).unwrap();
        assert!((e - 4.0 / 24.0).abs() < 1e-15);
        // And directly on the residual definition.
        assert_eq!(Relation::Sum.residual(1.0, 2.0, 7.0).abs(), 4.0);
    }

    #[test]
    fn relational_error_zero_window_product() {
        let w = vec![0.0; 72];
        assert_eq!(relational_error(&w, Relation::Product, 3, 24).unwrap(), 0.0);
    }

    #[test]
    fn relational_error_permutation_invariant() {
        let mut w: Vec<f64> = (0..72).map(|i| (i as f64 * 0.37).sin()).collect();
        let e1 = relational_error(&w, Relation::Sum, 3, 24).unwrap();
        // Swap time-steps 3 and 17 across all variables.
        for v in 0..3 {
            w.swap(v * 24 + 3, v * 24 + 17);
        }
        let e2 = relational_error(&w, Relation::Sum, 3, 24).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn rmse_hand_value() {
        // (1,2,3) vs (1,2,4) -> sqrt(1/3)
        let e = rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]);
        assert!((e - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((e - 0.5774).abs() < 1e-4);
    }

    #[test]
    fn prompt_error_cases() {
        let prompt = PromptSpec::new(3, vec![0, 2], vec![1.0, 2.0]).unwrap();
        // Exact agreement on prompt indices.
        assert_eq!(prompt_error(&[1.0, 9.0, 2.0], &prompt).unwrap(), 0.0);
        // Constant +1 offset on every prompt index.
        let e = prompt_error(&[2.0, 9.0, 3.0], &prompt).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
        // Single prompt index, |diff| = 0.3.
        let single = PromptSpec::new(2, vec![1], vec![0.5]).unwrap();
        let e = prompt_error(&[0.0, 0.8], &single).unwrap();
        assert!((e - 0.3).abs() < 1e-12);
        // Empty prompt is undefined.
        let empty = PromptSpec::new(2, vec![], vec![]).unwrap();
        assert!(prompt_error(&[0.0, 0.0], &empty).is_err());
    }

    #[test]
    fn trajectory_variance_cases() {
        // Constant trajectory -> 0.
        let traj = TrajectoryRecord {
            mus: array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [1.0, 2.0]],
        };
        assert_eq!(trajectory_variance(&traj).unwrap(), 0.0);
        // One dim alternating 0/1 over an even number of steps: var 0.25;
        // other dim constant: var 0. Mean = 0.125.
        let traj = TrajectoryRecord {
            mus: array![[0.0, 5.0], [1.0, 5.0], [0.0, 5.0], [1.0, 5.0]],
        };
        let tv = trajectory_variance(&traj).unwrap();
        assert!((tv - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rts_and_pts_cases() {
        // Constant trajectory equal to targets -> both zero.
        let traj = TrajectoryRecord {
            mus: array![[1.0, 2.0], [1.0, 2.0]],
        };
        assert_eq!(rts(&traj, &[0, 1]).unwrap(), 0.0);
        assert_eq!(trajectory_rmse(&traj, &[0, 1], &[1.0, 2.0]).unwrap(), 0.0);
        // Constant +1 offset for all steps -> RMSE 1.
        let e = trajectory_rmse(&traj, &[0], &[0.0]).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
        // Alternating 0/1 column: std = 0.5.
        let traj = TrajectoryRecord {
            mus: array![[0.0], [1.0], [0.0], [1.0]],
        };
        assert!((rts(&traj, &[0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rts(&traj, &[]).is_err());
    }

    #[test]
    fn overlap_identical_lists_is_one() {
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let o = overlap_coefficient(&v, &v, 10).unwrap();
        assert!((o - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_disjoint_support_is_zero() {
        let a = vec![0.0, 0.1, 0.2];
        let b = vec![10.0, 10.1, 10.2];
        let o = overlap_coefficient(&a, &b, 20).unwrap();
        assert_eq!(o, 0.0);
    }

    #[test]
    fn overlap_hand_value_from_bin_minima() {
        // P = (0.5, 0.5, 0), Q = (0, 0.5, 0.5) over 3 bins -> 0.5.
        // Pooled range [0.5, 2.99] splits into bins at 1.33 and 2.16.
        let a = vec![0.5, 0.5, 1.5, 1.5];
        let b = vec![1.5, 1.5, 2.5, 2.99];
        let o = overlap_coefficient(&a, &b, 3).unwrap();
        assert!((o - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlap_constant_equal_samples() {
        let a = vec![2.0; 5];
        let b = vec![2.0; 8];
        assert!((overlap_coefficient(&a, &b, 50).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_probs_sum_to_one() {
        let h = Histogram::from_values(&[0.1, 0.5, 0.9, 1.3, 2.7], 0.0, 3.0, 7).unwrap();
        let s: f64 = h.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(h.probs.iter().all(|&p| p >= 0.0));
    }
}
