use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-variable standardization statistics computed on the train split only.
///
/// A window of V variables over L time-steps is laid out as i = v*L + tau;
/// every entry of variable v is shifted and scaled by that variable's train
/// mean and (population) standard deviation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub window_len: usize,
}

impl Normalizer {
    pub fn fit(train_windows: ArrayView2<f64>, var_count: usize, window_len: usize) -> Result<Self> {
        if train_windows.ncols() != var_count * window_len {
            return Err(Error::ShapeMismatch {
                expected: var_count * window_len,
                got: train_windows.ncols(),
            });
        }
        if train_windows.nrows() == 0 {
            return Err(Error::Data("cannot fit normalizer on zero windows".into()));
        }
        let mut means = Vec::with_capacity(var_count);
        let mut stds = Vec::with_capacity(var_count);
        for v in 0..var_count {
            let cols = v * window_len..(v + 1) * window_len;
            let slab = train_windows.slice(ndarray::s![.., cols]);
            let n = slab.len() as f64;
            let mean = slab.iter().sum::<f64>() / n;
            let var = slab.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 0.0 || !std.is_finite() {
                return Err(Error::Data(format!(
                    "variable {v} is degenerate (std = {std})"
                )));
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(Self {
            means,
            stds,
            window_len,
        })
    }

    pub fn var_count(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.len() * self.window_len
    }

    fn var_of(&self, i: usize) -> usize {
        i / self.window_len
    }

    pub fn normalize(&self, window: &[f64]) -> Vec<f64> {
        window
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let v = self.var_of(i);
                (x - self.means[v]) / self.stds[v]
            })
            .collect()
    }

    pub fn denormalize(&self, window: &[f64]) -> Vec<f64> {
        window
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let v = self.var_of(i);
                x * self.stds[v] + self.means[v]
            })
            .collect()
    }

    pub fn normalize_batch(&self, windows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = windows.to_owned();
        for mut row in out.rows_mut() {
            for (i, x) in row.iter_mut().enumerate() {
                let v = self.var_of(i);
                *x = (*x - self.means[v]) / self.stds[v];
            }
        }
        out
    }

    pub fn denormalize_batch(&self, windows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = windows.to_owned();
        for mut row in out.rows_mut() {
            for (i, x) in row.iter_mut().enumerate() {
                let v = self.var_of(i);
                *x = *x * self.stds[v] + self.means[v];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn train_data_standardizes_to_zero_mean_unit_std() {
        let windows = array![[1.0, 2.0, 10.0, 20.0], [3.0, 4.0, 30.0, 40.0]];
        let norm = Normalizer::fit(windows.view(), 2, 2).unwrap();
        let normed = norm.normalize_batch(windows.view());
        for v in 0..2 {
            let vals: Vec<f64> = normed
                .columns()
                .into_iter()
                .enumerate()
                .filter(|(c, _)| c / 2 == v)
                .flat_map(|(_, col)| col.to_vec())
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((std - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let windows = array![[1.0, 2.0, 10.0, 20.0], [3.0, 4.0, 30.0, 40.0]];
        let norm = Normalizer::fit(windows.view(), 2, 2).unwrap();
        let w = vec![7.0, -2.5, 0.3, 11.0];
        let back = norm.denormalize(&norm.normalize(&w));
        for (a, b) in w.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_variable_rejected() {
        let windows = array![[1.0, 1.0, 2.0, 2.0], [1.0, 1.0, 3.0, 4.0]];
        assert!(Normalizer::fit(windows.view(), 2, 2).is_err());
    }
}
