//! DDPM forward/reverse processes and RePaint-conditioned imputation.
//!
//! The model is unconditional; imputation conditions it at sampling time by
//! overwriting the prompt indices with forward-corrupted true values at every
//! reverse step. All network-facing tensors are in per-variable standardized
//! units; public inputs and outputs are in original units.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::nn::{AdamState, MlpNetwork, OneCycleSchedule, TrainConfig};
use crate::{Error, Result};

/// Linear variance schedule with the original DDPM choice sigma_t^2 = beta_t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl VarianceSchedule {
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps < 1 {
            return Err(Error::Config("schedule needs at least 1 step".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "invalid beta range [{beta_start}, {beta_end}]"
            )));
        }
        let mut betas = Vec::with_capacity(t_steps);
        for k in 0..t_steps {
            let frac = if t_steps == 1 {
                0.0
            } else {
                k as f64 / (t_steps - 1) as f64
            };
            betas.push(beta_start + (beta_end - beta_start) * frac);
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(t_steps);
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Default schedule: T=1000, beta from 1e-4 to 1e-2.
    pub fn standard() -> Self {
        Self::linear(1000, 1e-4, 1e-2).expect("standard schedule is valid")
    }

    pub fn t_steps(&self) -> usize {
        self.betas.len()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.t_steps() {
            return Err(Error::Config(format!(
                "diffusion step {t} out of range [1, {}]",
                self.t_steps()
            )));
        }
        Ok(())
    }

    /// 1-based accessors matching the t = 1..T convention.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }
    pub fn sigma(&self, t: usize) -> f64 {
        self.betas[t - 1].sqrt()
    }

    /// Forward process sampled directly at step t:
    /// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
    pub fn q_sample(&self, x0: ArrayView1<f64>, t: usize, eps: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_t(t)?;
        if x0.len() != eps.len() {
            return Err(Error::ShapeMismatch {
                expected: x0.len(),
                got: eps.len(),
            });
        }
        let ab = self.alpha_bar(t);
        let (cs, cn) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().zip(eps.iter()).map(|(&x, &e)| cs * x + cn * e).collect())
    }
}

/// Prompt indices with values plus the complementary response indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    dim: usize,
    prompt_idx: Vec<usize>,
    prompt_values: Vec<f64>,
    response_idx: Vec<usize>,
}

impl PromptSpec {
    pub fn new(dim: usize, prompt_idx: Vec<usize>, prompt_values: Vec<f64>) -> Result<Self> {
        if prompt_idx.len() != prompt_values.len() {
            return Err(Error::ShapeMismatch {
                expected: prompt_idx.len(),
                got: prompt_values.len(),
            });
        }
        let mut seen = vec![false; dim];
        for &i in &prompt_idx {
            if i >= dim {
                return Err(Error::Config(format!("prompt index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Config(format!("duplicate prompt index {i}")));
            }
            seen[i] = true;
        }
        if prompt_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("prompt values must be finite".into()));
        }
        let response_idx = (0..dim).filter(|i| !seen[*i]).collect();
        Ok(Self {
            dim,
            prompt_idx,
            prompt_values,
            response_idx,
        })
    }

    /// Prompt covering a subset of a full window's values.
    pub fn from_window_mask(window: &[f64], mask: &[bool]) -> Result<Self> {
        if window.len() != mask.len() {
            return Err(Error::ShapeMismatch {
                expected: window.len(),
                got: mask.len(),
            });
        }
        let prompt_idx: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        let prompt_values = prompt_idx.iter().map(|&i| window[i]).collect();
        Self::new(window.len(), prompt_idx, prompt_values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn prompt_idx(&self) -> &[usize] {
        &self.prompt_idx
    }
    pub fn prompt_values(&self) -> &[f64] {
        &self.prompt_values
    }
    pub fn response_idx(&self) -> &[usize] {
        &self.response_idx
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.dim];
        for &i in &self.prompt_idx {
            m[i] = true;
        }
        m
    }
}

/// Predicted means captured during one conditioned reverse pass:
/// rows are diffusion steps ordered t = T..1, columns the data dimension.
/// Values are in the model's standardized units.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub mus: Array2<f64>,
}

impl TrajectoryRecord {
    pub fn t_steps(&self) -> usize {
        self.mus.nrows()
    }
    pub fn dim(&self) -> usize {
        self.mus.ncols()
    }
}

/// Progress of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
}

/// Variance schedule + noise-prediction network + normalizer.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub net: MlpNetwork,
    pub schedule: VarianceSchedule,
    pub normalizer: Normalizer,
    trained: bool,
}

impl DiffusionModel {
    pub fn new(net: MlpNetwork, schedule: VarianceSchedule, normalizer: Normalizer) -> Result<Self> {
        if net.data_dim() != normalizer.dim() {
            return Err(Error::ShapeMismatch {
                expected: normalizer.dim(),
                got: net.data_dim(),
            });
        }
        Ok(Self {
            net,
            schedule,
            normalizer,
            trained: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.net.data_dim()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Marks the model usable for sampling; set by `train` and checkpoint load.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn require_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Untrained)
        }
    }

    /// Reverse-step mean, Eq.-style:
    /// mu(x_t, t) = (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps(x_t, t)) / sqrt(alpha_t)
    pub fn p_mean(&self, x_t: ArrayView1<f64>, t: usize) -> Result<Array1<f64>> {
        self.schedule.check_t(t)?;
        let eps = self.net.forward(x_t, t)?;
        let a = self.schedule.alpha(t);
        let ab = self.schedule.alpha_bar(t);
        let coef = (1.0 - a) / (1.0 - ab).sqrt();
        Ok(x_t
            .iter()
            .zip(eps.iter())
            .map(|(&x, &e)| (x - coef * e) / a.sqrt())
            .collect())
    }

    fn p_mean_batch(&self, x_t: ArrayView2<f64>, t: usize) -> Result<Array2<f64>> {
        let ts = vec![t; x_t.nrows()];
        let eps = self.net.forward_batch(x_t, &ts)?;
        let a = self.schedule.alpha(t);
        let ab = self.schedule.alpha_bar(t);
        let coef = (1.0 - a) / (1.0 - ab).sqrt();
        let inv_sqrt_a = 1.0 / a.sqrt();
        let mut mu = x_t.to_owned();
        ndarray::Zip::from(&mut mu).and(&eps).for_each(|m, &e| {
            *m = (*m - coef * e) * inv_sqrt_a;
        });
        Ok(mu)
    }

    /// One reverse sampling step. Noise `z` is added for t > 1; the final
    /// step t = 1 returns the mean (standard DDPM sampling convention).
    pub fn p_sample(&self, x_t: ArrayView1<f64>, t: usize, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        let mu = self.p_mean(x_t, t)?;
        if t == 1 {
            return Ok(mu);
        }
        let sigma = self.schedule.sigma(t);
        Ok(mu.iter().zip(z.iter()).map(|(&m, &zz)| m + sigma * zz).collect())
    }

    /// One training step on a batch of normalized windows: per row, sample
    /// t ~ U[1, T] and eps ~ N(0, I), corrupt, and regress the injected noise.
    pub fn train_step(
        &mut self,
        batch: ArrayView2<f64>,
        adam: &mut AdamState,
        lr: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        let (n, dim) = (batch.nrows(), batch.ncols());
        let t_max = self.schedule.t_steps();
        let ts: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=t_max)).collect();
        let eps = Array2::from_shape_fn((n, dim), |_| rng.sample::<f64, _>(StandardNormal));
        let mut x_t = Array2::zeros((n, dim));
        for r in 0..n {
            let row = self.schedule.q_sample(batch.row(r), ts[r], eps.row(r))?;
            x_t.row_mut(r).assign(&row);
        }
        let (loss, grads) = self.net.backward_batch(x_t.view(), &ts, eps.view())?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at optimizer step {}",
                adam.step + 1
            )));
        }
        adam.step(&mut self.net, &grads, lr)?;
        if !self.net.all_params_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameter after optimizer step {}",
                adam.step
            )));
        }
        Ok(loss)
    }

    /// Validation loss with a fixed noise draw so successive evaluations are
    /// comparable for early stopping.
    fn val_loss(&self, val: ArrayView2<f64>, seed: u64) -> Result<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (n, dim) = (val.nrows(), val.ncols());
        let t_max = self.schedule.t_steps();
        let ts: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=t_max)).collect();
        let eps = Array2::from_shape_fn((n, dim), |_| rng.sample::<f64, _>(StandardNormal));
        let mut x_t = Array2::zeros((n, dim));
        for r in 0..n {
            let row = self.schedule.q_sample(val.row(r), ts[r], eps.row(r))?;
            x_t.row_mut(r).assign(&row);
        }
        let out = self.net.forward_batch(x_t.view(), &ts)?;
        let diff = &out - &eps;
        Ok(diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64)
    }

    /// Full training loop with one-cycle LR, validation-based checkpointing,
    /// and early stopping. Windows are given in original units.
    pub fn train(
        &mut self,
        train_windows: ArrayView2<f64>,
        val_windows: ArrayView2<f64>,
        config: &TrainConfig,
    ) -> Result<TrainReport> {
        config.validate()?;
        if train_windows.nrows() == 0 || val_windows.nrows() == 0 {
            return Err(Error::Data("empty train or validation split".into()));
        }
        let train = self.normalizer.normalize_batch(train_windows);
        let val = self.normalizer.normalize_batch(val_windows);

        let n = train.nrows();
        let batches_per_epoch = n.div_ceil(config.batch_size);
        let total_steps = (config.max_epochs * batches_per_epoch).max(2);
        let sched = OneCycleSchedule::new(config.max_lr, total_steps)?;
        let mut adam = AdamState::new(&self.net);
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let val_seed = config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);

        let mut order: Vec<usize> = (0..n).collect();
        let mut report = TrainReport {
            train_losses: Vec::new(),
            val_losses: Vec::new(),
            best_epoch: 0,
            best_val_loss: f64::INFINITY,
            epochs_run: 0,
        };
        let mut best_params = self.net.flatten_params();
        let mut since_best = 0usize;
        let mut step = 0usize;

        for epoch in 0..config.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let mut batch = Array2::zeros((chunk.len(), train.ncols()));
                for (r, &i) in chunk.iter().enumerate() {
                    batch.row_mut(r).assign(&train.row(i));
                }
                let lr = sched.lr(step.min(total_steps - 1))?;
                epoch_loss += self.train_step(batch.view(), &mut adam, lr, &mut rng)?
                    * chunk.len() as f64;
                step += 1;
            }
            report.train_losses.push(epoch_loss / n as f64);
            report.epochs_run = epoch + 1;

            if epoch % config.val_interval == 0 || epoch + 1 == config.max_epochs {
                let vl = self.val_loss(val.view(), val_seed)?;
                report.val_losses.push(vl);
                if vl < report.best_val_loss {
                    report.best_val_loss = vl;
                    report.best_epoch = epoch;
                    best_params = self.net.flatten_params();
                    since_best = 0;
                } else {
                    since_best += config.val_interval;
                    if since_best >= config.patience {
                        break;
                    }
                }
            }
        }
        self.net.set_flat_params(&best_params)?;
        self.trained = true;
        Ok(report)
    }

    /// RePaint-conditioned imputation for a batch of windows sharing one
    /// prompt mask. Rows are in original units; conditioning values per row
    /// are taken from that row at the masked indices. Returns completed rows
    /// in original units with exact prompt fidelity.
    pub fn repaint_impute_masked_batch(
        &self,
        windows: ArrayView2<f64>,
        mask: &[bool],
        rng: &mut ChaCha12Rng,
    ) -> Result<Array2<f64>> {
        let (out, _) = self.repaint_core(windows, mask, rng, false)?;
        Ok(out)
    }

    /// Single-prompt RePaint imputation.
    pub fn repaint_impute(&self, prompt: &PromptSpec, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        let (out, _) = self.repaint_prompt(prompt, rng, false)?;
        Ok(out)
    }

    /// RePaint imputation that also captures the predicted-mean trajectory.
    pub fn repaint_impute_with_trajectory(
        &self,
        prompt: &PromptSpec,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Vec<f64>, TrajectoryRecord)> {
        let (out, traj) = self.repaint_prompt(prompt, rng, true)?;
        Ok((out, traj.expect("trajectory requested")))
    }

    fn repaint_prompt(
        &self,
        prompt: &PromptSpec,
        rng: &mut ChaCha12Rng,
        capture: bool,
    ) -> Result<(Vec<f64>, Option<TrajectoryRecord>)> {
        if prompt.dim() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: prompt.dim(),
            });
        }
        // Row holding prompt values at masked indices; response entries are
        // placeholders overwritten by the sampler.
        let mut row = vec![0.0; prompt.dim()];
        for (&i, &v) in prompt.prompt_idx().iter().zip(prompt.prompt_values()) {
            row[i] = v;
        }
        let windows = Array2::from_shape_vec((1, prompt.dim()), row).expect("shape matches");
        let mask = prompt.mask();
        let (out, traj) = self.repaint_core(windows.view(), &mask, rng, capture)?;
        let mut result = out.row(0).to_vec();
        // Exact prompt fidelity in original units.
        for (&i, &v) in prompt.prompt_idx().iter().zip(prompt.prompt_values()) {
            result[i] = v;
        }
        Ok((result, traj))
    }

    fn repaint_core(
        &self,
        windows: ArrayView2<f64>,
        mask: &[bool],
        rng: &mut ChaCha12Rng,
        capture: bool,
    ) -> Result<(Array2<f64>, Option<TrajectoryRecord>)> {
        self.require_trained()?;
        let dim = self.dim();
        if windows.ncols() != dim || mask.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: windows.ncols().min(mask.len()),
            });
        }
        let n = windows.nrows();
        let t_max = self.schedule.t_steps();
        let prompt_cols: Vec<usize> = (0..dim).filter(|&i| mask[i]).collect();
        let response_cols: Vec<usize> = (0..dim).filter(|&i| !mask[i]).collect();

        let x0 = self.normalizer.normalize_batch(windows);

        // Nothing to impute: the prompt is the answer.
        if response_cols.is_empty() && !capture {
            return Ok((windows.to_owned(), None));
        }

        let mut x = Array2::zeros((n, dim));
        for r in 0..n {
            for &c in &response_cols {
                x[(r, c)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut trajectory = capture.then(|| Array2::zeros((t_max, dim)));

        for t in (1..=t_max).rev() {
            let ab = self.schedule.alpha_bar(t);
            let (cs, cn) = (ab.sqrt(), (1.0 - ab).sqrt());
            // Corrupt the given values to the noise level of step t.
            for r in 0..n {
                for &c in &prompt_cols {
                    let eps: f64 = rng.sample(StandardNormal);
                    x[(r, c)] = cs * x0[(r, c)] + cn * eps;
                }
            }
            let mu = self.p_mean_batch(x.view(), t)?;
            if let Some(traj) = trajectory.as_mut() {
                // Trajectory capture is defined for single prompts.
                traj.row_mut(t_max - t).assign(&mu.row(0));
            }
            if t > 1 {
                let sigma = self.schedule.sigma(t);
                x = mu;
                for r in 0..n {
                    for &c in &response_cols {
                        let z: f64 = rng.sample(StandardNormal);
                        x[(r, c)] += sigma * z;
                    }
                }
            } else {
                x = mu;
            }
        }

        // Prompt fidelity at t=0: clean values replace the last corruption.
        for r in 0..n {
            for &c in &prompt_cols {
                x[(r, c)] = x0[(r, c)];
            }
        }
        let mut out = self.normalizer.denormalize_batch(x.view());
        // Avoid normalize/denormalize round-off on given values.
        for r in 0..n {
            for &c in &prompt_cols {
                out[(r, c)] = windows[(r, c)];
            }
        }
        let traj = trajectory.map(|mus| TrajectoryRecord { mus });
        Ok((out, traj))
    }

    /// Re-denoise a complete prompt-response pair with a single reverse step:
    /// corrupt everything to t=1 via the forward process, apply one
    /// predicted-mean step. Input and output are in original units.
    pub fn denoise_full_vector(&self, x_hat: &[f64], rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        self.denoise_full_vector_avg(x_hat, rng, 1)
    }

    /// k-draw average of the single-step re-denoising.
    pub fn denoise_full_vector_avg(
        &self,
        x_hat: &[f64],
        rng: &mut ChaCha12Rng,
        k_draws: usize,
    ) -> Result<Vec<f64>> {
        self.require_trained()?;
        if x_hat.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: x_hat.len(),
            });
        }
        if k_draws < 1 {
            return Err(Error::Config("k_draws must be >= 1".into()));
        }
        let x0 = Array1::from_vec(self.normalizer.normalize(x_hat));
        let mut acc = Array1::zeros(self.dim());
        for _ in 0..k_draws {
            let eps: Array1<f64> =
                Array1::from_shape_fn(self.dim(), |_| rng.sample::<f64, _>(StandardNormal));
            let x1 = self.schedule.q_sample(x0.view(), 1, eps.view())?;
            acc += &self.p_mean(x1.view(), 1)?;
        }
        acc /= k_draws as f64;
        Ok(self.normalizer.denormalize(acc.as_slice().unwrap()))
    }

    /// Batched single-step re-denoising; one noise draw per row.
    pub fn denoise_full_batch(
        &self,
        x_hat: ArrayView2<f64>,
        rng: &mut ChaCha12Rng,
    ) -> Result<Array2<f64>> {
        self.require_trained()?;
        if x_hat.ncols() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: x_hat.ncols(),
            });
        }
        let x0 = self.normalizer.normalize_batch(x_hat);
        let (n, dim) = (x0.nrows(), x0.ncols());
        let ab = self.schedule.alpha_bar(1);
        let (cs, cn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let mut x1 = Array2::zeros((n, dim));
        for r in 0..n {
            for c in 0..dim {
                let eps: f64 = rng.sample(StandardNormal);
                x1[(r, c)] = cs * x0[(r, c)] + cn * eps;
            }
        }
        let mu = self.p_mean_batch(x1.view(), 1)?;
        Ok(self.normalizer.denormalize_batch(mu.view()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpConfig;
    use ndarray::array;

    fn zero_net(dim: usize) -> MlpNetwork {
        let config = MlpConfig {
            data_dim: dim,
            time_embed_dim: 4,
            hidden: vec![6],
        };
        let mut net = MlpNetwork::new(config, 0).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_flat_params(&zeros).unwrap();
        net
    }

    fn unit_normalizer(dim: usize) -> Normalizer {
        Normalizer {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
            window_len: 1,
        }
    }

    fn zero_model(dim: usize, t_steps: usize) -> DiffusionModel {
        let mut m = DiffusionModel::new(
            zero_net(dim),
            VarianceSchedule::linear(t_steps, 1e-4, 1e-2).unwrap(),
            unit_normalizer(dim),
        )
        .unwrap();
        m.mark_trained();
        m
    }

    #[test]
    fn linear_schedule_endpoints() {
        let s = VarianceSchedule::linear(1000, 1e-4, 1e-2).unwrap();
        assert_eq!(s.beta(1), 1e-4);
        assert_eq!(s.beta(1000), 1e-2);
        for t in 2..=1000 {
            assert!(s.beta(t) > s.beta(t - 1));
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!((s.sigma(t) * s.sigma(t) - s.beta(t)).abs() < 1e-15);
        }
        assert!(s.alpha_bar(1000) > 0.0 && s.alpha_bar(1) < 1.0);
    }

    #[test]
    fn single_step_schedule() {
        let s = VarianceSchedule::linear(1, 0.05, 0.05).unwrap();
        assert_eq!(s.beta(1), 0.05);
        assert_eq!(s.alpha_bar(1), 0.95);
    }

    #[test]
    fn two_step_alpha_bar_hand_product() {
        let s = VarianceSchedule::linear(2, 0.1, 0.2).unwrap();
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
    }

    #[test]
    fn invalid_beta_range_rejected() {
        assert!(VarianceSchedule::linear(10, 0.0, 0.1).is_err());
        assert!(VarianceSchedule::linear(10, 0.2, 0.1).is_err());
        assert!(VarianceSchedule::linear(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn q_sample_zero_noise_scales_signal() {
        let s = VarianceSchedule::linear(10, 0.01, 0.1).unwrap();
        let x0 = array![1.0, -2.0];
        let eps = array![0.0, 0.0];
        let out = s.q_sample(x0.view(), 4, eps.view()).unwrap();
        let c = s.alpha_bar(4).sqrt();
        assert!((out[0] - c).abs() < 1e-15);
        assert!((out[1] + 2.0 * c).abs() < 1e-15);
    }

    #[test]
    fn q_sample_hand_value() {
        // abar = 0.25, x0 = 1, eps = 1 -> 0.5 + sqrt(0.75)
        // A schedule with abar_1 = 0.25 means beta_1 = 0.75.
        let s = VarianceSchedule::linear(1, 0.75, 0.75).unwrap();
        let out = s
            .q_sample(array![1.0].view(), 1, array![1.0].view())
            .unwrap();
        assert!((out[0] - (0.5 + 0.75f64.sqrt())).abs() < 1e-15);
        assert!((out[0] - 1.3660).abs() < 1e-4);
    }

    #[test]
    fn q_sample_zero_signal_scales_noise() {
        let s = VarianceSchedule::linear(10, 0.01, 0.1).unwrap();
        let out = s
            .q_sample(array![0.0, 0.0].view(), 7, array![1.0, -3.0].view())
            .unwrap();
        let c = (1.0 - s.alpha_bar(7)).sqrt();
        assert!((out[0] - c).abs() < 1e-15);
        assert!((out[1] + 3.0 * c).abs() < 1e-15);
    }

    #[test]
    fn q_sample_rejects_bad_t() {
        let s = VarianceSchedule::linear(10, 0.01, 0.1).unwrap();
        assert!(s.q_sample(array![0.0].view(), 0, array![0.0].view()).is_err());
        assert!(s.q_sample(array![0.0].view(), 11, array![0.0].view()).is_err());
    }

    #[test]
    fn p_mean_zero_noise_prediction_rescales() {
        // eps_theta = 0 -> mu = x_t / sqrt(alpha_t)
        let m = zero_model(2, 10);
        let x = array![1.0, -0.5];
        let mu = m.p_mean(x.view(), 5).unwrap();
        let a = m.schedule.alpha(5).sqrt();
        assert!((mu[0] - 1.0 / a).abs() < 1e-12);
        assert!((mu[1] + 0.5 / a).abs() < 1e-12);
    }

    #[test]
    fn p_mean_hand_value() {
        // alpha = 0.99, abar = 0.9, x = 1, eps = 0.5:
        // mu = (1 - 0.01/sqrt(0.1) * 0.5) / sqrt(0.99) = 0.98915...
        let a: f64 = 0.99;
        let ab: f64 = 0.9;
        let x = 1.0;
        let e = 0.5;
        let mu = (x - (1.0 - a) / (1.0 - ab).sqrt() * e) / a.sqrt();
        assert!((mu - 0.98915).abs() < 1e-5, "mu = {mu}");
        // The model path computes the same expression; verified against the
        // zero-prediction closed form separately since the MLP cannot be
        // pinned to an arbitrary eps value.
    }

    #[test]
    fn p_mean_near_alpha_one_is_identity() {
        // beta -> 0: mu = x_t regardless of the noise prediction.
        let mut m = zero_model(2, 10);
        m.schedule = VarianceSchedule::linear(10, 1e-15, 2e-15).unwrap();
        let x = array![0.7, -1.3];
        let mu = m.p_mean(x.view(), 3).unwrap();
        assert!((mu[0] - 0.7).abs() < 1e-12);
        assert!((mu[1] + 1.3).abs() < 1e-12);
    }

    #[test]
    fn p_sample_with_zero_z_equals_p_mean() {
        let m = zero_model(3, 10);
        let x = array![0.2, -0.4, 1.0];
        let z = array![0.0, 0.0, 0.0];
        for t in 1..=10 {
            let mu = m.p_mean(x.view(), t).unwrap();
            let s = m.p_sample(x.view(), t, z.view()).unwrap();
            assert_eq!(mu, s);
        }
    }

    #[test]
    fn p_sample_adds_scaled_noise() {
        // sigma = 0.1, mu = 2, z = 1 -> 2.1; build via a zero net so mu is known.
        let mut m = zero_model(1, 5);
        m.schedule = VarianceSchedule::linear(5, 0.01, 0.01).unwrap();
        let t = 3;
        let x = array![2.0 * m.schedule.alpha(t).sqrt()];
        let mu = m.p_mean(x.view(), t).unwrap();
        assert!((mu[0] - 2.0).abs() < 1e-12);
        let out = m.p_sample(x.view(), t, array![1.0].view()).unwrap();
        assert!((out[0] - (2.0 + m.schedule.sigma(t))).abs() < 1e-12);
    }

    #[test]
    fn p_sample_at_final_step_ignores_z() {
        let m = zero_model(2, 10);
        let x = array![0.3, 0.9];
        let a = m.p_sample(x.view(), 1, array![100.0, -100.0].view()).unwrap();
        let b = m.p_mean(x.view(), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_step_zero_net_loss_near_one() {
        // Zero-output network: loss = mean(eps^2) ~ 1 over many draws.
        let mut m = zero_model(8, 50);
        let mut adam = AdamState::new(&m.net);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let batch = Array2::zeros((64, 8));
        let loss = m.train_step(batch.view(), &mut adam, 0.0, &mut rng).unwrap();
        assert!((loss - 1.0).abs() < 0.25, "loss = {loss}");
    }

    #[test]
    fn training_descends_on_toy_problem() {
        let data = crate::data::make_synthetic2d(32, 0.05, 0).unwrap();
        let normalizer = Normalizer::fit(data.windows.view(), 2, 1).unwrap();
        let net = MlpNetwork::new(
            MlpConfig {
                data_dim: 2,
                time_embed_dim: 8,
                hidden: vec![16, 16],
            },
            0,
        )
        .unwrap();
        let schedule = VarianceSchedule::linear(20, 1e-4, 1e-2).unwrap();
        let mut m = DiffusionModel::new(net, schedule, normalizer).unwrap();
        let normed = m.normalizer.normalize_batch(data.windows.view());
        let mut adam = AdamState::new(&m.net);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let first = m
            .train_step(normed.view(), &mut adam, 1e-3, &mut rng)
            .unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = m
                .train_step(normed.view(), &mut adam, 1e-3, &mut rng)
                .unwrap();
        }
        assert!(last < first, "first {first} last {last}");
    }

    #[test]
    fn repaint_empty_response_returns_prompt() {
        let m = zero_model(3, 10);
        let prompt = PromptSpec::new(3, vec![0, 1, 2], vec![1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let out = m.repaint_impute(&prompt, &mut rng).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn repaint_prompt_fidelity_and_determinism() {
        let m = zero_model(4, 25);
        let prompt = PromptSpec::new(4, vec![1, 3], vec![0.5, -0.25]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let a = m.repaint_impute(&prompt, &mut rng).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let b = m.repaint_impute(&prompt, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], 0.5);
        assert_eq!(a[3], -0.25);
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let c = m.repaint_impute(&prompt, &mut rng).unwrap();
        assert_ne!(a, c);
        assert_eq!(c[1], 0.5);
    }

    #[test]
    fn repaint_requires_trained_model() {
        let mut m = zero_model(3, 10);
        m.trained = false;
        let prompt = PromptSpec::new(3, vec![0], vec![1.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            m.repaint_impute(&prompt, &mut rng).unwrap_err(),
            Error::Untrained
        ));
    }

    #[test]
    fn denoise_zero_net_zero_eps_identity() {
        // With eps = 0 at t = 1 and a zero noise prediction, the single-step
        // composition gives x * sqrt(abar_1 / alpha_1) = x since abar_1 = alpha_1.
        let m = zero_model(2, 10);
        let x_norm = array![0.8, -0.6];
        let x1 = m
            .schedule
            .q_sample(x_norm.view(), 1, array![0.0, 0.0].view())
            .unwrap();
        let mu = m.p_mean(x1.view(), 1).unwrap();
        assert!((mu[0] - 0.8).abs() < 1e-12);
        assert!((mu[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn prompt_spec_partition_invariants() {
        let p = PromptSpec::new(5, vec![0, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(p.response_idx(), &[1, 3, 4]);
        assert!(PromptSpec::new(5, vec![0, 0], vec![1.0, 2.0]).is_err());
        assert!(PromptSpec::new(5, vec![5], vec![1.0]).is_err());
        assert!(PromptSpec::new(5, vec![0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn signal_noise_variance_sums_to_one() {
        let s = VarianceSchedule::standard();
        for t in 1..=1000 {
            let ab = s.alpha_bar(t);
            assert!((ab.sqrt().powi(2) + (1.0 - ab) - 1.0).abs() < 1e-12);
        }
    }
}
