use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Layer sizes and step-embedding width for the noise-prediction MLP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Data dimension |I|; both the noisy input slice and the output.
    pub data_dim: usize,
    /// Width of the sinusoidal diffusion-step embedding (must be even).
    pub time_embed_dim: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
}

impl MlpConfig {
    /// Default architecture: five hidden layers of width 512.
    pub fn standard(data_dim: usize) -> Self {
        Self {
            data_dim,
            time_embed_dim: 64,
            hidden: vec![512; 5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::Config("data_dim must be positive".into()));
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(Error::Config("time_embed_dim must be even".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_embed_dim
    }
}

#[derive(Debug, Clone)]
struct Dense {
    /// Row-major (out_dim, in_dim).
    weight: Array2<f64>,
    bias: Array1<f64>,
    activation: Activation,
}

/// Noise-prediction network epsilon(x_t, t).
#[derive(Debug, Clone)]
pub struct MlpNetwork {
    config: MlpConfig,
    layers: Vec<Dense>,
}

/// Per-layer weight and bias gradients, in declaration order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpNetwork {
    /// Kaiming-uniform fan-in initialization, zero biases.
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut widths = vec![config.input_dim()];
        widths.extend_from_slice(&config.hidden);
        widths.push(config.data_dim);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        for k in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let weight =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
            let activation = if k == widths.len() - 2 {
                Activation::Identity
            } else {
                Activation::Silu
            };
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
                activation,
            });
        }
        Ok(Self { config, layers })
    }

    /// Build a network from explicit layers; used by tests and checkpoint loading.
    pub fn from_parts(
        config: MlpConfig,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.len() != biases.len() || weights.len() != activations.len() {
            return Err(Error::Config("layer part counts disagree".into()));
        }
        let layers = weights
            .into_iter()
            .zip(biases)
            .zip(activations)
            .map(|((weight, bias), activation)| Dense {
                weight,
                bias,
                activation,
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn data_dim(&self) -> usize {
        self.config.data_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Sinusoidal embedding of the diffusion step.
    fn embed_step(&self, t: usize) -> Vec<f64> {
        let d = self.config.time_embed_dim;
        let mut out = vec![0.0; d];
        let half = d / 2;
        for k in 0..half {
            let freq = (10000_f64).powf(-(2.0 * k as f64) / d as f64);
            let angle = t as f64 * freq;
            out[k] = angle.sin();
            out[half + k] = angle.cos();
        }
        out
    }

    fn assemble_input(&self, x: ArrayView2<f64>, ts: &[usize]) -> Array2<f64> {
        let n = x.nrows();
        let mut input = Array2::zeros((n, self.config.input_dim()));
        for (r, row) in x.axis_iter(Axis(0)).enumerate() {
            let emb = self.embed_step(ts[r]);
            for (c, &v) in row.iter().enumerate() {
                input[(r, c)] = v;
            }
            for (c, &v) in emb.iter().enumerate() {
                input[(r, self.config.data_dim + c)] = v;
            }
        }
        input
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.config.data_dim {
            return Err(Error::ShapeMismatch {
                expected: self.config.data_dim,
                got,
            });
        }
        Ok(())
    }

    /// Predicted noise for a single input. Deterministic given (self, x, t).
    pub fn forward(&self, x_noisy: ArrayView1<f64>, t: usize) -> Result<Array1<f64>> {
        self.check_dim(x_noisy.len())?;
        let x2 = x_noisy.insert_axis(Axis(0));
        let out = self.forward_batch(x2, &[t])?;
        Ok(out.row(0).to_owned())
    }

    /// Predicted noise for a batch of inputs, one diffusion step per row.
    pub fn forward_batch(&self, x: ArrayView2<f64>, ts: &[usize]) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        if ts.len() != x.nrows() {
            return Err(Error::ShapeMismatch {
                expected: x.nrows(),
                got: ts.len(),
            });
        }
        let mut act = self.assemble_input(x, ts);
        for layer in &self.layers {
            act = act.dot(&layer.weight.t()) + &layer.bias;
            if layer.activation != Activation::Identity {
                act.mapv_inplace(|z| layer.activation.apply(z));
            }
        }
        Ok(act)
    }

    /// Gradients of the mean-squared noise-prediction error.
    ///
    /// Loss is the mean over all batch elements and output components of
    /// (prediction - target)^2. Returns (loss, gradients).
    pub fn backward_batch(
        &self,
        x: ArrayView2<f64>,
        ts: &[usize],
        target: ArrayView2<f64>,
    ) -> Result<(f64, Gradients)> {
        self.check_dim(x.ncols())?;
        self.check_dim(target.ncols())?;
        if target.nrows() != x.nrows() || ts.len() != x.nrows() {
            return Err(Error::ShapeMismatch {
                expected: x.nrows(),
                got: target.nrows().min(ts.len()),
            });
        }

        let input = self.assemble_input(x, ts);
        // Forward pass caching pre-activations and activations.
        let mut acts: Vec<Array2<f64>> = vec![input];
        let mut zs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = acts.last().unwrap().dot(&layer.weight.t()) + &layer.bias;
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite pre-activation in layer {idx}"
                )));
            }
            let a = if layer.activation == Activation::Identity {
                z.clone()
            } else {
                z.mapv(|v| layer.activation.apply(v))
            };
            zs.push(z);
            acts.push(a);
        }

        let output = acts.last().unwrap();
        let diff = output - &target;
        let n_elems = (diff.len()) as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n_elems;

        // Backward pass.
        let mut delta = diff.mapv(|d| 2.0 * d / n_elems);
        let mut weights = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut biases = vec![Array1::zeros(0); self.layers.len()];
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            if layer.activation != Activation::Identity {
                delta = &delta * &zs[idx].mapv(|z| layer.activation.derivative(z));
            }
            if !delta.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in layer {idx}"
                )));
            }
            weights[idx] = delta.t().dot(&acts[idx]);
            biases[idx] = delta.sum_axis(Axis(0));
            if idx > 0 {
                delta = delta.dot(&layer.weight);
            }
        }
        Ok((loss, Gradients { weights, biases }))
    }

    /// Single-sample convenience wrapper around [`Self::backward_batch`].
    pub fn backward(
        &self,
        x_noisy: ArrayView1<f64>,
        t: usize,
        target_noise: ArrayView1<f64>,
    ) -> Result<(f64, Gradients)> {
        self.backward_batch(
            x_noisy.insert_axis(Axis(0)),
            &[t],
            target_noise.insert_axis(Axis(0)),
        )
    }

    /// All parameters in declaration order: per layer, weight rows then bias.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn all_params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.dim()).collect()
    }

    pub(crate) fn apply_update(
        &mut self,
        mut f: impl FnMut(usize, bool, &mut [f64]),
    ) {
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            f(idx, true, layer.weight.as_slice_mut().unwrap());
            f(idx, false, layer.bias.as_slice_mut().unwrap());
        }
    }

}
