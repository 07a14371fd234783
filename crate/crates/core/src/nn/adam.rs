use ndarray::{Array1, Array2};

use crate::{Error, Result};

use super::mlp::{Gradients, MlpNetwork};

/// ADAM accumulator state, shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_w: Vec<Array2<f64>>,
    v_b: Vec<Array1<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &MlpNetwork) -> Self {
        let shapes = net.layer_shapes();
        Self {
            m_w: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            m_b: shapes.iter().map(|&(o, _)| Array1::zeros(o)).collect(),
            v_w: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v_b: shapes.iter().map(|&(o, _)| Array1::zeros(o)).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected ADAM update applied in place to the network.
    pub fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.weights.len() != self.m_w.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m_w.len(),
                got: grads.weights.len(),
            });
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        for idx in 0..self.m_w.len() {
            update_slice(
                self.m_w[idx].as_slice_mut().unwrap(),
                self.v_w[idx].as_slice_mut().unwrap(),
                grads.weights[idx].as_slice().unwrap(),
                b1,
                b2,
            );
            update_slice(
                self.m_b[idx].as_slice_mut().unwrap(),
                self.v_b[idx].as_slice_mut().unwrap(),
                grads.biases[idx].as_slice().unwrap(),
                b1,
                b2,
            );
        }
        let m_w = &self.m_w;
        let m_b = &self.m_b;
        let v_w = &self.v_w;
        let v_b = &self.v_b;
        net.apply_update(|idx, is_weight, params| {
            let (m, v): (&[f64], &[f64]) = if is_weight {
                (m_w[idx].as_slice().unwrap(), v_w[idx].as_slice().unwrap())
            } else {
                (m_b[idx].as_slice().unwrap(), v_b[idx].as_slice().unwrap())
            };
            for ((p, &mi), &vi) in params.iter_mut().zip(m).zip(v) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        Ok(())
    }
}

fn update_slice(m: &mut [f64], v: &mut [f64], g: &[f64], b1: f64, b2: f64) {
    for ((mi, vi), &gi) in m.iter_mut().zip(v.iter_mut()).zip(g) {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpConfig};
    use ndarray::array;

    fn scalar_net(w: f64) -> MlpNetwork {
        MlpNetwork::from_parts(
            MlpConfig {
                data_dim: 1,
                time_embed_dim: 0,
                hidden: vec![],
            },
            vec![array![[w]]],
            vec![array![0.0]],
            vec![Activation::Identity],
        )
        .unwrap()
    }

    fn scalar_grads(gw: f64, gb: f64) -> Gradients {
        Gradients {
            weights: vec![array![[gw]]],
            biases: vec![array![gb]],
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = scalar_net(0.7);
        let mut adam = AdamState::new(&net);
        adam.step(&mut net, &scalar_grads(0.0, 0.0), 1e-3).unwrap();
        let p = net.flatten_params();
        assert_eq!(p, vec![0.7, 0.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_magnitude_is_nearly_lr() {
        // g=1: m_hat = 1, v_hat = 1, update = lr / (1 + eps) ~ lr.
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net);
        adam.step(&mut net, &scalar_grads(1.0, 0.0), 1e-3).unwrap();
        let w = net.flatten_params()[0];
        assert!((w + 1e-3).abs() < 1e-8, "w = {w}");
    }

    #[test]
    fn two_identical_gradients_match_hand_oracle() {
        // Hand evaluation with g=1 twice, b1=0.9, b2=0.999, eps=1e-8:
        // step1: m=0.1, v=0.001, m_hat=1, v_hat=1, d1 = lr/(1+eps)
        // step2: m=0.19, v=0.001999
        //   m_hat = 0.19/0.19 = 1, v_hat = 0.001999/0.001999 = 1
        //   d2 = lr/(1+eps)
        let lr = 1e-3;
        let eps = 1e-8;
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net);
        adam.step(&mut net, &scalar_grads(1.0, 0.0), lr).unwrap();
        adam.step(&mut net, &scalar_grads(1.0, 0.0), lr).unwrap();
        let expected = -2.0 * lr / (1.0 + eps);
        let w = net.flatten_params()[0];
        assert!((w - expected).abs() < 1e-12, "w = {w}, expected {expected}");
        assert_eq!(adam.step, 2);
    }
}
