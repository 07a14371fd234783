use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::Result;

use super::build::{DatasetKind, RelationalDataset};

/// 2D sin-manifold toy set: points (x, sin(2 pi x) + eta) with x ~ U(-1, 1)
/// and eta ~ N(0, noise_std^2). Each point is its own window (V=2, L=1).
pub fn make_synthetic2d(n_points: usize, noise_std: f64, seed: u64) -> Result<RelationalDataset> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(n_points * 2);
    for _ in 0..n_points {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let eta: f64 = rng.sample::<f64, _>(StandardNormal) * noise_std;
        flat.push(x);
        flat.push((2.0 * std::f64::consts::PI * x).sin() + eta);
    }
    Ok(RelationalDataset {
        name: DatasetKind::Synthetic2d.name().to_string(),
        kind: DatasetKind::Synthetic2d,
        relation: DatasetKind::Synthetic2d.relation(),
        var_count: 2,
        window_len: 1,
        windows: Array2::from_shape_vec((n_points, 2), flat).expect("shape matches"),
        dropped_rows: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_points_lie_on_manifold() {
        let d = make_synthetic2d(100, 0.0, 3).unwrap();
        for w in d.windows.rows() {
            assert_eq!(d.residuals(w)[0], 0.0);
        }
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = make_synthetic2d(50, 0.05, 9).unwrap();
        let b = make_synthetic2d(50, 0.05, 9).unwrap();
        assert_eq!(a.windows, b.windows);
        let c = make_synthetic2d(50, 0.05, 10).unwrap();
        assert_ne!(a.windows, c.windows);
    }

    #[test]
    fn residual_std_tracks_noise_level() {
        let d = make_synthetic2d(500, 0.05, 1).unwrap();
        let residuals: Vec<f64> = d.windows.rows().into_iter().map(|w| d.residuals(w)[0]).collect();
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let std = (residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        assert!((std - 0.05).abs() / 0.05 < 0.2, "std = {std}");
    }
}
