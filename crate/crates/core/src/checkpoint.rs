//! Versioned checkpoint container: JSON metadata header followed by the
//! network parameters as little-endian 32-bit floats in declaration order.
//! Writes go through a temp file and atomic rename.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::diffusion::{DiffusionModel, VarianceSchedule};
use crate::nn::{MlpConfig, MlpNetwork};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"TSDH";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub mlp: MlpConfig,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub normalizer: Normalizer,
    pub dataset: String,
    pub seed: u64,
    pub n_params: usize,
}

pub fn save_checkpoint(
    model: &DiffusionModel,
    path: &Path,
    dataset: &str,
    seed: u64,
    beta_start: f64,
    beta_end: f64,
) -> Result<()> {
    let params = model.net.flatten_params();
    let header = CheckpointHeader {
        version: VERSION,
        mlp: model.net.config().clone(),
        t_steps: model.schedule.t_steps(),
        beta_start,
        beta_end,
        normalizer: model.normalizer.clone(),
        dataset: dataset.to_string(),
        seed,
        n_params: params.len(),
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint")
    ));
    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        file.write_all(MAGIC)?;
        file.write_all(&VERSION.to_le_bytes())?;
        file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&header_bytes)?;
        for p in &params {
            file.write_all(&(*p as f32).to_le_bytes())?;
        }
        file.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(DiffusionModel, CheckpointHeader)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let mut buf4 = [0u8; 4];
    file.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let mut buf8 = [0u8; 8];
    file.read_exact(&mut buf8)?;
    let header_len = u64::from_le_bytes(buf8) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;

    let mut net = MlpNetwork::new(header.mlp.clone(), 0)?;
    if net.param_count() != header.n_params {
        return Err(Error::Data(format!(
            "parameter count mismatch: header says {}, architecture has {}",
            header.n_params,
            net.param_count()
        )));
    }
    let mut params = Vec::with_capacity(header.n_params);
    for _ in 0..header.n_params {
        file.read_exact(&mut buf4)?;
        params.push(f32::from_le_bytes(buf4) as f64);
    }
    net.set_flat_params(&params)?;

    let schedule = VarianceSchedule::linear(header.t_steps, header.beta_start, header.beta_end)?;
    let mut model = DiffusionModel::new(net, schedule, header.normalizer.clone())?;
    model.mark_trained();
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_preserves_f32_params() {
        let config = MlpConfig {
            data_dim: 2,
            time_embed_dim: 4,
            hidden: vec![5],
        };
        let net = MlpNetwork::new(config, 3).unwrap();
        let normalizer = Normalizer {
            means: vec![0.5, -1.0],
            stds: vec![2.0, 3.0],
            window_len: 1,
        };
        let schedule = VarianceSchedule::linear(10, 1e-4, 1e-2).unwrap();
        let mut model = DiffusionModel::new(net, schedule, normalizer).unwrap();
        model.mark_trained();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path, "toy", 3, 1e-4, 1e-2).unwrap();
        let (loaded, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.dataset, "toy");
        assert!(loaded.is_trained());
        let orig = model.net.flatten_params();
        let back = loaded.net.flatten_params();
        for (a, b) in orig.iter().zip(&back) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(loaded.normalizer.means, model.normalizer.means);
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let config = MlpConfig {
            data_dim: 3,
            time_embed_dim: 2,
            hidden: vec![4],
        };
        let net = MlpNetwork::new(config, 1).unwrap();
        let normalizer = Normalizer {
            means: vec![0.0; 3],
            stds: vec![1.0; 3],
            window_len: 1,
        };
        let model = DiffusionModel::new(net, VarianceSchedule::linear(5, 1e-4, 1e-2).unwrap(), normalizer)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&model, &a, "d", 0, 1e-4, 1e-2).unwrap();
        save_checkpoint(&model, &b, "d", 0, 1e-4, 1e-2).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
