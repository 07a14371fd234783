//! Diffusion-based multivariate time-series imputation with relational
//! hallucination detection and mitigation.
//!
//! The crate trains a DDPM over flattened MVTS windows, answers arbitrary
//! imputation prompts through RePaint-style conditioning, and scores any
//! prompt-response pair with the Combined Error metric. Quartile calibration
//! turns CE into low/medium/high hallucination levels; sample-N argmin-CE
//! filtering mitigates hallucination at inference.

pub mod checkpoint;
pub mod data;
pub mod diffusion;
pub mod halluc;
pub mod metrics;
pub mod nn;
pub mod tasks;

mod error;

pub use error::{Error, Result};
