//! Relational dataset construction: CSV ingestion, third-variable recipes,
//! windowing, chronological splits, and per-variable normalization.

mod build;
mod normalizer;
mod relation;
mod split;
mod synthetic;

pub use build::{
    build_relational, build_relational_from_series, load_windows, read_raw_pair, save_windows,
    DatasetKind, DatasetMeta, RawPair, RelationalDataset, VAR_COUNT, WINDOW_LEN,
};
pub use normalizer::Normalizer;
pub use relation::{relation_vpd, Relation};
pub use split::{split_chrono, SplitSpec};
pub use synthetic::make_synthetic2d;
