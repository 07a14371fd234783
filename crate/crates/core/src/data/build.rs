use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::relation::Relation;
use super::split::{split_chrono, SplitSpec};

/// The five relational dataset recipes plus the 2D toy set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Recl,
    Rwth,
    Rtraffic,
    Rillness,
    Rett,
    Synthetic2d,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Recl => "rECL",
            DatasetKind::Rwth => "rWTH",
            DatasetKind::Rtraffic => "rTraffic",
            DatasetKind::Rillness => "rIllness",
            DatasetKind::Rett => "rETT",
            DatasetKind::Synthetic2d => "synthetic2d",
        }
    }

    pub fn relation(&self) -> Relation {
        match self {
            DatasetKind::Recl | DatasetKind::Rillness => Relation::Difference,
            DatasetKind::Rwth => Relation::Vpd,
            DatasetKind::Rtraffic => Relation::Sum,
            DatasetKind::Rett => Relation::Product,
            DatasetKind::Synthetic2d => Relation::SinManifold,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recl" => Ok(DatasetKind::Recl),
            "rwth" => Ok(DatasetKind::Rwth),
            "rtraffic" => Ok(DatasetKind::Rtraffic),
            "rillness" => Ok(DatasetKind::Rillness),
            "rett" => Ok(DatasetKind::Rett),
            "synthetic2d" => Ok(DatasetKind::Synthetic2d),
            other => Err(Error::Config(format!("unknown dataset kind: {other}"))),
        }
    }
}

/// Windowed relational dataset: V variable series of length L per window,
/// flattened to vectors indexed by i = v*L + tau.
#[derive(Debug, Clone)]
pub struct RelationalDataset {
    pub name: String,
    pub kind: DatasetKind,
    pub relation: Relation,
    pub var_count: usize,
    pub window_len: usize,
    /// n_windows x (var_count * window_len), original units.
    pub windows: Array2<f64>,
    /// Source rows dropped during ingestion (NaN or unparseable).
    pub dropped_rows: usize,
}

impl RelationalDataset {
    pub fn dim(&self) -> usize {
        self.var_count * self.window_len
    }

    pub fn split(&self) -> Result<SplitSpec> {
        split_chrono(self.windows.nrows())
    }

    /// Per-time-step relation residuals of one window.
    pub fn residuals(&self, window: ArrayView1<f64>) -> Vec<f64> {
        let l = self.window_len;
        if self.var_count == 2 {
            // 2D points: a single residual per window.
            return vec![self.relation.residual(window[0], window[1], 0.0)];
        }
        (0..l)
            .map(|tau| self.relation.residual(window[tau], window[l + tau], window[2 * l + tau]))
            .collect()
    }
}

pub const WINDOW_LEN: usize = 24;
pub const VAR_COUNT: usize = 3;

/// Two aligned source series; `None` marks dropped rows.
pub struct RawPair {
    pub rows: Vec<Option<(f64, f64)>>,
    pub dropped: usize,
}

/// Read two named value columns from a CSV with a leading timestamp column.
/// Rows with missing or non-numeric values become drop markers.
pub fn read_raw_pair(path: &Path, col_a: &str, col_b: &str) -> Result<RawPair> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad header in {}: {e}", path.display())))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in {}", path.display())))
    };
    let ia = find(col_a)?;
    let ib = find(col_b)?;

    let mut rows = Vec::new();
    let mut dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: line + 2,
            msg: e.to_string(),
        })?;
        let parse = |idx: usize| -> Option<f64> {
            record
                .get(idx)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        match (parse(ia), parse(ib)) {
            (Some(a), Some(b)) => rows.push(Some((a, b))),
            _ => {
                rows.push(None);
                dropped += 1;
            }
        }
    }
    Ok(RawPair { rows, dropped })
}

/// Construct the third variable from the recipe and cut windows.
/// Windows containing any dropped source row are discarded.
pub fn build_relational(raw: &RawPair, kind: DatasetKind, stride: usize) -> Result<RelationalDataset> {
    if kind == DatasetKind::Synthetic2d {
        return Err(Error::Config(
            "synthetic2d is generated, not built from raw series".into(),
        ));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let relation = kind.relation();
    let n = raw.rows.len();
    let l = WINDOW_LEN;
    if n < l {
        return Err(Error::Data(format!(
            "need at least {l} source rows, got {n}"
        )));
    }

    let mut windows = Vec::new();
    let mut start = 0;
    while start + l <= n {
        let slice = &raw.rows[start..start + l];
        if slice.iter().all(|r| r.is_some()) {
            let mut w = vec![0.0; VAR_COUNT * l];
            for (tau, row) in slice.iter().enumerate() {
                let (a, b) = row.unwrap();
                w[tau] = a;
                w[l + tau] = b;
                w[2 * l + tau] = relation.construct(a, b).unwrap();
            }
            windows.push(w);
        }
        start += stride;
    }
    if windows.is_empty() {
        return Err(Error::Data("no complete windows after dropping rows".into()));
    }
    let n_windows = windows.len();
    let flat: Vec<f64> = windows.into_iter().flatten().collect();
    Ok(RelationalDataset {
        name: kind.name().to_string(),
        kind,
        relation,
        var_count: VAR_COUNT,
        window_len: l,
        windows: Array2::from_shape_vec((n_windows, VAR_COUNT * l), flat)
            .expect("window shape is consistent by construction"),
        dropped_rows: raw.dropped,
    })
}

/// Convenience for in-memory series without drops.
pub fn build_relational_from_series(
    x0: &[f64],
    x1: &[f64],
    kind: DatasetKind,
    stride: usize,
) -> Result<RelationalDataset> {
    if x0.len() != x1.len() {
        return Err(Error::Data(format!(
            "misaligned source series: {} vs {}",
            x0.len(),
            x1.len()
        )));
    }
    let rows = x0
        .iter()
        .zip(x1)
        .map(|(&a, &b)| {
            if a.is_finite() && b.is_finite() {
                Some((a, b))
            } else {
                None
            }
        })
        .collect::<Vec<_>>();
    let dropped = rows.iter().filter(|r| r.is_none()).count();
    build_relational(&RawPair { rows, dropped }, kind, stride)
}

/// Metadata written alongside the canonical windows CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub kind: DatasetKind,
    pub relation: Relation,
    pub var_count: usize,
    pub window_len: usize,
    pub n_windows: usize,
    pub dropped_rows: usize,
    pub split: SplitSpec,
}

/// Write the canonical windows CSV (one window per row, columns i0..i{d-1})
/// and its metadata JSON.
pub fn save_windows(dataset: &RelationalDataset, csv_path: &Path, meta_path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path)?;
    let dim = dataset.dim();
    let header: Vec<String> = (0..dim).map(|i| format!("i{i}")).collect();
    writer.write_record(&header)?;
    for row in dataset.windows.rows() {
        let record: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let meta = DatasetMeta {
        name: dataset.name.clone(),
        kind: dataset.kind,
        relation: dataset.relation,
        var_count: dataset.var_count,
        window_len: dataset.window_len,
        n_windows: dataset.windows.nrows(),
        dropped_rows: dataset.dropped_rows,
        split: dataset.split()?,
    };
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Read back a canonical windows CSV + metadata JSON pair.
pub fn load_windows(csv_path: &Path, meta_path: &Path) -> Result<(RelationalDataset, DatasetMeta)> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
    let dim = meta.var_count * meta.window_len;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(csv_path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", csv_path.display())))?;
    let mut flat = Vec::new();
    let mut n = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: line + 2,
            msg: e.to_string(),
        })?;
        if record.len() != dim {
            return Err(Error::Parse {
                line: line + 2,
                msg: format!("expected {dim} columns, got {}", record.len()),
            });
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|e| Error::Parse {
                line: line + 2,
                msg: format!("bad number '{field}': {e}"),
            })?;
            flat.push(v);
        }
        n += 1;
    }
    let dataset = RelationalDataset {
        name: meta.name.clone(),
        kind: meta.kind,
        relation: meta.relation,
        var_count: meta.var_count,
        window_len: meta.window_len,
        windows: Array2::from_shape_vec((n, dim), flat)
            .map_err(|e| Error::Data(e.to_string()))?,
        dropped_rows: meta.dropped_rows,
    };
    Ok((dataset, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traffic_third_variable_is_sum() {
        let d = build_relational_from_series(
            &[1.0; 24].iter().enumerate().map(|(i, _)| i as f64).collect::<Vec<_>>(),
            &vec![3.0; 24],
            DatasetKind::Rtraffic,
            24,
        )
        .unwrap();
        assert_eq!(d.windows.nrows(), 1);
        for tau in 0..24 {
            assert_eq!(d.windows[(0, 48 + tau)], tau as f64 + 3.0);
        }
    }

    #[test]
    fn ett_third_variable_is_product() {
        let x0: Vec<f64> = (0..24).map(|i| 2.0 + i as f64).collect();
        let x1: Vec<f64> = (0..24).map(|i| 5.0 + i as f64).collect();
        let d = build_relational_from_series(&x0, &x1, DatasetKind::Rett, 24).unwrap();
        assert_eq!(d.windows[(0, 48)], 10.0);
        assert_eq!(d.windows[(0, 49)], 3.0 * 6.0 * 1.0);
    }

    #[test]
    fn ecl_self_difference_is_zero() {
        let x: Vec<f64> = (0..48).map(|i| (i as f64).sin() + 2.0).collect();
        let d = build_relational_from_series(&x, &x, DatasetKind::Recl, 24).unwrap();
        assert_eq!(d.windows.nrows(), 2);
        for w in d.windows.rows() {
            for tau in 0..24 {
                assert_eq!(w[48 + tau], 0.0);
            }
        }
    }

    #[test]
    fn misaligned_series_rejected() {
        let err = build_relational_from_series(&[1.0; 30], &[1.0; 29], DatasetKind::Rtraffic, 24)
            .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn windows_crossing_nan_rows_are_discarded() {
        let mut x0: Vec<f64> = (0..96).map(|i| i as f64).collect();
        let x1: Vec<f64> = (0..96).map(|i| 0.5 * i as f64).collect();
        x0[30] = f64::NAN;
        let d = build_relational_from_series(&x0, &x1, DatasetKind::Rtraffic, 24).unwrap();
        // Window starting at 24 crosses the NaN at row 30 and is dropped.
        assert_eq!(d.windows.nrows(), 3);
        assert_eq!(d.dropped_rows, 1);
    }

    #[test]
    fn constructed_windows_satisfy_relation() {
        let x0: Vec<f64> = (0..240).map(|i| (i as f64 * 0.1).sin() * 20.0 + 5.0).collect();
        let x1: Vec<f64> = (0..240).map(|i| 0.4 + 0.3 * (i as f64 * 0.07).cos()).collect();
        for kind in [DatasetKind::Rwth, DatasetKind::Rett, DatasetKind::Rillness] {
            let d = build_relational_from_series(&x0, &x1, kind, 24).unwrap();
            for w in d.windows.rows() {
                for r in d.residuals(w) {
                    assert!(r.abs() <= 1e-9, "{kind:?} residual {r}");
                }
            }
        }
    }

    #[test]
    fn windows_round_trip_through_files() {
        let x0: Vec<f64> = (0..168).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1: Vec<f64> = (0..168).map(|i| (i as f64 * 0.11).cos()).collect();
        let d = build_relational_from_series(&x0, &x1, DatasetKind::Rtraffic, 24).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("w.csv");
        let meta = dir.path().join("w.json");
        save_windows(&d, &csv, &meta).unwrap();
        let (back, m) = load_windows(&csv, &meta).unwrap();
        assert_eq!(m.n_windows, 7);
        assert_eq!(back.windows, d.windows);
    }
}
