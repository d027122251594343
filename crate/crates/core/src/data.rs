//! Table ingestion, whitening and seeded train/test partitions.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Columns in the housing table: 13 features followed by the target.
pub const HOUSING_COLUMNS: usize = 14;

/// Numeric table as read from disk, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    n_cols: usize,
    values: Vec<f64>,
}

impl RawTable {
    pub fn new(n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || !values.len().is_multiple_of(n_cols) {
            return Err(Error::Invalid(format!(
                "{} values do not fill rows of {} columns",
                values.len(),
                n_cols
            )));
        }
        Ok(Self { n_cols, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.n_cols).copied()
    }
}

/// Reads the UCI `housing.data` layout (whitespace separated) or a CSV file
/// with an optional header line.
pub fn load_table(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_table(&text, HOUSING_COLUMNS)
}

/// [`load_table`] followed by [`whiten`].
pub fn load_housing(path: impl AsRef<Path>) -> Result<Dataset> {
    whiten(&load_table(path)?)
}

pub fn parse_table(text: &str, n_cols: usize) -> Result<RawTable> {
    let mut values = Vec::new();
    let mut seen_data = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.trim_matches('"').parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            // A first line with no numeric field is a CSV header.
            Err(_) if !seen_data && is_header(&fields) => {
                seen_data = true;
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })
            }
        };
        seen_data = true;
        if row.len() != n_cols {
            return Err(Error::ColumnCount {
                line: line_no,
                expected: n_cols,
                found: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite value {bad}"),
            });
        }
        values.extend(row);
    }
    if values.is_empty() {
        return Err(Error::Empty("table has no rows"));
    }
    RawTable::new(n_cols, values)
}

fn is_header(fields: &[&str]) -> bool {
    fields.iter().all(|f| f.trim_matches('"').parse::<f64>().is_err())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

/// Whitened features and targets. The last table column is the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
    stats: Vec<ColumnStats>,
}

impl Dataset {
    /// Builds a dataset from already-whitened values (used for synthetic data).
    pub fn from_parts(features: Vec<f64>, targets: Vec<f64>, n_features: usize) -> Result<Self> {
        if features.len() != targets.len() * n_features {
            return Err(Error::Dimension {
                expected: targets.len() * n_features,
                got: features.len(),
            });
        }
        let identity = ColumnStats { mean: 0.0, std: 1.0 };
        Ok(Self {
            features,
            targets,
            n_features,
            stats: vec![identity; n_features + 1],
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Row-major `len() x n_features()` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Per-column statistics, features first, target last.
    pub fn whitening_stats(&self) -> &[ColumnStats] {
        &self.stats
    }

    /// Rows selected by `idx`, in that order. Whitening statistics are kept.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        let mut targets = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            features,
            targets,
            n_features: self.n_features,
            stats: self.stats.clone(),
        }
    }

    /// Inverse of [`whiten`], back to original units.
    pub fn unwhiten(&self) -> RawTable {
        let n_cols = self.n_features + 1;
        let mut values = Vec::with_capacity(self.len() * n_cols);
        for i in 0..self.len() {
            for (j, v) in self.row(i).iter().enumerate() {
                values.push(v * self.stats[j].std + self.stats[j].mean);
            }
            let t = self.stats[self.n_features];
            values.push(self.targets[i] * t.std + t.mean);
        }
        RawTable { n_cols, values }
    }
}

/// Maps every column to `(v - mean) / std` with the population (1/n)
/// standard deviation.
pub fn whiten(table: &RawTable) -> Result<Dataset> {
    let n = table.n_rows();
    if n == 0 {
        return Err(Error::Empty("cannot whiten an empty table"));
    }
    let n_cols = table.n_cols();
    let stats = (0..n_cols)
        .map(|j| {
            let mean = table.column(j).sum::<f64>() / n as f64;
            let var = table.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            let scale = table.column(j).fold(0.0f64, |m, v| m.max(v.abs()));
            // Constant columns can leave rounding-level spread behind.
            if !(std > 1e-12 * scale) || !std.is_finite() {
                Err(Error::ZeroVariance { column: j })
            } else {
                Ok(ColumnStats { mean, std })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let n_features = n_cols - 1;
    let mut features = Vec::with_capacity(n * n_features);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let row = table.row(i);
        for j in 0..n_features {
            features.push((row[j] - stats[j].mean) / stats[j].std);
        }
        targets.push((row[n_features] - stats[n_features].mean) / stats[n_features].std);
    }
    Ok(Dataset {
        features,
        targets,
        n_features,
        stats,
    })
}

/// One train/test partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub master_seed: u64,
    pub split_index: usize,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// `k` seeded 50/50 partitions of `0..n`. Split `i` is a Fisher-Yates
/// shuffle driven by ChaCha8 keyed on `master_seed` with stream `i`; the
/// first `n / 2` shuffled indices train.
pub fn make_splits(n: usize, master_seed: u64, k: usize) -> Result<Vec<SplitPlan>> {
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 rows to split, got {n}")));
    }
    if k == 0 {
        return Err(Error::Invalid("need at least one split".into()));
    }
    Ok((0..k).map(|i| split(n, master_seed, i)).collect())
}

fn split(n: usize, master_seed: u64, split_index: usize) -> SplitPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(split_index as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let n_train = n / 2;
    let mut train_idx = perm[..n_train].to_vec();
    let mut test_idx = perm[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    SplitPlan {
        master_seed,
        split_index,
        train_idx,
        test_idx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[f64]]) -> RawTable {
        let n_cols = rows[0].len();
        RawTable::new(n_cols, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn parses_single_whitespace_row() {
        let line: Vec<String> = (1..=14).map(|v| v.to_string()).collect();
        let t = parse_table(&line.join(" "), 14).unwrap();
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.row(0)[13], 14.0);
    }

    #[test]
    fn rejects_short_row() {
        let line: Vec<String> = (1..=13).map(|v| v.to_string()).collect();
        let err = parse_table(&line.join(" "), 14).unwrap_err();
        assert!(err.to_string().contains("expected 14 columns"), "{err}");
    }

    #[test]
    fn parse_error_names_line() {
        let text = "1,2\n3,oops\n";
        let err = parse_table(text, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn csv_header_is_skipped() {
        let t = parse_table("\"a\",\"b\"\n1,2\n3,4\n", 2).unwrap();
        assert_eq!(t.n_rows(), 2);
    }

    #[test]
    fn whiten_three_values() {
        let t = table(&[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 30.0]]);
        let d = whiten(&t).unwrap();
        let z = 1.5f64.sqrt(); // 1 / sqrt(2/3)
        let expected = [-z, 0.0, z];
        for (i, e) in expected.iter().enumerate() {
            assert!((d.row(i)[0] - e).abs() < 1e-12);
            assert!((d.targets()[i] - e).abs() < 1e-12);
        }
        assert!((d.whitening_stats()[0].std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((z - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn whiten_is_idempotent_on_whitened_input() {
        let t = table(&[&[1.0, 4.0], &[2.0, -1.0], &[7.0, 0.5], &[-3.0, 2.0]]);
        let once = whiten(&t).unwrap();
        let twice = whiten(&once.unwhiten_identity()).unwrap();
        for i in 0..once.len() {
            assert!((once.row(i)[0] - twice.row(i)[0]).abs() < 1e-10);
            assert!((once.targets()[i] - twice.targets()[i]).abs() < 1e-10);
        }
    }

    impl Dataset {
        fn unwhiten_identity(&self) -> RawTable {
            let mut values = Vec::new();
            for i in 0..self.len() {
                values.extend_from_slice(self.row(i));
                values.push(self.targets[i]);
            }
            RawTable::new(self.n_features + 1, values).unwrap()
        }
    }

    #[test]
    fn constant_column_cannot_be_whitened() {
        let t = table(&[&[5.0, 1.0], &[5.0, 2.0], &[5.0, 3.0]]);
        assert!(matches!(whiten(&t), Err(Error::ZeroVariance { column: 0 })));
    }

    #[test]
    fn splits_of_four() {
        let s = make_splits(4, 11, 1).unwrap();
        assert_eq!(s[0].train_idx.len(), 2);
        assert_eq!(s[0].test_idx.len(), 2);
        assert!(s[0].train_idx.iter().all(|i| !s[0].test_idx.contains(i)));
    }

    #[test]
    fn odd_n_gives_train_the_floor() {
        let s = make_splits(7, 3, 2).unwrap();
        for p in &s {
            assert_eq!(p.train_idx.len(), 3);
            assert_eq!(p.test_idx.len(), 4);
        }
    }

    #[test]
    fn splits_are_deterministic_and_distinct() {
        let a = make_splits(506, 0, 10).unwrap();
        let b = make_splits(506, 0, 10).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert_eq!(p.train_idx.len(), 253);
            assert_eq!(p.test_idx.len(), 253);
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert_ne!(a[i].train_idx, a[j].train_idx);
            }
        }
    }

    #[test]
    fn split_preconditions() {
        assert!(make_splits(1, 0, 1).is_err());
        assert!(make_splits(10, 0, 0).is_err());
    }
}
