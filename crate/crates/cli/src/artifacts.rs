//! On-disk layout of run directories.
//!
//! ```text
//! <out>/config.json
//! <out>/manifest.json
//! <out>/report.txt, report.csv
//! <out>/<model>/split_<k>/{dead_points.csv, summary.json, predictions.csv}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SUMMARY: &str = "summary.json";
pub const DEAD_POINTS: &str = "dead_points.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";
pub const ENSEMBLE: &str = "ensemble.json";

/// Per-run summary. The first block of fields is the sampler's own summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_name: String,
    pub split_index: usize,
    pub seed: u64,
    pub log_z: f64,
    pub log_z_err: f64,
    pub info_h: f64,
    pub n_like_calls: u64,
    pub n_iters: usize,
    pub converged: bool,
    pub dim: usize,
    pub n_live: usize,
    pub n_repeats: usize,
    pub master_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub test_loss: f64,
    pub test_loss_err: f64,
    pub effective_samples: f64,
    pub config_hash: String,
}

pub fn split_dir_name(k: usize) -> String {
    format!("split_{k}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Split directories under a model directory, ordered by split index.
pub fn split_dirs(model_dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(model_dir).with_context(|| format!("listing {}", model_dir.display()))? {
        let path = entry?.path();
        let Some(k) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("split_"))
            .and_then(|k| k.parse().ok())
        else {
            continue;
        };
        if path.join(SUMMARY).is_file() {
            out.push((k, path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn is_model_dir(dir: &Path) -> bool {
    split_dirs(dir).map(|s| !s.is_empty()).unwrap_or(false) && !dir.join(ENSEMBLE).is_file()
}

pub fn load_records(model_dir: &Path) -> Result<Vec<RunRecord>> {
    let dirs = split_dirs(model_dir)?;
    if dirs.is_empty() {
        bail!("{} holds no split_<k>/{SUMMARY} files", model_dir.display());
    }
    dirs.iter().map(|(_, d)| read_json(&d.join(SUMMARY))).collect()
}

/// Rows of a `predictions.csv`: `(y_true, y_hat, y_sd)` in index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub y_true: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub y_sd: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    index: usize,
    y_true: f64,
    y_hat: f64,
    y_sd: f64,
}

pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut p = Predictions::default();
    for (i, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let row = row.with_context(|| format!("parsing {}", path.display()))?;
        if row.index != i {
            bail!("{}: row {i} has index {}", path.display(), row.index);
        }
        p.y_true.push(row.y_true);
        p.y_hat.push(row.y_hat);
        p.y_sd.push(row.y_sd);
    }
    Ok(p)
}

pub fn predictions_csv(p: &Predictions) -> String {
    let mut out = String::from("index,y_true,y_hat,y_sd\n");
    for (i, ((y, m), s)) in p.y_true.iter().zip(&p.y_hat).zip(&p.y_sd).enumerate() {
        out.push_str(&format!("{i},{y},{m},{s}\n"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Checksums of every artifact under `root`, keyed by relative path with
/// `/` separators. The manifest itself is excluded.
pub fn collect_checksums(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("walked from root");
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if key == MANIFEST || key.ends_with(".tmp") {
                continue;
            }
            out.insert(key, sha256_file(&path)?);
        }
    }
    Ok(out)
}

pub fn write_manifest(root: &Path) -> Result<()> {
    write_json(&root.join(MANIFEST), &collect_checksums(root)?)
}

/// Files whose checksum differs from the manifest, plus listed files that
/// are missing.
pub fn verify_manifest(root: &Path) -> Result<Vec<String>> {
    let expected: BTreeMap<String, String> = read_json(&root.join(MANIFEST))?;
    let mut problems = Vec::new();
    for (rel, sum) in &expected {
        let path = root.join(rel);
        if !path.is_file() {
            problems.push(format!("{rel}: missing"));
        } else if &sha256_file(&path)? != sum {
            problems.push(format!("{rel}: checksum mismatch"));
        }
    }
    Ok(problems)
}
