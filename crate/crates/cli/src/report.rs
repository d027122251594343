//! Split-averaged results tables, rebuilt from run directories on disk.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use evidencenet::model::{model_grid, parse_name};
use evidencenet::posterior::{aggregate_splits, SplitResult};
use serde::Serialize;

use crate::artifacts::{self, is_model_dir, load_records, read_json};
use crate::ensemble::EnsembleRecord;

pub const TEXT_FILE: &str = "report.txt";
pub const CSV_FILE: &str = "report.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub test_loss: f64,
    /// Mean of the per-split propagated loss errors.
    pub test_loss_err: f64,
    /// Standard error of the mean loss across splits.
    pub test_loss_sem: Option<f64>,
    pub log_z: f64,
    pub log_z_err: Option<f64>,
    /// `None` for ensembles.
    pub dim: Option<usize>,
    pub n_splits: usize,
    pub ensemble: bool,
    #[serde(skip)]
    config_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub rows: Vec<ReportRow>,
}

fn row_from_splits(
    name: String,
    splits: &[SplitResult],
    dim: Option<usize>,
    ensemble: bool,
    hash: String,
) -> Result<ReportRow> {
    let agg = aggregate_splits(splits)?;
    Ok(ReportRow {
        name,
        test_loss: agg.test_loss,
        test_loss_err: agg.test_loss_err_mean,
        test_loss_sem: agg.test_loss_sem,
        log_z: agg.log_z,
        log_z_err: agg.log_z_err,
        dim,
        n_splits: agg.n_splits,
        ensemble,
        config_hash: hash,
    })
}

fn model_row(dir: &Path) -> Result<ReportRow> {
    let records = load_records(dir)?;
    let first = &records[0];
    if let Some(r) = records.iter().find(|r| r.model_name != first.model_name) {
        bail!(
            "{} mixes models {:?} and {:?}",
            dir.display(),
            first.model_name,
            r.model_name
        );
    }
    let hashes: BTreeSet<&str> = records.iter().map(|r| r.config_hash.as_str()).collect();
    if hashes.len() > 1 {
        bail!("{} holds splits from different configurations", dir.display());
    }
    let splits: Vec<SplitResult> = records
        .iter()
        .map(|r| SplitResult {
            log_z: r.log_z,
            log_z_err: r.log_z_err,
            test_loss: r.test_loss,
            test_loss_err: r.test_loss_err,
        })
        .collect();
    row_from_splits(
        first.model_name.clone(),
        &splits,
        Some(first.dim),
        false,
        first.config_hash.clone(),
    )
}

fn ensemble_row(dir: &Path) -> Result<ReportRow> {
    let e: EnsembleRecord = read_json(&dir.join(artifacts::ENSEMBLE))?;
    let splits: Vec<SplitResult> = e.splits.iter().map(|s| s.result()).collect();
    row_from_splits(e.name, &splits, None, true, e.config_hash)
}

/// Model and ensemble directories reachable from `dir`: the directory itself
/// or its immediate children.
fn expand(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(artifacts::ENSEMBLE).is_file() || is_model_dir(dir) {
        return Ok(vec![dir.to_path_buf()]);
    }
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.join(artifacts::ENSEMBLE).is_file() || is_model_dir(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn sort_key(row: &ReportRow) -> (u8, usize, String) {
    if row.ensemble {
        return (2, 0, row.name.clone());
    }
    let position = parse_name(&row.name)
        .ok()
        .and_then(|spec| model_grid().iter().position(|g| *g == spec));
    match position {
        Some(i) => (0, i, String::new()),
        None => (1, 0, row.name.clone()),
    }
}

/// Collects one row per model or ensemble directory under `dirs`. Rows from
/// different configuration snapshots are refused unless `force` is set.
pub fn build(dirs: &[PathBuf], force: bool) -> Result<Table> {
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for dir in dirs {
        for d in expand(dir)? {
            let canonical = d.canonicalize().unwrap_or_else(|_| d.clone());
            if !seen.insert(canonical) {
                continue;
            }
            let row = if d.join(artifacts::ENSEMBLE).is_file() {
                ensemble_row(&d)?
            } else {
                model_row(&d)?
            };
            rows.push(row);
        }
    }
    let hashes: BTreeSet<&str> = rows.iter().map(|r| r.config_hash.as_str()).collect();
    if hashes.len() > 1 && !force {
        bail!(
            "rows come from {} different configuration snapshots ({}); pass --force to combine them",
            hashes.len(),
            hashes.into_iter().collect::<Vec<_>>().join(", ")
        );
    }
    rows.sort_by_key(sort_key);
    Ok(Table { rows })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

impl Table {
    pub fn text(&self) -> String {
        let mut out = format!(
            "{:<22} {:>9} {:>9} {:>9} {:>9} {:>7} {:>5} {:>6}\n",
            "name", "loss", "loss err", "loss sem", "log Z", "err", "dim", "splits"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<22} {:>9.4} {:>9.4} {:>9} {:>9.2} {:>7} {:>5} {:>6}\n",
                r.name,
                r.test_loss,
                r.test_loss_err,
                opt(r.test_loss_sem, 4),
                r.log_z,
                opt(r.log_z_err, 2),
                r.dim.map_or_else(|| "-".to_string(), |d| d.to_string()),
                r.n_splits
            ));
        }
        out
    }

    /// `name,test_loss,test_loss_err,log_z,log_z_err,dim`.
    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "test_loss", "test_loss_err", "log_z", "log_z_err", "dim"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.test_loss.to_string(),
                r.test_loss_err.to_string(),
                r.log_z.to_string(),
                r.log_z_err.map_or_else(String::new, |v| v.to_string()),
                r.dim.map_or_else(String::new, |d| d.to_string()),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table() {
        let t = build(&[], false).unwrap();
        assert_eq!(t.csv(), "name,test_loss,test_loss_err,log_z,log_z_err,dim\n");
        assert_eq!(t.text().lines().count(), 1);
    }

    fn row(name: &str, ensemble: bool) -> ReportRow {
        ReportRow {
            name: name.into(),
            test_loss: 0.2,
            test_loss_err: 0.01,
            test_loss_sem: None,
            log_z: -100.0,
            log_z_err: None,
            dim: None,
            n_splits: 1,
            ensemble,
            config_hash: String::new(),
        }
    }

    #[test]
    fn grid_order() {
        let mut rows = [
            row("1l lh sv", true),
            row("(2)", false),
            row("sv (3)", false),
            row("br", false),
        ];
        rows.sort_by_key(sort_key);
        let names: Vec<_> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["br", "(2)", "sv (3)", "1l lh sv"]);
    }

    #[test]
    fn names_with_commas_are_quoted() {
        let t = Table {
            rows: vec![row("lh sv (4, 4)", false)],
        };
        assert!(t.csv().contains("\"lh sv (4, 4)\",0.2,0.01,-100,,\n"));
    }
}
