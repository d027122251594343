//! `evidencenet ensemble`: evidence-weighted combination of finished runs.
//!
//! Members are combined within each split; the split results are then
//! averaged like any single model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use evidencenet::ensemble::{combine_predictive, combined_evidence, model_posterior};
use evidencenet::posterior::{aggregate_splits, test_loss, SplitResult};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, load_records, read_predictions, split_dir_name, RunRecord};

/// Ensemble definition file.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDef {
    pub name: Option<String>,
    /// Model run directories (each holding `split_<k>/`).
    pub members: Vec<PathBuf>,
    /// Prior model probabilities; uniform when absent.
    pub prior: Option<Vec<f64>>,
}

impl EnsembleDef {
    /// Reads a TOML definition; relative member paths are taken relative to
    /// the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut def: EnsembleDef = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for m in &mut def.members {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        Ok(def)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub name: String,
    pub dir: PathBuf,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSplit {
    pub split_index: usize,
    pub log_z: f64,
    pub log_z_err: f64,
    /// Model posterior over the members.
    pub posterior: Vec<f64>,
    pub test_loss: f64,
    pub test_loss_err: f64,
}

impl EnsembleSplit {
    pub fn result(&self) -> SplitResult {
        SplitResult {
            log_z: self.log_z,
            log_z_err: self.log_z_err,
            test_loss: self.test_loss,
            test_loss_err: self.test_loss_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub name: String,
    pub members: Vec<EnsembleMember>,
    pub splits: Vec<EnsembleSplit>,
    /// Log of the split-averaged combined evidence.
    pub log_z: f64,
    pub log_z_err: Option<f64>,
    pub test_loss: f64,
    pub test_loss_err: f64,
    pub test_loss_sem: Option<f64>,
    /// Members' split-averaged evidences combined afterwards: the other
    /// order of averaging and combining.
    pub log_z_from_member_averages: f64,
    pub config_hash: String,
}

fn split_map(dir: &Path) -> Result<BTreeMap<usize, RunRecord>> {
    Ok(load_records(dir)?.into_iter().map(|r| (r.split_index, r)).collect())
}

pub fn cmd_ensemble(def: &EnsembleDef, out: &Path) -> Result<EnsembleRecord> {
    ensure!(!def.members.is_empty(), "an ensemble needs at least one member");
    let members: Vec<BTreeMap<usize, RunRecord>> = def
        .members
        .iter()
        .map(|d| split_map(d).with_context(|| format!("loading member {}", d.display())))
        .collect::<Result<_>>()?;
    let splits: Vec<usize> = members[0].keys().copied().collect();
    for (m, dir) in members.iter().zip(&def.members).skip(1) {
        if m.keys().copied().collect::<Vec<_>>() != splits {
            bail!(
                "split mismatch: {} has splits {:?}, {} has {:?}",
                def.members[0].display(),
                splits,
                dir.display(),
                m.keys().collect::<Vec<_>>()
            );
        }
    }
    let names: Vec<String> = members.iter().map(|m| m[&splits[0]].model_name.clone()).collect();
    let hash = members[0][&splits[0]].config_hash.clone();
    if let Some(other) = members.iter().flat_map(|m| m.values()).find(|r| r.config_hash != hash) {
        bail!(
            "members come from different configuration snapshots ({hash} and {})",
            other.config_hash
        );
    }
    let prior = def.prior.as_deref();

    let mut per_split = Vec::new();
    for &k in &splits {
        let records: Vec<&RunRecord> = members.iter().map(|m| &m[&k]).collect();
        let log_zs: Vec<f64> = records.iter().map(|r| r.log_z).collect();
        let post = model_posterior(&names, &log_zs, prior)?;
        let log_z = combined_evidence(&log_zs, prior)?;
        let log_z_err = records
            .iter()
            .zip(&post.post)
            .map(|(r, p)| (p * r.log_z_err).powi(2))
            .sum::<f64>()
            .sqrt();

        let preds = def
            .members
            .iter()
            .map(|d| read_predictions(&d.join(split_dir_name(k)).join(artifacts::PREDICTIONS)))
            .collect::<Result<Vec<_>>>()?;
        let y_true = preds[0].y_true.clone();
        if preds.iter().any(|p| p.y_true != y_true) {
            bail!("split {k}: members were evaluated on different test sets");
        }
        let means: Vec<Vec<f64>> = preds.iter().map(|p| p.y_hat.clone()).collect();
        let sds: Vec<Vec<f64>> = preds.iter().map(|p| p.y_sd.clone()).collect();
        let (y_hat, y_sd) = combine_predictive(&post.post, &means, &sds)?;
        let (loss, loss_err) = test_loss(&y_true, &y_hat, &y_sd)?;

        let dir = out.join(split_dir_name(k));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let combined = artifacts::Predictions { y_true, y_hat, y_sd };
        artifacts::write_text(
            &dir.join(artifacts::PREDICTIONS),
            &artifacts::predictions_csv(&combined),
        )?;
        per_split.push(EnsembleSplit {
            split_index: k,
            log_z,
            log_z_err,
            posterior: post.post,
            test_loss: loss,
            test_loss_err: loss_err,
        });
    }

    let agg = aggregate_splits(&per_split.iter().map(EnsembleSplit::result).collect::<Vec<_>>())?;
    let member_averages: Vec<f64> = members
        .iter()
        .map(|m| {
            let s: Vec<SplitResult> = m
                .values()
                .map(|r| SplitResult {
                    log_z: r.log_z,
                    log_z_err: r.log_z_err,
                    test_loss: r.test_loss,
                    test_loss_err: r.test_loss_err,
                })
                .collect();
            aggregate_splits(&s).map(|a| a.log_z)
        })
        .collect::<evidencenet::Result<_>>()?;
    let prior_used = model_posterior(&names, &vec![0.0; names.len()], prior)?.prior;
    let record = EnsembleRecord {
        name: def.name.clone().unwrap_or_else(|| names.join(" + ")),
        members: names
            .iter()
            .zip(&def.members)
            .zip(&prior_used)
            .map(|((n, d), p)| EnsembleMember {
                name: n.clone(),
                dir: d.clone(),
                prior: *p,
            })
            .collect(),
        splits: per_split,
        log_z: agg.log_z,
        log_z_err: agg.log_z_err,
        test_loss: agg.test_loss,
        test_loss_err: agg.test_loss_err_mean,
        test_loss_sem: agg.test_loss_sem,
        log_z_from_member_averages: combined_evidence(&member_averages, prior)?,
        config_hash: hash,
    };
    artifacts::write_json(&out.join(artifacts::ENSEMBLE), &record)?;
    Ok(record)
}
