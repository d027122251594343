//! `evidencenet verify` and `evidencenet oracle br`.

use std::path::{Path, PathBuf};

use anyhow::Result;
use evidencenet::posterior::aggregate_splits;
use evidencenet::scorecard::{self, Outcome, MASTER_SEED, N_SPLITS};

use crate::artifacts;
use crate::runner::load_data;

pub struct VerifyReport {
    pub outcomes: Vec<Outcome>,
    /// `(run root, problems)` for every checked manifest.
    pub manifests: Vec<(PathBuf, Vec<String>)>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed) && self.manifests.iter().all(|(_, p)| p.is_empty())
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            out.push_str(&format!("{o}\n"));
        }
        for (root, problems) in &self.manifests {
            if problems.is_empty() {
                out.push_str(&format!("[PASS] checksums: {}\n", root.display()));
            }
            for p in problems {
                out.push_str(&format!("[FAIL] checksums: {}: {p}\n", root.display()));
            }
        }
        let failed = self.outcomes.iter().filter(|o| !o.passed).count();
        out.push_str(&format!(
            "{} of {} criteria passed\n",
            self.outcomes.len() - failed,
            self.outcomes.len()
        ));
        out
    }
}

/// Runs the acceptance checks (the slow evidence-gap check only with
/// `full`, none with `checksums_only`) and validates the checksum manifest
/// of each run root.
pub fn cmd_verify(data: &Path, full: bool, checksums_only: bool, runs: &[PathBuf]) -> Result<VerifyReport> {
    let outcomes = if checksums_only {
        Vec::new()
    } else {
        scorecard::run_all(&load_data(data)?.data, full)
    };
    let manifests = runs
        .iter()
        .map(|root| Ok((root.clone(), artifacts::verify_manifest(root)?)))
        .collect::<Result<_>>()?;
    Ok(VerifyReport { outcomes, manifests })
}

/// Closed-form linear-regression evidence and test loss on every split.
pub fn cmd_oracle_br(data: &Path) -> Result<String> {
    let loaded = load_data(data)?;
    let splits = scorecard::analytic_splits(&loaded.data)?;
    let mut out = format!("{:>5} {:>12} {:>10} {:>10}\n", "split", "log Z", "loss", "loss err");
    for (k, s) in splits.iter().enumerate() {
        out.push_str(&format!(
            "{k:>5} {:>12.4} {:>10.4} {:>10.4}\n",
            s.log_z, s.test_loss, s.test_loss_err
        ));
    }
    let agg = aggregate_splits(&splits)?;
    out.push_str(&format!(
        "mean over {N_SPLITS} splits (master seed {MASTER_SEED}): log Z = {:.4}, loss = {:.4} +- {:.4}\n",
        agg.log_z,
        agg.test_loss,
        agg.test_loss_sem.unwrap_or(f64::NAN)
    ));
    Ok(out)
}
