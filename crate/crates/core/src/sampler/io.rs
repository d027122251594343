//! Run artefacts: the dead-point table and a JSON summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NsRun;
use crate::{Error, Result};

/// Dead points as CSV: `logL,logX,logWeight,theta_0..,u_0..`. Values use
/// the shortest round-tripping decimal form, so equal runs give equal bytes.
pub fn dead_points_csv(run: &NsRun) -> String {
    let n_theta = run.dead.first().map_or(0, |d| d.theta.len());
    let n_u = run.dim();
    let mut out = String::from("logL,logX,logWeight");
    for i in 0..n_theta {
        write!(out, ",theta_{i}").unwrap();
    }
    for i in 0..n_u {
        write!(out, ",u_{i}").unwrap();
    }
    out.push('\n');
    for d in &run.dead {
        write!(out, "{},{},{}", d.log_l, d.log_x, d.log_weight).unwrap();
        for v in d.theta.iter().chain(&d.u) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `contents` to `path` through a sibling temporary file.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn write_dead_points(run: &NsRun, path: &Path) -> Result<()> {
    write_atomic(path, dead_points_csv(run).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model_name: String,
    pub split_index: usize,
    pub seed: u64,
    pub log_z: f64,
    pub log_z_err: f64,
    pub info_h: f64,
    pub n_like_calls: u64,
    pub n_iters: usize,
    pub converged: bool,
}

impl RunSummary {
    pub fn from_run(run: &NsRun, model_name: &str, split_index: usize) -> Self {
        Self {
            model_name: model_name.to_string(),
            split_index,
            seed: run.config.seed,
            log_z: run.log_z,
            log_z_err: run.log_z_err,
            info_h: run.info_h,
            n_like_calls: run.n_like_calls,
            n_iters: run.n_iters,
            converged: run.converged,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}
