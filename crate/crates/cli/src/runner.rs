//! `evidencenet run`: sample every (model, split) pair and persist results.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evidencenet::data::{make_splits, parse_table, whiten, Dataset, HOUSING_COLUMNS};
use evidencenet::likelihood::BnnProblem;
use evidencenet::model::ModelSpec;
use evidencenet::posterior::PredictiveSummary;
use evidencenet::sampler::{posterior_samples, run, write_dead_points};
use log::{info, warn};
use rayon::prelude::*;

use crate::artifacts::{self, Predictions, RunRecord};
use crate::config::{check_data, model_dir_name, run_seed, RunConfig};
use crate::report;

pub struct LoadedData {
    pub data: Dataset,
    pub bytes: Vec<u8>,
}

pub fn load_data(path: &Path) -> Result<LoadedData> {
    check_data(path)?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8_lossy(&bytes);
    let table = parse_table(&text, HOUSING_COLUMNS).with_context(|| format!("parsing {}", path.display()))?;
    let data = whiten(&table).with_context(|| format!("whitening {}", path.display()))?;
    Ok(LoadedData { data, bytes })
}

/// One finished (model, split) run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
}

fn run_one(
    cfg: &RunConfig,
    hash: &str,
    data: &Dataset,
    spec: &ModelSpec,
    split: usize,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<RunOutcome> {
    let name = spec.name();
    let dir = cfg
        .out
        .join(model_dir_name(&name))
        .join(artifacts::split_dir_name(split));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let train = data.subset(train_idx);
    let test = data.subset(test_idx);
    let seed = run_seed(cfg.master_seed, &name, split);
    info!("{name} split {split}: sampling {} parameters", spec.total_dim());
    let problem = BnnProblem::new(spec.clone(), train)?;
    let ns = run(&problem, &cfg.sampler(seed)).with_context(|| format!("{name} split {split}"))?;
    if !ns.converged {
        warn!("{name} split {split}: stopped at max_iters before converging");
    }
    let samples = posterior_samples(&ns);
    let summary = PredictiveSummary::evaluate(&samples, std::slice::from_ref(spec), &test)?;
    write_dead_points(&ns, &dir.join(artifacts::DEAD_POINTS))?;
    let predictions = Predictions {
        y_true: test.targets().to_vec(),
        y_hat: summary.y_hat.clone(),
        y_sd: summary.y_sd.clone(),
    };
    artifacts::write_text(
        &dir.join(artifacts::PREDICTIONS),
        &artifacts::predictions_csv(&predictions),
    )?;
    let record = RunRecord {
        model_name: name.clone(),
        split_index: split,
        seed,
        log_z: ns.log_z,
        log_z_err: ns.log_z_err,
        info_h: ns.info_h,
        n_like_calls: ns.n_like_calls,
        n_iters: ns.n_iters,
        converged: ns.converged,
        dim: spec.total_dim(),
        n_live: ns.config.n_live,
        n_repeats: ns.config.repeats_for(spec.total_dim()),
        master_seed: cfg.master_seed,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        test_loss: summary.test_loss,
        test_loss_err: summary.test_loss_err,
        effective_samples: samples.effective_sample_size(),
        config_hash: hash.to_string(),
    };
    artifacts::write_json(&dir.join(artifacts::SUMMARY), &record)?;
    info!(
        "{name} split {split}: log Z = {:.3} +- {:.3}, test loss {:.4}",
        record.log_z, record.log_z_err, record.test_loss
    );
    Ok(RunOutcome { dir, record })
}

/// Runs the grid in `cfg`, then writes the config snapshot, report and
/// checksum manifest under `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<RunOutcome>> {
    if cfg.paper_scale {
        warn!(
            "full scale: {} models x {} splits at n_live = {}; single runs can take hours",
            cfg.models.len(),
            cfg.n_splits,
            cfg.n_live
        );
    }
    let loaded = load_data(&cfg.data)?;
    let hash = cfg.snapshot_hash(&loaded.bytes);
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let plans = make_splits(loaded.data.len(), cfg.master_seed, cfg.n_splits)?;
    let specs = cfg.specs();
    let jobs: Vec<(&ModelSpec, usize)> = specs
        .iter()
        .flat_map(|s| (0..cfg.n_splits).map(move |k| (s, k)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("starting worker pool")?;
    let outcomes: Vec<Result<RunOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|(spec, k)| {
                let plan = &plans[*k];
                run_one(cfg, &hash, &loaded.data, spec, *k, &plan.train_idx, &plan.test_idx)
            })
            .collect()
    });
    let outcomes: Vec<RunOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let snapshot = serde_json::json!({ "config": cfg, "config_hash": hash });
    artifacts::write_json(&cfg.out.join(artifacts::CONFIG), &snapshot)?;
    let model_dirs: Vec<PathBuf> = specs.iter().map(|s| cfg.out.join(model_dir_name(&s.name()))).collect();
    let table = report::build(&model_dirs, false)?;
    artifacts::write_text(&cfg.out.join(report::TEXT_FILE), &table.text())?;
    artifacts::write_text(&cfg.out.join(report::CSV_FILE), &table.csv())?;
    artifacts::write_manifest(&cfg.out)?;
    Ok(outcomes)
}
