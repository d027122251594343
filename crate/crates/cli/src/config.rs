//! Run configuration: TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use evidencenet::model::{model_grid, parse_name, ModelSpec};
use evidencenet::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DATA_ENV: &str = "EVIDENCENET_DATA";
pub const DEFAULT_DATA: &str = "data/housing.data";
/// Largest model dimension run by default at desk scale.
pub const DESK_MAX_DIM: usize = 90;
pub const FULL_SCALE_N_LIVE: usize = 1000;

/// Keys accepted in a config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    pub n_live: Option<usize>,
    pub n_repeats: Option<usize>,
    pub termination_frac: Option<f64>,
    pub max_iters: Option<usize>,
    pub master_seed: Option<u64>,
    pub n_splits: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub reproducible: Option<bool>,
    pub paper_scale: Option<bool>,
    pub allow_offgrid: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(self, flags: FileConfig) -> FileConfig {
        FileConfig {
            data: flags.data.or(self.data),
            models: flags.models.or(self.models),
            n_live: flags.n_live.or(self.n_live),
            n_repeats: flags.n_repeats.or(self.n_repeats),
            termination_frac: flags.termination_frac.or(self.termination_frac),
            max_iters: flags.max_iters.or(self.max_iters),
            master_seed: flags.master_seed.or(self.master_seed),
            n_splits: flags.n_splits.or(self.n_splits),
            out: flags.out.or(self.out),
            threads: flags.threads.or(self.threads),
            reproducible: flags.reproducible.or(self.reproducible),
            paper_scale: flags.paper_scale.or(self.paper_scale),
            allow_offgrid: flags.allow_offgrid.or(self.allow_offgrid),
        }
    }
}

/// Validated settings for one `run` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub models: Vec<String>,
    pub n_live: usize,
    pub n_repeats: Option<usize>,
    pub termination_frac: f64,
    pub max_iters: usize,
    pub master_seed: u64,
    pub n_splits: usize,
    pub out: PathBuf,
    pub threads: usize,
    pub reproducible: bool,
    pub paper_scale: bool,
}

/// Data path from an explicit value, the environment, or the default.
pub fn resolve_data(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA))
}

pub fn check_data(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!(
            "housing data not found at {}; pass --data <file> or set {DATA_ENV} \
             (the UCI housing.data layout: 506 rows, 14 whitespace-separated columns)",
            path.display()
        );
    }
    Ok(())
}

fn desk_models() -> Vec<String> {
    model_grid()
        .into_iter()
        .filter(|m| m.total_dim() <= DESK_MAX_DIM)
        .map(|m| m.name())
        .collect()
}

impl RunConfig {
    pub fn resolve(file: FileConfig) -> Result<Self> {
        let paper_scale = file.paper_scale.unwrap_or(false);
        let allow_offgrid = file.allow_offgrid.unwrap_or(false);
        let models = match file.models {
            Some(m) if !m.is_empty() => m,
            _ if paper_scale => model_grid().iter().map(ModelSpec::name).collect(),
            _ => desk_models(),
        };
        let mut canonical = Vec::with_capacity(models.len());
        for name in &models {
            let spec = parse_name(name).with_context(|| format!("unknown model name {name:?}"))?;
            if !spec.is_on_grid() && !allow_offgrid {
                bail!("model {name:?} is not one of the 49 grid models; pass --allow-offgrid to run it");
            }
            let name = spec.name();
            if !canonical.contains(&name) {
                canonical.push(name);
            }
        }
        let default_live = if paper_scale {
            FULL_SCALE_N_LIVE
        } else {
            SamplerConfig::default().n_live
        };
        let reproducible = file.reproducible.unwrap_or(false);
        let threads = if reproducible { 1 } else { file.threads.unwrap_or(0) };
        let cfg = Self {
            data: resolve_data(file.data),
            models: canonical,
            n_live: file.n_live.unwrap_or(default_live),
            n_repeats: file.n_repeats,
            termination_frac: file
                .termination_frac
                .unwrap_or(SamplerConfig::default().termination_frac),
            max_iters: file.max_iters.unwrap_or(SamplerConfig::default().max_iters),
            master_seed: file.master_seed.unwrap_or(0),
            n_splits: file.n_splits.unwrap_or(10),
            out: file.out.unwrap_or_else(|| PathBuf::from("runs")),
            threads,
            reproducible,
            paper_scale,
        };
        cfg.sampler(0).validate()?;
        if cfg.n_splits == 0 {
            bail!("n_splits must be at least 1");
        }
        Ok(cfg)
    }

    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_live: self.n_live,
            n_repeats: self.n_repeats,
            seed,
            termination_frac: self.termination_frac,
            max_iters: self.max_iters,
        }
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .map(|m| parse_name(m).expect("validated in resolve"))
            .collect()
    }

    /// Hash of everything that changes results for a given model and split:
    /// the data bytes and the sampler and split settings.
    pub fn snapshot_hash(&self, data_bytes: &[u8]) -> String {
        let fingerprint = serde_json::json!({
            "data_sha256": hex::encode(Sha256::digest(data_bytes)),
            "n_live": self.n_live,
            "n_repeats": self.n_repeats,
            "termination_frac": self.termination_frac,
            "max_iters": self.max_iters,
            "master_seed": self.master_seed,
            "n_splits": self.n_splits,
        });
        hex::encode(Sha256::digest(fingerprint.to_string().as_bytes()))[..16].to_string()
    }
}

/// Seed for one (model, split) run, derived from the master seed.
pub fn run_seed(master_seed: u64, model: &str, split: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(model.as_bytes());
    h.update((split as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Directory name for a model: `lh sv (4, 4)` becomes `lh_sv_4-4`.
pub fn model_dir_name(name: &str) -> String {
    let mut parts = Vec::new();
    let (tokens, hidden) = match name.find('(') {
        Some(i) => (&name[..i], Some(&name[i..])),
        None => (name, None),
    };
    parts.extend(tokens.split_whitespace().map(str::to_string));
    if let Some(h) = hidden {
        let inner: Vec<&str> = h
            .trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .map(str::trim)
            .collect();
        parts.push(inner.join("-"));
    }
    parts.join("_")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = FileConfig {
            n_live: Some(50),
            master_seed: Some(3),
            ..Default::default()
        };
        let flags = FileConfig {
            n_live: Some(80),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.n_live, Some(80));
        assert_eq!(merged.master_seed, Some(3));
    }

    #[test]
    fn desk_defaults() {
        let cfg = RunConfig::resolve(FileConfig::default()).unwrap();
        assert_eq!(cfg.n_live, 200);
        assert!(cfg
            .models
            .iter()
            .all(|m| parse_name(m).unwrap().total_dim() <= DESK_MAX_DIM));
        assert!(cfg.models.contains(&"br".to_string()));
        let full = RunConfig::resolve(FileConfig {
            paper_scale: Some(true),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(full.models.len(), 49);
        assert_eq!(full.n_live, FULL_SCALE_N_LIVE);
    }

    #[test]
    fn offgrid_needs_flag() {
        let file = FileConfig {
            models: Some(vec!["sv (3)".into()]),
            ..Default::default()
        };
        assert!(RunConfig::resolve(file.clone()).is_err());
        let ok = RunConfig::resolve(FileConfig {
            allow_offgrid: Some(true),
            ..file
        });
        assert!(ok.is_ok());
    }

    #[test]
    fn unknown_model_rejected() {
        let file = FileConfig {
            models: Some(vec!["zz (2)".into()]),
            ..Default::default()
        };
        assert!(RunConfig::resolve(file).is_err());
    }

    #[test]
    fn dir_names() {
        assert_eq!(model_dir_name("lh sv (4, 4)"), "lh_sv_4-4");
        assert_eq!(model_dir_name("br"), "br");
        assert_eq!(model_dir_name("(2)"), "2");
        assert_eq!(model_dir_name("r (8)"), "r_8");
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(run_seed(0, "br", 0), run_seed(0, "br", 1));
        assert_ne!(run_seed(0, "br", 0), run_seed(0, "(2)", 0));
        assert_eq!(run_seed(5, "br", 2), run_seed(5, "br", 2));
    }

    #[test]
    fn hash_ignores_models_and_threads() {
        let a = RunConfig::resolve(FileConfig::default()).unwrap();
        let b = RunConfig::resolve(FileConfig {
            models: Some(vec!["br".into()]),
            threads: Some(3),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a.snapshot_hash(b"x"), b.snapshot_hash(b"x"));
        assert_ne!(a.snapshot_hash(b"x"), a.snapshot_hash(b"y"));
    }

    #[test]
    fn file_rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("n_lives = 3").is_err());
        let f: FileConfig = toml::from_str("n_live = 40\nmodels = [\"br\"]").unwrap();
        assert_eq!(f.n_live, Some(40));
    }
}
