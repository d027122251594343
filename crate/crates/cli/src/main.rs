use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use evidencenet_cli::config::{resolve_data, FileConfig, RunConfig, DATA_ENV};
use evidencenet_cli::ensemble::{cmd_ensemble, EnsembleDef};
use evidencenet_cli::report::{self, Table};
use evidencenet_cli::{artifacts, runner, verify};

/// Bayesian neural networks by nested sampling: evidences, predictions and
/// evidence-weighted ensembles on the housing data.
#[derive(Parser)]
#[command(name = "evidencenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample every model on every split and write run directories.
    Run(RunArgs),
    /// Combine finished model runs into an evidence-weighted ensemble.
    Ensemble(EnsembleArgs),
    /// Rebuild the results table from run and ensemble directories.
    Report(ReportArgs),
    /// Closed-form reference values.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Run the acceptance checks and verify run checksums.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any of the flag names below as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = DATA_ENV)]
    data: Option<PathBuf>,
    /// Model names such as "br" or "lh sv (4, 4)"; repeatable.
    #[arg(long = "model", short = 'm')]
    models: Vec<String>,
    #[arg(long)]
    n_live: Option<usize>,
    /// Slice updates per new point; defaults to five times the dimension.
    #[arg(long)]
    n_repeats: Option<usize>,
    #[arg(long)]
    termination_frac: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Single worker thread.
    #[arg(long)]
    reproducible: bool,
    /// All 49 grid models at n_live = 1000.
    #[arg(long)]
    paper_scale: bool,
    /// Accept model names outside the 49-model grid.
    #[arg(long)]
    allow_offgrid: bool,
}

impl RunArgs {
    fn flags(&self) -> FileConfig {
        FileConfig {
            data: self.data.clone(),
            models: (!self.models.is_empty()).then(|| self.models.clone()),
            n_live: self.n_live,
            n_repeats: self.n_repeats,
            termination_frac: self.termination_frac,
            max_iters: self.max_iters,
            master_seed: self.master_seed,
            n_splits: self.splits,
            out: self.out.clone(),
            threads: self.threads,
            reproducible: self.reproducible.then_some(true),
            paper_scale: self.paper_scale.then_some(true),
            allow_offgrid: self.allow_offgrid.then_some(true),
        }
    }
}

#[derive(Args)]
struct EnsembleArgs {
    /// TOML file with `members`, optional `prior` and `name`.
    #[arg(long)]
    def: Option<PathBuf>,
    /// Member model run directory; repeatable.
    #[arg(long = "member")]
    members: Vec<PathBuf>,
    /// Prior model probabilities in member order.
    #[arg(long, value_delimiter = ',')]
    prior: Vec<f64>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run roots, model run directories or ensemble directories.
    dirs: Vec<PathBuf>,
    /// Also write the table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Combine rows from different configuration snapshots.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Bayesian linear regression on each split.
    Br {
        #[arg(long, env = DATA_ENV)]
        data: Option<PathBuf>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, env = DATA_ENV)]
    data: Option<PathBuf>,
    /// Include the slow hierarchical-prior evidence gap check.
    #[arg(long)]
    full: bool,
    /// Skip the acceptance checks.
    #[arg(long, conflicts_with = "full")]
    checksums_only: bool,
    /// Run roots whose checksum manifests should be checked.
    #[arg(long = "runs")]
    runs: Vec<PathBuf>,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let file = match &args.config {
                Some(p) => FileConfig::load(p)?,
                None => FileConfig::default(),
            };
            let cfg = RunConfig::resolve(file.overlay(args.flags()))?;
            let outcomes = runner::cmd_run(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.out.join(report::TEXT_FILE))?);
            let stalled: Vec<_> = outcomes.iter().filter(|o| !o.record.converged).collect();
            for o in &stalled {
                eprintln!("not converged: {}", o.dir.display());
            }
            Ok(stalled.is_empty())
        }
        Command::Ensemble(args) => {
            let mut def = match &args.def {
                Some(p) => EnsembleDef::load(p)?,
                None => EnsembleDef {
                    name: None,
                    members: Vec::new(),
                    prior: None,
                },
            };
            def.members.extend(args.members);
            if !args.prior.is_empty() {
                def.prior = Some(args.prior);
            }
            if args.name.is_some() {
                def.name = args.name;
            }
            if def.members.is_empty() {
                bail!("no ensemble members; pass --def <file> or --member <dir>");
            }
            let record = cmd_ensemble(&def, &args.out)?;
            print!("{}", report::build(std::slice::from_ref(&args.out), false)?.text());
            println!("posterior per split:");
            for s in &record.splits {
                let p: Vec<String> = s.posterior.iter().map(|p| format!("{p:.3e}")).collect();
                println!("  split {}: {}", s.split_index, p.join(" "));
            }
            Ok(true)
        }
        Command::Report(args) => {
            let table: Table = report::build(&args.dirs, args.force)?;
            print!("{}", table.text());
            if let Some(path) = &args.csv {
                artifacts::write_text(path, &table.csv())?;
            }
            Ok(true)
        }
        Command::Oracle {
            which: OracleCommand::Br { data },
        } => {
            print!("{}", verify::cmd_oracle_br(&resolve_data(data))?);
            Ok(true)
        }
        Command::Verify(args) => {
            let report = verify::cmd_verify(&resolve_data(args.data), args.full, args.checksums_only, &args.runs)?;
            print!("{}", report.text());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
