//! Derivative-free nested sampling.
//!
//! The engine keeps `n_live` points drawn from the prior (uniform on the unit
//! hypercube), repeatedly retires the lowest-likelihood point and replaces it
//! with a new point inside the likelihood contour the retired point defines.
//! Prior volume shrinks deterministically, `X_i = exp(-i / n_live)`, and the
//! evidence is the log-space sum of `L_i (X_(i-1) - X_i)` over retired points.
//! When the live points can no longer change the evidence by more than
//! `termination_frac`, the survivors are retired with equal shares of the
//! remaining volume.
//!
//! Likelihood plateaus are handled by giving every point a uniform tie-break
//! label; points are ordered by `(log_l, tie)`.

mod io;
mod slice;

pub use io::{dead_points_csv, write_dead_points, RunSummary};
pub use slice::{constrained_sample, SliceSampler, MAX_COLLAPSES, MIN_SLICE_WIDTH};

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::log_add_exp;
use crate::posterior::WeightedSamples;
use crate::{Error, Result};

/// A likelihood defined on the unit hypercube through a prior transform.
pub trait Problem: Sync {
    fn dim(&self) -> usize;

    /// Physical parameters at hypercube point `u`.
    fn physical(&self, u: &[f64]) -> Vec<f64>;

    fn log_likelihood(&self, theta: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_live: usize,
    /// Slice updates per replacement point; `None` means five times the
    /// dimension.
    pub n_repeats: Option<usize>,
    pub seed: u64,
    pub termination_frac: f64,
    pub max_iters: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_live: 200,
            n_repeats: None,
            seed: 0,
            termination_frac: 1e-3,
            max_iters: 5_000_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_live < 2 {
            return Err(Error::Invalid(format!(
                "n_live must be at least 2, got {}",
                self.n_live
            )));
        }
        if self.n_repeats == Some(0) {
            return Err(Error::Invalid("n_repeats must be at least 1".into()));
        }
        if !(self.termination_frac > 0.0 && self.termination_frac < 1.0) {
            return Err(Error::Invalid(format!(
                "termination_frac must lie in (0, 1), got {}",
                self.termination_frac
            )));
        }
        Ok(())
    }

    pub fn repeats_for(&self, dim: usize) -> usize {
        self.n_repeats.unwrap_or(5 * dim)
    }
}

/// A likelihood contour `(log_l, tie)`; a point lies inside when its own
/// pair compares greater.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub log_l: f64,
    pub tie: f64,
}

impl Contour {
    pub fn new(log_l: f64, tie: f64) -> Self {
        Self { log_l, tie }
    }

    /// Every point of the hypercube lies inside.
    pub fn none() -> Self {
        Self {
            log_l: f64::NEG_INFINITY,
            tie: 0.0,
        }
    }

    /// Only points with likelihood strictly above `log_l`.
    pub fn strict(log_l: f64) -> Self {
        Self { log_l, tie: 1.0 }
    }

    #[inline]
    pub fn admits(&self, log_l: f64, tie: f64) -> bool {
        log_l > self.log_l || (log_l == self.log_l && tie > self.tie)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LivePoint {
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub log_l: f64,
    pub tie: f64,
}

impl LivePoint {
    fn rank(&self, other: &Self) -> Ordering {
        self.log_l.total_cmp(&other.log_l).then(self.tie.total_cmp(&other.tie))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadPoint {
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub log_l: f64,
    /// Log prior volume left once this point is retired.
    pub log_x: f64,
    /// `log_l + log(volume retired with this point)`.
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsRun {
    pub dead: Vec<DeadPoint>,
    pub log_z: f64,
    pub log_z_err: f64,
    /// Prior-to-posterior information in nats.
    pub info_h: f64,
    pub n_like_calls: u64,
    /// Contour iterations before the final live points were retired.
    pub n_iters: usize,
    pub converged: bool,
    /// Configuration with `n_repeats` resolved.
    pub config: SamplerConfig,
}

impl NsRun {
    pub fn dim(&self) -> usize {
        self.dead.first().map_or(0, |d| d.u.len())
    }
}

/// Runs nested sampling on `problem` to convergence or `max_iters`.
pub fn run<P: Problem + ?Sized>(problem: &P, cfg: &SamplerConfig) -> Result<NsRun> {
    cfg.validate()?;
    let dim = problem.dim();
    if dim == 0 {
        return Err(Error::Invalid("problem has no parameters".into()));
    }
    let n_live = cfg.n_live;
    let n_repeats = cfg.repeats_for(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut n_calls: u64 = 0;

    let mut live: Vec<LivePoint> = (0..n_live)
        .map(|_| {
            let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let theta = problem.physical(&u);
            let log_l = problem.log_likelihood(&theta);
            n_calls += 1;
            LivePoint {
                u,
                theta,
                log_l,
                tie: rng.random(),
            }
        })
        .collect();
    if live.iter().all(|p| p.log_l == f64::NEG_INFINITY) {
        return Err(Error::ZeroLikelihood);
    }

    let n = n_live as f64;
    // log(X_(i-1) - X_i) - log X_(i-1): a constant shrinkage factor.
    let log_shell = (-(-1.0 / n).exp_m1()).ln();
    let log_frac = cfg.termination_frac.ln();
    let mut dead = Vec::new();
    let mut log_z = f64::NEG_INFINITY;
    let mut log_x = 0.0;
    let mut iter = 0;
    let mut converged = false;

    while iter < cfg.max_iters {
        let worst = live
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.rank(b.1))
            .map(|(i, _)| i)
            .expect("live set is never empty");
        let retired = live.swap_remove(worst);
        iter += 1;
        let log_weight = retired.log_l + log_x + log_shell;
        log_x = -(iter as f64) / n;
        log_z = log_add_exp(log_z, log_weight);
        let contour = Contour {
            log_l: retired.log_l,
            tie: retired.tie,
        };
        dead.push(DeadPoint {
            u: retired.u,
            theta: retired.theta,
            log_l: retired.log_l,
            log_x,
            log_weight,
        });

        let (fresh, calls) = constrained_sample(problem, &live, contour, n_repeats, &mut rng)?;
        n_calls += calls;
        live.push(fresh);

        let max_live = live.iter().map(|p| p.log_l).fold(f64::NEG_INFINITY, f64::max);
        if max_live + log_x < log_z + log_frac {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("nested sampling stopped after {iter} iterations without converging");
    }

    // Retire the survivors, each with an equal share of the remaining volume.
    live.sort_by(LivePoint::rank);
    let log_share = log_x - n.ln();
    for (k, p) in live.into_iter().enumerate() {
        let log_weight = p.log_l + log_share;
        log_z = log_add_exp(log_z, log_weight);
        let remaining = (n_live - k - 1) as f64;
        dead.push(DeadPoint {
            u: p.u,
            theta: p.theta,
            log_l: p.log_l,
            log_x: log_x + (remaining / n).ln(),
            log_weight,
        });
    }

    let info_h = information(&dead, log_z);
    let mut config = cfg.clone();
    config.n_repeats = Some(n_repeats);
    Ok(NsRun {
        dead,
        log_z,
        log_z_err: (info_h.max(0.0) / n).sqrt(),
        info_h,
        n_like_calls: n_calls,
        n_iters: iter,
        converged,
        config,
    })
}

/// `H = sum_i p_i (log L_i - log Z)` over points with nonzero weight.
fn information(dead: &[DeadPoint], log_z: f64) -> f64 {
    dead.iter()
        .filter(|d| d.log_weight > f64::NEG_INFINITY)
        .map(|d| (d.log_weight - log_z).exp() * (d.log_l - log_z))
        .sum()
}

/// Posterior samples with normalized weights `exp(log_weight - log_z)`.
pub fn posterior_samples(run: &NsRun) -> WeightedSamples {
    let raw: Vec<f64> = run.dead.iter().map(|d| (d.log_weight - run.log_z).exp()).collect();
    let total: f64 = raw.iter().sum();
    WeightedSamples::new(
        run.dead.iter().map(|d| d.theta.clone()).collect(),
        raw.iter().map(|w| w / total).collect(),
    )
    .expect("dead points share one dimension")
}
