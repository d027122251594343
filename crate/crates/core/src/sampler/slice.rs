//! Slice sampling inside a likelihood contour.
//!
//! Directions are drawn isotropically in the frame whitened by the live-point
//! covariance, so a unit step spans roughly one standard deviation of the
//! live set along the chosen direction. Points outside the unit hypercube lie
//! outside every contour.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Contour, LivePoint, Problem};
use crate::{Error, Result};

/// Consecutive collapsed slices tolerated before giving up.
pub const MAX_COLLAPSES: usize = 100;
/// Slices narrower than this along the chosen direction count as collapsed.
pub const MIN_SLICE_WIDTH: f64 = 1e-12;
const MAX_STEP_OUT: usize = 10_000;

/// Direction generator built from a snapshot of the live set.
#[derive(Debug, Clone)]
pub struct SliceSampler {
    dim: usize,
    factor: DMatrix<f64>,
}

impl SliceSampler {
    /// Lower-triangular factor of the live-point covariance, or the identity
    /// when the covariance is singular.
    pub fn from_live(live: &[LivePoint]) -> Self {
        let dim = live.first().map_or(0, |p| p.u.len());
        let n = live.len();
        let identity = Self {
            dim,
            factor: DMatrix::identity(dim, dim),
        };
        if n < 2 {
            return identity;
        }
        let mut mean = DVector::zeros(dim);
        for p in live {
            mean += DVector::from_column_slice(&p.u);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for p in live {
            let d = DVector::from_column_slice(&p.u) - &mean;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= (n - 1) as f64;
        match cov.cholesky() {
            Some(chol) if chol.l_dirty().iter().all(|v| v.is_finite()) => Self {
                dim,
                factor: chol.unpack(),
            },
            _ => identity,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.factor == DMatrix::identity(self.dim, self.dim)
    }

    fn direction<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = loop {
            let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = z.norm();
            if norm > 0.0 {
                break z / norm;
            }
        };
        &self.factor * z
    }

    /// Runs `n_repeats` slice updates from `start`, which must lie inside
    /// `contour`. `calls` accumulates likelihood evaluations.
    pub fn sample<P: Problem + ?Sized, R: Rng + ?Sized>(
        &self,
        problem: &P,
        start: &LivePoint,
        contour: Contour,
        n_repeats: usize,
        rng: &mut R,
        calls: &mut u64,
    ) -> Result<LivePoint> {
        let mut current = start.clone();
        let mut done = 0;
        let mut collapses = 0;
        while done < n_repeats {
            match self.slice_step(problem, &current, contour, rng, calls) {
                Some(mut next) => {
                    next.tie = if next.log_l > contour.log_l {
                        rng.random::<f64>()
                    } else {
                        rng.random_range(contour.tie..1.0)
                    };
                    current = next;
                    done += 1;
                    collapses = 0;
                }
                None => {
                    collapses += 1;
                    if collapses >= MAX_COLLAPSES {
                        return Err(Error::SliceCollapse(collapses));
                    }
                }
            }
        }
        Ok(current)
    }

    fn slice_step<P: Problem + ?Sized, R: Rng + ?Sized>(
        &self,
        problem: &P,
        current: &LivePoint,
        contour: Contour,
        rng: &mut R,
        calls: &mut u64,
    ) -> Option<LivePoint> {
        let d = self.direction(rng);
        let length = d.norm();
        if !(length > 0.0) {
            return None;
        }
        let at = |t: f64| -> Vec<f64> { current.u.iter().zip(d.iter()).map(|(x, di)| x + t * di).collect() };
        let probe = |t: f64, calls: &mut u64| -> Option<LivePoint> {
            let u = at(t);
            if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return None;
            }
            let theta = problem.physical(&u);
            let log_l = problem.log_likelihood(&theta);
            *calls += 1;
            contour.admits(log_l, current.tie).then_some(LivePoint {
                u,
                theta,
                log_l,
                tie: current.tie,
            })
        };

        let offset: f64 = rng.random();
        let mut lo = -offset;
        let mut hi = 1.0 - offset;
        for _ in 0..MAX_STEP_OUT {
            if probe(lo, calls).is_none() {
                break;
            }
            lo -= 1.0;
        }
        for _ in 0..MAX_STEP_OUT {
            if probe(hi, calls).is_none() {
                break;
            }
            hi += 1.0;
        }

        loop {
            if (hi - lo) * length < MIN_SLICE_WIDTH {
                return None;
            }
            let t = rng.random_range(lo..hi);
            if let Some(p) = probe(t, calls) {
                return Some(p);
            }
            if t < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
        }
    }
}

/// Draws a replacement point inside `contour`, starting from a uniformly
/// chosen member of `live` (every member must already satisfy the contour).
/// Returns the point and the number of likelihood evaluations spent.
pub fn constrained_sample<P: Problem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    live: &[LivePoint],
    contour: Contour,
    n_repeats: usize,
    rng: &mut R,
) -> Result<(LivePoint, u64)> {
    if live.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 live points, got {}",
            live.len()
        )));
    }
    let slicer = SliceSampler::from_live(live);
    let start = &live[rng.random_range(0..live.len())];
    let mut calls = 0;
    let point = slicer.sample(problem, start, contour, n_repeats, rng, &mut calls)?;
    Ok((point, calls))
}
