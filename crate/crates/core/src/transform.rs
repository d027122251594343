//! Unit hypercube to physical parameters.
//!
//! Hyperparameters and the likelihood width come from Gamma quantiles on the
//! precision, network parameters from zero-mean Gaussian quantiles scaled by
//! their governing width. Hidden-layer bias blocks are first pushed through
//! [`forced_identifiability`], which orders them and so labels the otherwise
//! exchangeable hidden nodes.

use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::model::{GammaPrior, Governor, HyperPriors, ModelSpec, ParamLayout};
use crate::{Error, Result};

/// Coordinates are clamped into `[EPS, 1 - EPS]` before any quantile is taken.
pub const EPS: f64 = 1e-15;

fn check_probability(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Probability(u))
    }
}

#[inline]
fn std_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Quantile of `Normal(mean, sd)`.
pub fn gaussian_quantile(u: f64, mean: f64, sd: f64) -> Result<f64> {
    check_probability(u)?;
    if !(sd > 0.0) {
        return Err(Error::Invalid(format!("standard deviation must be positive, got {sd}")));
    }
    Ok(mean + sd * std_normal_quantile(u))
}

/// Quantile of `Gamma(alpha, rate = beta)`.
pub fn gamma_quantile(u: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_probability(u)?;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Invalid(format!(
            "gamma parameters must be positive, got ({alpha}, {beta})"
        )));
    }
    Ok(unit_rate_gamma_quantile(u, alpha) / beta)
}

/// Width `sigma = tau^(-1/2)` where the precision `tau` is the `u` quantile
/// of `Gamma(alpha, rate = beta)`.
pub fn gamma_precision_quantile(u: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(gamma_quantile(u, alpha, beta)?.powf(-0.5))
}

fn unit_rate_gamma_quantile(u: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        // Exponential distribution.
        -(-u).ln_1p()
    } else {
        gamma_root(u, alpha)
    }
}

/// Solves `P(alpha, y) = u` by Newton steps kept inside a bisection bracket.
pub(crate) fn gamma_root(u: f64, alpha: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = alpha.max(1.0);
    while gamma_lr(alpha, hi) < u {
        lo = hi;
        hi *= 2.0;
    }
    let ln_norm = ln_gamma(alpha);
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = gamma_lr(alpha, y) - u;
        if f == 0.0 {
            return y;
        }
        if f < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let density = ((alpha - 1.0) * y.ln() - y - ln_norm).exp();
        let newton = y - f / density;
        let next = if newton > lo && newton < hi && density > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - y).abs() <= 1e-12 * y.abs().max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            return next;
        }
        y = next;
    }
    y
}

/// Maps `k` coordinates to an ascending sequence distributed like the order
/// statistics of `k` independent uniforms:
/// `t_k = u_k^(1/k)` and `t_i = u_i^(1/i) t_(i+1)` for `i = k-1, ..., 1`.
pub fn forced_identifiability(u: &[f64]) -> Vec<f64> {
    let mut t = u.to_vec();
    order_in_place(&mut t);
    t
}

fn order_in_place(t: &mut [f64]) {
    let mut above = 1.0;
    for i in (0..t.len()).rev() {
        t[i] = t[i].powf(1.0 / (i + 1) as f64) * above;
        above = t[i];
    }
}

/// Precomputed hypercube-to-physical map for one model.
#[derive(Debug, Clone)]
pub struct PriorTransform {
    layout: ParamLayout,
    priors: Option<HyperPriors>,
}

impl PriorTransform {
    pub fn new(spec: &ModelSpec) -> Self {
        let layout = spec.layout();
        let priors = (layout.n_hyper > 0 || layout.has_sigma).then(|| {
            crate::model::hyperprior_params(spec).unwrap_or(HyperPriors {
                hyper: Vec::new(),
                sigma: GammaPrior::UNIT,
            })
        });
        Self { layout, priors }
    }

    pub fn dim(&self) -> usize {
        self.layout.total_len()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn to_physical(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut theta = vec![0.0; self.dim()];
        self.to_physical_into(u, &mut theta)?;
        Ok(theta)
    }

    pub fn to_physical_into(&self, u: &[f64], theta: &mut [f64]) -> Result<()> {
        let dim = self.dim();
        if u.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: u.len(),
            });
        }
        if theta.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: theta.len(),
            });
        }
        let clamp = |v: f64| v.clamp(EPS, 1.0 - EPS);

        let layout = &self.layout;
        if let Some(priors) = &self.priors {
            for (h, prior) in priors.hyper.iter().enumerate() {
                theta[h] = width(clamp(u[h]), prior);
            }
            if let Some(s) = layout.sigma_index() {
                theta[s] = width(clamp(u[s]), &priors.sigma);
            }
        }

        let offset = layout.network_offset();
        for (j, v) in u[offset..].iter().enumerate() {
            theta[offset + j] = clamp(*v);
        }
        for block in &layout.ordered_blocks {
            let range = offset + block.start..offset + block.end;
            order_in_place(&mut theta[range.clone()]);
            for v in &mut theta[range] {
                *v = clamp(*v);
            }
        }
        for (j, gov) in layout.governors.iter().enumerate() {
            let sd = match gov {
                Governor::Unit => 1.0,
                Governor::Hyper(h) => theta[*h],
            };
            theta[offset + j] = sd * std_normal_quantile(theta[offset + j]);
        }
        Ok(())
    }
}

#[inline]
fn width(u: f64, prior: &GammaPrior) -> f64 {
    (unit_rate_gamma_quantile(u, prior.alpha) / prior.beta).powf(-0.5)
}

/// Physical parameters of `spec` at hypercube point `u`.
pub fn to_physical(spec: &ModelSpec, u: &[f64]) -> Result<Vec<f64>> {
    PriorTransform::new(spec).to_physical(u)
}
