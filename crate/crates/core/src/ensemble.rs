//! Evidence-weighted model averaging.

use serde::{Deserialize, Serialize};

use crate::math::{log_sum_exp, softmax};
use crate::posterior::WeightedSamples;
use crate::{Error, Result};

const PRIOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPosterior {
    pub members: Vec<String>,
    pub prior: Vec<f64>,
    pub log_zs: Vec<f64>,
    pub post: Vec<f64>,
}

fn resolve_prior(m: usize, prior: Option<&[f64]>) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Empty("ensemble has no members"));
    }
    let Some(p) = prior else {
        return Ok(vec![1.0 / m as f64; m]);
    };
    if p.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: p.len(),
        });
    }
    if p.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Invalid("model prior weights must be nonnegative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOL {
        return Err(Error::Invalid(format!("model prior sums to {total}, not 1")));
    }
    Ok(p.to_vec())
}

fn log_joint(log_zs: &[f64], prior: &[f64]) -> Vec<f64> {
    // A zero prior removes the member even when its evidence is infinite.
    log_zs
        .iter()
        .zip(prior)
        .map(|(z, p)| if *p == 0.0 { f64::NEG_INFINITY } else { z + p.ln() })
        .collect()
}

/// `P(m | D)` from member evidences and an optional prior (uniform when
/// `None`).
pub fn model_posterior(members: &[String], log_zs: &[f64], prior: Option<&[f64]>) -> Result<ModelPosterior> {
    if members.len() != log_zs.len() {
        return Err(Error::Dimension {
            expected: members.len(),
            got: log_zs.len(),
        });
    }
    let prior = resolve_prior(log_zs.len(), prior)?;
    let joint = log_joint(log_zs, &prior);
    if joint.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::ZeroLikelihood);
    }
    Ok(ModelPosterior {
        members: members.to_vec(),
        prior,
        log_zs: log_zs.to_vec(),
        post: softmax(&joint),
    })
}

/// `log sum_m Z_m P(m)`.
pub fn combined_evidence(log_zs: &[f64], prior: Option<&[f64]>) -> Result<f64> {
    let prior = resolve_prior(log_zs.len(), prior)?;
    Ok(log_sum_exp(&log_joint(log_zs, &prior)))
}

/// Union of member samples with weights scaled by the model posterior.
/// Sample tags become member indices.
pub fn combined_samples(members: &[WeightedSamples], posterior: &ModelPosterior) -> Result<WeightedSamples> {
    if members.len() != posterior.post.len() {
        return Err(Error::Invalid(format!(
            "{} sample sets for {} ensemble members",
            members.len(),
            posterior.post.len()
        )));
    }
    let mut thetas = Vec::new();
    let mut weights = Vec::new();
    let mut tags = Vec::new();
    for (m, (s, p)) in members.iter().zip(&posterior.post).enumerate() {
        for (t, w) in s.thetas().iter().zip(s.weights()) {
            thetas.push(t.clone());
            weights.push(p * w);
            tags.push(m);
        }
    }
    WeightedSamples::tagged(thetas, weights, tags)
}

/// Mixture moments of member predictive distributions at each point:
/// mean `sum p_m mu_m`, variance `sum p_m (sd_m^2 + mu_m^2) - mean^2`.
pub fn combine_predictive(post: &[f64], means: &[Vec<f64>], sds: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if means.len() != post.len() || sds.len() != post.len() {
        return Err(Error::Dimension {
            expected: post.len(),
            got: means.len().min(sds.len()),
        });
    }
    let n = means.first().map_or(0, Vec::len);
    if means.iter().chain(sds).any(|v| v.len() != n) {
        return Err(Error::Invalid("member predictions differ in length".into()));
    }
    let mut mean = vec![0.0; n];
    for (p, mu) in post.iter().zip(means) {
        if *p == 0.0 {
            continue;
        }
        for (a, b) in mean.iter_mut().zip(mu) {
            *a += p * b;
        }
    }
    let mut var = vec![0.0; n];
    for ((p, mu), sd) in post.iter().zip(means).zip(sds) {
        if *p == 0.0 {
            continue;
        }
        for (((v, m), s), c) in var.iter_mut().zip(mu).zip(sd).zip(&mean) {
            *v += p * (s * s + (m - c) * (m - c));
        }
    }
    Ok((mean, var.into_iter().map(f64::sqrt).collect()))
}
