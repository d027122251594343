//! Posterior predictive moments, test-set loss and split averaging.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::math::log_sum_exp;
use crate::model::ModelSpec;
use crate::network::Evaluator;
use crate::{Error, Result};

const WEIGHT_TOL: f64 = 1e-9;

/// Weighted posterior draws. `tags[i]` indexes the model that produced
/// `thetas[i]`; a single-model set tags everything 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSamples {
    thetas: Vec<Vec<f64>>,
    weights: Vec<f64>,
    tags: Vec<usize>,
}

impl WeightedSamples {
    pub fn new(thetas: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let tags = vec![0; thetas.len()];
        Self::tagged(thetas, weights, tags)
    }

    pub fn tagged(thetas: Vec<Vec<f64>>, weights: Vec<f64>, tags: Vec<usize>) -> Result<Self> {
        if thetas.len() != weights.len() || thetas.len() != tags.len() {
            return Err(Error::Dimension {
                expected: thetas.len(),
                got: weights.len().min(tags.len()),
            });
        }
        if thetas.is_empty() {
            return Err(Error::Empty("no posterior samples"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(format!("invalid sample weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Invalid(format!("sample weights sum to {total}, not 1")));
        }
        Ok(Self { thetas, weights, tags })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tags(&self) -> &[usize] {
        &self.tags
    }

    /// `(sum p)^2 / sum p^2`.
    pub fn effective_sample_size(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        s * s / s2
    }

    /// Weighted mean of each coordinate. Requires one dimension across samples.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.thetas[0].len();
        let mut m = vec![0.0; dim];
        for (t, w) in self.thetas.iter().zip(&self.weights) {
            for (mi, ti) in m.iter_mut().zip(t) {
                *mi += w * ti;
            }
        }
        m
    }
}

/// Predictive means and standard deviations at every row of `x`.
/// `models[tag]` gives the model of each sample.
pub fn predictive(samples: &WeightedSamples, models: &[ModelSpec], x: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let layouts: Vec<_> = models.iter().map(|m| m.layout()).collect();
    for &t in &samples.tags {
        let Some(spec) = models.get(t) else {
            return Err(Error::Invalid(format!("sample tag {t} has no model")));
        };
        if spec.arch().input_size() != x.n_features() {
            return Err(Error::Dimension {
                expected: spec.arch().input_size(),
                got: x.n_features(),
            });
        }
    }
    let mut evaluators: Vec<_> = models.iter().map(|m| Evaluator::new(m.arch())).collect();

    // Predictions of every contributing sample, row-major by sample.
    let mut preds = Vec::new();
    let mut weights = Vec::new();
    for ((theta, &w), &tag) in samples.thetas.iter().zip(&samples.weights).zip(&samples.tags) {
        if w == 0.0 {
            continue;
        }
        let layout = &layouts[tag];
        if theta.len() != layout.total_len() {
            return Err(Error::Dimension {
                expected: layout.total_len(),
                got: theta.len(),
            });
        }
        let params = &theta[layout.network_offset()..];
        for i in 0..n {
            let f = evaluators[tag].eval_unchecked(params, x.row(i));
            if !f.is_finite() {
                return Err(Error::NonFinite { layer: 0 });
            }
            preds.push(f);
        }
        weights.push(w);
    }

    let mut means = vec![0.0; n];
    for (s, w) in weights.iter().enumerate() {
        for (m, f) in means.iter_mut().zip(&preds[s * n..(s + 1) * n]) {
            *m += w * f;
        }
    }
    let mut vars = vec![0.0; n];
    for (s, w) in weights.iter().enumerate() {
        for ((v, f), m) in vars.iter_mut().zip(&preds[s * n..(s + 1) * n]).zip(&means) {
            *v += w * (f - m) * (f - m);
        }
    }
    Ok((means, vars.into_iter().map(f64::sqrt).collect()))
}

/// Mean squared error of the predictive means and its first-order error
/// from the predictive standard deviations.
pub fn test_loss(y: &[f64], means: &[f64], sds: &[f64]) -> Result<(f64, f64)> {
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("test set is empty"));
    }
    if means.len() != n || sds.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: means.len().min(sds.len()),
        });
    }
    let nf = n as f64;
    let mut chi2 = 0.0;
    let mut var = 0.0;
    for ((y, m), s) in y.iter().zip(means).zip(sds) {
        let r = y - m;
        chi2 += r * r;
        let g = 2.0 * r / nf;
        var += g * g * s * s;
    }
    Ok((chi2 / nf, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub y_hat: Vec<f64>,
    pub y_sd: Vec<f64>,
    pub test_loss: f64,
    pub test_loss_err: f64,
}

impl PredictiveSummary {
    pub fn evaluate(samples: &WeightedSamples, models: &[ModelSpec], test: &Dataset) -> Result<Self> {
        let (y_hat, y_sd) = predictive(samples, models, test)?;
        let (test_loss, test_loss_err) = test_loss(test.targets(), &y_hat, &y_sd)?;
        Ok(Self {
            y_hat,
            y_sd,
            test_loss,
            test_loss_err,
        })
    }

    /// `index,y_true,y_hat,y_sd` rows.
    pub fn to_csv(&self, y_true: &[f64]) -> String {
        let mut out = String::from("index,y_true,y_hat,y_sd\n");
        for (i, ((y, m), s)) in y_true.iter().zip(&self.y_hat).zip(&self.y_sd).enumerate() {
            out.push_str(&format!("{i},{y},{m},{s}\n"));
        }
        out
    }
}

/// One split's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub log_z: f64,
    pub log_z_err: f64,
    pub test_loss: f64,
    pub test_loss_err: f64,
}

/// Split-averaged row. Error fields are `None` with fewer than two splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitAggregate {
    pub n_splits: usize,
    /// Log of the mean evidence.
    pub log_z: f64,
    /// Split scatter (delta method) combined with the sampler errors.
    pub log_z_err: Option<f64>,
    pub test_loss: f64,
    /// Standard error of the mean loss across splits.
    pub test_loss_sem: Option<f64>,
    /// Mean of the per-split propagated loss errors.
    pub test_loss_err_mean: f64,
}

pub fn aggregate_splits(runs: &[SplitResult]) -> Result<SplitAggregate> {
    let k = runs.len();
    if k == 0 {
        return Err(Error::Empty("no splits to aggregate"));
    }
    let kf = k as f64;
    let log_zs: Vec<f64> = runs.iter().map(|r| r.log_z).collect();
    let log_z = log_sum_exp(&log_zs) - kf.ln();
    let test_loss = runs.iter().map(|r| r.test_loss).sum::<f64>() / kf;
    let test_loss_err_mean = runs.iter().map(|r| r.test_loss_err).sum::<f64>() / kf;
    if k < 2 {
        return Ok(SplitAggregate {
            n_splits: k,
            log_z,
            log_z_err: None,
            test_loss,
            test_loss_sem: None,
            test_loss_err_mean,
        });
    }

    // Z_k / mean(Z) has mean 1; its standard error is the relative error of
    // the mean evidence, i.e. the error of its log.
    let ratios: Vec<f64> = log_zs.iter().map(|l| (l - log_z).exp()).collect();
    let scatter = sem(&ratios);
    let sampler: f64 = runs
        .iter()
        .zip(&ratios)
        .map(|(r, q)| (q / kf * r.log_z_err).powi(2))
        .sum();
    let losses: Vec<f64> = runs.iter().map(|r| r.test_loss).collect();
    Ok(SplitAggregate {
        n_splits: k,
        log_z,
        log_z_err: Some((scatter * scatter + sampler).sqrt()),
        test_loss,
        test_loss_sem: Some(sem(&losses)),
        test_loss_err_mean,
    })
}

fn sem(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_name;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_input_data(xs: &[f64]) -> Dataset {
        Dataset::from_parts(xs.to_vec(), vec![0.0; xs.len()], 1).unwrap()
    }

    /// `f(x) = b` for a zero-hidden-layer model on one input.
    fn bias_only(b: f64) -> Vec<f64> {
        vec![0.0, b]
    }

    fn linear_1d() -> ModelSpec {
        crate::model::parse_name_with_inputs("br", 1).unwrap()
    }

    #[test]
    fn two_equal_samples() {
        let s = WeightedSamples::new(vec![bias_only(1.0), bias_only(3.0)], vec![0.5, 0.5]).unwrap();
        let (m, sd) = predictive(&s, &[linear_1d()], &one_input_data(&[0.0])).unwrap();
        assert_eq!(m, vec![2.0]);
        assert_eq!(sd, vec![1.0]);
    }

    #[test]
    fn single_sample_has_no_spread() {
        let s = WeightedSamples::new(vec![vec![0.7, -0.2]], vec![1.0]).unwrap();
        let (m, sd) = predictive(&s, &[linear_1d()], &one_input_data(&[2.0, -1.0])).unwrap();
        assert_eq!(m, vec![0.7 * 2.0 - 0.2, -0.7 - 0.2]);
        assert_eq!(sd, vec![0.0, 0.0]);
    }

    #[test]
    fn unequal_weights() {
        let s = WeightedSamples::new(vec![bias_only(0.0), bias_only(4.0)], vec![0.75, 0.25]).unwrap();
        let (m, sd) = predictive(&s, &[linear_1d()], &one_input_data(&[5.0])).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!((sd[0] - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized_weights() {
        assert!(WeightedSamples::new(vec![vec![0.0]], vec![0.5]).is_err());
        assert!(WeightedSamples::new(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5]).is_err());
        assert!(WeightedSamples::new(vec![], vec![]).is_err());
    }

    #[test]
    fn effective_size() {
        let s = WeightedSamples::new(vec![vec![0.0]; 4], vec![0.25; 4]).unwrap();
        assert!((s.effective_sample_size() - 4.0).abs() < 1e-12);
        let s = WeightedSamples::new(vec![vec![0.0]; 2], vec![1.0, 0.0]).unwrap();
        assert_eq!(s.effective_sample_size(), 1.0);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(test_loss(&[1.0, 2.0], &[1.0, 2.0], &[0.3, 0.4]).unwrap(), (0.0, 0.0));
        assert_eq!(test_loss(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap(), (1.0, 0.0));
        let (e, err) = test_loss(&[0.5], &[0.0], &[0.1]).unwrap();
        assert_eq!(e, 0.25);
        assert!((err - 0.1).abs() < 1e-15);
        assert!(test_loss(&[], &[], &[]).is_err());
        assert!(test_loss(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
    }

    fn split(log_z: f64, loss: f64) -> SplitResult {
        SplitResult {
            log_z,
            log_z_err: 0.1,
            test_loss: loss,
            test_loss_err: 0.01,
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_splits(&[split(0.0, 0.2), split(3f64.ln(), 0.4)]).unwrap();
        assert!((a.log_z - 2f64.ln()).abs() < 1e-14);
        assert!((a.test_loss - 0.3).abs() < 1e-15);
        assert!((a.test_loss_sem.unwrap() - 0.1).abs() < 1e-15);
        assert!((a.test_loss_err_mean - 0.01).abs() < 1e-15);

        let same = aggregate_splits(&[split(-5.0, 0.3); 4]).unwrap();
        assert!((same.log_z + 5.0).abs() < 1e-14);
        // Scatter vanishes; four equal sampler errors of 0.1 average down.
        assert!((same.log_z_err.unwrap() - 0.05).abs() < 1e-14);

        let one = aggregate_splits(&[split(-1.0, 0.5)]).unwrap();
        assert_eq!(one.log_z, -1.0);
        assert!(one.log_z_err.is_none() && one.test_loss_sem.is_none());
        assert!(aggregate_splits(&[]).is_err());
    }

    #[test]
    fn concentrated_posterior_matches_forward() {
        let spec = parse_name("(3)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta: Vec<f64> = (0..spec.total_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xs: Vec<f64> = (0..13 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let data = Dataset::from_parts(xs, vec![0.0; 5], 13).unwrap();
        let s = WeightedSamples::new(vec![theta.clone()], vec![1.0]).unwrap();
        let (m, _) = predictive(&s, std::slice::from_ref(&spec), &data).unwrap();
        for (i, mi) in m.iter().enumerate() {
            assert_eq!(*mi, spec.arch().forward(&theta, data.row(i)).unwrap());
        }
    }

    #[test]
    fn resampling_reproduces_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let thetas: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let s = WeightedSamples::new(thetas.clone(), weights.clone()).unwrap();
        let data = one_input_data(&[0.8]);
        let (m, sd) = predictive(&s, &[linear_1d()], &data).unwrap();

        let cdf: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let draws = 100_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..draws {
            let u: f64 = rng.random();
            let k = cdf.partition_point(|c| *c < u).min(n - 1);
            let f = thetas[k][0] * 0.8 + thetas[k][1];
            sum += f;
            sum2 += f * f;
        }
        let mean = sum / draws as f64;
        let var = sum2 / draws as f64 - mean * mean;
        assert!((mean - m[0]).abs() < 0.01 * m[0].abs().max(sd[0]));
        assert!((var.sqrt() - sd[0]).abs() < 0.01 * sd[0]);
    }

    #[test]
    fn predictions_csv() {
        let p = PredictiveSummary {
            y_hat: vec![0.5, 1.0],
            y_sd: vec![0.1, 0.0],
            test_loss: 0.0,
            test_loss_err: 0.0,
        };
        assert_eq!(
            p.to_csv(&[0.5, 2.0]),
            "index,y_true,y_hat,y_sd\n0,0.5,0.5,0.1\n1,2,1,0\n"
        );
    }
}
