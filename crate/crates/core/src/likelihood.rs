//! Independent Gaussian likelihood of the training targets.

use crate::data::Dataset;
use crate::math::LN_2PI;
use crate::model::{ModelSpec, ParamLayout};
use crate::network::{Architecture, BatchInputs};
use crate::sampler::Problem;
use crate::transform::PriorTransform;
use crate::{Error, Result};

/// `-chi2 / (2 sigma^2) - n (ln sigma + ln(2 pi) / 2)`.
#[inline]
pub fn gaussian_log_like(chi2: f64, n: usize, sigma: f64) -> f64 {
    -chi2 / (2.0 * sigma * sigma) - n as f64 * (sigma.ln() + 0.5 * LN_2PI)
}

/// Log-likelihood of `train` under the physical parameters `theta` of
/// `spec`. A non-finite network output gives `-inf`, which the sampler
/// treats as outside every likelihood contour.
pub fn log_like(spec: &ModelSpec, theta: &[f64], train: &Dataset) -> Result<f64> {
    let layout = spec.layout();
    if theta.len() != layout.total_len() {
        return Err(Error::Dimension {
            expected: layout.total_len(),
            got: theta.len(),
        });
    }
    if train.n_features() != spec.arch().input_size() {
        return Err(Error::Dimension {
            expected: spec.arch().input_size(),
            got: train.n_features(),
        });
    }
    let inputs = BatchInputs::from_rows(train.features(), train.n_features())?;
    Ok(evaluate(spec.arch(), &layout, theta, &inputs, train.targets()))
}

fn evaluate(arch: &Architecture, layout: &ParamLayout, theta: &[f64], inputs: &BatchInputs, targets: &[f64]) -> f64 {
    let sigma = layout.sigma_index().map_or(1.0, |s| theta[s]);
    let params = &theta[layout.network_offset()..];
    let mut predictions = Vec::with_capacity(targets.len());
    arch.forward_columns(params, inputs, &mut predictions)
        .expect("shapes checked on construction");
    let mut chi2 = 0.0;
    for (y, f) in targets.iter().zip(&predictions) {
        let r = y - f;
        chi2 += r * r;
    }
    if !chi2.is_finite() {
        return f64::NEG_INFINITY;
    }
    gaussian_log_like(chi2, targets.len(), sigma)
}

/// A model bound to a training split, ready for the sampler.
#[derive(Debug, Clone)]
pub struct BnnProblem {
    spec: ModelSpec,
    transform: PriorTransform,
    train: Dataset,
    inputs: BatchInputs,
}

impl BnnProblem {
    pub fn new(spec: ModelSpec, train: Dataset) -> Result<Self> {
        if train.n_features() != spec.arch().input_size() {
            return Err(Error::Dimension {
                expected: spec.arch().input_size(),
                got: train.n_features(),
            });
        }
        if train.is_empty() {
            return Err(Error::Empty("training split has no rows"));
        }
        let transform = PriorTransform::new(&spec);
        let inputs = BatchInputs::from_rows(train.features(), train.n_features())?;
        Ok(Self {
            spec,
            transform,
            train,
            inputs,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }
}

impl Problem for BnnProblem {
    fn dim(&self) -> usize {
        self.transform.dim()
    }

    fn physical(&self, u: &[f64]) -> Vec<f64> {
        self.transform
            .to_physical(u)
            .expect("sampler points have the model dimension")
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        evaluate(
            self.spec.arch(),
            self.transform.layout(),
            theta,
            &self.inputs,
            self.train.targets(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_name;
    use crate::network::NetworkParams;
    use proptest::prelude::*;

    fn one_feature_data(xs: &[f64], ys: &[f64]) -> Dataset {
        let mut features = Vec::new();
        for x in xs {
            let mut row = vec![0.0; 13];
            row[0] = *x;
            features.extend(row);
        }
        Dataset::from_parts(features, ys.to_vec(), 13).unwrap()
    }

    #[test]
    fn perfect_single_prediction() {
        let spec = parse_name("br").unwrap();
        let data = one_feature_data(&[0.3], &[0.0]);
        let v = log_like(&spec, &[0.0; 14], &data).unwrap();
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
        assert!((v + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn two_unit_residuals() {
        let spec = parse_name("br").unwrap();
        let data = one_feature_data(&[0.0, 0.0], &[1.0, -1.0]);
        let v = log_like(&spec, &[0.0; 14], &data).unwrap();
        assert!((v - (-1.0 - LN_2PI)).abs() < 1e-14);
        assert!((v + 2.83788).abs() < 1e-5);
    }

    #[test]
    fn sampled_width() {
        let spec = parse_name("sv").unwrap();
        let data = one_feature_data(&[0.0], &[0.0]);
        let mut theta = vec![0.0; 15];
        theta[0] = 2.0;
        let v = log_like(&spec, &theta, &data).unwrap();
        assert!((v - (-(2f64.ln()) - 0.5 * LN_2PI)).abs() < 1e-14);
        assert!((v + 1.61209).abs() < 1e-5);
    }

    #[test]
    fn overflow_gives_negative_infinity() {
        let spec = parse_name("br").unwrap();
        let data = one_feature_data(&[2.0], &[0.0]);
        let mut theta = vec![0.0; 14];
        theta[0] = f64::MAX;
        assert_eq!(log_like(&spec, &theta, &data).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn wrong_dimension() {
        let spec = parse_name("(2)").unwrap();
        let data = one_feature_data(&[0.0], &[0.0]);
        assert!(log_like(&spec, &[0.0; 14], &data).is_err());
    }

    /// Golden-section search for the maximizing sigma.
    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    proptest! {
        #[test]
        fn additive_over_records(
            xs in prop::collection::vec(-2.0f64..2.0, 1..20),
            w in -1.0f64..1.0,
            sigma in 0.2f64..3.0,
        ) {
            let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
            let spec = parse_name("sv").unwrap();
            let mut theta = vec![0.0; 15];
            theta[0] = sigma;
            theta[1] = w;
            let all = log_like(&spec, &theta, &one_feature_data(&xs, &ys)).unwrap();
            let parts: f64 = xs.iter().zip(&ys)
                .map(|(x, y)| log_like(&spec, &theta, &one_feature_data(&[*x], &[*y])).unwrap())
                .sum();
            prop_assert!((all - parts).abs() < 1e-9);
        }

        #[test]
        fn width_profile_peaks_at_rms_residual(
            residuals in prop::collection::vec(-3.0f64..3.0, 1..30),
        ) {
            let chi2: f64 = residuals.iter().map(|r| r * r).sum();
            prop_assume!(chi2 > 1e-3);
            let n = residuals.len();
            let best = golden_max(|s| gaussian_log_like(chi2, n, s), 1e-3, 10.0);
            let analytic = (chi2 / n as f64).sqrt();
            prop_assert!((best - analytic).abs() < 1e-6);
        }

        #[test]
        fn shrinking_a_residual_never_hurts(
            residuals in prop::collection::vec(-3.0f64..3.0, 1..30),
            which in any::<prop::sample::Index>(),
            shrink in 0.0f64..1.0,
        ) {
            let chi2: f64 = residuals.iter().map(|r| r * r).sum();
            let i = which.index(residuals.len());
            let mut smaller = residuals.clone();
            smaller[i] *= shrink;
            let chi2_small: f64 = smaller.iter().map(|r| r * r).sum();
            let n = residuals.len();
            prop_assert!(gaussian_log_like(chi2_small, n, 1.3) >= gaussian_log_like(chi2, n, 1.3));
        }
    }

    #[test]
    fn problem_matches_free_function() {
        let spec = parse_name("lh sv (2)").unwrap();
        let data = one_feature_data(&[0.1, -0.4, 1.2], &[0.2, 0.0, -0.5]);
        let problem = BnnProblem::new(spec.clone(), data.clone()).unwrap();
        let u: Vec<f64> = (0..problem.dim())
            .map(|i| (i as f64 * 0.37).fract() * 0.9 + 0.05)
            .collect();
        let theta = problem.physical(&u);
        assert_eq!(problem.log_likelihood(&theta), log_like(&spec, &theta, &data).unwrap());
        let p = NetworkParams::from_flat(spec.arch(), theta[5..].to_vec()).unwrap();
        assert!(spec.arch().forward(p.as_slice(), data.row(0)).is_ok());
    }
}
