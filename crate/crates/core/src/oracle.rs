//! Reference values that do not go through the sampler: closed-form Bayesian
//! linear regression and brute-force quadrature over the unit hypercube.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Dataset;
use crate::math::LN_2PI;
use crate::{Error, Result};

/// Largest quadrature dimension accepted by [`grid_log_evidence`].
pub const MAX_GRID_DIMS: usize = 3;

/// Linear regression `y = w.x + b + noise` with unit Gaussian priors on
/// every weight and the bias, and unit noise.
#[derive(Debug, Clone)]
pub struct AnalyticBlr {
    n_features: usize,
    /// Posterior precision `I + Phi^T Phi`, factorized.
    precision: Cholesky<f64, Dyn>,
    phi_t_y: DVector<f64>,
    y_t_y: f64,
    n: usize,
}

fn design_row(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, x.iter().copied().chain(std::iter::once(1.0)))
}

impl AnalyticBlr {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training split has no rows"));
        }
        let p = train.n_features() + 1;
        let mut a = DMatrix::identity(p, p);
        let mut phi_t_y = DVector::zeros(p);
        for (i, y) in train.targets().iter().enumerate() {
            let phi = design_row(train.row(i));
            a.ger(1.0, &phi, &phi, 1.0);
            phi_t_y.axpy(*y, &phi, 1.0);
        }
        let precision = a
            .cholesky()
            .ok_or_else(|| Error::Invalid("posterior precision is not positive definite".into()))?;
        Ok(Self {
            n_features: train.n_features(),
            precision,
            phi_t_y,
            y_t_y: train.targets().iter().map(|y| y * y).sum(),
            n: train.len(),
        })
    }

    /// `log N(y; 0, I + Phi Phi^T)` through the parameter-space identities
    /// `det(I + Phi Phi^T) = det(A)` and
    /// `y^T (I + Phi Phi^T)^-1 y = y^T y - (Phi^T y)^T A^-1 Phi^T y`.
    pub fn log_evidence(&self) -> f64 {
        let l = self.precision.l_dirty();
        let log_det = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        let solved = self.precision.solve(&self.phi_t_y);
        let quad = self.y_t_y - self.phi_t_y.dot(&solved);
        -0.5 * (quad + log_det + self.n as f64 * LN_2PI)
    }

    /// Posterior mean in the parameter order `[w_1..w_d, b]`.
    pub fn posterior_mean(&self) -> Vec<f64> {
        self.precision.solve(&self.phi_t_y).iter().copied().collect()
    }

    /// Posterior predictive mean and standard deviation of the regression
    /// function (noise excluded) at every row of `x`.
    pub fn predict(&self, x: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.n_features() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.n_features(),
            });
        }
        let mean = DVector::from_vec(self.posterior_mean());
        let mut means = Vec::with_capacity(x.len());
        let mut sds = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let phi = design_row(x.row(i));
            means.push(phi.dot(&mean));
            sds.push(phi.dot(&self.precision.solve(&phi)).max(0.0).sqrt());
        }
        Ok((means, sds))
    }
}

/// Same quantity as [`AnalyticBlr::log_evidence`] from the `n x n` data-space
/// covariance. Cubic in the number of rows.
pub fn blr_log_evidence_dense(train: &Dataset) -> Result<f64> {
    let n = train.len();
    if n == 0 {
        return Err(Error::Empty("training split has no rows"));
    }
    let p = train.n_features() + 1;
    let phi = DMatrix::from_fn(n, p, |i, j| if j + 1 == p { 1.0 } else { train.row(i)[j] });
    let cov = DMatrix::identity(n, n) + &phi * phi.transpose();
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Invalid("marginal covariance is not positive definite".into()))?;
    let y = DVector::from_column_slice(train.targets());
    let l = chol.l_dirty();
    let log_det = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    let quad = y.dot(&chol.solve(&y));
    Ok(-0.5 * (quad + log_det + n as f64 * LN_2PI))
}

pub fn blr_log_evidence(train: &Dataset) -> Result<f64> {
    Ok(AnalyticBlr::fit(train)?.log_evidence())
}

/// `log` of the midpoint-rule integral of `exp(log_like)` over the unit
/// hypercube with `nodes` points per axis.
pub fn grid_log_evidence(log_like: impl Fn(&[f64]) -> f64, dims: usize, nodes: usize) -> Result<f64> {
    if dims == 0 || dims > MAX_GRID_DIMS {
        return Err(Error::Invalid(format!(
            "grid quadrature supports 1 to {MAX_GRID_DIMS} dimensions, got {dims}"
        )));
    }
    if nodes == 0 {
        return Err(Error::Invalid("grid needs at least one node per axis".into()));
    }
    let h = 1.0 / nodes as f64;
    let total = nodes.pow(dims as u32);
    let mut point = vec![0.0; dims];
    // Running log-sum-exp: sum of exp(v - max).
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rest = flat;
        for p in point.iter_mut() {
            *p = ((rest % nodes) as f64 + 0.5) * h;
            rest /= nodes;
        }
        let v = log_like(&point);
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > max {
            sum = sum * (max - v).exp() + 1.0;
            max = v;
        } else {
            sum += (v - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    // Mean over nodes; the cell volume is 1 / total.
    Ok(max + (sum / total as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        Dataset::from_parts(x, y, d).unwrap()
    }

    #[test]
    fn factorizations_agree() {
        for seed in 0..4 {
            let data = random_data(40, 13, seed);
            let a = blr_log_evidence(&data).unwrap();
            let b = blr_log_evidence_dense(&data).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn posterior_mean_solves_normal_equations() {
        let data = random_data(30, 3, 7);
        let blr = AnalyticBlr::fit(&data).unwrap();
        let m = blr.posterior_mean();
        // (I + Phi^T Phi) m = Phi^T y, checked coordinate-wise.
        for j in 0..4 {
            let mut lhs = m[j];
            let mut rhs = 0.0;
            for i in 0..data.len() {
                let mut row = data.row(i).to_vec();
                row.push(1.0);
                let fit: f64 = row.iter().zip(&m).map(|(a, b)| a * b).sum();
                lhs += row[j] * fit;
                rhs += row[j] * data.targets()[i];
            }
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_grid() {
        assert_eq!(grid_log_evidence(|_| -2.5, 2, 10).unwrap(), -2.5);
        assert!(grid_log_evidence(|_| 0.0, 4, 2).is_err());
        assert_eq!(
            grid_log_evidence(|_| f64::NEG_INFINITY, 1, 5).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn gaussian_bump_mass() {
        let s: f64 = 0.05;
        let f = |x: &[f64]| -(x[0] - 0.5).powi(2) / (2.0 * s * s);
        let v = grid_log_evidence(f, 1, 1_000_000).unwrap();
        let exact = (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((v - exact).abs() < 1e-6);
    }

    #[test]
    fn separable_grid() {
        let f = |x: f64| -8.0 * (x - 0.3).powi(2);
        let g = |x: f64| 2.0 * x.sin();
        let fx = grid_log_evidence(|p| f(p[0]), 1, 400).unwrap();
        let gx = grid_log_evidence(|p| g(p[0]), 1, 400).unwrap();
        let joint = grid_log_evidence(|p| f(p[0]) + g(p[1]), 2, 400).unwrap();
        assert!((fx + gx - joint).abs() < 1e-6);
    }
}
