//! Acceptance checks shared by the test suite and `evidencenet verify`.
//!
//! Each check returns an [`Outcome`]; the data-dependent ones take the full
//! whitened housing table.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_lr;

use crate::data::{make_splits, Dataset};
use crate::ensemble::{combine_predictive, combined_evidence, combined_samples, model_posterior};
use crate::likelihood::BnnProblem;
use crate::math::LN_2PI;
use crate::model::{model_grid, parse_name, parse_name_with_inputs};
use crate::oracle::{grid_log_evidence, AnalyticBlr};
use crate::posterior::{aggregate_splits, predictive, test_loss, SplitResult, WeightedSamples};
use crate::sampler::{dead_points_csv, run, Problem, SamplerConfig};
use crate::transform::{forced_identifiability, gamma_quantile, gaussian_quantile};
use crate::Result;

pub const N_SPLITS: usize = 10;
pub const MASTER_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: u8, title: &'static str, check: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
    Outcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn split_pair(data: &Dataset, split: usize) -> Result<(Dataset, Dataset)> {
    let plan = &make_splits(data.len(), MASTER_SEED, split + 1)?[split];
    Ok((data.subset(&plan.train_idx), data.subset(&plan.test_idx)))
}

/// Closed-form linear regression over the standard splits: per-split
/// evidence and test loss of the posterior-mean predictions.
pub fn analytic_splits(data: &Dataset) -> Result<Vec<SplitResult>> {
    make_splits(data.len(), MASTER_SEED, N_SPLITS)?
        .iter()
        .map(|plan| {
            let train = data.subset(&plan.train_idx);
            let test = data.subset(&plan.test_idx);
            let blr = AnalyticBlr::fit(&train)?;
            let (means, sds) = blr.predict(&test)?;
            let (loss, loss_err) = test_loss(test.targets(), &means, &sds)?;
            Ok(SplitResult {
                log_z: blr.log_evidence(),
                log_z_err: 0.0,
                test_loss: loss,
                test_loss_err: loss_err,
            })
        })
        .collect()
}

pub fn analytic_evidence(data: &Dataset) -> Outcome {
    timed(1, "analytic linear-regression evidence", || {
        let agg = aggregate_splits(&analytic_splits(data)?)?;
        Ok((
            (-297.5..=-291.0).contains(&agg.log_z),
            format!(
                "mean log Z = {:.2} over {N_SPLITS} splits, window [-297.5, -291.0]",
                agg.log_z
            ),
        ))
    })
}

pub fn analytic_loss(data: &Dataset) -> Outcome {
    timed(2, "analytic linear-regression test loss", || {
        let agg = aggregate_splits(&analytic_splits(data)?)?;
        Ok((
            (0.31..=0.37).contains(&agg.test_loss),
            format!(
                "mean test loss = {:.4} +- {:.4} over {N_SPLITS} splits, window [0.31, 0.37]",
                agg.test_loss,
                agg.test_loss_sem.unwrap_or(f64::NAN)
            ),
        ))
    })
}

pub fn sampler_vs_oracle(data: &Dataset, n_live: usize) -> Outcome {
    timed(3, "sampler against closed-form evidence", || {
        let (train, _) = split_pair(data, 0)?;
        let exact = AnalyticBlr::fit(&train)?.log_evidence();
        let problem = BnnProblem::new(parse_name("br")?, train)?;
        let cfg = SamplerConfig {
            n_live,
            seed: MASTER_SEED,
            ..SamplerConfig::default()
        };
        let r = run(&problem, &cfg)?;
        let gap = (r.log_z - exact).abs();
        Ok((
            r.converged && gap <= 3.0 * r.log_z_err,
            format!(
                "log Z = {:.3} +- {:.3}, closed form {:.3}, |diff| = {:.3}",
                r.log_z, r.log_z_err, exact, gap
            ),
        ))
    })
}

/// Straight-line fit `y = w x + b` with unit Gaussian priors on `(w, b)`,
/// used as a two-parameter problem that quadrature can integrate.
#[derive(Debug, Clone)]
pub struct LineToy {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub noise: f64,
}

impl LineToy {
    pub fn standard() -> Self {
        Self {
            xs: vec![-1.0, -0.3, 0.4, 1.2, 2.0],
            ys: vec![-0.9, -0.1, 0.5, 1.3, 2.2],
            noise: 0.5,
        }
    }

    pub fn log_like_unit(&self, u: &[f64]) -> f64 {
        self.log_likelihood(&self.physical(u))
    }
}

impl Problem for LineToy {
    fn dim(&self) -> usize {
        2
    }

    fn physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .map(|v| gaussian_quantile(v.clamp(1e-300, 1.0 - f64::EPSILON / 2.0), 0.0, 1.0).expect("clamped"))
            .collect()
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let s = self.noise;
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| {
                let r = (y - theta[0] * x - theta[1]) / s;
                -0.5 * r * r - s.ln() - 0.5 * LN_2PI
            })
            .sum()
    }
}

pub fn quadrature_equivalence() -> Outcome {
    timed(4, "two-parameter sampler against grid quadrature", || {
        let toy = LineToy::standard();
        let grid = grid_log_evidence(|u| toy.log_like_unit(u), 2, 2000)?;
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for seed in 0..5 {
            let cfg = SamplerConfig {
                n_live: 200,
                seed,
                ..SamplerConfig::default()
            };
            let r = run(&toy, &cfg)?;
            let z = (r.log_z - grid).abs() / r.log_z_err;
            worst = worst.max(z);
            ok &= r.converged && z <= 3.0;
        }
        Ok((
            ok,
            format!("grid log Z = {grid:.4}, worst deviation {worst:.2} sigma over 5 seeds"),
        ))
    })
}

struct Flat {
    dim: usize,
    value: f64,
}

impl Problem for Flat {
    fn dim(&self) -> usize {
        self.dim
    }
    fn physical(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn log_likelihood(&self, _: &[f64]) -> f64 {
        self.value
    }
}

pub fn constant_likelihood() -> Outcome {
    timed(5, "constant likelihood", || {
        let c = -3.7;
        let mut parts = Vec::new();
        let mut ok = true;
        for dim in [2, 20] {
            let cfg = SamplerConfig {
                n_live: 100,
                seed: MASTER_SEED,
                ..SamplerConfig::default()
            };
            let r = run(&Flat { dim, value: c }, &cfg)?;
            ok &= (r.log_z - c).abs() <= 1e-3;
            parts.push(format!("D={dim}: {:.6}", r.log_z));
        }
        Ok((ok, format!("c = {c}; {}", parts.join(", "))))
    })
}

/// Dimensionality column of the published results table.
pub const TABLE_DIMS: [(&str, usize); 49] = [
    ("br", 14),
    ("sh sv", 16),
    ("lh sv", 17),
    ("ih sv", 28),
    ("(2)", 31),
    ("r (2)", 31),
    ("sh sv (2)", 33),
    ("lh sv (2)", 36),
    ("ih sv (2)", 49),
    ("(4)", 61),
    ("r (4)", 61),
    ("sh sv (4)", 63),
    ("lh sv (4)", 66),
    ("ih sv (4)", 81),
    ("(8)", 121),
    ("r (8)", 121),
    ("sh sv (8)", 123),
    ("lh sv (8)", 126),
    ("ih sv (8)", 145),
    ("(2, 2)", 37),
    ("r (2, 2)", 37),
    ("sh sv (2, 2)", 39),
    ("lh sv (2, 2)", 44),
    ("ih sv (2, 2)", 58),
    ("(4, 4)", 81),
    ("r (4, 4)", 81),
    ("sh sv (4, 4)", 83),
    ("lh sv (4, 4)", 88),
    ("ih sv (4, 4)", 106),
    ("(2, 2, 2)", 43),
    ("r (2, 2, 2)", 43),
    ("sh sv (2, 2, 2)", 45),
    ("lh sv (2, 2, 2)", 52),
    ("ih sv (2, 2, 2)", 67),
    ("(4, 4, 4)", 101),
    ("r (4, 4, 4)", 101),
    ("sh sv (4, 4, 4)", 103),
    ("lh sv (4, 4, 4)", 110),
    ("ih sv (4, 4, 4)", 131),
    ("(2, 2, 2, 2)", 49),
    ("r (2, 2, 2, 2)", 49),
    ("sh sv (2, 2, 2, 2)", 51),
    ("lh sv (2, 2, 2, 2)", 60),
    ("ih sv (2, 2, 2, 2)", 76),
    ("(4, 4, 4, 4)", 121),
    ("r (4, 4, 4, 4)", 121),
    ("sh sv (4, 4, 4, 4)", 123),
    ("lh sv (4, 4, 4, 4)", 132),
    ("ih sv (4, 4, 4, 4)", 156),
];

/// The zero-hidden-layer input-size row: the table lists 28, the
/// parameter count gives 29.
pub const IH_SV_DIM: usize = 29;

pub fn dimensionality_table() -> Outcome {
    timed(6, "model dimensionality", || {
        let grid = model_grid();
        let mut mismatches = Vec::new();
        for (i, (name, dim)) in TABLE_DIMS.iter().enumerate() {
            let spec = parse_name(name)?;
            let expected = if *name == "ih sv" { IH_SV_DIM } else { *dim };
            if spec.total_dim() != expected || grid[i] != spec {
                mismatches.push(format!("{name}: {}", spec.total_dim()));
            }
        }
        let detail = if mismatches.is_empty() {
            format!("{} rows match (ih sv = {IH_SV_DIM})", TABLE_DIMS.len())
        } else {
            format!("mismatched: {}", mismatches.join("; "))
        };
        Ok((mismatches.is_empty() && grid.len() == TABLE_DIMS.len(), detail))
    })
}

pub fn ensemble_arithmetic() -> Outcome {
    timed(7, "combined evidence", || {
        let z = combined_evidence(&[-141.35, -121.86, -108.84], None)?;
        Ok((
            (z + 109.94).abs() <= 0.01,
            format!("log Z = {z:.4}, expected -109.94 +- 0.01"),
        ))
    })
}

pub fn evidence_gap(data: &Dataset, n_live: usize) -> Outcome {
    timed(8, "hierarchical prior evidence gap", || {
        let (train, _) = split_pair(data, 0)?;
        let cfg = SamplerConfig {
            n_live,
            seed: MASTER_SEED,
            ..SamplerConfig::default()
        };
        let hier = BnnProblem::new(parse_name("sh sv (2)")?, train.clone())?;
        let fixed = BnnProblem::new(parse_name("(2)")?, train)?;
        let (a, b) = std::thread::scope(|s| {
            let a = s.spawn(|| run(&hier, &cfg));
            let b = s.spawn(|| run(&fixed, &cfg));
            (a.join().expect("sampler thread"), b.join().expect("sampler thread"))
        });
        let (a, b) = (a?, b?);
        let gap = a.log_z - b.log_z;
        Ok((
            a.converged && b.converged && gap > 80.0,
            format!(
                "sh sv (2) {:.2} +- {:.2}, (2) {:.2} +- {:.2}, gap {:.1} nats (needs > 80)",
                a.log_z, a.log_z_err, b.log_z, b.log_z_err, gap
            ),
        ))
    })
}

/// Largest gap between the empirical CDF of `xs` and `cdf`.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn identifiability_law() -> Outcome {
    timed(9, "ordered-uniform marginals", || {
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
        let mut worst: f64 = 0.0;
        for k in [2usize, 3, 5] {
            let mut cols = vec![Vec::with_capacity(draws); k];
            for _ in 0..draws {
                let u: Vec<f64> = (0..k).map(|_| rng.random()).collect();
                for (c, t) in cols.iter_mut().zip(forced_identifiability(&u)) {
                    c.push(t);
                }
            }
            for (i, c) in cols.iter_mut().enumerate() {
                // The i-th smallest of k uniforms is Beta(i, k - i + 1).
                let (a, b) = ((i + 1) as f64, (k - i) as f64);
                worst = worst.max(ks_statistic(c, |x| beta_reg(a, b, x.clamp(0.0, 1.0))));
            }
        }
        Ok((
            worst < 0.01,
            format!("largest KS distance {worst:.5} at 1e5 draws (needs < 0.01)"),
        ))
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn quantile_round_trip() -> Outcome {
    timed(10, "quantile round trips", || {
        let mut worst_normal: f64 = 0.0;
        let mut worst_gamma: f64 = 0.0;
        let mut worst_exp: f64 = 0.0;
        for j in 1..1000 {
            let u = j as f64 / 1000.0;
            worst_normal = worst_normal.max((normal_cdf(gaussian_quantile(u, 0.0, 1.0)?) - u).abs());
            for (a, b) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.25), (1.0, 1.0 / 13.0)] {
                let x = gamma_quantile(u, a, b)?;
                worst_gamma = worst_gamma.max((gamma_lr(a, b * x) - u).abs());
            }
            worst_exp = worst_exp.max((gamma_quantile(u, 1.0, 1.0)? + (-u).ln_1p()).abs());
        }
        Ok((
            worst_normal < 1e-10 && worst_gamma < 1e-10 && worst_exp < 1e-12,
            format!("normal {worst_normal:.1e}, gamma {worst_gamma:.1e}, Gamma(1,1) vs -ln(1-u) {worst_exp:.1e}"),
        ))
    })
}

pub fn determinism(data: &Dataset) -> Outcome {
    timed(11, "byte-identical reruns", || {
        let (train, _) = split_pair(data, 0)?;
        let problem = BnnProblem::new(parse_name("sh sv")?, train.subset(&(0..30).collect::<Vec<_>>()))?;
        let cfg = SamplerConfig {
            n_live: 25,
            seed: 17,
            ..SamplerConfig::default()
        };
        let a = dead_points_csv(&run(&problem, &cfg)?);
        let b = dead_points_csv(&run(&problem, &cfg)?);
        Ok((a == b, format!("{} bytes, identical: {}", a.len(), a == b)))
    })
}

pub fn predictive_identities() -> Outcome {
    timed(12, "predictive and mixture identities", || {
        let spec = parse_name_with_inputs("br", 1)?;
        let models = [spec.clone(), spec];
        let x = Dataset::from_parts(vec![0.0, 1.5, -2.0], vec![0.0; 3], 1)?;
        let mut ok = true;

        let pair = WeightedSamples::new(vec![vec![0.0, 1.0], vec![0.0, 3.0]], vec![0.5, 0.5])?;
        let (m, s) = predictive(&pair, &models[..1], &x)?;
        ok &= (m[0] - 2.0).abs() <= 1e-12 && (s[0] - 1.0).abs() <= 1e-12;

        let skew = WeightedSamples::new(vec![vec![0.0, 0.0], vec![0.0, 4.0]], vec![0.75, 0.25])?;
        let (m, s) = predictive(&skew, &models[..1], &x)?;
        ok &= (m[0] - 1.0).abs() <= 1e-12 && (s[0] - 3f64.sqrt()).abs() <= 1e-12;

        let single = WeightedSamples::new(vec![vec![0.4, -0.1]], vec![1.0])?;
        let (_, s) = predictive(&single, &models[..1], &x)?;
        ok &= s.iter().all(|v| *v == 0.0);

        let b = WeightedSamples::new(
            vec![vec![1.0, 0.2], vec![-0.5, 0.0], vec![0.3, 0.3]],
            vec![0.2, 0.5, 0.3],
        )?;
        let post = model_posterior(&["a".into(), "b".into()], &[-2.0, -2.4], None)?;
        let (ma, sa) = predictive(&pair, &models[..1], &x)?;
        let (mb, sb) = predictive(&b, &models[..1], &x)?;
        let joint = combined_samples(&[pair, b], &post)?;
        let (mj, sj) = predictive(&joint, &models, &x)?;
        let (mm, sm) = combine_predictive(&post.post, &[ma.clone(), mb.clone()], &[sa, sb])?;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let linear = post.post[0] * ma[i] + post.post[1] * mb[i];
            worst = worst
                .max((mj[i] - linear).abs())
                .max((mm[i] - linear).abs())
                .max((sm[i] - sj[i]).abs());
        }
        ok &= worst <= 1e-12;
        Ok((ok, format!("unit cases hold; mixture linearity residual {worst:.1e}")))
    })
}

/// Names of the checks in order, for listings.
pub fn titles() -> Vec<(u8, &'static str)> {
    vec![
        (1, "analytic linear-regression evidence"),
        (2, "analytic linear-regression test loss"),
        (3, "sampler against closed-form evidence"),
        (4, "two-parameter sampler against grid quadrature"),
        (5, "constant likelihood"),
        (6, "model dimensionality"),
        (7, "combined evidence"),
        (8, "hierarchical prior evidence gap"),
        (9, "ordered-uniform marginals"),
        (10, "quantile round trips"),
        (11, "byte-identical reruns"),
        (12, "predictive and mixture identities"),
    ]
}

/// Runs every check. The evidence-gap check is slow and runs only with
/// `include_slow`.
pub fn run_all(data: &Dataset, include_slow: bool) -> Vec<Outcome> {
    let mut out = vec![
        analytic_evidence(data),
        analytic_loss(data),
        sampler_vs_oracle(data, 500),
        quadrature_equivalence(),
        constant_likelihood(),
        dimensionality_table(),
        ensemble_arithmetic(),
    ];
    if include_slow {
        out.push(evidence_gap(data, 200));
    }
    out.extend([
        identifiability_law(),
        quantile_round_trip(),
        determinism(data),
        predictive_identities(),
    ]);
    out
}
