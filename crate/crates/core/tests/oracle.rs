use std::path::PathBuf;

use evidencenet::data::{load_housing, make_splits, Dataset};
use evidencenet::likelihood::BnnProblem;
use evidencenet::model::parse_name;
use evidencenet::oracle::{blr_log_evidence_dense, grid_log_evidence, AnalyticBlr};
use evidencenet::posterior::predictive;
use evidencenet::sampler::{posterior_samples, run, SamplerConfig};
use evidencenet::transform::gaussian_quantile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let targets: Vec<f64> = (0..n)
        .map(|i| features[i * d..(i + 1) * d].iter().sum::<f64>() * 0.3 + rng.random_range(-1.0..1.0))
        .collect();
    Dataset::from_parts(features, targets, d).unwrap()
}

#[test]
fn two_point_evidence_matches_grid() {
    let data = Dataset::from_parts(vec![-0.7, 1.2], vec![0.4, 1.9], 1).unwrap();
    let exact = AnalyticBlr::fit(&data).unwrap().log_evidence();
    let log_like = |u: &[f64]| {
        let w = gaussian_quantile(u[0], 0.0, 1.0).unwrap();
        let b = gaussian_quantile(u[1], 0.0, 1.0).unwrap();
        (0..2)
            .map(|i| {
                let r = data.targets()[i] - (w * data.row(i)[0] + b);
                -0.5 * (r * r + (2.0 * std::f64::consts::PI).ln())
            })
            .sum()
    };
    let grid = grid_log_evidence(log_like, 2, 1000).unwrap();
    assert!((grid - exact).abs() < 1e-3, "grid {grid}, closed form {exact}");
}

#[test]
fn dense_and_factorized_evidence_agree() {
    for seed in 0..5 {
        let data = synthetic(40, 3, seed);
        let a = AnalyticBlr::fit(&data).unwrap().log_evidence();
        let b = blr_log_evidence_dense(&data).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn row_order_does_not_matter() {
    let data = synthetic(30, 4, 7);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.reverse();
    idx.swap(3, 17);
    let a = AnalyticBlr::fit(&data).unwrap();
    let b = AnalyticBlr::fit(&data.subset(&idx)).unwrap();
    assert!((a.log_evidence() - b.log_evidence()).abs() < 1e-10);
    for (x, y) in a.posterior_mean().iter().zip(b.posterior_mean()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn sampled_linear_predictions_match_closed_form() {
    let path = std::env::var_os("EVIDENCENET_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/housing.data"));
    let data = load_housing(&path).unwrap();
    let plan = &make_splits(data.len(), 0, 1).unwrap()[0];
    let train = data.subset(&plan.train_idx[..60]);
    let test = data.subset(&plan.test_idx[..20]);

    let blr = AnalyticBlr::fit(&train).unwrap();
    let (exact_means, exact_sds) = blr.predict(&test).unwrap();

    let spec = parse_name("br").unwrap();
    let problem = BnnProblem::new(spec.clone(), train).unwrap();
    let r = run(
        &problem,
        &SamplerConfig {
            n_live: 150,
            seed: 4,
            ..SamplerConfig::default()
        },
    )
    .unwrap();
    let samples = posterior_samples(&r);
    let ess = samples.effective_sample_size();
    let (means, _) = predictive(&samples, &[spec], &test).unwrap();
    for i in 0..test.len() {
        let se = exact_sds[i] / ess.sqrt();
        let gap = (means[i] - exact_means[i]).abs();
        assert!(
            gap < 4.0 * se,
            "row {i}: sampled {} vs {} (se {se}, ess {ess:.0})",
            means[i],
            exact_means[i]
        );
    }
}
