mod common;

use common::*;
use demogp::gp::{
    self, log_marginal_likelihood, nll_gradient, normal_quantile_for, predict, predict_with, GPModel, NoiseTerm,
    TrainingSet,
};
use demogp::kernels::{gram_gradients, gram_matrix, KernelFamily, KernelSpec};
use demogp::spline::{build_knots, fit_ols, KnotVector, MeanModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat_mean(times: &[f64]) -> MeanModel {
    let knots = KnotVector::new(vec![times[0], times[times.len() - 1]]).unwrap();
    MeanModel::from_coefficients(knots, vec![0.0, 0.0]).unwrap()
}

#[test]
fn kernels_match_textbook_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for family in KernelFamily::ALL {
        for _ in 0..20 {
            let k = random_kernel(&mut rng, family);
            let times = random_times(&mut rng, 6);
            let got = gram_matrix(&k, &times, 0.0);
            let want = naive_gram(&k, &times, 0.0);
            assert!((got - want).amax() < 1e-13, "{family}");
        }
    }
}

#[test]
fn gram_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    for family in KernelFamily::ALL {
        for _ in 0..5 {
            let k = random_kernel(&mut rng, family);
            let times = random_times(&mut rng, 5);
            let grads = gram_gradients(&k, &times);
            let theta = k.log_params();
            for (p, g) in grads.iter().enumerate() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[p] += h;
                dn[p] -= h;
                let fd = (naive_gram(&k.with_log_params(&up).unwrap(), &times, 0.0)
                    - naive_gram(&k.with_log_params(&dn).unwrap(), &times, 0.0))
                    / (2.0 * h);
                assert!((g - &fd).amax() < 1e-6 * (1.0 + fd.amax()), "{family} param {p}");
            }
        }
    }
}

#[test]
fn likelihood_and_prediction_match_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for family in KernelFamily::ALL {
        for _ in 0..10 {
            let n = rng.random_range(2..=8);
            let k = random_kernel(&mut rng, family);
            let times = random_times(&mut rng, n);
            let noise = k.variance() * rng.random_range(0.05..0.5);
            let y = sample_gp(&mut rng, &k, &times, noise);
            let train = TrainingSet::new(times.clone(), y.clone()).unwrap();
            let mean = flat_mean(&times);

            let ll = log_marginal_likelihood(&train, &mean, &k, noise).unwrap();
            let want = naive_log_likelihood(&k, &times, &y, noise);
            assert!(close(ll, want, 1e-8, 1.0), "{family}: {ll} vs {want}");

            let model = GPModel::new(train, mean, k.clone(), noise).unwrap();
            assert!(close(model.log_likelihood(), want, 1e-8, 1.0));
            let test: Vec<f64> = vec![times[n - 1] + 1.0, times[n - 1] + 3.5, times[0]];
            let pred = predict(&model, &test).unwrap();
            let (m, c) = naive_predict(&k, &times, &y, noise, &test);
            let scale = c.amax();
            for i in 0..test.len() {
                assert!(close(pred.mean[i], m[i], 1e-8, 1.0));
                for j in 0..test.len() {
                    assert!(close(pred.covariance[(i, j)], c[(i, j)], 1e-8, scale));
                }
            }
        }
    }
}

#[test]
fn doubled_noise_option_adds_one_more_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let k = random_kernel(&mut rng, KernelFamily::Matern52);
    let times = random_times(&mut rng, 6);
    let y = sample_gp(&mut rng, &k, &times, 0.1);
    let model = GPModel::new(TrainingSet::new(times.clone(), y).unwrap(), flat_mean(&times), k, 0.1).unwrap();
    let test = [times[5] + 2.0];
    let once = predict_with(&model, &test, NoiseTerm::Once).unwrap();
    let twice = predict_with(&model, &test, NoiseTerm::Twice).unwrap();
    assert!((twice.variance[0] - once.variance[0] - 0.1).abs() < 1e-12);
    assert_eq!(once.mean, twice.mean);
}

#[test]
fn likelihood_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let h = 1e-6;
    for family in KernelFamily::ALL {
        for _ in 0..10 {
            let n = rng.random_range(4..=12);
            let k = random_kernel(&mut rng, family);
            let times = random_times(&mut rng, n);
            let noise = k.variance() * rng.random_range(0.05..0.5);
            let y = sample_gp(&mut rng, &k, &times, noise);
            let train = TrainingSet::new(times.clone(), y).unwrap();
            let mean = flat_mean(&times);
            let grad = nll_gradient(&train, &mean, &k, noise).unwrap();
            let theta = k.log_params();
            let nll = |kk: &KernelSpec, s2: f64| -log_marginal_likelihood(&train, &mean, kk, s2).unwrap();
            for p in 0..theta.len() {
                let (mut up, mut dn) = (theta.clone(), theta.clone());
                up[p] += h;
                dn[p] -= h;
                let fd = (nll(&k.with_log_params(&up).unwrap(), noise) - nll(&k.with_log_params(&dn).unwrap(), noise))
                    / (2.0 * h);
                assert!(close(grad[p], fd, 1e-5, 1e-2), "{family} p{p}: {} vs {fd}", grad[p]);
            }
            let fd = (nll(&k, noise * h.exp()) - nll(&k, noise * (-h).exp())) / (2.0 * h);
            assert!(close(grad[theta.len()], fd, 1e-5, 1e-2), "{family} noise");
        }
    }
}

#[test]
fn quantile_matches_simpson_bisection() {
    for alpha in [0.01, 0.05, 0.1, 0.2, 0.32, 0.5, 0.9] {
        let z = normal_quantile_for(alpha).unwrap();
        let want = bisection_quantile(alpha);
        assert!((z - want).abs() < 1e-7, "alpha {alpha}: {z} vs {want}");
    }
    assert!((bisection_quantile(0.32) - 0.99446).abs() < 1e-5);
}

#[test]
fn spline_fit_matches_constrained_truncated_power_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for k in 2..=6 {
        for _ in 0..5 {
            let n = rng.random_range(k + 2..40);
            let times = random_times(&mut rng, n);
            let values: Vec<f64> = times
                .iter()
                .map(|t| (t / 7.0).sin() + 0.01 * (t - 1950.0) + rng.random_range(-0.1..0.1))
                .collect();
            let knots = build_knots(&times, k).unwrap();
            let model = fit_ols(&times, &values, &knots).unwrap();
            let oracle = natural_spline_oracle(&times, &values, knots.as_slice());
            let last = times[n - 1];
            for t in times.iter().copied().chain([times[0] - 3.0, last + 1.0, last + 10.0, last + 25.0]) {
                let (a, b) = (model.eval(t), oracle(t));
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "K={k} t={t}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn fitted_model_beats_generating_hyperparameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let truth = KernelSpec::spectral_mixture(&[(0.02, 0.1, 0.02), (0.01, 0.3, 0.05)]);
    let times: Vec<f64> = (1950..2010).map(f64::from).collect();
    let noise = 0.002;
    let y: Vec<f64> = sample_gp(&mut rng, &truth, &times, noise)
        .iter()
        .zip(&times)
        .map(|(e, t)| -3.0 - 0.02 * (t - 1950.0) + e)
        .collect();
    let train = TrainingSet::new(times, y).unwrap();
    let model = gp::fit(&train, &gp::FitConfig::default()).unwrap();
    let at_truth = log_marginal_likelihood(&train, model.mean(), &truth, noise).unwrap();
    assert!(model.log_likelihood() >= at_truth - 1e-6);
}
