mod common;

use common::*;
use demogp::data_io::{log_transform, parse_rates, write_canonical_csv, ColumnSelector, InputFormat};
use demogp::demography::{DemographicSurface, SurfaceKind, ValueScale};
use demogp::evaluation::{rmse_curve, rolling_window_evaluate, Forecaster, ModelError};
use demogp::gp::{predict, GPModel, TrainingSet};
use demogp::kernels::{gram_matrix, KernelFamily};
use demogp::lee_carter::fit_lee_carter;
use demogp::spline::{build_knots, fit_ols, KnotVector, MeanModel};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop::sample::select(KernelFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn gram_is_symmetric_psd(fam in family(), seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(&mut rng, fam);
        let times = random_times(&mut rng, n);
        let g = gram_matrix(&k, &times, 0.0);
        prop_assert_eq!(&g, &g.transpose());
        let min_eig = g.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-10 * g.trace().max(1e-300), "min eigenvalue {}", min_eig);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn spline_is_c2_at_interior_knots(seed in any::<u64>(), k in 3usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..40).map(|i| 1950.0 + f64::from(i)).collect();
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let knots = build_knots(&times, k).unwrap();
        let m = fit_ols(&times, &values, &knots).unwrap();
        let h = 1e-3;
        for &xi in &knots.as_slice()[1..k - 1] {
            // One-sided derivatives from polynomial pieces on each side.
            let left = |t: f64| m.eval(t);
            let d1l = (left(xi) - left(xi - h)) / h;
            let d1r = (left(xi + h) - left(xi)) / h;
            let d2l = (left(xi) - 2.0 * left(xi - h) + left(xi - 2.0 * h)) / (h * h);
            let d2r = (left(xi + 2.0 * h) - 2.0 * left(xi + h) + left(xi)) / (h * h);
            let scale = 1.0 + m.coefficients().iter().map(|c| c.abs()).fold(0.0, f64::max);
            prop_assert!((m.eval(xi + 1e-9) - m.eval(xi - 1e-9)).abs() < 1e-8 * scale);
            prop_assert!((d1l - d1r).abs() < 1e-2 * scale);
            prop_assert!((d2l - d2r).abs() < 5e-2 * scale, "second derivative jump {} vs {}", d2l, d2r);
        }
    }

    #[test]
    fn spline_fit_is_idempotent(seed in any::<u64>(), k in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = random_times(&mut rng, 30);
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let knots = build_knots(&times, k).unwrap();
        let first = fit_ols(&times, &values, &knots).unwrap();
        let again = fit_ols(&times, &first.eval_many(&times), &knots).unwrap();
        for t in &times {
            prop_assert!((first.eval(*t) - again.eval(*t)).abs() < 1e-9);
        }
    }

    #[test]
    fn spline_fit_is_translation_invariant(seed in any::<u64>(), shift in -500.0f64..500.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = random_times(&mut rng, 25);
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let moved: Vec<f64> = times.iter().map(|t| t + shift).collect();
        let a = fit_ols(&times, &values, &build_knots(&times, 4).unwrap()).unwrap();
        let b = fit_ols(&moved, &values, &build_knots(&moved, 4).unwrap()).unwrap();
        for (t, s) in times.iter().zip(&moved) {
            prop_assert!((a.eval(*t) - b.eval(*s)).abs() < 1e-8);
            prop_assert!((a.eval(*t + 7.0) - b.eval(*s + 7.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn spline_tail_is_affine(seed in any::<u64>(), k in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = random_times(&mut rng, 30);
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = fit_ols(&times, &values, &build_knots(&times, k).unwrap()).unwrap();
        let end = m.knots().last();
        for step in 1..30 {
            let t = end + f64::from(step);
            let d2 = m.eval(t + 1.0) - 2.0 * m.eval(t) + m.eval(t - 1.0);
            prop_assert!(d2.abs() <= 1e-9);
        }
    }

    #[test]
    fn extra_observation_never_increases_variance(fam in family(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(&mut rng, fam);
        let times = random_times(&mut rng, 7);
        let noise = 0.1 * k.variance();
        let y = sample_gp(&mut rng, &k, &times, noise);
        let mean = |ts: &[f64]| {
            MeanModel::from_coefficients(KnotVector::new(vec![ts[0], ts[ts.len() - 1]]).unwrap(), vec![0.0, 0.0]).unwrap()
        };
        let test = [times[6] + 2.0, times[3] + 0.5];
        let small = GPModel::new(TrainingSet::new(times[..6].to_vec(), y[..6].to_vec()).unwrap(), mean(&times[..6]), k.clone(), noise).unwrap();
        let full = GPModel::new(TrainingSet::new(times.clone(), y.clone()).unwrap(), mean(&times), k, noise).unwrap();
        let (a, b) = (predict(&small, &test).unwrap(), predict(&full, &test).unwrap());
        for i in 0..test.len() {
            prop_assert!(b.variance[i] <= a.variance[i] * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn log_transform_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (na, ny) = (rng.random_range(1..8), rng.random_range(1..8));
        let values = DMatrix::from_fn(na, ny, |_, _| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(1e-6..2.0) });
        let missing = DMatrix::from_fn(na, ny, |_, _| rng.random_bool(0.1));
        let s = DemographicSurface::new(
            SurfaceKind::Mortality, ValueScale::Rate,
            (0..na as u32).collect(), (2000..2000 + ny as i32).collect(), values, missing,
        ).unwrap();
        let l = log_transform(&s);
        for &a in s.ages() {
            for &y in s.years() {
                match s.get(a, y) {
                    Some(v) if v > 0.0 => {
                        let back = l.get(a, y).unwrap().exp();
                        prop_assert!((back - v).abs() <= 1e-12 * v.max(1.0));
                    }
                    _ => prop_assert_eq!(l.get(a, y), None),
                }
            }
        }
    }

    #[test]
    fn canonical_csv_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (na, ny) = (rng.random_range(1..6), rng.random_range(1..6));
        let values = DMatrix::from_fn(na, ny, |_, _| rng.random_range(0.0..1.0));
        let mut missing = DMatrix::from_fn(na, ny, |_, _| rng.random_bool(0.2));
        // Keep the bounding rectangle observed so densification reproduces it.
        missing[(0, 0)] = false;
        missing[(na - 1, ny - 1)] = false;
        let a0 = rng.random_range(0..50u32);
        let s = DemographicSurface::new(
            SurfaceKind::Mortality, ValueScale::Rate,
            (a0..a0 + na as u32).collect(), (1990..1990 + ny as i32).collect(), values, missing,
        ).unwrap();
        let mut buf = Vec::new();
        write_canonical_csv(&s, &mut buf).unwrap();
        let back = parse_rates(buf.as_slice(), InputFormat::CanonicalCsv, &ColumnSelector::Auto, SurfaceKind::Mortality).unwrap();
        prop_assert_eq!(back.missing(), s.missing());
        prop_assert_eq!(back.ages(), s.ages());
        prop_assert_eq!(back.years(), s.years());
        for &a in s.ages() {
            for &y in s.years() {
                prop_assert_eq!(back.get(a, y), s.get(a, y));
            }
        }
    }

    #[test]
    fn rmse_matches_direct_computation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..31).map(|_| rng.random_range(-6.0..0.0)).collect();
        let b: Vec<f64> = (0..31).map(|_| rng.random_range(-6.0..0.0)).collect();
        let mut sq = 0.0;
        for i in 0..31 {
            sq += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let direct = (sq / 31.0).sqrt();
        prop_assert!((rmse_curve(&a, &b).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn lee_carter_rescaling_gives_same_normalized_fit(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..6).map(|_| rng.random_range(-6.0..-1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.5)).collect();
        let k: Vec<f64> = (0..12).map(|t| -2.0 * f64::from(t) + rng.random_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = (0..72).map(|_| rng.random_range(-0.01..0.01)).collect();
        let surface = |scale: f64| log_surface(SurfaceKind::Fertility, (0..6).collect(), (2000..2012).collect(), |x, y| {
            let (i, j) = (x as usize, (y - 2000) as usize);
            a[i] + (b[i] * scale) * (k[j] / scale) + noise[i * 12 + j]
        });
        let (m1, m2) = (fit_lee_carter(&surface(1.0)).unwrap(), fit_lee_carter(&surface(c)).unwrap());
        for (x, y) in m1.b.iter().zip(&m2.b) {
            prop_assert!((x - y).abs() < 1e-8);
        }
        for (x, y) in m1.k.iter().zip(&m2.k) {
            prop_assert!((x - y).abs() < 1e-7 * (1.0 + x.abs()));
        }
        prop_assert!((m1.b.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(m1.k.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn lee_carter_is_the_best_rank_one_fit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = log_surface(SurfaceKind::Fertility, (0..5).collect(), (2000..2010).collect(), |_, _| rng.random_range(-5.0..-1.0));
        let m = fit_lee_carter(&s).unwrap();
        let resid = |fitted: &DMatrix<f64>| (s.values() - fitted).norm_squared();
        let best = resid(&m.fitted());
        for _ in 0..100 {
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let cand = DMatrix::from_fn(5, 10, |i, j| m.a[i] + b[i] * k[j]);
            prop_assert!(best <= resid(&cand) + 1e-12);
        }
    }
}

struct Noisy(u64);

impl Forecaster for Noisy {
    fn id(&self) -> &str {
        "noisy"
    }

    fn forecast(&self, train: &DemographicSurface, targets: &[i32]) -> Result<Vec<Vec<f64>>, ModelError> {
        // Deterministic pseudo-forecast depending on the training end.
        let mut rng = ChaCha8Rng::seed_from_u64(self.0 ^ *train.years().last().unwrap() as u64);
        Ok(targets
            .iter()
            .map(|_| train.ages().iter().map(|_| rng.random_range(-5.0..-1.0)).collect())
            .collect())
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn pooled_rmse_identity(seed in any::<u64>(), windows in 1usize..6, h in 1u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = log_surface(SurfaceKind::Fertility, (15..20).collect(), (1950..1975).collect(), |_, _| rng.random_range(-5.0..-1.0));
        let model = Noisy(seed);
        let report = rolling_window_evaluate("p", &s, &[&model], &[h], windows, 1960).unwrap();
        let row = &report.rows[0];
        let mut sse = 0.0;
        for w in 0..windows {
            let end = 1960 + w as i32;
            let f = model.forecast(&s.years_through(end).unwrap(), &[end + h as i32]).unwrap();
            let actual: Vec<f64> = s.column(end + h as i32).unwrap().into_iter().map(Option::unwrap).collect();
            sse += f[0].iter().zip(&actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>();
        }
        let lhs = row.rmse.powi(2) * (windows * s.ages().len()) as f64;
        prop_assert!((lhs - sse).abs() <= 1e-12 * sse);
        prop_assert!(row.rmse >= 0.0);
    }
}
