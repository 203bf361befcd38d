//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use demogp::demography::{DemographicSurface, SurfaceKind, ValueScale};
use demogp::kernels::{KernelFamily, KernelSpec, SpectralComponent};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Covariance written out from the textbook formulas, independent of the
/// library's kernel code.
pub fn naive_kernel(spec: &KernelSpec, t1: f64, t2: f64) -> f64 {
    let tau = t1 - t2;
    let r = tau.abs();
    match spec {
        KernelSpec::SquaredExponential { amplitude, length_scale } => {
            amplitude.powi(2) * (-(tau * tau) / (2.0 * length_scale.powi(2))).exp()
        }
        KernelSpec::Periodic { amplitude, length_scale, period } => {
            let s = (std::f64::consts::PI * r / period).sin();
            amplitude.powi(2) * (-2.0 * s * s / length_scale.powi(2)).exp()
        }
        KernelSpec::RationalQuadratic { amplitude, length_scale, shape } => {
            amplitude.powi(2) * (1.0 + tau * tau / (2.0 * shape * length_scale.powi(2))).powf(-shape)
        }
        KernelSpec::Matern32 { amplitude, length_scale } => {
            let a = 3f64.sqrt() * r / length_scale;
            amplitude.powi(2) * (1.0 + a) * (-a).exp()
        }
        KernelSpec::Matern52 { amplitude, length_scale } => {
            let a = 5f64.sqrt() * r / length_scale;
            amplitude.powi(2) * (1.0 + a + a * a / 3.0) * (-a).exp()
        }
        KernelSpec::SpectralMixture { components } => components
            .iter()
            .map(|c| {
                let two_pi = 2.0 * std::f64::consts::PI;
                c.weight * (-0.5 * (two_pi * tau * c.std).powi(2)).exp() * (two_pi * tau * c.mean).cos()
            })
            .sum(),
    }
}

/// Dense Gram matrix with noise on the diagonal only.
pub fn naive_gram(spec: &KernelSpec, times: &[f64], noise: f64) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| {
        naive_kernel(spec, times[i], times[j]) + if i == j { noise } else { 0.0 }
    })
}

/// Log marginal likelihood with an explicit inverse and LU determinant.
pub fn naive_log_likelihood(spec: &KernelSpec, times: &[f64], resid: &[f64], noise: f64) -> f64 {
    let k = naive_gram(spec, times, noise);
    let r = DVector::from_column_slice(resid);
    let inv = k.clone().try_inverse().expect("invertible");
    let det = k.determinant();
    let n = times.len() as f64;
    -0.5 * det.ln() - 0.5 * r.dot(&(inv * &r)) - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Predictive mean adjustment and covariance, noise added once.
pub fn naive_predict(
    spec: &KernelSpec,
    times: &[f64],
    resid: &[f64],
    noise: f64,
    test: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let inv = naive_gram(spec, times, noise).try_inverse().expect("invertible");
    let r = DVector::from_column_slice(resid);
    let ks = DMatrix::from_fn(times.len(), test.len(), |i, j| naive_kernel(spec, times[i], test[j]));
    let kss = DMatrix::from_fn(test.len(), test.len(), |i, j| naive_kernel(spec, test[i], test[j]));
    let mean = (ks.transpose() * &inv * r).iter().copied().collect();
    let cov = kss - ks.transpose() * &inv * &ks + DMatrix::identity(test.len(), test.len()) * noise;
    (mean, cov)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Random, reasonably conditioned kernel of the given family.
pub fn random_kernel(rng: &mut ChaCha8Rng, family: KernelFamily) -> KernelSpec {
    let amplitude = log_uniform(rng, 0.1, 2.0);
    let length_scale = log_uniform(rng, 0.5, 8.0);
    match family {
        KernelFamily::SquaredExponential => KernelSpec::SquaredExponential { amplitude, length_scale },
        KernelFamily::Periodic => KernelSpec::Periodic {
            amplitude,
            length_scale: log_uniform(rng, 0.5, 2.0),
            period: log_uniform(rng, 2.0, 10.0),
        },
        KernelFamily::RationalQuadratic => KernelSpec::RationalQuadratic {
            amplitude,
            length_scale,
            shape: log_uniform(rng, 0.3, 5.0),
        },
        KernelFamily::Matern32 => KernelSpec::Matern32 { amplitude, length_scale },
        KernelFamily::Matern52 => KernelSpec::Matern52 { amplitude, length_scale },
        KernelFamily::SpectralMixture => {
            let q = rng.random_range(1..=3);
            KernelSpec::SpectralMixture {
                components: (0..q)
                    .map(|_| SpectralComponent {
                        weight: log_uniform(rng, 0.05, 2.0),
                        mean: log_uniform(rng, 0.01, 0.45),
                        std: log_uniform(rng, 0.01, 0.3),
                    })
                    .collect(),
            }
        }
    }
}

/// `n` distinct sorted times on a yearly grid with random gaps.
pub fn random_times(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut t = 1950.0 + rng.random_range(0..5) as f64;
    (0..n)
        .map(|_| {
            let cur = t;
            t += rng.random_range(1..=3) as f64;
            cur
        })
        .collect()
}

pub fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draw from a zero-mean GP plus iid noise.
pub fn sample_gp(rng: &mut ChaCha8Rng, spec: &KernelSpec, times: &[f64], noise: f64) -> Vec<f64> {
    let n = times.len();
    let mut k = naive_gram(spec, times, noise);
    let jitter = 1e-10 * k.diagonal().mean();
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    let l = k.cholesky().expect("sampling covariance is PD").unpack();
    let z = DVector::from_vec(standard_normals(rng, n));
    (l * z).iter().copied().collect()
}

/// Standard normal CDF by composite Simpson integration of the density.
pub fn simpson_cdf(z: f64) -> f64 {
    let steps = 20_000;
    let h = z / steps as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

/// Two-sided quantile `z` with `P(|Z| <= z) = 1 - alpha`, by bisection.
pub fn bisection_quantile(alpha: f64) -> f64 {
    let target = 1.0 - alpha / 2.0;
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if simpson_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares natural cubic spline through an independent route: the
/// truncated power basis `1, s, (s - k_j)^3_+` with the two linear-tail
/// constraints removed by a null-space projection, solved with the SVD
/// pseudo-inverse. Returns the fitted function.
pub fn natural_spline_oracle(times: &[f64], values: &[f64], knots: &[f64]) -> impl Fn(f64) -> f64 {
    let origin = knots[0];
    let span = knots[knots.len() - 1] - origin;
    let kk: Vec<f64> = knots.iter().map(|k| (k - origin) / span).collect();
    let k = kk.len();
    let raw_row = {
        let kk = kk.clone();
        move |t: f64| -> Vec<f64> {
            let s = (t - origin) / span;
            let mut r = vec![1.0, s];
            r.extend(kk.iter().map(|kj| (s - kj).max(0.0).powi(3)));
            r
        }
    };
    // Constraints on the cubic coefficients: sum(b) = 0, sum(b k) = 0.
    let mut c = DMatrix::zeros(2, k + 2);
    for j in 0..k {
        c[(0, j + 2)] = 1.0;
        c[(1, j + 2)] = kk[j];
    }
    let svd = c.clone().svd(false, true);
    let vt = svd.v_t.expect("v requested");
    // Rows 2.. of V^T span the null space of the rank-2 constraint matrix.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
    let full = DMatrix::identity(k + 2, k + 2);
    let range = DMatrix::from_fn(k + 2, 2, |i, j| vt[(order[j], i)]);
    let projector = &full - &range * range.transpose();
    let proj_svd = projector.svd(true, false);
    let u = proj_svd.u.expect("u requested");
    let mut idx: Vec<usize> = (0..k + 2).collect();
    idx.sort_by(|a, b| proj_svd.singular_values[*b].partial_cmp(&proj_svd.singular_values[*a]).unwrap());
    let null = DMatrix::from_fn(k + 2, k, |i, j| u[(i, idx[j])]);

    let n = times.len();
    let x = DMatrix::from_fn(n, k + 2, |i, j| raw_row(times[i])[j]);
    let design = &x * &null;
    let y = DVector::from_column_slice(values);
    let pinv = design.pseudo_inverse(1e-13).expect("pseudo-inverse");
    let gamma = pinv * y;
    let coef = &null * gamma;
    move |t: f64| {
        let r = raw_row(t);
        if t <= origin + span {
            r.iter().zip(coef.iter()).map(|(a, b)| a * b).sum()
        } else {
            // Beyond the last knot the fitted cubic is linear: continue from
            // the boundary value with the boundary slope.
            let end = origin + span;
            let value: f64 = raw_row(end).iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
            let mut d = vec![0.0, 1.0 / span];
            d.extend(kk.iter().map(|kj| 3.0 * (1.0 - kj).max(0.0).powi(2) / span));
            let slope: f64 = d.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
            value + slope * (t - end)
        }
    }
}

/// Fully observed log-rate surface from a closure.
pub fn log_surface(kind: SurfaceKind, ages: Vec<u32>, years: Vec<i32>, f: impl FnMut(u32, i32) -> f64) -> DemographicSurface {
    DemographicSurface::from_fn(kind, ValueScale::LogRate, ages, years, f).expect("valid surface")
}

/// Correlation of two equal-length vectors.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Relative closeness with the scale of the comparison set as floor.
pub fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(scale)
}
