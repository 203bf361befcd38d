//! Stationary covariance functions on a one-dimensional time axis.
//!
//! Every kernel depends only on the lag `tau = t - t'`. Positive
//! hyperparameters are optimized on the log scale; [`KernelSpec::log_params`]
//! and [`KernelSpec::with_log_params`] convert between the two views and
//! [`KernelSpec::lag_gradient`] returns derivatives with respect to the log
//! parameters.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel hyperparameter: {0}")]
    InvalidParameter(String),

    #[error("unknown kernel family `{0}` (expected se, periodic, rq, matern32, matern52 or sm)")]
    UnknownFamily(String),

    #[error("expected {expected} log-parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    Periodic,
    RationalQuadratic,
    Matern32,
    Matern52,
    SpectralMixture,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 6] = [
        KernelFamily::SquaredExponential,
        KernelFamily::Periodic,
        KernelFamily::RationalQuadratic,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::SpectralMixture,
    ];

    /// Number of log-parameters; `components` only matters for the spectral mixture.
    pub fn param_count(self, components: usize) -> usize {
        match self {
            KernelFamily::SquaredExponential | KernelFamily::Matern32 | KernelFamily::Matern52 => 2,
            KernelFamily::Periodic | KernelFamily::RationalQuadratic => 3,
            KernelFamily::SpectralMixture => 3 * components,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Periodic => "periodic",
            KernelFamily::RationalQuadratic => "rq",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::SpectralMixture => "sm",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared_exponential" => Ok(KernelFamily::SquaredExponential),
            "periodic" | "per" => Ok(KernelFamily::Periodic),
            "rq" | "rational_quadratic" => Ok(KernelFamily::RationalQuadratic),
            "matern32" | "matern_32" => Ok(KernelFamily::Matern32),
            "matern52" | "matern_52" => Ok(KernelFamily::Matern52),
            "sm" | "spectral_mixture" => Ok(KernelFamily::SpectralMixture),
            other => Err(KernelError::UnknownFamily(other.to_string())),
        }
    }
}

/// One Gaussian component of the spectral density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    /// Mixture weight `w_q >= 0`.
    pub weight: f64,
    /// Spectral mean `lambda_q` in cycles per unit time.
    pub mean: f64,
    /// Spectral standard deviation `nu_q > 0`.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    SquaredExponential {
        amplitude: f64,
        length_scale: f64,
    },
    Periodic {
        amplitude: f64,
        length_scale: f64,
        period: f64,
    },
    RationalQuadratic {
        amplitude: f64,
        length_scale: f64,
        shape: f64,
    },
    Matern32 {
        amplitude: f64,
        length_scale: f64,
    },
    Matern52 {
        amplitude: f64,
        length_scale: f64,
    },
    SpectralMixture {
        components: Vec<SpectralComponent>,
    },
}

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

impl KernelSpec {
    /// Spectral mixture from `(weight, mean, std)` triples.
    pub fn spectral_mixture(components: &[(f64, f64, f64)]) -> Self {
        KernelSpec::SpectralMixture {
            components: components
                .iter()
                .map(|&(weight, mean, std)| SpectralComponent { weight, mean, std })
                .collect(),
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::SquaredExponential { .. } => KernelFamily::SquaredExponential,
            KernelSpec::Periodic { .. } => KernelFamily::Periodic,
            KernelSpec::RationalQuadratic { .. } => KernelFamily::RationalQuadratic,
            KernelSpec::Matern32 { .. } => KernelFamily::Matern32,
            KernelSpec::Matern52 { .. } => KernelFamily::Matern52,
            KernelSpec::SpectralMixture { .. } => KernelFamily::SpectralMixture,
        }
    }

    /// Mixture size for the spectral mixture, zero otherwise.
    pub fn components(&self) -> usize {
        match self {
            KernelSpec::SpectralMixture { components } => components.len(),
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.family().param_count(self.components())
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(KernelError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            KernelSpec::SquaredExponential { amplitude, length_scale }
            | KernelSpec::Matern32 { amplitude, length_scale }
            | KernelSpec::Matern52 { amplitude, length_scale } => {
                positive("amplitude", *amplitude)?;
                positive("length_scale", *length_scale)
            }
            KernelSpec::Periodic { amplitude, length_scale, period } => {
                positive("amplitude", *amplitude)?;
                positive("length_scale", *length_scale)?;
                positive("period", *period)
            }
            KernelSpec::RationalQuadratic { amplitude, length_scale, shape } => {
                positive("amplitude", *amplitude)?;
                positive("length_scale", *length_scale)?;
                positive("shape", *shape)
            }
            KernelSpec::SpectralMixture { components } => {
                if components.is_empty() {
                    return Err(KernelError::InvalidParameter(
                        "spectral mixture needs at least one component".into(),
                    ));
                }
                for c in components {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(KernelError::InvalidParameter(format!(
                            "weight must be non-negative, got {}",
                            c.weight
                        )));
                    }
                    if !(c.mean.is_finite() && c.mean >= 0.0) {
                        return Err(KernelError::InvalidParameter(format!(
                            "spectral mean must be non-negative, got {}",
                            c.mean
                        )));
                    }
                    positive("spectral std", c.std)?;
                }
                if components.iter().all(|c| c.weight == 0.0) {
                    return Err(KernelError::InvalidParameter(
                        "at least one mixture weight must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `k(t, t2)`.
    pub fn eval(&self, t: f64, t2: f64) -> f64 {
        self.eval_lag(t - t2)
    }

    /// Covariance as a function of the lag. Only `|tau|` is used, so the
    /// result is exactly symmetric.
    pub fn eval_lag(&self, tau: f64) -> f64 {
        let tau = tau.abs();
        match *self {
            KernelSpec::SquaredExponential { amplitude: h, length_scale: l } => {
                h * h * (-tau * tau / (2.0 * l * l)).exp()
            }
            KernelSpec::Periodic { amplitude: h, length_scale: l, period: p } => {
                let s = (PI * tau / p).sin();
                h * h * (-2.0 * s * s / (l * l)).exp()
            }
            KernelSpec::RationalQuadratic { amplitude: h, length_scale: l, shape: a } => {
                h * h * (1.0 + tau * tau / (2.0 * a * l * l)).powf(-a)
            }
            KernelSpec::Matern32 { amplitude: h, length_scale: l } => {
                let s = SQRT3 * tau / l;
                h * h * (1.0 + s) * (-s).exp()
            }
            KernelSpec::Matern52 { amplitude: h, length_scale: l } => {
                let s = SQRT5 * tau / l;
                h * h * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelSpec::SpectralMixture { ref components } => components
                .iter()
                .map(|c| {
                    let env = (-2.0 * PI * PI * tau * tau * c.std * c.std).exp();
                    c.weight * env * (2.0 * PI * tau * c.mean).cos()
                })
                .sum(),
        }
    }

    /// Writes `d k(tau) / d log(theta_j)` for every hyperparameter into `out`,
    /// in [`KernelSpec::log_params`] order.
    pub fn lag_gradient(&self, tau: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.param_count());
        let tau = tau.abs();
        match *self {
            KernelSpec::SquaredExponential { amplitude: h, length_scale: l } => {
                let r2 = tau * tau / (l * l);
                let k = h * h * (-0.5 * r2).exp();
                out[0] = 2.0 * k;
                out[1] = k * r2;
            }
            KernelSpec::Periodic { amplitude: h, length_scale: l, period: p } => {
                let arg = PI * tau / p;
                let (s, c) = arg.sin_cos();
                let k = h * h * (-2.0 * s * s / (l * l)).exp();
                out[0] = 2.0 * k;
                out[1] = k * 4.0 * s * s / (l * l);
                out[2] = k * 4.0 * s * c * arg / (l * l);
            }
            KernelSpec::RationalQuadratic { amplitude: h, length_scale: l, shape: a } => {
                let r = tau * tau / (2.0 * a * l * l);
                let base = 1.0 + r;
                let k = h * h * base.powf(-a);
                out[0] = 2.0 * k;
                out[1] = k * 2.0 * a * r / base;
                out[2] = k * a * (r / base - base.ln());
            }
            KernelSpec::Matern32 { amplitude: h, length_scale: l } => {
                let s = SQRT3 * tau / l;
                let e = (-s).exp();
                out[0] = 2.0 * h * h * (1.0 + s) * e;
                out[1] = h * h * s * s * e;
            }
            KernelSpec::Matern52 { amplitude: h, length_scale: l } => {
                let s = SQRT5 * tau / l;
                let e = (-s).exp();
                out[0] = 2.0 * h * h * (1.0 + s + s * s / 3.0) * e;
                out[1] = h * h * s * s * (1.0 + s) / 3.0 * e;
            }
            KernelSpec::SpectralMixture { ref components } => {
                for (q, c) in components.iter().enumerate() {
                    let gauss = 2.0 * PI * PI * tau * tau * c.std * c.std;
                    let env = (-gauss).exp();
                    let phase = 2.0 * PI * tau * c.mean;
                    let (sin, cos) = phase.sin_cos();
                    out[3 * q] = c.weight * env * cos;
                    out[3 * q + 1] = -c.weight * env * sin * phase;
                    out[3 * q + 2] = -2.0 * gauss * c.weight * env * cos;
                }
            }
        }
    }

    /// Log-parameters in a fixed order: `(h, l)`, `(h, l, p)`, `(h, l, a)` or
    /// `(w_q, lambda_q, nu_q)` per mixture component.
    pub fn log_params(&self) -> Vec<f64> {
        match *self {
            KernelSpec::SquaredExponential { amplitude, length_scale }
            | KernelSpec::Matern32 { amplitude, length_scale }
            | KernelSpec::Matern52 { amplitude, length_scale } => vec![amplitude.ln(), length_scale.ln()],
            KernelSpec::Periodic { amplitude, length_scale, period } => {
                vec![amplitude.ln(), length_scale.ln(), period.ln()]
            }
            KernelSpec::RationalQuadratic { amplitude, length_scale, shape } => {
                vec![amplitude.ln(), length_scale.ln(), shape.ln()]
            }
            KernelSpec::SpectralMixture { ref components } => components
                .iter()
                .flat_map(|c| [c.weight.ln(), c.mean.ln(), c.std.ln()])
                .collect(),
        }
    }

    /// Same family and mixture size, hyperparameters `exp(params)`.
    pub fn with_log_params(&self, params: &[f64]) -> Result<KernelSpec, KernelError> {
        KernelSpec::from_log_params(self.family(), self.components(), params)
    }

    pub fn from_log_params(
        family: KernelFamily,
        components: usize,
        params: &[f64],
    ) -> Result<KernelSpec, KernelError> {
        let expected = family.param_count(components);
        if params.len() != expected || expected == 0 {
            return Err(KernelError::ParameterCount {
                expected,
                got: params.len(),
            });
        }
        let e: Vec<f64> = params.iter().map(|p| p.exp()).collect();
        let spec = match family {
            KernelFamily::SquaredExponential => KernelSpec::SquaredExponential {
                amplitude: e[0],
                length_scale: e[1],
            },
            KernelFamily::Periodic => KernelSpec::Periodic {
                amplitude: e[0],
                length_scale: e[1],
                period: e[2],
            },
            KernelFamily::RationalQuadratic => KernelSpec::RationalQuadratic {
                amplitude: e[0],
                length_scale: e[1],
                shape: e[2],
            },
            KernelFamily::Matern32 => KernelSpec::Matern32 {
                amplitude: e[0],
                length_scale: e[1],
            },
            KernelFamily::Matern52 => KernelSpec::Matern52 {
                amplitude: e[0],
                length_scale: e[1],
            },
            KernelFamily::SpectralMixture => KernelSpec::SpectralMixture {
                components: e
                    .chunks_exact(3)
                    .map(|c| SpectralComponent {
                        weight: c[0],
                        mean: c[1],
                        std: c[2],
                    })
                    .collect(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            KernelSpec::SquaredExponential { .. }
            | KernelSpec::Matern32 { .. }
            | KernelSpec::Matern52 { .. } => vec!["log_amplitude".into(), "log_length_scale".into()],
            KernelSpec::Periodic { .. } => vec![
                "log_amplitude".into(),
                "log_length_scale".into(),
                "log_period".into(),
            ],
            KernelSpec::RationalQuadratic { .. } => vec![
                "log_amplitude".into(),
                "log_length_scale".into(),
                "log_shape".into(),
            ],
            KernelSpec::SpectralMixture { components } => (0..components.len())
                .flat_map(|q| {
                    [
                        format!("log_weight_{q}"),
                        format!("log_mean_{q}"),
                        format!("log_std_{q}"),
                    ]
                })
                .collect(),
        }
    }

    /// Prior variance `k(t, t)`.
    pub fn variance(&self) -> f64 {
        self.eval_lag(0.0)
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, t: f64, t2: f64) -> f64 {
    spec.eval(t, t2)
}

/// `K_ij = k(t_i, t_j) + noise_var * [t_i == t_j]`.
pub fn gram_matrix(spec: &KernelSpec, times: &[f64], noise_var: f64) -> DMatrix<f64> {
    let n = times.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut v = spec.eval(times[i], times[j]);
            if times[i] == times[j] {
                v += noise_var;
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `dK / d log(theta_j)` for every kernel hyperparameter (noise excluded).
pub fn gram_gradients(spec: &KernelSpec, times: &[f64]) -> Vec<DMatrix<f64>> {
    let n = times.len();
    let p = spec.param_count();
    let mut out = vec![DMatrix::zeros(n, n); p];
    let mut buf = vec![0.0; p];
    for j in 0..n {
        for i in j..n {
            spec.lag_gradient(times[i] - times[j], &mut buf);
            for (m, g) in out.iter_mut().zip(&buf) {
                m[(i, j)] = *g;
                m[(j, i)] = *g;
            }
        }
    }
    out
}

/// Distinct absolute lags of a time set and the lag index of every pair.
///
/// Stationary kernels only need one evaluation per distinct lag, which on an
/// annual grid reduces the kernel work from `n^2` to `n`.
#[derive(Debug, Clone)]
pub(crate) struct LagTable {
    n: usize,
    lags: Vec<f64>,
    /// Column-major `n x n` pair -> lag index.
    index: Vec<u32>,
}

impl LagTable {
    pub(crate) fn new(times: &[f64]) -> Self {
        let n = times.len();
        let mut all: Vec<f64> = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in j..n {
                all.push((times[i] - times[j]).abs());
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).expect("finite lags"));
        all.dedup();
        let mut index = vec![0u32; n * n];
        for j in 0..n {
            for i in j..n {
                let lag = (times[i] - times[j]).abs();
                let pos = all
                    .binary_search_by(|x| x.partial_cmp(&lag).expect("finite lags"))
                    .expect("lag present") as u32;
                index[j * n + i] = pos;
                index[i * n + j] = pos;
            }
        }
        Self { n, lags: all, index }
    }

    pub(crate) fn lags(&self) -> &[f64] {
        &self.lags
    }

    /// Noise-free Gram matrix plus `noise_var` wherever the lag is zero.
    pub(crate) fn gram(&self, spec: &KernelSpec, noise_var: f64) -> DMatrix<f64> {
        let values: Vec<f64> = self
            .lags
            .iter()
            .map(|&l| spec.eval_lag(l) + if l == 0.0 { noise_var } else { 0.0 })
            .collect();
        DMatrix::from_iterator(self.n, self.n, self.index.iter().map(|&i| values[i as usize]))
    }

    /// Lag sums of `K^-1 - a a'` given the Cholesky factor `l` of `K`.
    ///
    /// Uses `K^-1 = L^-T L^-1` and only the upper triangle, roughly a third
    /// of the work of forming the full inverse.
    pub(crate) fn inverse_lag_sums(&self, l: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = l.as_slice();
        // Column j of L^-1 is zero above row j; stored densely column-major.
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            let col = &mut inv[j * n..(j + 1) * n];
            col[j] = 1.0 / l[j * n + j];
            for i in j + 1..n {
                let mut acc = 0.0;
                for k in j..i {
                    acc += l[k * n + i] * col[k];
                }
                col[i] = -acc / l[i * n + i];
            }
        }
        let mut sums = vec![0.0; self.lags.len()];
        for j in 0..n {
            let cj = &inv[j * n..(j + 1) * n];
            for i in 0..=j {
                let ci = &inv[i * n..(i + 1) * n];
                let dot: f64 = ci[j..].iter().zip(&cj[j..]).map(|(x, y)| x * y).sum();
                let w = dot - a[i] * a[j];
                sums[self.index[j * n + i] as usize] += if i == j { w } else { 2.0 * w };
            }
        }
        sums
    }

    /// Sums the entries of a square matrix grouped by lag.
    #[cfg(test)]
    pub(crate) fn lag_sums(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let mut sums = vec![0.0; self.lags.len()];
        for (v, &i) in m.as_slice().iter().zip(&self.index) {
            sums[i as usize] += v;
        }
        sums
    }
}
