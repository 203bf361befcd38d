//! Univariate Gaussian process regression with a fixed, pre-fitted mean.
//!
//! Estimation is two-step: the natural spline mean is fitted by ordinary
//! least squares, then kernel and noise hyperparameters are chosen by
//! maximizing the log marginal likelihood of the residuals with L-BFGS from
//! several random starting points.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::kernels::{gram_matrix, KernelError, KernelFamily, KernelSpec, LagTable};
use crate::optim::{self, LbfgsConfig};
use crate::spline::{build_knots, fit_ols, KnotVector, MeanModel, SplineError};

/// Smallest relative jitter tried after a plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;
/// Lower bound on the fitted noise variance.
pub const NOISE_FLOOR: f64 = 1e-8;

const MODEL_FORMAT: &str = "demogp/gp-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("covariance matrix is not positive definite (relative jitter up to {max_jitter:e} tried)")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error(transparent)]
    Spline(#[from] SplineError),

    #[error(transparent)]
    Kernel(#[from] KernelError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hyperparameter optimization failed: {0}")]
    FitFailed(FitFailure),

    #[error("cannot read model: {0}")]
    Format(String),
}

/// Why every restart of a fit failed.
#[derive(Debug, Clone, PartialEq)]
pub struct FitFailure {
    pub restarts: usize,
    pub messages: Vec<String>,
}

impl fmt::Display for FitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} restarts, none finite", self.restarts)?;
        if let Some(m) = self.messages.first() {
            write!(f, " (first: {m})")?;
        }
        Ok(())
    }
}

/// Observed `(t_i, y_i)` pairs, times ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TrainingSet {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, GpError> {
        if times.len() != values.len() {
            return Err(GpError::InvalidTrainingSet(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(GpError::InvalidTrainingSet(format!(
                "need at least 2 observations, got {}",
                times.len()
            )));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(GpError::InvalidTrainingSet("non-finite time or value".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(GpError::InvalidTrainingSet("times must be sorted ascending".into()));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn residuals(&self, mean: &MeanModel) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.times.iter().zip(&self.values).map(|(&t, &y)| y - mean.eval(t)),
        )
    }
}

/// Cholesky factorization, retrying with escalating diagonal jitter
/// (`1e-10 .. 1e-4` times the mean diagonal) if the plain matrix fails.
/// Returns the factor and the absolute jitter that was added.
pub fn stabilized_cholesky(gram: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NotPositiveDefinite { max_jitter: 0.0 });
    }
    if let Some(c) = gram.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let mean_diag = gram.diagonal().mean().abs();
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += jitter;
        }
        if let Some(c) = g.cholesky() {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(GpError::NotPositiveDefinite { max_jitter: JITTER_MAX })
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

fn check_noise(noise_var: f64) -> Result<(), GpError> {
    if noise_var.is_finite() && noise_var > 0.0 {
        Ok(())
    } else {
        Err(GpError::InvalidInput(format!("noise variance must be positive, got {noise_var}")))
    }
}

/// Log marginal likelihood
/// `-1/2 log|K| - 1/2 (y - mu)' K^-1 (y - mu) - n/2 log(2 pi)`.
pub fn log_marginal_likelihood(
    train: &TrainingSet,
    mean: &MeanModel,
    kernel: &KernelSpec,
    noise_var: f64,
) -> Result<f64, GpError> {
    check_noise(noise_var)?;
    kernel.validate()?;
    let resid = train.residuals(mean);
    let gram = gram_matrix(kernel, train.times(), noise_var);
    let (chol, _) = stabilized_cholesky(&gram)?;
    let alpha = chol.solve(&resid);
    let n = train.len() as f64;
    Ok(-0.5 * log_det(&chol) - 0.5 * resid.dot(&alpha) - 0.5 * n * (2.0 * PI).ln())
}

/// Gradient of the negative log marginal likelihood with respect to the
/// kernel log-parameters (in [`KernelSpec::log_params`] order) followed by
/// `log(noise_var)`.
pub fn nll_gradient(
    train: &TrainingSet,
    mean: &MeanModel,
    kernel: &KernelSpec,
    noise_var: f64,
) -> Result<Vec<f64>, GpError> {
    check_noise(noise_var)?;
    kernel.validate()?;
    let objective = Objective::new(train.times(), train.residuals(mean));
    objective.evaluate(kernel, noise_var).map(|(_, g)| g)
}

/// Negative log likelihood of fixed residuals, evaluated through the lag
/// table of the training times.
struct Objective {
    lags: LagTable,
    resid: DVector<f64>,
}

impl Objective {
    fn new(times: &[f64], resid: DVector<f64>) -> Self {
        Self {
            lags: LagTable::new(times),
            resid,
        }
    }

    fn evaluate(&self, kernel: &KernelSpec, noise_var: f64) -> Result<(f64, Vec<f64>), GpError> {
        let n = self.resid.len();
        let gram = self.lags.gram(kernel, noise_var);
        let (chol, _) = stabilized_cholesky(&gram)?;
        let alpha = chol.solve(&self.resid);
        let nll = 0.5 * log_det(&chol) + 0.5 * self.resid.dot(&alpha) + 0.5 * n as f64 * (2.0 * PI).ln();

        // d(-L)/d theta = 1/2 tr((K^-1 - a a') dK/d theta)
        let sums = self.lags.inverse_lag_sums(chol.l_dirty(), alpha.as_slice());

        let p = kernel.param_count();
        let mut grad = vec![0.0; p + 1];
        let mut buf = vec![0.0; p];
        for (&lag, &s) in self.lags.lags().iter().zip(&sums) {
            kernel.lag_gradient(lag, &mut buf);
            for (g, b) in grad.iter_mut().zip(&buf) {
                *g += 0.5 * s * b;
            }
        }
        // Lag zero is always present (the diagonal) and carries the noise.
        grad[p] = 0.5 * noise_var * sums[0];
        Ok((nll, grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub family: KernelFamily,
    /// Spectral mixture components `Q`; ignored by the other families.
    pub mixtures: usize,
    /// Spline knots `K`.
    pub knots: usize,
    pub restarts: usize,
    pub seed: u64,
    /// L-BFGS iteration cap per restart.
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::SpectralMixture,
            mixtures: 2,
            knots: 4,
            restarts: 10,
            seed: 0,
            max_iter: 400,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        if self.knots < 2 {
            return Err(GpError::InvalidInput("at least 2 knots are required".into()));
        }
        if self.family == KernelFamily::SpectralMixture && self.mixtures < 1 {
            return Err(GpError::InvalidInput("at least 1 mixture component is required".into()));
        }
        if self.restarts < 1 {
            return Err(GpError::InvalidInput("at least 1 restart is required".into()));
        }
        Ok(())
    }

    fn components(&self) -> usize {
        if self.family == KernelFamily::SpectralMixture {
            self.mixtures
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub seed: u64,
    pub restarts: usize,
    pub successful_restarts: usize,
    /// Restart that produced the selected optimum.
    pub best_restart: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: String,
    /// Max-norm of the gradient of the negative log likelihood at the optimum.
    pub gradient_norm: f64,
}

/// Geometry of the training times used for initialization and bounds.
struct TimeScale {
    span: f64,
    spacing: f64,
}

impl TimeScale {
    fn new(times: &[f64]) -> Self {
        let span = (times[times.len() - 1] - times[0]).max(f64::MIN_POSITIVE);
        let spacing = times
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        let spacing = if spacing.is_finite() { spacing } else { span };
        Self { span, spacing }
    }
}

/// Box in the optimizer's coordinates: kernel log-parameters then the
/// transformed noise `eta`, with `noise_var = NOISE_FLOOR + exp(eta)`.
fn parameter_box(family: KernelFamily, components: usize, scale: &TimeScale) -> (Vec<f64>, Vec<f64>) {
    let p = family.param_count(components);
    let mut lower = vec![-20.0; p + 1];
    let mut upper = vec![20.0; p + 1];
    if family == KernelFamily::SpectralMixture {
        // Frequencies above Nyquist alias onto lower ones on a regular grid.
        let nyquist = (0.5 / scale.spacing).ln();
        let max_width = (1.0 / scale.spacing).ln();
        for q in 0..components {
            upper[3 * q + 1] = nyquist;
            upper[3 * q + 2] = max_width;
        }
    }
    lower[p] = -30.0;
    (lower, upper)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln())
}

/// Random starting point in optimizer coordinates.
fn initial_point<R: Rng>(
    rng: &mut R,
    family: KernelFamily,
    components: usize,
    variance: f64,
    scale: &TimeScale,
) -> Vec<f64> {
    let h = variance.sqrt();
    let length = |rng: &mut R| log_uniform(rng, scale.spacing, scale.span.max(scale.spacing * 1.01));
    let mut x = match family {
        KernelFamily::SquaredExponential | KernelFamily::Matern32 | KernelFamily::Matern52 => {
            vec![h.ln(), length(rng)]
        }
        KernelFamily::Periodic => {
            let period = rng.random_range(2.0 * scale.spacing..=(0.5 * scale.span).max(2.5 * scale.spacing));
            vec![h.ln(), log_uniform(rng, 0.5, 2.0), period.ln()]
        }
        KernelFamily::RationalQuadratic => vec![h.ln(), length(rng), log_uniform(rng, 0.5, 5.0)],
        KernelFamily::SpectralMixture => {
            let nyquist = 0.5 / scale.spacing;
            let mut x = Vec::with_capacity(3 * components);
            for _ in 0..components {
                let weight = variance / components as f64;
                let mean = rng.random_range(0.0..0.999 * nyquist).max(1e-3 * nyquist);
                let log_std = log_uniform(rng, 1.0 / scale.span, (10.0 / scale.span).min(nyquist).max(1.01 / scale.span));
                x.extend([weight.ln(), mean.ln(), log_std]);
            }
            x
        }
    };
    let noise = variance * log_uniform(rng, 0.05, 0.5).exp();
    x.push((noise - NOISE_FLOOR).max(NOISE_FLOOR).ln());
    x
}

/// Two-step fit: OLS spline mean, then maximum likelihood for the kernel and
/// noise on the residuals. Deterministic for a fixed seed.
pub fn fit(train: &TrainingSet, config: &FitConfig) -> Result<GPModel, GpError> {
    config.validate()?;
    let n = train.len();
    let need = config.knots.max(4);
    if n < need {
        return Err(GpError::InvalidTrainingSet(format!(
            "{n} observations, need at least {need}"
        )));
    }
    let knots = build_knots(train.times(), config.knots)?;
    let mean = fit_ols(train.times(), train.values(), &knots)?;
    let resid = train.residuals(&mean);
    let variance = (resid.norm_squared() / n as f64).max(1e-10);

    let scale = TimeScale::new(train.times());
    let components = config.components();
    let family = config.family;
    let p = family.param_count(components);
    let (lower, upper) = parameter_box(family, components, &scale);
    let objective = Objective::new(train.times(), resid);

    let eval = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let kernel = KernelSpec::from_log_params(family, components, &x[..p]).ok()?;
        let e = x[p].exp();
        let noise_var = NOISE_FLOOR + e;
        let (value, mut grad) = objective.evaluate(&kernel, noise_var).ok()?;
        // Chain rule from log(noise_var) to eta.
        grad[p] *= e / noise_var;
        Some((value, grad))
    };

    let lbfgs = LbfgsConfig {
        max_iter: config.max_iter,
        ..LbfgsConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(usize, optim::Minimum)> = None;
    let mut failures = Vec::new();
    let mut successes = 0;
    for restart in 0..config.restarts {
        let x0 = initial_point(&mut rng, family, components, variance, &scale);
        match optim::minimize_in_box(eval, x0, &lower, &upper, &lbfgs) {
            Ok(m) => {
                log::trace!(
                    "restart {restart}: nll {:.6} after {} iterations, {} evaluations ({:?})",
                    m.value,
                    m.iterations,
                    m.evaluations,
                    m.termination
                );
                successes += 1;
                if best.as_ref().is_none_or(|(_, b)| m.value < b.value) {
                    best = Some((restart, m));
                }
            }
            Err(e) => failures.push(format!("restart {restart}: {e}")),
        }
    }

    let Some((best_restart, best)) = best else {
        return Err(GpError::FitFailed(FitFailure {
            restarts: config.restarts,
            messages: failures,
        }));
    };
    let kernel = KernelSpec::from_log_params(family, components, &best.x[..p])?;
    let noise_var = NOISE_FLOOR + best.x[p].exp();
    let grad_norm = best.gradient.iter().fold(0.0_f64, |m, g| m.max(g.abs()));

    let mut model = GPModel::new(train.clone(), mean, kernel, noise_var)?;
    model.diagnostics = FitDiagnostics {
        seed: config.seed,
        restarts: config.restarts,
        successful_restarts: successes,
        best_restart,
        iterations: best.iterations,
        evaluations: best.evaluations,
        termination: format!("{:?}", best.termination),
        gradient_norm: grad_norm,
    };
    Ok(model)
}

/// Fitted per-series model with its cached factorization.
#[derive(Debug, Clone)]
pub struct GPModel {
    mean: MeanModel,
    kernel: KernelSpec,
    noise_var: f64,
    training: TrainingSet,
    /// Lower Cholesky factor of the stabilized Gram matrix.
    chol: DMatrix<f64>,
    /// `K^-1 (y - mu)`.
    alpha: DVector<f64>,
    jitter: f64,
    log_likelihood: f64,
    diagnostics: FitDiagnostics,
}

impl GPModel {
    /// Conditions a GP with fixed hyperparameters on the training set.
    pub fn new(
        training: TrainingSet,
        mean: MeanModel,
        kernel: KernelSpec,
        noise_var: f64,
    ) -> Result<Self, GpError> {
        check_noise(noise_var)?;
        kernel.validate()?;
        let resid = training.residuals(&mean);
        let gram = gram_matrix(&kernel, training.times(), noise_var);
        let (chol, jitter) = stabilized_cholesky(&gram)?;
        let alpha = chol.solve(&resid);
        let n = training.len() as f64;
        let log_likelihood = -0.5 * log_det(&chol) - 0.5 * resid.dot(&alpha) - 0.5 * n * (2.0 * PI).ln();
        Ok(Self {
            mean,
            kernel,
            noise_var,
            training,
            chol: chol.unpack(),
            alpha,
            jitter,
            log_likelihood,
            diagnostics: FitDiagnostics::default(),
        })
    }

    pub fn mean(&self) -> &MeanModel {
        &self.mean
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Absolute jitter added to the Gram diagonal (zero if none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Gram matrix the cached factor was computed from, jitter included.
    pub fn stabilized_gram(&self) -> DMatrix<f64> {
        let mut g = gram_matrix(&self.kernel, self.training.times(), self.noise_var);
        for i in 0..g.nrows() {
            g[(i, i)] += self.jitter;
        }
        g
    }

    pub fn to_record(&self) -> GpModelRecord {
        GpModelRecord {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            seed: self.diagnostics.seed,
            knots: self.mean.knots().as_slice().to_vec(),
            mean_coefficients: self.mean.coefficients().to_vec(),
            tail_intercept: self.mean.tail_intercept(),
            tail_slope: self.mean.tail_slope(),
            kernel: self.kernel.clone(),
            noise_var: self.noise_var,
            training_times: self.training.times().to_vec(),
            training_values: self.training.values().to_vec(),
            log_likelihood: self.log_likelihood,
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn from_record(record: GpModelRecord) -> Result<Self, GpError> {
        if record.format != MODEL_FORMAT {
            return Err(GpError::Format(format!("unexpected format tag `{}`", record.format)));
        }
        if record.version != MODEL_VERSION {
            return Err(GpError::Format(format!("unsupported version {}", record.version)));
        }
        let knots = KnotVector::new(record.knots)?;
        let mean = MeanModel::from_coefficients(knots, record.mean_coefficients)?;
        let training = TrainingSet::new(record.training_times, record.training_values)?;
        let mut model = GPModel::new(training, mean, record.kernel, record.noise_var)?;
        model.diagnostics = record.diagnostics;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("model record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GpError> {
        let record: GpModelRecord = serde_json::from_str(s).map_err(|e| GpError::Format(e.to_string()))?;
        Self::from_record(record)
    }
}

/// Versioned, self-describing serialized form of a [`GPModel`]. The
/// factorization is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModelRecord {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub knots: Vec<f64>,
    /// Reduced natural-spline coefficients in standardized time units.
    pub mean_coefficients: Vec<f64>,
    pub tail_intercept: f64,
    pub tail_slope: f64,
    pub kernel: KernelSpec,
    pub noise_var: f64,
    pub training_times: Vec<f64>,
    pub training_values: Vec<f64>,
    pub log_likelihood: f64,
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
}

/// How many times the observation noise enters the predictive covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseTerm {
    /// Noise-free test covariance plus `sigma^2 I`.
    #[default]
    Once,
    /// Test covariance with `sigma^2 delta` on coinciding times, plus a
    /// further `sigma^2 I`.
    Twice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn predict(model: &GPModel, test_times: &[f64]) -> Result<PredictiveDistribution, GpError> {
    predict_with(model, test_times, NoiseTerm::Once)
}

pub fn predict_with(
    model: &GPModel,
    test_times: &[f64],
    noise: NoiseTerm,
) -> Result<PredictiveDistribution, GpError> {
    if test_times.is_empty() {
        return Err(GpError::InvalidInput("no test times".into()));
    }
    if test_times.iter().any(|t| !t.is_finite()) {
        return Err(GpError::InvalidInput("non-finite test time".into()));
    }
    let train = model.training.times();
    let (n, h) = (train.len(), test_times.len());
    let kernel = &model.kernel;

    let cross = DMatrix::from_fn(n, h, |i, j| kernel.eval(train[i], test_times[j]));
    let mean: Vec<f64> = test_times
        .iter()
        .zip((cross.transpose() * &model.alpha).iter())
        .map(|(&t, adj)| model.mean.eval(t) + adj)
        .collect();

    let v = model
        .chol
        .solve_lower_triangular(&cross)
        .ok_or(GpError::NotPositiveDefinite { max_jitter: JITTER_MAX })?;
    let sigma2 = model.noise_var;
    let mut cov = DMatrix::from_fn(h, h, |i, j| {
        let mut k = kernel.eval(test_times[i], test_times[j]);
        if noise == NoiseTerm::Twice && test_times[i] == test_times[j] {
            k += sigma2;
        }
        k
    });
    cov -= v.transpose() * &v;
    cov = (&cov + cov.transpose()) * 0.5;
    for i in 0..h {
        cov[(i, i)] += sigma2;
    }

    let variance = (0..h)
        .map(|i| {
            let v = cov[(i, i)];
            if v < -1e-10 {
                log::warn!("negative predictive variance {v:e} at t = {} clipped to 0", test_times[i]);
            }
            v.max(0.0)
        })
        .collect();

    Ok(PredictiveDistribution {
        times: test_times.to_vec(),
        mean,
        variance,
        covariance: cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// The `1 - alpha / 2` quantile of the standard normal.
pub fn normal_quantile_for(alpha: f64) -> Result<f64, GpError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GpError::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let std_normal = Normal::standard();
    Ok(std_normal.inverse_cdf(1.0 - alpha / 2.0))
}

/// `mean +- z_alpha * sqrt(variance)` per test time.
pub fn prediction_interval(pred: &PredictiveDistribution, alpha: f64) -> Result<Vec<Interval>, GpError> {
    let z = normal_quantile_for(alpha)?;
    Ok(pred
        .mean
        .iter()
        .zip(&pred.variance)
        .map(|(m, v)| {
            let half = z * v.sqrt();
            Interval {
                lower: m - half,
                upper: m + half,
            }
        })
        .collect())
}
