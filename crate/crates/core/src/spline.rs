//! Natural cubic spline mean function.
//!
//! The spline is represented in the reduced natural-spline basis
//! (intercept, linear term and `K - 2` constrained truncated-cubic
//! combinations), which builds the boundary constraints
//! `alpha_2 = alpha_3 = 0`, `sum(beta) = 0` and `sum(beta * xi) = 0` into the
//! basis itself. Times are standardized to `[0, 1]` over the knot span before
//! the basis is formed; coefficients are stored in standardized units.
//!
//! Beyond the last knot the spline is affine, and [`MeanModel::eval`] returns
//! `c0 + c1 * t` directly from the precomputed tail constants.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("cannot place {requested} distinct knots: {reason}")]
    DegenerateKnots { requested: usize, reason: String },

    #[error("design matrix is rank deficient (|r_jj| = {min_pivot:e} at column {column})")]
    SingularDesign { column: usize, min_pivot: f64 },

    #[error("invalid spline input: {0}")]
    InvalidInput(String),
}

/// Strictly increasing knot locations in calendar-year units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KnotVector(Vec<f64>);

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        let k = knots.len();
        if k < 2 {
            return Err(SplineError::DegenerateKnots {
                requested: k,
                reason: "at least two knots are required".into(),
            });
        }
        if knots.iter().any(|x| !x.is_finite()) {
            return Err(SplineError::InvalidInput("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SplineError::DegenerateKnots {
                requested: k,
                reason: format!("knots are not strictly increasing: {knots:?}"),
            });
        }
        Ok(Self(knots))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    fn span(&self) -> f64 {
        self.last() - self.first()
    }

    /// Knots mapped onto `[0, 1]`.
    fn standardized(&self) -> Vec<f64> {
        let (origin, scale) = (self.first(), self.span());
        self.0.iter().map(|&x| (x - origin) / scale).collect()
    }
}

impl TryFrom<Vec<f64>> for KnotVector {
    type Error = SplineError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<KnotVector> for Vec<f64> {
    fn from(k: KnotVector) -> Self {
        k.0
    }
}

/// Places `k` knots at the `j / (k - 1)` sample quantiles of `times`
/// (linear interpolation between order statistics), so the first and last
/// knots sit on the data boundary.
pub fn build_knots(times: &[f64], k: usize) -> Result<KnotVector, SplineError> {
    if k < 2 {
        return Err(SplineError::DegenerateKnots {
            requested: k,
            reason: "at least two knots are required".into(),
        });
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(SplineError::InvalidInput("times must be finite".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(SplineError::InvalidInput("times must be sorted ascending".into()));
    }
    let mut distinct = times.to_vec();
    distinct.dedup();
    if distinct.len() < k {
        return Err(SplineError::DegenerateKnots {
            requested: k,
            reason: format!("only {} distinct time values", distinct.len()),
        });
    }

    let n = times.len();
    let knots = (0..k)
        .map(|j| {
            let pos = (n - 1) as f64 * j as f64 / (k - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            if j == k - 1 {
                times[n - 1]
            } else {
                times[lo] + frac * (times[hi] - times[lo])
            }
        })
        .collect();
    KnotVector::new(knots)
}

/// Reduced natural-spline basis at `t`.
///
/// The row is expressed in standardized coordinates `u = (t - xi_1) / (xi_K - xi_1)`:
/// `[1, u, N_1(u), ..., N_{K-2}(u)]` with
/// `N_k = d_k - d_{K-1}` and `d_k(u) = ((u - u_k)^3_+ - (u - u_K)^3_+) / (u_K - u_k)`.
pub fn basis_row(t: f64, knots: &KnotVector) -> Vec<f64> {
    let u_knots = knots.standardized();
    let u = (t - knots.first()) / knots.span();
    standardized_row(u, &u_knots)
}

fn standardized_row(u: f64, u_knots: &[f64]) -> Vec<f64> {
    let k = u_knots.len();
    let last = u_knots[k - 1];
    let cube = |x: f64| if x > 0.0 { x * x * x } else { 0.0 };
    let d = |j: usize| (cube(u - u_knots[j]) - cube(u - last)) / (last - u_knots[j]);

    let mut row = Vec::with_capacity(k);
    row.push(1.0);
    row.push(u);
    if k > 2 {
        let d_penultimate = d(k - 2);
        for j in 0..k - 2 {
            row.push(d(j) - d_penultimate);
        }
    }
    row
}

/// Fitted natural cubic spline mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel {
    knots: KnotVector,
    /// Coefficients on the reduced basis, standardized units.
    coefficients: Vec<f64>,
    /// Calendar-unit tail intercept `c0` for `t >= xi_K`.
    tail_intercept: f64,
    /// Calendar-unit tail slope `c1` for `t >= xi_K`.
    tail_slope: f64,
}

/// The constrained truncated-power representation of a fitted spline, in
/// standardized time units.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPower {
    /// `alpha_0 .. alpha_3`; the cubic and quadratic entries are zero.
    pub alpha: [f64; 4],
    pub beta: Vec<f64>,
    /// Standardized knot locations.
    pub knots: Vec<f64>,
}

impl TruncatedPower {
    pub fn eval(&self, u: f64) -> f64 {
        let poly = self.alpha[0] + u * (self.alpha[1] + u * (self.alpha[2] + u * self.alpha[3]));
        let trunc: f64 = self
            .beta
            .iter()
            .zip(&self.knots)
            .map(|(b, &xi)| {
                let x = u - xi;
                if x > 0.0 {
                    b * x * x * x
                } else {
                    0.0
                }
            })
            .sum();
        poly + trunc
    }

    /// Tail constants `(c0, c1)` such that the spline equals `c0 + c1 u` for `u >= xi_K`.
    pub fn tail(&self) -> (f64, f64) {
        let c0 = self.alpha[0]
            - self
                .beta
                .iter()
                .zip(&self.knots)
                .map(|(b, xi)| b * xi * xi * xi)
                .sum::<f64>();
        let c1 = self.alpha[1]
            + self
                .beta
                .iter()
                .zip(&self.knots)
                .map(|(b, xi)| 3.0 * b * xi * xi)
                .sum::<f64>();
        (c0, c1)
    }
}

impl MeanModel {
    /// Builds a model from reduced-basis coefficients in standardized units.
    pub fn from_coefficients(knots: KnotVector, coefficients: Vec<f64>) -> Result<Self, SplineError> {
        if coefficients.len() != knots.len() {
            return Err(SplineError::InvalidInput(format!(
                "expected {} coefficients, got {}",
                knots.len(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SplineError::InvalidInput("coefficients must be finite".into()));
        }
        let mut model = Self {
            knots,
            coefficients,
            tail_intercept: 0.0,
            tail_slope: 0.0,
        };
        let (c0, c1) = model.truncated_power().tail();
        let (origin, scale) = (model.knots.first(), model.knots.span());
        model.tail_slope = c1 / scale;
        model.tail_intercept = c0 - model.tail_slope * origin;
        Ok(model)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn tail_intercept(&self) -> f64 {
        self.tail_intercept
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// Maps the reduced-basis coefficients back onto
    /// `sum alpha_p u^p + sum beta_k (u - xi_k)^3_+`.
    pub fn truncated_power(&self) -> TruncatedPower {
        let u = self.knots.standardized();
        let k = u.len();
        let mut beta = vec![0.0; k];
        if k > 2 {
            let last = u[k - 1];
            let pen_gap = last - u[k - 2];
            for j in 0..k - 2 {
                let c = self.coefficients[j + 2];
                let gap = last - u[j];
                beta[j] += c / gap;
                beta[k - 1] -= c / gap;
                beta[k - 2] -= c / pen_gap;
                beta[k - 1] += c / pen_gap;
            }
        }
        TruncatedPower {
            alpha: [self.coefficients[0], self.coefficients[1], 0.0, 0.0],
            beta,
            knots: u,
        }
    }

    /// Evaluates the mean; for `t >= xi_K` this is exactly `c0 + c1 * t`.
    pub fn eval(&self, t: f64) -> f64 {
        if t >= self.knots.last() {
            return self.tail_intercept + self.tail_slope * t;
        }
        basis_row(t, &self.knots)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }

    pub fn eval_many(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.eval(t)).collect()
    }
}

/// Free-function form of [`MeanModel::eval`].
pub fn eval_mean(model: &MeanModel, t: f64) -> f64 {
    model.eval(t)
}

/// Ordinary least squares fit of the natural spline via a Householder QR
/// factorization of the basis matrix.
pub fn fit_ols(times: &[f64], values: &[f64], knots: &KnotVector) -> Result<MeanModel, SplineError> {
    let n = times.len();
    let k = knots.len();
    if values.len() != n {
        return Err(SplineError::InvalidInput(format!(
            "{n} times but {} values",
            values.len()
        )));
    }
    if n < k {
        return Err(SplineError::InvalidInput(format!(
            "{n} observations cannot determine {k} coefficients"
        )));
    }
    if values.iter().chain(times).any(|v| !v.is_finite()) {
        return Err(SplineError::InvalidInput("times and values must be finite".into()));
    }
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    if knots.first() < lo || knots.last() > hi {
        return Err(SplineError::InvalidInput(format!(
            "knots [{}, {}] extend outside the data range [{lo}, {hi}]",
            knots.first(),
            knots.last()
        )));
    }

    let u_knots = knots.standardized();
    let (origin, scale) = (knots.first(), knots.span());
    let mut design = DMatrix::zeros(n, k);
    for (i, &t) in times.iter().enumerate() {
        let row = standardized_row((t - origin) / scale, &u_knots);
        for (j, v) in row.into_iter().enumerate() {
            design[(i, j)] = v;
        }
    }

    let qr = design.qr();
    let r = qr.r();
    let max_pivot = r.diagonal().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    for j in 0..k {
        let pivot = r[(j, j)].abs();
        if pivot.is_nan() || pivot <= 1e-12 * max_pivot {
            return Err(SplineError::SingularDesign {
                column: j,
                min_pivot: pivot,
            });
        }
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(values);
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(SplineError::SingularDesign {
            column: 0,
            min_pivot: 0.0,
        })?;
    MeanModel::from_coefficients(knots.clone(), coef.iter().copied().collect())
}
