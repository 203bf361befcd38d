//! Limited-memory BFGS with a strong Wolfe line search and simple bound
//! handling: search directions are projected onto the face of active bounds,
//! steps stop at the box wall, and convergence is judged on the projected
//! gradient.
//!
//! The objective returns `None` where it cannot be evaluated (failed
//! factorization); the line search treats such points as infinitely bad and
//! backtracks.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("objective is not finite at the starting point")]
    InvalidStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `max |g_i| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Stop when the relative decrease stays below this for `patience` iterations.
    pub value_tol: f64,
    pub patience: usize,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iter: 400,
            grad_tol: 1e-7,
            value_tol: 1e-12,
            patience: 4,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ValueTolerance,
    MaxIterations,
    /// No acceptable step along the search direction; the current point is
    /// kept as the result.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

struct Evaluator<F> {
    f: F,
    count: usize,
}

impl<F> Evaluator<F>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.count += 1;
        match (self.f)(x) {
            Some((v, g)) if v.is_finite() && g.iter().all(|d| d.is_finite()) => Some((v, g)),
            _ => None,
        }
    }
}

struct Step {
    alpha: f64,
    x: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Bounds<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
}

impl Bounds<'_> {
    fn trial_point(&self, x: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
        x.iter()
            .zip(d)
            .zip(self.lower.iter().zip(self.upper))
            .map(|((xi, di), (lo, hi))| (xi + alpha * di).clamp(*lo, *hi))
            .collect()
    }

    /// Drops direction components that point out of an active bound.
    fn project(&self, x: &[f64], d: &mut [f64]) {
        for (i, di) in d.iter_mut().enumerate() {
            if (x[i] <= self.lower[i] && *di < 0.0) || (x[i] >= self.upper[i] && *di > 0.0) {
                *di = 0.0;
            }
        }
    }

    /// Max-norm of the gradient with components blocked by active bounds
    /// removed.
    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        self.project(x, &mut d);
        inf_norm(&d)
    }

    /// Largest step along `d` that stays inside the box.
    fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for (i, di) in d.iter().enumerate() {
            if *di < 0.0 {
                m = m.min((self.lower[i] - x[i]) / di);
            } else if *di > 0.0 {
                m = m.min((self.upper[i] - x[i]) / di);
            }
        }
        m
    }
}

/// Strong Wolfe line search (bracketing phase followed by zoom).
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    ev: &mut Evaluator<F>,
    bounds: &Bounds,
    x: &[f64],
    f0: f64,
    dphi0: f64,
    d: &[f64],
    alpha_init: f64,
    alpha_max: f64,
    max_steps: usize,
) -> Option<Step>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    // Best point satisfying sufficient decrease, kept as a fallback.
    let mut fallback: Option<Step> = None;
    let consider = |s: &Step, fallback: &mut Option<Step>| {
        if s.value <= f0 + C1 * s.alpha * dphi0
            && fallback.as_ref().is_none_or(|b| s.value < b.value)
        {
            *fallback = Some(Step {
                alpha: s.alpha,
                x: s.x.clone(),
                value: s.value,
                gradient: s.gradient.clone(),
            });
        }
    };

    let mut lo = (0.0, f0, dphi0);
    let mut hi: Option<(f64, f64)> = None;
    let mut alpha = alpha_init.min(alpha_max);
    let mut steps = 0;

    // Bracketing.
    while steps < max_steps {
        steps += 1;
        let xt = bounds.trial_point(x, d, alpha);
        match ev.eval(&xt) {
            None => {
                hi = Some((alpha, f64::INFINITY));
                break;
            }
            Some((v, g)) => {
                let dphi = dot(&g, d);
                let s = Step { alpha, x: xt, value: v, gradient: g };
                consider(&s, &mut fallback);
                if v > f0 + C1 * alpha * dphi0 || (steps > 1 && v >= lo.1) {
                    hi = Some((alpha, v));
                    break;
                }
                if dphi.abs() <= -C2 * dphi0 {
                    return Some(s);
                }
                if dphi >= 0.0 {
                    hi = Some(lo.0).map(|a| (a, lo.1));
                    lo = (alpha, v, dphi);
                    break;
                }
                if alpha >= alpha_max {
                    // Still descending at the wall.
                    return Some(s);
                }
                lo = (alpha, v, dphi);
                alpha = (2.0 * alpha).min(alpha_max);
            }
        }
    }

    let Some((mut a_hi, mut f_hi)) = hi else {
        return fallback;
    };

    // Zoom.
    while steps < max_steps {
        steps += 1;
        let (a_lo, f_lo, g_lo) = lo;
        let width = a_hi - a_lo;
        // Quadratic interpolation through (a_lo, f_lo, g_lo) and (a_hi, f_hi),
        // safeguarded into the interior of the bracket.
        let mut a = if f_hi.is_finite() {
            let denom = 2.0 * (f_hi - f_lo - g_lo * width);
            if denom > 0.0 {
                a_lo - g_lo * width * width / denom
            } else {
                a_lo + 0.5 * width
            }
        } else {
            a_lo + 0.5 * width
        };
        let (left, right) = if width > 0.0 {
            (a_lo + 0.1 * width, a_hi - 0.1 * width)
        } else {
            (a_hi - 0.1 * width, a_lo + 0.1 * width)
        };
        if !(a >= left && a <= right) {
            a = a_lo + 0.5 * width;
        }
        if (a - a_lo).abs() < 1e-16 * a_lo.abs().max(1e-16) {
            break;
        }

        let xt = bounds.trial_point(x, d, a);
        match ev.eval(&xt) {
            None => {
                a_hi = a;
                f_hi = f64::INFINITY;
            }
            Some((v, g)) => {
                let dphi = dot(&g, d);
                let s = Step { alpha: a, x: xt, value: v, gradient: g };
                consider(&s, &mut fallback);
                if v > f0 + C1 * a * dphi0 || v >= f_lo {
                    a_hi = a;
                    f_hi = v;
                } else {
                    if dphi.abs() <= -C2 * dphi0 {
                        return Some(s);
                    }
                    if dphi * (a_hi - a_lo) >= 0.0 {
                        a_hi = a_lo;
                        f_hi = f_lo;
                    }
                    lo = (a, v, dphi);
                }
            }
        }
    }
    fallback
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient.
pub fn minimize<F>(f: F, x0: Vec<f64>, config: &LbfgsConfig) -> Result<Minimum, OptimError>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    minimize_in_box(f, x0, &vec![f64::NEG_INFINITY; n], &vec![f64::INFINITY; n], config)
}

/// Minimizes `f` over the box `lower <= x <= upper`; `x0` is clamped into
/// the box first.
pub fn minimize_in_box<F>(
    f: F,
    x0: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    config: &LbfgsConfig,
) -> Result<Minimum, OptimError>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let bounds = Bounds { lower, upper };
    let x0: Vec<f64> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let mut ev = Evaluator { f, count: 0 };
    let (mut fx, mut gx) = ev.eval(&x0).ok_or(OptimError::InvalidStart)?;
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut quiet = 0;
    let mut iterations = 0;

    let steepest = |x: &[f64], g: &[f64]| -> (Vec<f64>, f64) {
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        bounds.project(x, &mut d);
        let dphi = dot(g, &d);
        (d, dphi)
    };

    let termination = loop {
        if bounds.projected_gradient_norm(&x, &gx) <= config.grad_tol * (1.0 + fx.abs()) {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iter {
            break Termination::MaxIterations;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut q = gx.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        bounds.project(&x, &mut d);
        let mut dphi0 = dot(&gx, &d);
        if dphi0.is_nan() || dphi0 >= 0.0 {
            history.clear();
            (d, dphi0) = steepest(&x, &gx);
        }
        let alpha_init = if history.is_empty() {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };

        let search = |ev: &mut Evaluator<F>, d: &[f64], dphi0: f64, alpha_init: f64| {
            let alpha_max = bounds.max_step(&x, d);
            line_search(ev, &bounds, &x, fx, dphi0, d, alpha_init, alpha_max, config.max_line_search)
        };
        let step = match search(&mut ev, &d, dphi0, alpha_init) {
            Some(s) => s,
            None if !history.is_empty() => {
                // Retry once from steepest descent with a fresh memory.
                history.clear();
                let (d, dphi0) = steepest(&x, &gx);
                match search(&mut ev, &d, dphi0, (1.0 / inf_norm(&d)).min(1.0)) {
                    Some(s) => s,
                    None => break Termination::LineSearchStalled,
                }
            }
            None => break Termination::LineSearchStalled,
        };

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.gradient.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let decrease = fx - step.value;
        debug_assert!(step.alpha > 0.0);
        x = step.x;
        fx = step.value;
        gx = step.gradient;

        if decrease <= config.value_tol * (1.0 + fx.abs()) {
            quiet += 1;
            if quiet >= config.patience {
                break Termination::ValueTolerance;
            }
        } else {
            quiet = 0;
        }
    };

    Ok(Minimum {
        x,
        value: fx,
        gradient: gx,
        iterations,
        evaluations: ev.count,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Some((f, g))
    }

    #[test]
    fn rosenbrock_minimum() {
        let m = minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let scales: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let f = |x: &[f64]| {
            let v = x.iter().zip(&scales).map(|(xi, s)| s * (xi - 1.0).powi(2)).sum();
            let g = x.iter().zip(&scales).map(|(xi, s)| 2.0 * s * (xi - 1.0)).collect();
            Some((v, g))
        };
        let m = minimize(f, vec![0.0; 12], &LbfgsConfig::default()).unwrap();
        assert_eq!(m.termination, Termination::GradientTolerance);
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn respects_infeasible_region() {
        // Minimum of (x-3)^2 lies outside the box x <= 2.
        let f = |x: &[f64]| {
            if x[0] > 2.0 {
                None
            } else {
                Some(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]))
            }
        };
        let m = minimize(f, vec![0.0], &LbfgsConfig::default()).unwrap();
        assert!(m.x[0] <= 2.0 && m.x[0] > 1.9, "{}", m.x[0]);
    }

    #[test]
    fn stops_on_an_active_bound() {
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let m = minimize_in_box(f, vec![0.0, 5.0], &[-1.0, -10.0], &[2.0, 10.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(m.termination, Termination::GradientTolerance);
        assert_eq!(m.x[0], 2.0);
        assert!((m.x[1] + 1.0).abs() < 1e-7);
        assert!(m.evaluations < 30, "{}", m.evaluations);
    }

    #[test]
    fn invalid_start() {
        let f = |_: &[f64]| None;
        assert_eq!(
            minimize(f, vec![0.0], &LbfgsConfig::default()).unwrap_err(),
            OptimError::InvalidStart
        );
    }
}
