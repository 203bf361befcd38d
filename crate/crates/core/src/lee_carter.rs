//! Lee-Carter baseline: `log m(x, t) = a_x + b_x k_t`, with `k_t` extrapolated
//! as a random walk with drift.
//!
//! Parameters are normalized so that `sum(b) = 1` and `sum(k) = 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demography::{DemographicSurface, ValueScale};
use crate::gp::normal_quantile_for;

#[derive(Debug, Error, PartialEq)]
pub enum LeeCarterError {
    #[error("Lee-Carter needs a complete surface, {missing} cells are missing")]
    IncompleteSurface { missing: usize },

    #[error("Lee-Carter needs at least 3 years, got {0}")]
    TooFewYears(usize),

    #[error("Lee-Carter is fitted to log rates")]
    WrongScale,

    #[error("age loadings sum to zero, normalization is undefined")]
    DegenerateLoadings,

    #[error("invalid forecast request: {0}")]
    InvalidForecast(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeeCarterModel {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub k: Vec<f64>,
    pub drift: f64,
    pub drift_se: f64,
    pub sigma_rw: f64,
}

impl LeeCarterModel {
    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("fitted model has years")
    }

    /// `a_x + b_x k_t` over the training grid.
    pub fn fitted(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.a.len(), self.k.len(), |i, j| self.a[i] + self.b[i] * self.k[j])
    }
}

/// Fits `a`, `b`, `k` from the leading singular triple of the row-centered
/// log-rate matrix.
pub fn fit_lee_carter(surface: &DemographicSurface) -> Result<LeeCarterModel, LeeCarterError> {
    if surface.scale() != ValueScale::LogRate {
        return Err(LeeCarterError::WrongScale);
    }
    let missing = surface.missing_count();
    if missing > 0 {
        return Err(LeeCarterError::IncompleteSurface { missing });
    }
    let y = surface.values();
    let (m, n) = y.shape();
    if n < 3 {
        return Err(LeeCarterError::TooFewYears(n));
    }

    let a: Vec<f64> = (0..m).map(|i| y.row(i).mean()).collect();
    let centered = DMatrix::from_fn(m, n, |i, j| y[(i, j)] - a[i]);
    let scale = centered.amax();

    let (b, k) = if scale == 0.0 {
        (vec![1.0 / m as f64; m], vec![0.0; n])
    } else {
        let svd = centered.svd(true, true);
        let lead = svd.singular_values.imax();
        let s = svd.singular_values[lead];
        let u = svd.u.as_ref().expect("u requested").column(lead).into_owned();
        let v = svd.v_t.as_ref().expect("v requested").row(lead).transpose();
        if s <= 1e-14 * scale * ((m * n) as f64).sqrt() {
            (vec![1.0 / m as f64; m], vec![0.0; n])
        } else {
            let usum = u.sum();
            if usum.abs() <= 1e-12 * u.abs().sum() {
                return Err(LeeCarterError::DegenerateLoadings);
            }
            let b: Vec<f64> = u.iter().map(|ui| ui / usum).collect();
            let mut k: Vec<f64> = v.iter().map(|vj| s * vj * usum).collect();
            // Row centering makes v orthogonal to 1 in exact arithmetic.
            let kbar = k.iter().sum::<f64>() / n as f64;
            k.iter_mut().for_each(|kj| *kj -= kbar);
            (b, k)
        }
    };

    let steps = (n - 1) as f64;
    let drift = (k[n - 1] - k[0]) / steps;
    let ss: f64 = k.windows(2).map(|w| (w[1] - w[0] - drift).powi(2)).sum();
    let sigma_rw = (ss / (n - 2) as f64).sqrt();
    let drift_se = sigma_rw / steps.sqrt();

    Ok(LeeCarterModel {
        ages: surface.ages().to_vec(),
        years: surface.years().to_vec(),
        a,
        b,
        k,
        drift,
        drift_se,
        sigma_rw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcForecast {
    pub year: i32,
    pub horizon: u32,
    pub k_hat: f64,
    pub k_variance: f64,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// `h`-step forecast with a `1 - alpha` interval from the uncertainty of `k`.
pub fn forecast_lc(model: &LeeCarterModel, h: u32, alpha: f64) -> Result<LcForecast, LeeCarterError> {
    if h == 0 {
        return Err(LeeCarterError::InvalidForecast("horizon must be at least 1".into()));
    }
    let z = normal_quantile_for(alpha).map_err(|e| LeeCarterError::InvalidForecast(e.to_string()))?;
    let hf = f64::from(h);
    let k_hat = model.k[model.k.len() - 1] + hf * model.drift;
    let k_variance = hf * model.sigma_rw.powi(2) + (hf * model.drift_se).powi(2);
    let k_sd = k_variance.sqrt();
    let mean: Vec<f64> = model.a.iter().zip(&model.b).map(|(a, b)| a + b * k_hat).collect();
    let half: Vec<f64> = model.b.iter().map(|b| z * b.abs() * k_sd).collect();
    Ok(LcForecast {
        year: model.last_year() + h as i32,
        horizon: h,
        k_hat,
        k_variance,
        lower: mean.iter().zip(&half).map(|(m, w)| m - w).collect(),
        upper: mean.iter().zip(&half).map(|(m, w)| m + w).collect(),
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demography::SurfaceKind;

    fn surface(ages: u32, years: i32, f: impl FnMut(u32, i32) -> f64) -> DemographicSurface {
        DemographicSurface::from_fn(
            SurfaceKind::Fertility,
            ValueScale::LogRate,
            (0..ages).collect(),
            (2000..2000 + years).collect(),
            f,
        )
        .unwrap()
    }

    #[test]
    fn constant_in_time() {
        let s = surface(4, 6, |a, _| -5.0 + f64::from(a));
        let m = fit_lee_carter(&s).unwrap();
        assert!(m.k.iter().all(|k| *k == 0.0));
        assert_eq!(m.drift, 0.0);
        assert_eq!(m.a, vec![-5.0, -4.0, -3.0, -2.0]);
        let f = forecast_lc(&m, 7, 0.05).unwrap();
        assert_eq!(f.mean, m.a);
    }

    #[test]
    fn linear_index_extrapolates_exactly() {
        let b = [0.1, 0.2, 0.3, 0.4];
        let s = surface(4, 10, |a, y| -4.0 + b[a as usize] * -f64::from(y - 2000));
        let m = fit_lee_carter(&s).unwrap();
        assert!(m.sigma_rw < 1e-12);
        let f = forecast_lc(&m, 5, 0.05).unwrap();
        for (i, bi) in b.iter().enumerate() {
            let truth = -4.0 + bi * -14.0;
            assert!((f.mean[i] - truth).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_incomplete_and_short() {
        let s = surface(3, 5, |_, _| -2.0);
        let mut missing = s.missing().clone();
        missing[(1, 1)] = true;
        let masked = DemographicSurface::new(
            s.kind(),
            s.scale(),
            s.ages().to_vec(),
            s.years().to_vec(),
            s.values().clone(),
            missing,
        )
        .unwrap();
        assert_eq!(
            fit_lee_carter(&masked),
            Err(LeeCarterError::IncompleteSurface { missing: 1 })
        );
        assert_eq!(fit_lee_carter(&surface(3, 2, |_, _| 0.0)), Err(LeeCarterError::TooFewYears(2)));
    }

    #[test]
    fn forecast_rejects_zero_horizon() {
        let m = fit_lee_carter(&surface(3, 5, |a, y| f64::from(a) * f64::from(y - 2000))).unwrap();
        assert!(forecast_lc(&m, 0, 0.05).is_err());
        assert!(forecast_lc(&m, 1, 1.5).is_err());
    }
}
