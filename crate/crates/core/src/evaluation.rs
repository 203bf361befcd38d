//! Forecast accuracy: single-curve RMSE and the rolling-window protocol.
//!
//! For a horizon `h`, window `w` trains on years up to `t_m + w` and scores the
//! forecast of year `t_m + w + h`. The reported RMSE pools the squared errors
//! of every age in every window before taking the root.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::demography::{fit_surface, DemographicSurface};
use crate::gp::FitConfig;
use crate::lee_carter::{fit_lee_carter, forecast_lc};

pub type ModelError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {predicted} predicted vs {actual} actual values")]
    Shape { predicted: usize, actual: usize },

    #[error("deepest window needs year {needed} but data end in {available}")]
    WindowOverrun { needed: i32, available: i32 },

    #[error("actual value missing for age {age} in {year}")]
    MissingActual { year: i32, age: u32 },

    #[error("invalid evaluation request: {0}")]
    InvalidRequest(String),

    #[error("model {model} failed for training end {train_end}: {source}")]
    Model {
        model: String,
        train_end: i32,
        source: ModelError,
    },
}

/// Root mean squared difference between two curves.
pub fn rmse_curve(predicted: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    Ok((sum_squared_error(predicted, actual)? / actual.len() as f64).sqrt())
}

fn sum_squared_error(predicted: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    if predicted.len() != actual.len() || actual.is_empty() {
        return Err(EvalError::Shape {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    Ok(predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum())
}

/// A model that can be trained on a surface and produce log-rate curves.
pub trait Forecaster: Sync {
    fn id(&self) -> &str;

    /// One curve per target year, each ordered like `train.ages()`.
    fn forecast(&self, train: &DemographicSurface, targets: &[i32]) -> Result<Vec<Vec<f64>>, ModelError>;
}

/// Per-age Gaussian process regression.
#[derive(Debug, Clone)]
pub struct GprForecaster {
    pub config: FitConfig,
}

impl Forecaster for GprForecaster {
    fn id(&self) -> &str {
        "gpr"
    }

    fn forecast(&self, train: &DemographicSurface, targets: &[i32]) -> Result<Vec<Vec<f64>>, ModelError> {
        let model = fit_surface(train, &self.config)?;
        Ok(model.forecast_years(targets)?.into_iter().map(|c| c.mean).collect())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LeeCarterForecaster;

impl Forecaster for LeeCarterForecaster {
    fn id(&self) -> &str {
        "lc"
    }

    fn forecast(&self, train: &DemographicSurface, targets: &[i32]) -> Result<Vec<Vec<f64>>, ModelError> {
        let model = fit_lee_carter(train)?;
        targets
            .iter()
            .map(|&y| {
                let h = u32::try_from(y - model.last_year())
                    .ok()
                    .filter(|h| *h >= 1)
                    .ok_or_else(|| format!("target {y} is not after the training data"))?;
                Ok(forecast_lc(&model, h, 0.05)?.mean)
            })
            .collect()
    }
}

/// Training-end start year that fits `windows` windows and the longest
/// horizon into the data.
pub fn default_window_start(last_year: i32, max_horizon: u32, windows: usize) -> i32 {
    last_year - max_horizon as i32 - windows as i32 + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub horizon: u32,
    pub rmse: f64,
    pub windows: usize,
    /// RMSE of each window's single curve.
    pub per_window: Vec<f64>,
    /// Pooled sum of squared errors and the number of cells it covers.
    pub sse: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

/// Runs every model over every window. Fits run in parallel; the report is
/// assembled in (horizon, model) order regardless of scheduling.
pub fn rolling_window_evaluate(
    dataset: &str,
    surface: &DemographicSurface,
    models: &[&dyn Forecaster],
    horizons: &[u32],
    windows: usize,
    window_start: i32,
) -> Result<EvaluationReport, EvalError> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(EvalError::InvalidRequest("horizons must be non-empty and positive".into()));
    }
    if windows == 0 || models.is_empty() {
        return Err(EvalError::InvalidRequest("need at least one window and one model".into()));
    }
    let years = surface.years();
    let (first, last) = (years[0], years[years.len() - 1]);
    let max_h = *horizons.iter().max().expect("non-empty");
    let needed = window_start + windows as i32 - 1 + max_h as i32;
    if needed > last {
        return Err(EvalError::WindowOverrun { needed, available: last });
    }
    if window_start < first {
        return Err(EvalError::InvalidRequest(format!(
            "window start {window_start} precedes the first year {first}"
        )));
    }

    // Actual curves, checked up front so no fit is wasted.
    let actual = |year: i32| -> Result<Vec<f64>, EvalError> {
        let col = surface.column(year).expect("year within range");
        col.iter()
            .zip(surface.ages())
            .map(|(v, &age)| v.ok_or(EvalError::MissingActual { year, age }))
            .collect()
    };
    let mut actuals = Vec::with_capacity(windows);
    for w in 0..windows {
        let end = window_start + w as i32;
        actuals.push(horizons.iter().map(|&h| actual(end + h as i32)).collect::<Result<Vec<_>, _>>()?);
    }

    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..windows).map(move |w| (m, w))).collect();
    let forecasts: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(m, w)| {
            let end = window_start + w as i32;
            let model = models[m];
            let err = |source: ModelError| EvalError::Model {
                model: model.id().to_string(),
                train_end: end,
                source,
            };
            let train = surface.years_through(end).map_err(|e| err(e.into()))?;
            let targets: Vec<i32> = horizons.iter().map(|&h| end + h as i32).collect();
            let curves = model.forecast(&train, &targets).map_err(err)?;
            if curves.len() != targets.len() {
                return Err(err(format!("{} curves for {} targets", curves.len(), targets.len()).into()));
            }
            Ok(curves)
        })
        .collect::<Result<_, EvalError>>()?;

    let ages = surface.ages().len();
    let mut rows = Vec::new();
    for (hi, &h) in horizons.iter().enumerate() {
        for (m, model) in models.iter().enumerate() {
            let mut sse = 0.0;
            let mut per_window = Vec::with_capacity(windows);
            for w in 0..windows {
                let e = sum_squared_error(&forecasts[m * windows + w][hi], &actuals[w][hi])?;
                per_window.push((e / ages as f64).sqrt());
                sse += e;
            }
            let cells = windows * ages;
            rows.push(ReportRow {
                dataset: dataset.to_string(),
                model: model.id().to_string(),
                horizon: h,
                rmse: (sse / cells as f64).sqrt(),
                windows,
                per_window,
                sse,
                cells,
            });
        }
    }
    Ok(EvaluationReport { rows })
}

impl EvaluationReport {
    pub fn merge(reports: impl IntoIterator<Item = EvaluationReport>) -> Self {
        Self {
            rows: reports.into_iter().flat_map(|r| r.rows).collect(),
        }
    }

    pub fn get(&self, dataset: &str, model: &str, horizon: u32) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.model == model && r.horizon == horizon)
    }

    /// `dataset,model,h,rmse,windows`, one row per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,model,h,rmse,windows\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.dataset, r.model, r.horizon, r.rmse, r.windows);
        }
        out
    }

    /// Aligned text table: one block per horizon, datasets down, models across.
    pub fn to_table(&self) -> String {
        let mut horizons: Vec<u32> = self.rows.iter().map(|r| r.horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();
        let datasets = unique(self.rows.iter().map(|r| r.dataset.as_str()));
        let models = unique(self.rows.iter().map(|r| r.model.as_str()));
        let label_w = datasets.iter().map(|d| d.len()).max().unwrap_or(0).max("dataset".len());
        let col_w = models.iter().map(|m| m.len()).max().unwrap_or(0).max(8);

        let mut out = String::new();
        for (i, &h) in horizons.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "h = {h}");
            let _ = write!(out, "{:<label_w$}", "dataset");
            for m in &models {
                let _ = write!(out, "  {m:>col_w$}");
            }
            out.push('\n');
            for d in &datasets {
                let _ = write!(out, "{d:<label_w$}");
                for m in &models {
                    match self.get(d, m, h) {
                        Some(r) => {
                            let _ = write!(out, "  {:>col_w$.4}", r.rmse);
                        }
                        None => {
                            let _ = write!(out, "  {:>col_w$}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}
