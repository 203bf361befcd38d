//! Age-by-year rate surfaces and per-age Gaussian process curve forecasts.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{self, FitConfig, GPModel, GpError, GpModelRecord, TrainingSet};

/// Fraction of ages allowed to fail before a surface fit is rejected.
pub const MAX_UNFITTED_FRACTION: f64 = 0.10;
/// Minimum observed years per age, on top of the knot count.
pub const MIN_OBSERVATIONS: usize = 8;

const SURFACE_FORMAT: &str = "demogp/surface-model";
const SURFACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("invalid surface: {0}")]
    Shape(String),

    #[error("surface holds {found:?} values, expected {expected:?}")]
    WrongScale { expected: ValueScale, found: ValueScale },

    #[error("{} of {total} ages could not be fitted (first: age {}: {})", .unfitted.len(), .unfitted[0].age, .unfitted[0].reason)]
    SurfaceFitFailed { total: usize, unfitted: Vec<AgeFailure> },

    #[error("no fitted model for age {0}")]
    MissingAgeModel(u32),

    #[error(transparent)]
    Gp(#[from] GpError),

    #[error("cannot read surface model: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Mortality,
    Fertility,
}

impl SurfaceKind {
    /// Inclusive age range used for fitting and evaluation.
    pub fn age_range(self) -> (u32, u32) {
        match self {
            SurfaceKind::Mortality => (0, 100),
            SurfaceKind::Fertility => (15, 45),
        }
    }

    pub fn age_count(self) -> usize {
        let (lo, hi) = self.age_range();
        (hi - lo + 1) as usize
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurfaceKind::Mortality => "mortality",
            SurfaceKind::Fertility => "fertility",
        })
    }
}

impl FromStr for SurfaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mortality" => Ok(SurfaceKind::Mortality),
            "fertility" => Ok(SurfaceKind::Fertility),
            other => Err(format!("unknown kind `{other}` (expected mortality or fertility)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueScale {
    Rate,
    LogRate,
}

/// Age x year grid with a missing-value mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DemographicSurface {
    kind: SurfaceKind,
    scale: ValueScale,
    ages: Vec<u32>,
    years: Vec<i32>,
    /// `ages.len() x years.len()`; missing cells hold NaN.
    values: DMatrix<f64>,
    missing: DMatrix<bool>,
    /// Ages that were recorded as open-ended groups such as `110+`.
    open_ages: Vec<u32>,
}

impl DemographicSurface {
    /// Builds a surface; `values` is indexed `(age, year)` and cells where
    /// `missing` is true are ignored.
    pub fn new(
        kind: SurfaceKind,
        scale: ValueScale,
        ages: Vec<u32>,
        years: Vec<i32>,
        values: DMatrix<f64>,
        missing: DMatrix<bool>,
    ) -> Result<Self, SurfaceError> {
        if ages.is_empty() || years.is_empty() {
            return Err(SurfaceError::Shape("surface has no ages or no years".into()));
        }
        if ages.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SurfaceError::Shape("ages must be strictly increasing".into()));
        }
        if years.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SurfaceError::Shape("years must be strictly increasing".into()));
        }
        let shape = (ages.len(), years.len());
        if values.shape() != shape || missing.shape() != shape {
            return Err(SurfaceError::Shape(format!(
                "values {:?} and mask {:?} must both be {shape:?}",
                values.shape(),
                missing.shape()
            )));
        }
        let mut values = values;
        for (v, &m) in values.iter_mut().zip(missing.iter()) {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(SurfaceError::Shape("observed cells must be finite".into()));
            }
        }
        Ok(Self {
            kind,
            scale,
            ages,
            years,
            values,
            missing,
            open_ages: Vec::new(),
        })
    }

    /// Fully observed surface from a closure over `(age, year)`.
    pub fn from_fn(
        kind: SurfaceKind,
        scale: ValueScale,
        ages: Vec<u32>,
        years: Vec<i32>,
        mut f: impl FnMut(u32, i32) -> f64,
    ) -> Result<Self, SurfaceError> {
        let values = DMatrix::from_fn(ages.len(), years.len(), |i, j| f(ages[i], years[j]));
        let missing = DMatrix::from_element(ages.len(), years.len(), false);
        Self::new(kind, scale, ages, years, values, missing)
    }

    pub fn with_open_ages(mut self, open_ages: Vec<u32>) -> Self {
        self.open_ages = open_ages;
        self
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn scale(&self) -> ValueScale {
        self.scale
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn open_ages(&self) -> &[u32] {
        &self.open_ages
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn age_index(&self, age: u32) -> Option<usize> {
        self.ages.binary_search(&age).ok()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.binary_search(&year).ok()
    }

    /// Observed value at `(age, year)`, `None` if masked or out of range.
    pub fn get(&self, age: u32, year: i32) -> Option<f64> {
        let (i, j) = (self.age_index(age)?, self.year_index(year)?);
        (!self.missing[(i, j)]).then(|| self.values[(i, j)])
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    /// Observed `(year, value)` pairs of one age row.
    pub fn row_observations(&self, age_index: usize) -> (Vec<f64>, Vec<f64>) {
        self.years
            .iter()
            .enumerate()
            .filter(|&(j, _)| !self.missing[(age_index, j)])
            .map(|(j, &y)| (f64::from(y), self.values[(age_index, j)]))
            .unzip()
    }

    /// Column for one year across all ages, `None` where masked.
    pub fn column(&self, year: i32) -> Option<Vec<Option<f64>>> {
        let j = self.year_index(year)?;
        Some(
            (0..self.ages.len())
                .map(|i| (!self.missing[(i, j)]).then(|| self.values[(i, j)]))
                .collect(),
        )
    }

    /// Sub-surface restricted to the given age and year index sets.
    fn select(&self, age_idx: &[usize], year_idx: &[usize]) -> Result<Self, SurfaceError> {
        let values = DMatrix::from_fn(age_idx.len(), year_idx.len(), |i, j| {
            self.values[(age_idx[i], year_idx[j])]
        });
        let missing = DMatrix::from_fn(age_idx.len(), year_idx.len(), |i, j| {
            self.missing[(age_idx[i], year_idx[j])]
        });
        let ages: Vec<u32> = age_idx.iter().map(|&i| self.ages[i]).collect();
        let open_ages = self.open_ages.iter().copied().filter(|a| ages.contains(a)).collect();
        Ok(Self::new(
            self.kind,
            self.scale,
            ages,
            year_idx.iter().map(|&j| self.years[j]).collect(),
            values,
            missing,
        )?
        .with_open_ages(open_ages))
    }

    /// Years `<= last_year`.
    pub fn years_through(&self, last_year: i32) -> Result<Self, SurfaceError> {
        let years: Vec<usize> = (0..self.years.len()).filter(|&j| self.years[j] <= last_year).collect();
        let ages: Vec<usize> = (0..self.ages.len()).collect();
        self.select(&ages, &years)
    }

    /// Ages within the inclusive range.
    pub fn ages_between(&self, lo: u32, hi: u32) -> Result<Self, SurfaceError> {
        let ages: Vec<usize> = (0..self.ages.len())
            .filter(|&i| self.ages[i] >= lo && self.ages[i] <= hi)
            .collect();
        let years: Vec<usize> = (0..self.years.len()).collect();
        self.select(&ages, &years)
    }

    /// Removes one age row.
    pub fn without_age(&self, age: u32) -> Result<Self, SurfaceError> {
        let ages: Vec<usize> = (0..self.ages.len()).filter(|&i| self.ages[i] != age).collect();
        let years: Vec<usize> = (0..self.years.len()).collect();
        self.select(&ages, &years)
    }

    /// Same cells with new values (mask unchanged where `f` returns finite values).
    pub fn map_values(&self, scale: ValueScale, f: impl Fn(f64) -> Option<f64>) -> Self {
        let mut values = self.values.clone();
        let mut missing = self.missing.clone();
        for (v, m) in values.iter_mut().zip(missing.iter_mut()) {
            if *m {
                continue;
            }
            match f(*v) {
                Some(x) if x.is_finite() => *v = x,
                _ => {
                    *v = f64::NAN;
                    *m = true;
                }
            }
        }
        Self {
            kind: self.kind,
            scale,
            ages: self.ages.clone(),
            years: self.years.clone(),
            values,
            missing,
            open_ages: self.open_ages.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeFailure {
    pub age: u32,
    pub reason: String,
}

/// Seed for one age, independent of the order ages are processed in.
pub fn age_seed(seed: u64, age: u32) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed ^ (u64::from(age).wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One fitted Gaussian process per age.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    kind: SurfaceKind,
    config: FitConfig,
    ages: Vec<u32>,
    models: Vec<Option<GPModel>>,
    failures: Vec<AgeFailure>,
}

fn fit_age(surface: &DemographicSurface, index: usize, config: &FitConfig) -> Result<GPModel, String> {
    let (times, values) = surface.row_observations(index);
    let need = config.knots.max(MIN_OBSERVATIONS);
    if times.len() < need {
        return Err(format!("{} observed years, need {need}", times.len()));
    }
    let train = TrainingSet::new(times, values).map_err(|e| e.to_string())?;
    let age_config = FitConfig {
        seed: age_seed(config.seed, surface.ages()[index]),
        ..*config
    };
    gp::fit(&train, &age_config).map_err(|e| e.to_string())
}

/// Fits every age row independently (in parallel). Ages that cannot be
/// fitted are recorded; more than 10% failures is an error.
pub fn fit_surface(surface: &DemographicSurface, config: &FitConfig) -> Result<SurfaceModel, SurfaceError> {
    if surface.scale() != ValueScale::LogRate {
        return Err(SurfaceError::WrongScale {
            expected: ValueScale::LogRate,
            found: surface.scale(),
        });
    }
    config.validate()?;
    let results: Vec<Result<GPModel, String>> = (0..surface.ages().len())
        .into_par_iter()
        .map(|i| fit_age(surface, i, config))
        .collect();

    let mut models = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (r, &age) in results.into_iter().zip(surface.ages()) {
        match r {
            Ok(m) => models.push(Some(m)),
            Err(reason) => {
                log::warn!("age {age} not fitted: {reason}");
                failures.push(AgeFailure { age, reason });
                models.push(None);
            }
        }
    }
    let total = models.len();
    if failures.len() as f64 > MAX_UNFITTED_FRACTION * total as f64 {
        return Err(SurfaceError::SurfaceFitFailed {
            total,
            unfitted: failures,
        });
    }
    Ok(SurfaceModel {
        kind: surface.kind(),
        config: *config,
        ages: surface.ages().to_vec(),
        models,
        failures,
    })
}

/// Forecast log-rate curve for one year with a 95% band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveForecast {
    pub year: i32,
    pub ages: Vec<u32>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub variance: Vec<f64>,
}

impl CurveForecast {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }
}

/// Coverage complement of the reported band.
pub const CURVE_ALPHA: f64 = 0.05;

impl SurfaceModel {
    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn failures(&self) -> &[AgeFailure] {
        &self.failures
    }

    pub fn model(&self, age: u32) -> Option<&GPModel> {
        let i = self.ages.binary_search(&age).ok()?;
        self.models[i].as_ref()
    }

    /// `(age, model)` pairs, unfitted ages included as `None`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, Option<&GPModel>)> {
        self.ages.iter().copied().zip(self.models.iter().map(Option::as_ref))
    }

    pub fn forecast_curve(&self, year: i32) -> Result<CurveForecast, SurfaceError> {
        Ok(self.forecast_years(&[year])?.remove(0))
    }

    /// Curves for several target years, one predictive solve per age.
    pub fn forecast_years(&self, years: &[i32]) -> Result<Vec<CurveForecast>, SurfaceError> {
        if let Some(i) = self.models.iter().position(Option::is_none) {
            return Err(SurfaceError::MissingAgeModel(self.ages[i]));
        }
        let times: Vec<f64> = years.iter().map(|&y| f64::from(y)).collect();
        let per_age: Vec<(gp::PredictiveDistribution, Vec<gp::Interval>)> = self
            .models
            .iter()
            .flatten()
            .map(|m| {
                let pred = gp::predict(m, &times)?;
                let iv = gp::prediction_interval(&pred, CURVE_ALPHA)?;
                Ok((pred, iv))
            })
            .collect::<Result<_, GpError>>()?;

        Ok(years
            .iter()
            .enumerate()
            .map(|(j, &year)| CurveForecast {
                year,
                ages: self.ages.clone(),
                mean: per_age.iter().map(|(p, _)| p.mean[j]).collect(),
                lower: per_age.iter().map(|(_, iv)| iv[j].lower).collect(),
                upper: per_age.iter().map(|(_, iv)| iv[j].upper).collect(),
                variance: per_age.iter().map(|(p, _)| p.variance[j]).collect(),
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        let record = SurfaceModelRecord {
            format: SURFACE_FORMAT.into(),
            version: SURFACE_VERSION,
            kind: self.kind,
            config: self.config,
            ages: self.ages.clone(),
            models: self.models.iter().map(|m| m.as_ref().map(GPModel::to_record)).collect(),
            failures: self.failures.clone(),
        };
        serde_json::to_string_pretty(&record).expect("surface record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SurfaceError> {
        let record: SurfaceModelRecord =
            serde_json::from_str(s).map_err(|e| SurfaceError::Format(e.to_string()))?;
        if record.format != SURFACE_FORMAT || record.version != SURFACE_VERSION {
            return Err(SurfaceError::Format(format!(
                "unsupported format {} v{}",
                record.format, record.version
            )));
        }
        if record.models.len() != record.ages.len() {
            return Err(SurfaceError::Format("one model entry per age is required".into()));
        }
        let models = record
            .models
            .into_iter()
            .map(|m| m.map(GPModel::from_record).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            kind: record.kind,
            config: record.config,
            ages: record.ages,
            models,
            failures: record.failures,
        })
    }
}

/// Free-function form of [`SurfaceModel::forecast_curve`].
pub fn forecast_curve(model: &SurfaceModel, target_year: i32) -> Result<CurveForecast, SurfaceError> {
    model.forecast_curve(target_year)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SurfaceModelRecord {
    format: String,
    version: u32,
    kind: SurfaceKind,
    config: FitConfig,
    ages: Vec<u32>,
    models: Vec<Option<GpModelRecord>>,
    failures: Vec<AgeFailure>,
}
