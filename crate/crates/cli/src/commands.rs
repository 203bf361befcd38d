use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use demogp::data_io::{self, DataError, InputFormat};
use demogp::demography::{fit_surface, DemographicSurface, SurfaceError, SurfaceModel, CURVE_ALPHA};
use demogp::evaluation::{
    default_window_start, rolling_window_evaluate, EvalError, Forecaster, GprForecaster, LeeCarterForecaster,
};
use demogp::lee_carter::{fit_lee_carter, forecast_lc};
use thiserror::Error;

use crate::args::{Common, EvaluateArgs, FitArgs, ForecastArgs, ModelId};
use crate::output::write_atomic;
use crate::svg::{self, CurvePlot};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },

    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(_) => 1,
            _ => 2,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    write_atomic(path, contents.as_ref()).map_err(io_error(path))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Input surface on the log scale, restricted to the kind's age range.
/// Returns the full surface and the part up to `--train-end`.
fn load(common: &Common) -> Result<(DemographicSurface, DemographicSurface), CliError> {
    let path = &common.input;
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let data_err = |source| CliError::Data {
        path: path.clone(),
        source,
    };
    let format = match common.format {
        Some(f) => f,
        None => {
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            InputFormat::detect(first)
        }
    };
    let raw = data_io::parse_rates(BufReader::new(text.as_bytes()), format, &common.column, common.kind)
        .map_err(data_err)?;
    let full = data_io::log_transform(&data_io::truncate_ages(&raw, common.kind).map_err(data_err)?);
    let train = match common.train_end {
        Some(y) => full
            .years_through(y)
            .map_err(|e| CliError::Usage(format!("--train-end {y}: {e}")))?,
        None => full.clone(),
    };
    log::info!(
        "{}: {} ages x {} years ({}-{}), {} missing cells",
        path.display(),
        train.ages().len(),
        train.years().len(),
        train.years()[0],
        train.years()[train.years().len() - 1],
        train.missing_count()
    );
    Ok((full, train))
}

fn fit_gpr(common: &Common, train: &DemographicSurface) -> Result<SurfaceModel, CliError> {
    let config = common.fit_config();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!("fitting {} ages with {} restarts", train.ages().len(), config.restarts);
    let model = fit_surface(train, &config).map_err(|e| CliError::Model(e.to_string()))?;
    for f in model.failures() {
        log::warn!("age {} not fitted: {}", f.age, f.reason);
    }
    Ok(model)
}

fn gpr_summary(model: &SurfaceModel) -> String {
    let mut out = String::from("age,status,log_likelihood,noise_sd,iterations,successful_restarts\n");
    for (age, m) in model.iter() {
        match m {
            Some(m) => {
                let d = m.diagnostics();
                let _ = writeln!(
                    out,
                    "{age},ok,{},{},{},{}",
                    m.log_likelihood(),
                    m.noise_var().sqrt(),
                    d.iterations,
                    d.successful_restarts
                );
            }
            None => {
                let _ = writeln!(out, "{age},failed,,,,");
            }
        }
    }
    out
}

fn models(common: &Common) -> Vec<ModelId> {
    let mut ids = common.model.clone();
    ids.dedup();
    ids
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let common = &args.common;
    let (_, train) = load(common)?;
    for id in models(common) {
        match id {
            ModelId::Gpr => {
                let model = fit_gpr(common, &train)?;
                write_file(&common.out.join("gpr_model.json"), model.to_json())?;
                write_file(&common.out.join("gpr_fit_summary.csv"), gpr_summary(&model))?;
                println!(
                    "gpr: {} of {} ages fitted",
                    model.ages().len() - model.failures().len(),
                    model.ages().len()
                );
            }
            ModelId::Lc => {
                let model = fit_lee_carter(&train).map_err(|e| CliError::Model(format!("lc: {e}")))?;
                let json = serde_json::to_string_pretty(&model).expect("model serializes");
                write_file(&common.out.join("lc_model.json"), json)?;
                let mut summary = String::from("age,a,b\n");
                for ((age, a), b) in model.ages.iter().zip(&model.a).zip(&model.b) {
                    let _ = writeln!(summary, "{age},{a},{b}");
                }
                write_file(&common.out.join("lc_fit_summary.csv"), summary)?;
                println!("lc: drift {:.6}, random-walk sd {:.6}", model.drift, model.sigma_rw);
            }
        }
    }
    Ok(())
}

struct Curve {
    year: i32,
    ages: Vec<u32>,
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn curve_csv(c: &Curve) -> String {
    let mut out = String::from("age,mean,lower95,upper95\n");
    for i in 0..c.ages.len() {
        let _ = writeln!(out, "{},{},{},{}", c.ages[i], c.mean[i], c.lower[i], c.upper[i]);
    }
    out
}

fn read_model(path: &Path, common: &Common) -> Result<SurfaceModel, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let model = SurfaceModel::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if model.kind() != common.kind {
        return Err(CliError::Usage(format!(
            "{} holds a {} model, --kind is {}",
            path.display(),
            model.kind(),
            common.kind
        )));
    }
    Ok(model)
}

fn gpr_curves(args: &ForecastArgs, train: &DemographicSurface) -> Result<Vec<Curve>, CliError> {
    let model = match &args.model_file {
        Some(path) => read_model(path, &args.common)?,
        None => fit_gpr(&args.common, train)?,
    };
    let curves = model.forecast_years(&args.year).map_err(|e| match e {
        SurfaceError::MissingAgeModel(_) => CliError::Model(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    Ok(curves
        .into_iter()
        .map(|c| Curve {
            year: c.year,
            ages: c.ages,
            mean: c.mean,
            lower: c.lower,
            upper: c.upper,
        })
        .collect())
}

fn lc_curves(args: &ForecastArgs, train: &DemographicSurface) -> Result<Vec<Curve>, CliError> {
    let model = fit_lee_carter(train).map_err(|e| CliError::Model(format!("lc: {e}")))?;
    let last = model.last_year();
    args.year
        .iter()
        .map(|&year| {
            let h = u32::try_from(year - last)
                .ok()
                .filter(|h| *h >= 1)
                .ok_or_else(|| CliError::Usage(format!("lc forecasts need years after {last}, got {year}")))?;
            let f = forecast_lc(&model, h, CURVE_ALPHA).map_err(|e| CliError::Model(e.to_string()))?;
            Ok(Curve {
                year,
                ages: model.ages.clone(),
                mean: f.mean,
                lower: f.lower,
                upper: f.upper,
            })
        })
        .collect()
}

pub fn forecast(args: &ForecastArgs) -> Result<(), CliError> {
    let common = &args.common;
    let (full, train) = load(common)?;
    for id in models(common) {
        let curves = match id {
            ModelId::Gpr => gpr_curves(args, &train)?,
            ModelId::Lc => lc_curves(args, &train)?,
        };
        for c in &curves {
            let stem = format!("forecast_{}_{}", id.as_str(), c.year);
            let csv_path = common.out.join(format!("{stem}.csv"));
            write_file(&csv_path, curve_csv(c))?;
            println!("{}", csv_path.display());
            if args.svg {
                let observed: Vec<Option<f64>> = c.ages.iter().map(|&a| full.get(a, c.year)).collect();
                let plot = CurvePlot {
                    title: format!("{} {} log rates, {} forecast", common.kind, c.year, id.as_str()),
                    ages: &c.ages,
                    observed: &observed,
                    mean: &c.mean,
                    lower: &c.lower,
                    upper: &c.upper,
                };
                let svg_path = common.out.join(format!("{stem}.svg"));
                write_file(&svg_path, svg::render(&plot))?;
                println!("{}", svg_path.display());
            }
        }
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let common = &args.common;
    let (_, surface) = load(common)?;
    let config = common.fit_config();
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let gpr = GprForecaster { config };
    let lc = LeeCarterForecaster;
    let forecasters: Vec<&dyn Forecaster> = models(common)
        .into_iter()
        .map(|id| match id {
            ModelId::Gpr => &gpr as &dyn Forecaster,
            ModelId::Lc => &lc as &dyn Forecaster,
        })
        .collect();
    let windows = args.windows as usize;
    let max_h = *args.horizons.iter().max().expect("clap requires a horizon");
    let last = surface.years()[surface.years().len() - 1];
    let start = args.window_start.unwrap_or_else(|| default_window_start(last, max_h, windows));
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        common
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into())
    });
    log::info!("{windows} windows from training end {start}, horizons {:?}", args.horizons);
    let report = rolling_window_evaluate(&dataset, &surface, &forecasters, &args.horizons, windows, start)
        .map_err(|e| match e {
            EvalError::Model { .. } => CliError::Model(e.to_string()),
            other => CliError::Usage(other.to_string()),
        })?;
    let table = report.to_table();
    write_file(&common.out.join("evaluation.csv"), report.to_csv())?;
    write_file(&common.out.join("evaluation.txt"), &table)?;
    print!("{table}");
    Ok(())
}

