//! Reading and writing rate tables.
//!
//! Two formats are understood:
//!
//! * `hmd`: whitespace-delimited text with a `Year Age <rate columns...>`
//!   header, possibly preceded by title lines. `.` marks a missing rate and a
//!   trailing `+` (or `-`) on the age marks an open age group.
//! * canonical CSV: header `year,age,rate`, one cell per line, empty rate
//!   for a missing value.
//!
//! Both accept LF or CRLF line endings. Numbers use a decimal point only.

use std::io::{self, BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::demography::{DemographicSurface, SurfaceError, SurfaceKind, ValueScale};

pub const MIN_YEAR: i32 = 1800;
pub const MAX_YEAR: i32 = 2200;
pub const MAX_AGE: u32 = 120;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate cell for year {year}, age {age}")]
    DuplicateCell { year: i32, age: u32 },

    #[error("missing header: {0}")]
    MissingHeader(String),

    #[error("no rate column matches `{0}`")]
    UnknownColumn(String),

    #[error("ages {need_lo}-{need_hi} required for {kind} data, surface covers {have}")]
    MissingAgeRange {
        kind: SurfaceKind,
        need_lo: u32,
        need_hi: u32,
        have: String,
    },

    #[error("input contains no rate records")]
    Empty,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Hmd,
    CanonicalCsv,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hmd" | "hfd" => Ok(InputFormat::Hmd),
            "csv" | "canonical" | "canonical-csv" => Ok(InputFormat::CanonicalCsv),
            other => Err(format!("unknown input format `{other}` (expected hmd or csv)")),
        }
    }
}

impl InputFormat {
    /// Guesses the format from the first non-blank line.
    pub fn detect(first_line: &str) -> InputFormat {
        if first_line.trim_start_matches('\u{feff}').trim().eq_ignore_ascii_case("year,age,rate") {
            InputFormat::CanonicalCsv
        } else {
            InputFormat::Hmd
        }
    }
}

/// Which rate column of an `hmd` table to read.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ColumnSelector {
    /// The only rate column if there is one, otherwise `Total`.
    #[default]
    Auto,
    /// Case-insensitive header name, e.g. `Male`.
    Name(String),
    /// Zero-based index among the rate columns (after `Year` and `Age`).
    Index(usize),
}

impl FromStr for ColumnSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(ColumnSelector::Auto)
        } else if let Ok(i) = s.parse::<usize>() {
            Ok(ColumnSelector::Index(i))
        } else if s.is_empty() {
            Err("empty column selector".into())
        } else {
            Ok(ColumnSelector::Name(s.to_string()))
        }
    }
}

impl ColumnSelector {
    fn resolve(&self, rate_columns: &[String]) -> Result<usize, DataError> {
        let by_name = |name: &str| {
            rate_columns
                .iter()
                .position(|c| c.eq_ignore_ascii_case(name))
                .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
        };
        match self {
            ColumnSelector::Auto if rate_columns.len() == 1 => Ok(0),
            ColumnSelector::Auto => by_name("Total"),
            ColumnSelector::Name(n) => by_name(n),
            ColumnSelector::Index(i) if *i < rate_columns.len() => Ok(*i),
            ColumnSelector::Index(i) => Err(DataError::UnknownColumn(i.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeLabel {
    pub age: u32,
    /// Recorded as an open-ended group (`110+`, `12-`).
    pub open: bool,
}

impl FromStr for AgeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (digits, open) = match s.strip_suffix('+').or_else(|| s.strip_suffix('-')) {
            Some(d) => (d, true),
            None => (s, false),
        };
        let age: u32 = digits.parse().map_err(|_| format!("invalid age `{s}`"))?;
        if age > MAX_AGE {
            return Err(format!("age {age} outside [0, {MAX_AGE}]"));
        }
        Ok(AgeLabel { age, open })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRecord {
    pub year: i32,
    pub age: AgeLabel,
    /// `None` when the source marks the value as missing.
    pub rate: Option<f64>,
}

fn parse_year(s: &str) -> Result<i32, String> {
    let year: i32 = s.parse().map_err(|_| format!("invalid year `{s}`"))?;
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return Err(format!("year {year} outside [{MIN_YEAR}, {MAX_YEAR}]"));
    }
    Ok(year)
}

fn parse_rate(s: &str, missing_marker: &str) -> Result<Option<f64>, String> {
    if s == missing_marker {
        return Ok(None);
    }
    // Rust's float parser accepts "inf" and "nan"; only plain decimals are rates.
    if !s
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'))
    {
        return Err(format!("invalid rate `{s}`"));
    }
    let v: f64 = s.parse().map_err(|_| format!("invalid rate `{s}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("rate must be a non-negative number, got `{s}`"));
    }
    Ok(Some(v))
}

/// Parses one data line of an `hmd` table. `rate_columns` is the number of
/// columns after `Year` and `Age`; `selected` indexes among them.
pub fn parse_hmd_line(
    line: &str,
    rate_columns: usize,
    selected: usize,
    line_no: usize,
) -> Result<RateRecord, DataError> {
    let err = |message: String| DataError::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != rate_columns + 2 {
        return Err(err(format!(
            "expected {} fields, found {}",
            rate_columns + 2,
            fields.len()
        )));
    }
    Ok(RateRecord {
        year: parse_year(fields[0]).map_err(err)?,
        age: fields[1].parse().map_err(err)?,
        rate: parse_rate(fields[2 + selected], ".").map_err(err)?,
    })
}

fn parse_hmd<R: BufRead>(reader: R, column: &ColumnSelector) -> Result<Vec<RateRecord>, DataError> {
    let mut header: Option<(usize, usize)> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let line = line.trim_start_matches('\u{feff}').trim();
        if line.is_empty() {
            continue;
        }
        match header {
            None => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() >= 3
                    && tokens[0].eq_ignore_ascii_case("year")
                    && tokens[1].eq_ignore_ascii_case("age")
                {
                    let names: Vec<String> = tokens[2..].iter().map(|s| s.to_string()).collect();
                    header = Some((names.len(), column.resolve(&names)?));
                }
                // Anything before the header is a title line.
            }
            Some((count, selected)) => records.push(parse_hmd_line(line, count, selected, line_no)?),
        }
    }
    if header.is_none() {
        return Err(DataError::MissingHeader("expected a `Year Age ...` header line".into()));
    }
    Ok(records)
}

fn parse_canonical<R: BufRead>(reader: R) -> Result<Vec<RateRecord>, DataError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                let t = l.trim_start_matches('\u{feff}').trim().to_string();
                if !t.is_empty() {
                    break t;
                }
            }
            None => return Err(DataError::MissingHeader("empty input".into())),
        }
    };
    if header != "year,age,rate" {
        return Err(DataError::MissingHeader(format!(
            "expected `year,age,rate`, found `{header}`"
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DataError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        records.push(RateRecord {
            year: parse_year(fields[0]).map_err(err)?,
            age: fields[1].parse().map_err(err)?,
            rate: parse_rate(fields[2], "").map_err(err)?,
        });
    }
    Ok(records)
}

/// Parses rate records without assembling a surface.
pub fn parse_records<R: BufRead>(
    reader: R,
    format: InputFormat,
    column: &ColumnSelector,
) -> Result<Vec<RateRecord>, DataError> {
    match format {
        InputFormat::Hmd => parse_hmd(reader, column),
        InputFormat::CanonicalCsv => parse_canonical(reader),
    }
}

/// Densifies records onto the full observed year x age rectangle; absent
/// cells are masked.
pub fn records_to_surface(records: &[RateRecord], kind: SurfaceKind) -> Result<DemographicSurface, DataError> {
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let (y0, y1) = records
        .iter()
        .fold((i32::MAX, i32::MIN), |(a, b), r| (a.min(r.year), b.max(r.year)));
    let (a0, a1) = records
        .iter()
        .fold((u32::MAX, u32::MIN), |(a, b), r| (a.min(r.age.age), b.max(r.age.age)));
    let years: Vec<i32> = (y0..=y1).collect();
    let ages: Vec<u32> = (a0..=a1).collect();
    let mut values = DMatrix::from_element(ages.len(), years.len(), f64::NAN);
    let mut missing = DMatrix::from_element(ages.len(), years.len(), true);
    let mut seen = DMatrix::from_element(ages.len(), years.len(), false);
    let mut open_ages: Vec<u32> = Vec::new();

    for r in records {
        let (i, j) = ((r.age.age - a0) as usize, (r.year - y0) as usize);
        if seen[(i, j)] {
            return Err(DataError::DuplicateCell {
                year: r.year,
                age: r.age.age,
            });
        }
        seen[(i, j)] = true;
        if let Some(v) = r.rate {
            values[(i, j)] = v;
            missing[(i, j)] = false;
        }
        if r.age.open && !open_ages.contains(&r.age.age) {
            open_ages.push(r.age.age);
        }
    }
    open_ages.sort_unstable();
    Ok(DemographicSurface::new(kind, ValueScale::Rate, ages, years, values, missing)?.with_open_ages(open_ages))
}

/// Reads a rate table into a raw-rate surface.
pub fn parse_rates<R: BufRead>(
    reader: R,
    format: InputFormat,
    column: &ColumnSelector,
    kind: SurfaceKind,
) -> Result<DemographicSurface, DataError> {
    let records = parse_records(reader, format, column)?;
    records_to_surface(&records, kind)
}

/// Natural log of every observed rate; cells with rate `<= 0` become
/// missing. A surface already on the log scale is returned unchanged.
pub fn log_transform(surface: &DemographicSurface) -> DemographicSurface {
    if surface.scale() == ValueScale::LogRate {
        return surface.clone();
    }
    surface.map_values(ValueScale::LogRate, |r| (r > 0.0).then(|| r.ln()))
}

/// Keeps ages 0-100 (mortality) or 15-45 (fertility).
pub fn truncate_ages(surface: &DemographicSurface, kind: SurfaceKind) -> Result<DemographicSurface, DataError> {
    let (lo, hi) = kind.age_range();
    let ages = surface.ages();
    let covered = (lo..=hi).all(|a| surface.age_index(a).is_some())
        // An open group below the top of the range would hide older ages.
        && !surface.open_ages().iter().any(|&a| a >= lo && a < hi);
    if !covered {
        return Err(DataError::MissingAgeRange {
            kind,
            need_lo: lo,
            need_hi: hi,
            have: format!("{}-{}", ages[0], ages[ages.len() - 1]),
        });
    }
    Ok(surface.ages_between(lo, hi)?)
}

fn format_age(surface: &DemographicSurface, age: u32) -> String {
    if surface.open_ages().contains(&age) {
        format!("{age}+")
    } else {
        age.to_string()
    }
}

/// Writes the canonical CSV form, year-major. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_canonical_csv<W: Write>(surface: &DemographicSurface, mut w: W) -> io::Result<()> {
    writeln!(w, "year,age,rate")?;
    for &year in surface.years() {
        for &age in surface.ages() {
            let age_label = format_age(surface, age);
            match surface.get(age, year) {
                Some(v) => writeln!(w, "{year},{age_label},{v}")?,
                None => writeln!(w, "{year},{age_label},")?,
            }
        }
    }
    Ok(())
}
