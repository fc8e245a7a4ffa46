//! Cohort CSV files.
//!
//! Header: `id,sex,race_group,age_years,mortality,ventilator,inpatient`
//! followed by one column per feature (conventionally `f1..fk`). Labels are
//! literal `0`/`1`. Empty cells are rejected; nothing is imputed.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use fairscreen_core::cohort::{Labels, RaceGroup, Sex};
use fairscreen_core::{Cohort, CohortError, CohortRecord, Provenance};
use thiserror::Error;

pub const FIXED_COLUMNS: [&str; 7] = [
    "id",
    "sex",
    "race_group",
    "age_years",
    "mortality",
    "ventilator",
    "inpatient",
];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot open `{path}`: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("read error at line {line}: {source}")]
    Read { line: u64, source: csv::Error },
    #[error("file has no header row")]
    MissingHeader,
    #[error("header: expected column `{expected}` at position {position}, found `{found}`")]
    MissingColumn {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("header: duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("file has a header but no data rows")]
    NoRows,
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: missing value")]
    MissingValue { line: u64, column: String },
    #[error("line {line}, column `{column}`: invalid value `{value}` ({reason})")]
    InvalidValue {
        line: u64,
        column: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Cohort(#[from] CohortError),
}

impl LoadError {
    /// Failure to reach the file rather than a problem with its contents.
    pub fn is_io(&self) -> bool {
        matches!(self, LoadError::Open { .. })
            || matches!(self, LoadError::Read { source, .. } if source.is_io_error())
    }
}

pub fn load_csv(path: &Path) -> Result<Cohort, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file)
}

fn invalid(line: u64, column: &str, value: &str, reason: impl Into<String>) -> LoadError {
    LoadError::InvalidValue {
        line,
        column: column.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_label(line: u64, column: &str, value: &str) -> Result<bool, LoadError> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(invalid(line, column, value, "expected 0 or 1")),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<Cohort, LoadError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Err(LoadError::MissingHeader),
        Some(r) => r.map_err(|source| LoadError::Read { line: 1, source })?,
    };
    for (position, expected) in FIXED_COLUMNS.iter().enumerate() {
        let found = header.get(position).unwrap_or("");
        if found != *expected {
            return Err(LoadError::MissingColumn {
                position: position + 1,
                expected,
                found: found.to_string(),
            });
        }
    }
    let feature_names: Vec<String> = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(String::from)
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    for name in header.iter() {
        if !seen.insert(name) {
            return Err(LoadError::DuplicateColumn(name.to_string()));
        }
    }
    let columns: Vec<&str> = header.iter().collect();

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|source| LoadError::Read {
            line: source.position().map_or(0, |p| p.line()),
            source,
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != columns.len() {
            return Err(LoadError::FieldCount {
                line,
                expected: columns.len(),
                found: row.len(),
            });
        }
        if let Some((i, _)) = row.iter().enumerate().find(|(_, v)| v.is_empty()) {
            return Err(LoadError::MissingValue {
                line,
                column: columns[i].to_string(),
            });
        }
        let sex: Sex = row[1]
            .parse()
            .map_err(|_| invalid(line, "sex", &row[1], "expected male or female"))?;
        let race_group: RaceGroup = row[2]
            .parse()
            .map_err(|_| invalid(line, "race_group", &row[2], "expected white or non_white"))?;
        let age_years: u32 = row[3].parse().map_err(|e: std::num::ParseIntError| {
            invalid(line, "age_years", &row[3], e.to_string())
        })?;
        let labels = Labels {
            mortality: parse_label(line, "mortality", &row[4])?,
            ventilator: parse_label(line, "ventilator", &row[5])?,
            inpatient: parse_label(line, "inpatient", &row[6])?,
        };
        let mut features = Vec::with_capacity(feature_names.len());
        for (j, v) in row.iter().enumerate().skip(FIXED_COLUMNS.len()) {
            let x: f64 = v.parse().map_err(|e: std::num::ParseFloatError| {
                invalid(line, columns[j], v, e.to_string())
            })?;
            if !x.is_finite() {
                return Err(invalid(line, columns[j], v, "not a finite number"));
            }
            features.push(x);
        }
        records.push(CohortRecord {
            id: row[0].to_string(),
            features,
            sex,
            race_group,
            age_years,
            labels,
        });
    }
    if records.is_empty() {
        return Err(LoadError::NoRows);
    }
    Ok(Cohort::new(records, feature_names, Provenance::Loaded)?)
}

pub fn write_csv<W: Write>(cohort: &Cohort, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(cohort.feature_names().iter().map(String::as_str));
    w.write_record(&header)?;
    let bit = |b: bool| if b { "1" } else { "0" };
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for r in cohort.records() {
        fields.clear();
        fields.push(r.id.clone());
        fields.push(r.sex.name().to_string());
        fields.push(r.race_group.name().to_string());
        fields.push(r.age_years.to_string());
        fields.push(bit(r.labels.mortality).to_string());
        fields.push(bit(r.labels.ventilator).to_string());
        fields.push(bit(r.labels.inpatient).to_string());
        fields.extend(r.features.iter().map(|x| x.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(cohort: &Cohort, path: &Path) -> std::io::Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_csv(cohort, file).map_err(std::io::Error::other)
}
