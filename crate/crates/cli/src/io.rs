//! CSV ingestion with row-level validation and the JSON artifact formats.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ndcfair::hermite::{AgeGrid, HermiteSpec};
use ndcfair::lee_carter::{LcParams, NationalPanel};
use ndcfair::rules::{FairAnchors, IncomeQuintiles};
use ndcfair::subgroup::{HsmFitReport, SubgroupCell, SubgroupPanel};

#[derive(Error, Debug)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{row}: {detail}")]
    Row {
        path: String,
        row: usize,
        detail: String,
    },
    #[error("{path}: expected header `{expected}`, got `{got}`")]
    Header {
        path: String,
        expected: String,
        got: String,
    },
    #[error("{path}: missing cell (age {age}, year {year})")]
    MissingCell { path: String, age: u32, year: i32 },
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn check_header(
    path: &str,
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), IoError> {
    let got = reader
        .headers()
        .map_err(|e| IoError::Invalid {
            path: path.to_string(),
            detail: e.to_string(),
        })?
        .iter()
        .map(str::trim)
        .collect::<Vec<_>>();
    if got != expected {
        return Err(IoError::Header {
            path: path.to_string(),
            expected: expected.join(","),
            got: got.join(","),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    path: &str,
    row: usize,
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T, IoError> {
    record
        .get(idx)
        .ok_or_else(|| IoError::Row {
            path: path.to_string(),
            row,
            detail: format!("missing field {name}"),
        })?
        .trim()
        .parse::<T>()
        .map_err(|_| IoError::Row {
            path: path.to_string(),
            row,
            detail: format!("cannot parse {name} `{}`", record.get(idx).unwrap_or("")),
        })
}

/// Read the national panel from `age,year,deaths,exposure` rows. The grid
/// must be rectangular with no duplicate or missing cells and strictly
/// positive exposure.
pub fn read_national_csv(path: &Path) -> Result<NationalPanel, IoError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| IoError::Read {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    check_header(&display, &mut reader, &["age", "year", "deaths", "exposure"])?;

    let mut cells: BTreeMap<(u32, i32), (f64, f64)> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is row 1
        let record = record.map_err(|e| IoError::Row {
            path: display.clone(),
            row,
            detail: e.to_string(),
        })?;
        let age: u32 = parse_field(&display, row, &record, 0, "age")?;
        let year: i32 = parse_field(&display, row, &record, 1, "year")?;
        let deaths: f64 = parse_field(&display, row, &record, 2, "deaths")?;
        let exposure: f64 = parse_field(&display, row, &record, 3, "exposure")?;
        if deaths < 0.0 || !deaths.is_finite() {
            return Err(IoError::Row {
                path: display.clone(),
                row,
                detail: format!("negative deaths {deaths}"),
            });
        }
        if exposure <= 0.0 || !exposure.is_finite() {
            return Err(IoError::Row {
                path: display.clone(),
                row,
                detail: format!("non-positive exposure {exposure}"),
            });
        }
        if cells.insert((age, year), (deaths, exposure)).is_some() {
            return Err(IoError::Row {
                path: display.clone(),
                row,
                detail: format!("duplicate cell (age {age}, year {year})"),
            });
        }
    }
    if cells.is_empty() {
        return Err(IoError::Invalid {
            path: display,
            detail: "no data rows".to_string(),
        });
    }

    let ages: BTreeSet<u32> = cells.keys().map(|k| k.0).collect();
    let years: BTreeSet<i32> = cells.keys().map(|k| k.1).collect();
    let (&age0, &age1) = (ages.first().unwrap(), ages.last().unwrap());
    let (&year0, &year1) = (years.first().unwrap(), years.last().unwrap());
    let n_ages = (age1 - age0 + 1) as usize;
    let n_years = (year1 - year0 + 1) as usize;
    let mut deaths = Vec::with_capacity(n_ages * n_years);
    let mut exposure = Vec::with_capacity(n_ages * n_years);
    for a in 0..n_ages {
        for y in 0..n_years {
            let key = (age0 + a as u32, year0 + y as i32);
            let (d, e) = cells.get(&key).ok_or(IoError::MissingCell {
                path: display.clone(),
                age: key.0,
                year: key.1,
            })?;
            deaths.push(*d);
            exposure.push(*e);
        }
    }
    NationalPanel::new(age0, year0, n_ages, n_years, deaths, exposure).map_err(|e| {
        IoError::Invalid {
            path: display,
            detail: e.to_string(),
        }
    })
}

/// Read the subgroup panel from `age,quintile,wave,exposure,deaths` rows.
/// Quintiles are 1..=5 in the file and 0-based in memory; every wave year
/// must have a configured interval length.
pub fn read_subgroup_csv(
    path: &Path,
    waves: &BTreeMap<i32, f64>,
) -> Result<SubgroupPanel, IoError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| IoError::Read {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    check_header(
        &display,
        &mut reader,
        &["age", "quintile", "wave", "exposure", "deaths"],
    )?;

    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| IoError::Row {
            path: display.clone(),
            row,
            detail: e.to_string(),
        })?;
        let age: u32 = parse_field(&display, row, &record, 0, "age")?;
        let quintile: usize = parse_field(&display, row, &record, 1, "quintile")?;
        let wave: i32 = parse_field(&display, row, &record, 2, "wave")?;
        let exposure: f64 = parse_field(&display, row, &record, 3, "exposure")?;
        let deaths: f64 = parse_field(&display, row, &record, 4, "deaths")?;
        if !(1..=5).contains(&quintile) {
            return Err(IoError::Row {
                path: display.clone(),
                row,
                detail: format!("quintile {quintile} outside 1..=5"),
            });
        }
        if !waves.contains_key(&wave) {
            return Err(IoError::Row {
                path: display.clone(),
                row,
                detail: format!("wave {wave} has no configured interval length"),
            });
        }
        if exposure < 0.0 || deaths < 0.0 || deaths > exposure {
            return Err(IoError::Row {
                path: display.clone(),
                row,
                detail: format!("invalid counts: exposure {exposure}, deaths {deaths}"),
            });
        }
        cells.push(SubgroupCell {
            age,
            group: quintile - 1,
            wave,
            exposure,
            deaths,
        });
    }
    SubgroupPanel::new(waves.clone(), cells).map_err(|e| IoError::Invalid {
        path: display,
        detail: e.to_string(),
    })
}

/// Write the national panel in the ingestion format.
pub fn write_national_csv(panel: &NationalPanel, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("age,year,deaths,exposure\n");
    for (a, age) in panel.ages().enumerate() {
        for (y, year) in panel.years().enumerate() {
            out.push_str(&format!(
                "{age},{year},{},{}\n",
                panel.deaths_at(a, y),
                panel.exposure_at(a, y)
            ));
        }
    }
    std::fs::write(path, out).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Write the subgroup panel in the ingestion format (quintiles 1..=5).
pub fn write_subgroup_csv(panel: &SubgroupPanel, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("age,quintile,wave,exposure,deaths\n");
    for c in panel.cells() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.age,
            c.group + 1,
            c.wave,
            c.exposure,
            c.deaths
        ));
    }
    std::fs::write(path, out).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Fitted-spec artifact: the spline, its grid, and the fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecArtifact {
    pub grid: AgeGrid,
    pub spec: HermiteSpec,
    pub report: HsmFitReport,
}

/// Anchors file consumed by `calibrate-rules`/`evaluate-rules`:
/// fair counting months plus the quintile means and interior boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorsFile {
    pub m_star: Vec<f64>,
    pub means: Vec<f64>,
    pub cuts: Vec<f64>,
}

impl AnchorsFile {
    pub fn parse(&self) -> anyhow::Result<(FairAnchors, IncomeQuintiles)> {
        let anchors = FairAnchors::new(self.m_star.clone())?;
        let quintiles = IncomeQuintiles::new(self.means.clone(), self.cuts.clone())?;
        Ok((anchors, quintiles))
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_lc_params(path: &Path) -> Result<LcParams, IoError> {
    read_json(path)
}
