//! Run configuration with the published valuation basis as defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ndcfair::rules::{IncomeQuintiles, RulesError};

/// Configuration shared by all subcommands. Every default matches the
/// reference basis: discount rate 7%, account scale 2.4, reference year
/// 2020, spline grid 50..120, retirement ages 60 and 63, projections to
/// 2040 over 1,000 paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub r: f64,
    pub phi: f64,
    pub ref_year: i32,
    pub x0: u32,
    pub x1: u32,
    pub retirement_ages: Vec<u32>,
    pub horizon_year: i32,
    pub n_paths: usize,
    pub seed: u64,
    /// Wave year -> interval length in years.
    pub waves: BTreeMap<i32, f64>,
    pub quintile_means: Vec<f64>,
    pub quintile_cuts: Vec<f64>,
    /// Exposure scales for the synthetic generator.
    pub national_exposure: f64,
    pub subgroup_exposure: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = IncomeQuintiles::charls2020();
        Self {
            r: 0.07,
            phi: 2.4,
            ref_year: 2020,
            x0: 50,
            x1: 120,
            retirement_ages: vec![60, 63],
            horizon_year: 2040,
            n_paths: 1000,
            seed: 20200,
            waves: ndcfair::subgroup::charls_waves(),
            quintile_means: q.means().to_vec(),
            quintile_cuts: (0..q.groups() - 1).map(|g| q.upper_boundary(g)).collect(),
            national_exposure: 1e8,
            subgroup_exposure: 1e8,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn quintiles(&self) -> Result<IncomeQuintiles, RulesError> {
        IncomeQuintiles::new(self.quintile_means.clone(), self.quintile_cuts.clone())
    }
}
