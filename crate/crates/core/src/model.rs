//! Full mortality surface: a grouped baseline specification combined with
//! the national period components, plus the annuity valuations built on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annuity::{self, AnnuityBasis, AnnuityError, SurvivalCurve};
use crate::hermite::{AgeGrid, HermiteError, HermiteSpec};
use crate::lee_carter::LcParams;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("limit age {limit} exceeds the spline grid end {x1}")]
    LimitBeyondGrid { limit: u32, x1: u32 },
    #[error("age {age} below the spline grid start {x0}")]
    AgeBelowGrid { age: u32, x0: u32 },
    #[error("year {0} not covered by the fitted kappa series")]
    YearNotFitted(i32),
    #[error(transparent)]
    Spline(#[from] HermiteError),
    #[error(transparent)]
    Annuity(#[from] AnnuityError),
}

/// Fitted mortality surface `log m_{x,j,t} = alpha_{x,j} + beta_x kappa_t`.
///
/// `beta` is read from the national fit where available and zero beyond its
/// fitted age range, so rates at extreme old ages are held at the baseline
/// when the period index moves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MortalityModel {
    pub spec: HermiteSpec,
    pub lc: LcParams,
    pub grid: AgeGrid,
}

impl MortalityModel {
    pub fn new(spec: HermiteSpec, lc: LcParams, grid: AgeGrid) -> Self {
        Self { spec, lc, grid }
    }

    pub fn groups(&self) -> usize {
        self.spec.groups()
    }

    fn beta_extended(&self, age: u32) -> f64 {
        self.lc.beta_at(age).unwrap_or(0.0)
    }

    /// Log central death rate at an explicit period-index value.
    pub fn log_m_at_kappa(&self, age: u32, group: usize, kappa: f64) -> Result<f64, ModelError> {
        let alpha = self.spec.alpha(group, f64::from(age), &self.grid)?;
        Ok(alpha + self.beta_extended(age) * kappa)
    }

    /// Log central death rate at a fitted calendar year.
    pub fn log_m(&self, age: u32, group: usize, year: i32) -> Result<f64, ModelError> {
        let kappa = self
            .lc
            .kappa_at(year)
            .ok_or(ModelError::YearNotFitted(year))?;
        self.log_m_at_kappa(age, group, kappa)
    }

    /// Yearly central death rates from `age` up to the basis limit age,
    /// read at a fixed period-index value (period table, no cohort
    /// diagonal).
    pub fn rates_from(
        &self,
        age: u32,
        group: usize,
        kappa: f64,
        basis: &AnnuityBasis,
    ) -> Result<Vec<f64>, ModelError> {
        if basis.limit_age > self.grid.x1() {
            return Err(ModelError::LimitBeyondGrid {
                limit: basis.limit_age,
                x1: self.grid.x1(),
            });
        }
        if age < self.grid.x0() {
            return Err(ModelError::AgeBelowGrid {
                age,
                x0: self.grid.x0(),
            });
        }
        (age..basis.limit_age)
            .map(|x| self.log_m_at_kappa(x, group, kappa).map(f64::exp))
            .collect()
    }

    /// Period-table survival curve for a life aged `age` in `group`.
    pub fn survival(
        &self,
        age: u32,
        group: usize,
        kappa: f64,
        basis: &AnnuityBasis,
    ) -> Result<SurvivalCurve, ModelError> {
        let rates = self.rates_from(age, group, kappa, basis)?;
        Ok(annuity::survival_from_rates(age, &rates, basis)?)
    }

    /// Fair counting month at an explicit period-index value.
    pub fn fair_cm_at_kappa(
        &self,
        age: u32,
        group: usize,
        kappa: f64,
        basis: &AnnuityBasis,
    ) -> Result<f64, ModelError> {
        let curve = self.survival(age, group, kappa, basis)?;
        Ok(annuity::fair_cm(&curve, basis))
    }

    /// Fair counting month at a fitted calendar year.
    pub fn fair_cm_at_year(
        &self,
        age: u32,
        group: usize,
        year: i32,
        basis: &AnnuityBasis,
    ) -> Result<f64, ModelError> {
        let kappa = self
            .lc
            .kappa_at(year)
            .ok_or(ModelError::YearNotFitted(year))?;
        self.fair_cm_at_kappa(age, group, kappa, basis)
    }
}
