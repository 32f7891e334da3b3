//! Period life-table construction, monthly life-annuity valuation, fair
//! counting months, the official counting-month schedule, and subsidy
//! rates.
//!
//! A counting month is the divisor converting a notional account balance
//! into a monthly benefit. The actuarially fair value is twelve times the
//! monthly annuity-due factor `(1/12) sum_m v^{m/12} p(m/12)`, summed to
//! the limit age where survival is forced to zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum AnnuityError {
    #[error("discount rate must exceed -1, got {0}")]
    BadRate(f64),
    #[error("age {age} must be below the limit age {limit}")]
    AgeAtOrAboveLimit { age: u32, limit: u32 },
    #[error("need {needed} yearly rates up to the limit age, got {got}")]
    MissingRates { needed: usize, got: usize },
    #[error("rate at offset {0} is negative or non-finite")]
    BadMortalityRate(usize),
    #[error("survival curve invalid: {0}")]
    BadCurve(String),
    #[error("official counting months are defined for ages 40..=70, got {0}")]
    OutsideOfficialSchedule(u32),
    #[error("official counting month must be positive, got {0}")]
    NonPositiveDivisor(f64),
    #[error("dominance violated at month {0}: high curve below low curve")]
    DominanceViolated(usize),
}

/// Within-year mortality assumption for the monthly grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FractionalAge {
    /// Constant force of mortality within each age-year:
    /// survival decays as `exp(-m * s)` over the year.
    ConstantForce,
}

/// Valuation basis: annual effective discount rate and limit age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnuityBasis {
    pub rate: f64,
    pub limit_age: u32,
    pub fractional_age: FractionalAge,
}

impl AnnuityBasis {
    pub fn new(rate: f64, limit_age: u32) -> Result<Self, AnnuityError> {
        if !(rate > -1.0) || !rate.is_finite() {
            return Err(AnnuityError::BadRate(rate));
        }
        Ok(Self {
            rate,
            limit_age,
            fractional_age: FractionalAge::ConstantForce,
        })
    }

    /// One-year discount factor `v = (1 + r)^{-1}`.
    pub fn discount(&self) -> f64 {
        1.0 / (1.0 + self.rate)
    }
}

/// Monthly survival probabilities from a starting age: entry `m` is the
/// probability of surviving `m/12` years. Starts at one, non-increasing,
/// and zero at the limit age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    monthly: Vec<f64>,
}

impl SurvivalCurve {
    /// Wrap an explicit monthly vector, validating the invariants.
    pub fn from_monthly(monthly: Vec<f64>) -> Result<Self, AnnuityError> {
        if monthly.is_empty() || monthly[0] != 1.0 {
            return Err(AnnuityError::BadCurve("must start at exactly 1".into()));
        }
        for w in monthly.windows(2) {
            if !(w[1] <= w[0]) {
                return Err(AnnuityError::BadCurve("must be non-increasing".into()));
            }
        }
        if monthly.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(AnnuityError::BadCurve("probabilities must be in [0, 1]".into()));
        }
        if *monthly.last().unwrap() != 0.0 {
            return Err(AnnuityError::BadCurve("must end at exactly 0".into()));
        }
        Ok(Self { monthly })
    }

    pub fn months(&self) -> usize {
        self.monthly.len() - 1
    }

    pub fn probability(&self, month: usize) -> f64 {
        self.monthly.get(month).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.monthly
    }
}

/// Build the monthly survival curve for a life aged `age` from yearly
/// central death rates `rates[s] = m_{age+s}` covering every age up to the
/// limit. Under constant force the monthly step within a year is
/// `exp(-m/12)`; survival at the limit age is forced to zero.
pub fn survival_from_rates(
    age: u32,
    rates: &[f64],
    basis: &AnnuityBasis,
) -> Result<SurvivalCurve, AnnuityError> {
    if age >= basis.limit_age {
        return Err(AnnuityError::AgeAtOrAboveLimit {
            age,
            limit: basis.limit_age,
        });
    }
    let needed = (basis.limit_age - age) as usize;
    if rates.len() != needed {
        return Err(AnnuityError::MissingRates {
            needed,
            got: rates.len(),
        });
    }
    for (i, m) in rates.iter().enumerate() {
        if !m.is_finite() || *m < 0.0 {
            return Err(AnnuityError::BadMortalityRate(i));
        }
    }
    let months = 12 * needed;
    let mut monthly = Vec::with_capacity(months + 1);
    monthly.push(1.0);
    let mut p = 1.0;
    for (year, m) in rates.iter().enumerate() {
        let step = (-m / 12.0).exp();
        for k in 0..12 {
            if year == needed - 1 && k == 11 {
                break;
            }
            p *= step;
            monthly.push(p);
        }
    }
    monthly.push(0.0);
    debug_assert_eq!(monthly.len(), months + 1);
    Ok(SurvivalCurve { monthly })
}

/// Monthly annuity-due factor at an explicit rate:
/// `(1/12) sum_m v^{m/12} p(m/12)`.
pub fn annuity_monthly_at_rate(curve: &SurvivalCurve, rate: f64) -> f64 {
    let log_v = (1.0 + rate).ln();
    let mut acc = 0.0;
    for (m, p) in curve.monthly.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        acc += (-(m as f64) / 12.0 * log_v).exp() * p;
    }
    acc / 12.0
}

/// Monthly annuity-due factor on the basis rate.
pub fn annuity_monthly(curve: &SurvivalCurve, basis: &AnnuityBasis) -> f64 {
    annuity_monthly_at_rate(curve, basis.rate)
}

/// Actuarially fair counting month: `12 * annuity_monthly`.
pub fn fair_cm(curve: &SurvivalCurve, basis: &AnnuityBasis) -> f64 {
    12.0 * annuity_monthly(curve, basis)
}

/// Proportional subsidy `M_fair / M_off - 1`.
pub fn subsidy(m_fair: f64, m_off: f64) -> Result<f64, AnnuityError> {
    if m_off <= 0.0 {
        return Err(AnnuityError::NonPositiveDivisor(m_off));
    }
    Ok(m_fair / m_off - 1.0)
}

/// Statutory counting months by retirement age, in force at the 2020
/// reference year.
pub const OFFICIAL_COUNTING_MONTHS: [(u32, u32); 31] = [
    (40, 233),
    (41, 230),
    (42, 226),
    (43, 223),
    (44, 220),
    (45, 216),
    (46, 212),
    (47, 207),
    (48, 204),
    (49, 199),
    (50, 195),
    (51, 190),
    (52, 185),
    (53, 180),
    (54, 175),
    (55, 170),
    (56, 164),
    (57, 158),
    (58, 152),
    (59, 145),
    (60, 139),
    (61, 132),
    (62, 125),
    (63, 117),
    (64, 109),
    (65, 101),
    (66, 93),
    (67, 84),
    (68, 75),
    (69, 65),
    (70, 56),
];

/// Official counting month for a retirement age in 40..=70.
pub fn official_cm(age: u32) -> Result<u32, AnnuityError> {
    if !(40..=70).contains(&age) {
        return Err(AnnuityError::OutsideOfficialSchedule(age));
    }
    Ok(OFFICIAL_COUNTING_MONTHS[(age - 40) as usize].1)
}

/// The official schedule as CSV (header `age,official_months`).
pub fn official_schedule_csv() -> String {
    let mut out = String::from("age,official_months\n");
    for (age, months) in OFFICIAL_COUNTING_MONTHS {
        out.push_str(&format!("{age},{months}\n"));
    }
    out
}

/// Annuity-factor gap between a dominating and a dominated survival curve
/// at rate `r`. Errors if the first curve is not pointwise at least the
/// second.
pub fn annuity_gap(
    curve_hi: &SurvivalCurve,
    curve_lo: &SurvivalCurve,
    rate: f64,
) -> Result<f64, AnnuityError> {
    let months = curve_hi.monthly.len().max(curve_lo.monthly.len());
    for m in 0..months {
        if curve_hi.probability(m) < curve_lo.probability(m) {
            return Err(AnnuityError::DominanceViolated(m));
        }
    }
    Ok(annuity_monthly_at_rate(curve_hi, rate) - annuity_monthly_at_rate(curve_lo, rate))
}

/// Table display of a subsidy rate in percent: the proportion is rounded
/// half-away-from-zero to four decimals and then shown in percent with one
/// decimal, matching the published tables (e.g. 0.129497 -> "13.0").
pub fn format_subsidy_percent(lambda: f64) -> String {
    let n4 = (lambda * 10_000.0).round();
    let tenths = (n4 / 10.0).round() as i64;
    let sign = if tenths < 0 { "-" } else { "" };
    format!("{}{}.{}", sign, (tenths / 10).abs(), (tenths % 10).abs())
}
