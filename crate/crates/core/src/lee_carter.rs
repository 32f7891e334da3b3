//! Poisson Lee-Carter estimation on the national deaths/exposure panel.
//!
//! The model is `D_{x,t} ~ Poisson(E_{x,t} exp(alpha_x + beta_x kappa_t))`
//! with the identifying restrictions `sum_x beta_x = 1` and
//! `kappa_{ref} = 0`. Estimation alternates exact or damped Newton updates
//! over the three coordinate blocks, which keeps the log likelihood
//! non-decreasing, and applies the normalization once at convergence.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum LcError {
    #[error("panel must be rectangular with positive exposure: {0}")]
    BadPanel(String),
    #[error("reference year {0} outside panel years {1}..={2}")]
    RefYearOutOfRange(i32, i32, i32),
    #[error("age {0} outside fitted range")]
    AgeOutOfRange(u32),
    #[error("year {0} outside fitted range")]
    YearOutOfRange(i32),
    #[error("beta sums to zero; factorization is degenerate")]
    DegenerateBeta,
    #[error(
        "no convergence after {iterations} iterations (gradient sup-norm {grad_norm:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last: Box<LcParams>,
    },
}

/// National deaths/exposure panel on a rectangular age x year grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NationalPanel {
    age_start: u32,
    year_start: i32,
    n_ages: usize,
    n_years: usize,
    /// Row-major `[age][year]`.
    deaths: Vec<f64>,
    exposure: Vec<f64>,
}

impl NationalPanel {
    pub fn new(
        age_start: u32,
        year_start: i32,
        n_ages: usize,
        n_years: usize,
        deaths: Vec<f64>,
        exposure: Vec<f64>,
    ) -> Result<Self, LcError> {
        if n_ages == 0 || n_years == 0 {
            return Err(LcError::BadPanel("empty grid".into()));
        }
        if deaths.len() != n_ages * n_years || exposure.len() != n_ages * n_years {
            return Err(LcError::BadPanel(format!(
                "expected {} cells, got {} deaths / {} exposures",
                n_ages * n_years,
                deaths.len(),
                exposure.len()
            )));
        }
        for (i, (&d, &e)) in deaths.iter().zip(&exposure).enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(LcError::BadPanel(format!("negative or non-finite deaths at cell {i}")));
            }
            if !e.is_finite() || e <= 0.0 {
                return Err(LcError::BadPanel(format!("non-positive exposure at cell {i}")));
            }
        }
        Ok(Self {
            age_start,
            year_start,
            n_ages,
            n_years,
            deaths,
            exposure,
        })
    }

    pub fn n_ages(&self) -> usize {
        self.n_ages
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn age_start(&self) -> u32 {
        self.age_start
    }

    pub fn year_start(&self) -> i32 {
        self.year_start
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.n_years).map(|k| self.year_start + k as i32)
    }

    pub fn ages(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.n_ages).map(|k| self.age_start + k as u32)
    }

    fn idx(&self, a: usize, y: usize) -> usize {
        a * self.n_years + y
    }

    pub fn deaths_at(&self, a: usize, y: usize) -> f64 {
        self.deaths[self.idx(a, y)]
    }

    pub fn exposure_at(&self, a: usize, y: usize) -> f64 {
        self.exposure[self.idx(a, y)]
    }
}

/// Lee-Carter components under the identification `sum beta = 1`,
/// `kappa_{ref_year} = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcParams {
    pub age_start: u32,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub year_start: i32,
    pub kappa: Vec<f64>,
    pub ref_year: i32,
}

impl LcParams {
    pub fn age_index(&self, age: u32) -> Option<usize> {
        if age < self.age_start {
            return None;
        }
        let i = (age - self.age_start) as usize;
        (i < self.alpha.len()).then_some(i)
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        if year < self.year_start {
            return None;
        }
        let i = (year - self.year_start) as usize;
        (i < self.kappa.len()).then_some(i)
    }

    pub fn alpha_at(&self, age: u32) -> Option<f64> {
        self.age_index(age).map(|i| self.alpha[i])
    }

    pub fn beta_at(&self, age: u32) -> Option<f64> {
        self.age_index(age).map(|i| self.beta[i])
    }

    pub fn kappa_at(&self, year: i32) -> Option<f64> {
        self.year_index(year).map(|i| self.kappa[i])
    }

    pub fn last_age(&self) -> u32 {
        self.age_start + (self.alpha.len() as u32) - 1
    }

    pub fn last_year(&self) -> i32 {
        self.year_start + (self.kappa.len() as i32) - 1
    }
}

/// Per-fit diagnostics. `log_likelihood_trace` is the non-decreasing kernel
/// log likelihood recorded after every sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcFitReport {
    pub log_likelihood: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood_trace: Vec<f64>,
}

const MAX_SWEEPS: usize = 10_000;
const REL_TOL: f64 = 1e-10;
/// Floor on alpha updates; an all-zero-death age row has an unbounded MLE
/// and is pinned here instead.
const ALPHA_FLOOR: f64 = -40.0;

/// Fit the national Lee-Carter model by Poisson maximum likelihood and
/// apply the identification restrictions.
pub fn fit_lc_poisson(
    panel: &NationalPanel,
    ref_year: i32,
) -> Result<(LcParams, LcFitReport), LcError> {
    let (na, ny) = (panel.n_ages, panel.n_years);
    if na < 2 {
        return Err(LcError::BadPanel("need at least 2 ages".into()));
    }
    let last_year = panel.year_start + ny as i32 - 1;
    if ref_year < panel.year_start || ref_year > last_year {
        return Err(LcError::RefYearOutOfRange(
            ref_year,
            panel.year_start,
            last_year,
        ));
    }

    // Initial values: beta flat, kappa zero, alpha at the per-age mean rate.
    let mut alpha = vec![0.0; na];
    for a in 0..na {
        let d: f64 = (0..ny).map(|y| panel.deaths_at(a, y)).sum();
        let e: f64 = (0..ny).map(|y| panel.exposure_at(a, y)).sum();
        alpha[a] = if d > 0.0 { (d / e).ln() } else { ALPHA_FLOOR };
    }
    let mut beta = vec![1.0 / na as f64; na];
    let mut kappa = vec![0.0; ny];

    let kernel = |alpha: &[f64], beta: &[f64], kappa: &[f64]| -> f64 {
        let mut ll = 0.0;
        for a in 0..na {
            for y in 0..ny {
                let eta = alpha[a] + beta[a] * kappa[y];
                ll += panel.deaths_at(a, y) * eta - panel.exposure_at(a, y) * eta.exp();
            }
        }
        ll
    };

    let mut trace = Vec::new();
    let mut ll = kernel(&alpha, &beta, &kappa);
    trace.push(ll);
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        sweeps += 1;

        // alpha: exact coordinate maximum alpha_x = ln(sum D / sum E e^{bk}).
        for a in 0..na {
            let d: f64 = (0..ny).map(|y| panel.deaths_at(a, y)).sum();
            let c: f64 = (0..ny)
                .map(|y| panel.exposure_at(a, y) * (beta[a] * kappa[y]).exp())
                .sum();
            alpha[a] = if d > 0.0 { (d / c).ln() } else { ALPHA_FLOOR };
        }

        // kappa: damped Newton per year on the concave per-year likelihood.
        for y in 0..ny {
            let piece = |k: f64| -> f64 {
                (0..na)
                    .map(|a| {
                        let eta = alpha[a] + beta[a] * k;
                        panel.deaths_at(a, y) * eta - panel.exposure_at(a, y) * eta.exp()
                    })
                    .sum()
            };
            let mut g = 0.0;
            let mut h = 0.0;
            for a in 0..na {
                let mu = panel.exposure_at(a, y) * (alpha[a] + beta[a] * kappa[y]).exp();
                g += beta[a] * (panel.deaths_at(a, y) - mu);
                h += beta[a] * beta[a] * mu;
            }
            if h > 1e-300 {
                kappa[y] = damped_step(kappa[y], g / h, piece);
            }
        }

        // beta: damped Newton per age.
        for a in 0..na {
            let piece = |b: f64| -> f64 {
                (0..ny)
                    .map(|y| {
                        let eta = alpha[a] + b * kappa[y];
                        panel.deaths_at(a, y) * eta - panel.exposure_at(a, y) * eta.exp()
                    })
                    .sum()
            };
            let mut g = 0.0;
            let mut h = 0.0;
            for y in 0..ny {
                let mu = panel.exposure_at(a, y) * (alpha[a] + beta[a] * kappa[y]).exp();
                g += kappa[y] * (panel.deaths_at(a, y) - mu);
                h += kappa[y] * kappa[y] * mu;
            }
            if h > 1e-300 {
                beta[a] = damped_step(beta[a], g / h, piece);
            }
        }

        let ll_new = kernel(&alpha, &beta, &kappa);
        trace.push(ll_new);
        let rel = (ll_new - ll).abs() / ll.abs().max(1.0);
        ll = ll_new;
        if rel < REL_TOL {
            converged = true;
            break;
        }
    }

    let params = normalize_lc(
        alpha,
        beta,
        kappa,
        panel.age_start,
        panel.year_start,
        ref_year,
    )?;

    if !converged {
        let grad_norm = gradient_sup_norm(panel, &params);
        return Err(LcError::NonConvergence {
            iterations: sweeps,
            grad_norm,
            last: Box::new(params),
        });
    }

    // Full log likelihood and deviance for reporting.
    let mut full_ll = 0.0;
    let mut deviance = 0.0;
    for a in 0..na {
        for y in 0..ny {
            let d = panel.deaths_at(a, y);
            let mu = panel.exposure_at(a, y)
                * (params.alpha[a] + params.beta[a] * params.kappa[y]).exp();
            full_ll += d * mu.ln() - mu - ln_gamma(d + 1.0);
            let sat = if d > 0.0 { d * (d / mu).ln() } else { 0.0 };
            deviance += 2.0 * (sat - (d - mu));
        }
    }

    Ok((
        params,
        LcFitReport {
            log_likelihood: full_ll,
            deviance,
            iterations: sweeps,
            converged,
            log_likelihood_trace: trace,
        },
    ))
}

/// Take a Newton step, halving until the 1-d objective does not decrease.
fn damped_step(x: f64, step: f64, objective: impl Fn(f64) -> f64) -> f64 {
    if !step.is_finite() {
        return x;
    }
    let f0 = objective(x);
    let mut t = 1.0;
    for _ in 0..50 {
        let cand = x + t * step;
        if objective(cand) >= f0 {
            return cand;
        }
        t *= 0.5;
    }
    x
}

fn gradient_sup_norm(panel: &NationalPanel, p: &LcParams) -> f64 {
    let (na, ny) = (panel.n_ages, panel.n_years);
    let mut sup: f64 = 0.0;
    for a in 0..na {
        let mut ga = 0.0;
        let mut gb = 0.0;
        for y in 0..ny {
            let mu = panel.exposure_at(a, y) * (p.alpha[a] + p.beta[a] * p.kappa[y]).exp();
            let r = panel.deaths_at(a, y) - mu;
            ga += r;
            gb += r * p.kappa[y];
        }
        sup = sup.max(ga.abs()).max(gb.abs());
    }
    for y in 0..ny {
        let mut gk = 0.0;
        for a in 0..na {
            let mu = panel.exposure_at(a, y) * (p.alpha[a] + p.beta[a] * p.kappa[y]).exp();
            gk += p.beta[a] * (panel.deaths_at(a, y) - mu);
        }
        sup = sup.max(gk.abs());
    }
    sup
}

/// Rescale `beta` to unit sum (with `kappa` scaled inversely) and shift
/// `kappa` to zero at `ref_year`, absorbing the shift into `alpha`. The
/// fitted surface `alpha + beta*kappa` is unchanged.
pub fn normalize_lc(
    mut alpha: Vec<f64>,
    mut beta: Vec<f64>,
    mut kappa: Vec<f64>,
    age_start: u32,
    year_start: i32,
    ref_year: i32,
) -> Result<LcParams, LcError> {
    let last_year = year_start + kappa.len() as i32 - 1;
    if ref_year < year_start || ref_year > last_year {
        return Err(LcError::RefYearOutOfRange(ref_year, year_start, last_year));
    }
    let s: f64 = beta.iter().sum();
    if s.abs() < 1e-12 {
        return Err(LcError::DegenerateBeta);
    }
    for b in &mut beta {
        *b /= s;
    }
    for k in &mut kappa {
        *k *= s;
    }
    let shift = kappa[(ref_year - year_start) as usize];
    for k in &mut kappa {
        *k -= shift;
    }
    for (a, b) in alpha.iter_mut().zip(&beta) {
        *a += b * shift;
    }
    Ok(LcParams {
        age_start,
        alpha,
        beta,
        year_start,
        kappa,
        ref_year,
    })
}

/// Fitted log central death rate `alpha_x + beta_x kappa_t`.
pub fn fitted_log_m(params: &LcParams, age: u32, year: i32) -> Result<f64, LcError> {
    let a = params
        .age_index(age)
        .ok_or(LcError::AgeOutOfRange(age))?;
    let y = params
        .year_index(year)
        .ok_or(LcError::YearOutOfRange(year))?;
    Ok(params.alpha[a] + params.beta[a] * params.kappa[y])
}
