//! Mortality-differentiated Lee-Carter modeling with Hermite-spline group
//! baselines, life-annuity valuation, and income-dependent annuitization
//! rules for notional defined contribution (NDC) pensions.
//!
//! The crate is organized around the estimation and valuation pipeline:
//!
//! * [`hermite`] — Hermite basis functions, grouped spline specifications,
//!   Gompertz reduction, and the non-crossover diagnostic.
//! * [`lee_carter`] — Poisson Lee-Carter estimation on a national
//!   deaths/exposure panel with identification restrictions.
//! * [`subgroup`] — LC-adjusted pooling of survey panels and
//!   shape-constrained grouped Hermite fits.
//! * [`projection`] — random-walk-with-drift dynamics for the period index
//!   and reproducible path simulation.
//! * [`annuity`] — period life tables, monthly annuity-due valuation, fair
//!   counting months, and the official counting-month schedule.
//! * [`rules`] — the continuous fair benchmark over income and the four
//!   income-dependent annuitization rules with their calibrations.
//! * [`model`] — glue combining a fitted spline specification with the
//!   Lee-Carter components into a full mortality surface.

pub mod annuity;
pub mod hermite;
pub mod lee_carter;
pub mod model;
pub mod optim;
pub mod projection;
pub mod rules;
pub mod subgroup;

pub use annuity::AnnuityBasis;
pub use hermite::{AgeGrid, HermiteSpec, SpecVariant};
pub use lee_carter::LcParams;
pub use model::MortalityModel;
pub use rules::{FairAnchors, IncomeQuintiles, RuleSchedule};
