//! The continuous actuarially fair benchmark over income and the four
//! income-dependent annuitization rules.
//!
//! Incomes are in 2020 CNY throughout. Bracket `j` is the half-open
//! interval `(K̄_{j-1}, K̄_j]` with `K̄_0 = 0` and the top boundary
//! infinite; `K_j` is the representative (mean) income of bracket `j` and
//! serves as the actuarial anchor. Rules 1 and 2 set the average counting
//! month directly; rules 3 and 4 set the marginal counting month and
//! accumulate benefits bracket by bracket, like a marginal tax schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annuity::{self, AnnuityBasis};
use crate::model::{ModelError, MortalityModel};
use crate::optim::{self, BfgsOptions};

#[derive(Error, Debug)]
pub enum RulesError {
    #[error("invalid income quintiles: {0}")]
    BadQuintiles(String),
    #[error("invalid fair anchors: {0}")]
    BadAnchors(String),
    #[error("anchors cover {anchors} groups but quintiles define {groups}")]
    GroupMismatch { anchors: usize, groups: usize },
    #[error(
        "exact matching infeasible in bracket {bracket}: accumulated benefit {cumulative:.6} \
         already reaches the anchor target {target:.6}"
    )]
    Method3Infeasible {
        bracket: usize,
        target: f64,
        cumulative: f64,
    },
    #[error(
        "exact matching infeasible at step {step}: anchor increment violates the {side} side \
         of 0 < dq <= width/delta"
    )]
    Method4Infeasible { step: usize, side: BoundSide },
    #[error("benefit increment at income {at} is not positive (bracket notch)")]
    BenefitNotch { at: f64 },
    #[error("marginal counting months must be positive, got {0}")]
    NonPositiveMonths(f64),
    #[error("segment width must be positive, got [{0}, {1}]")]
    BadSegment(f64, f64),
    #[error("schedule kind {got:?} where {expected:?} is required")]
    KindMismatch { expected: RuleKind, got: RuleKind },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which side of the exact-matching feasibility bound failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

impl std::fmt::Display for BoundSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundSide::Lower => write!(f, "lower"),
            BoundSide::Upper => write!(f, "upper"),
        }
    }
}

/// Income quintile means and bracket boundaries. The outer boundaries are
/// implicit: zero below the first bracket, unbounded above the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeQuintiles {
    means: Vec<f64>,
    cuts: Vec<f64>,
}

impl IncomeQuintiles {
    pub fn new(means: Vec<f64>, cuts: Vec<f64>) -> Result<Self, RulesError> {
        let j = means.len();
        if j == 0 {
            return Err(RulesError::BadQuintiles("no groups".into()));
        }
        if cuts.len() + 1 != j {
            return Err(RulesError::BadQuintiles(format!(
                "{} means need {} interior boundaries, got {}",
                j,
                j - 1,
                cuts.len()
            )));
        }
        for v in means.iter().chain(&cuts) {
            if !v.is_finite() || *v <= 0.0 {
                return Err(RulesError::BadQuintiles(
                    "means and boundaries must be positive and finite".into(),
                ));
            }
        }
        for w in means.windows(2) {
            if w[1] <= w[0] {
                return Err(RulesError::BadQuintiles("means must be strictly increasing".into()));
            }
        }
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                return Err(RulesError::BadQuintiles(
                    "boundaries must be strictly increasing".into(),
                ));
            }
        }
        let q = Self { means, cuts };
        for g in 0..j {
            if !(q.lower_boundary(g) < q.mean(g) && q.mean(g) <= q.upper_boundary(g)) {
                return Err(RulesError::BadQuintiles(format!(
                    "mean {} of bracket {} outside its boundaries",
                    q.mean(g),
                    g
                )));
            }
        }
        Ok(q)
    }

    /// Quintile means and boundaries of the pooled CHARLS sample, in 2020
    /// CNY.
    pub fn charls2020() -> Self {
        Self::new(
            vec![2_181.0, 6_131.0, 12_902.0, 23_897.0, 51_599.0],
            vec![3_847.0, 8_838.0, 17_651.0, 31_300.0],
        )
        .expect("built-in quintiles are valid")
    }

    pub fn groups(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.means[j]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Lower boundary of bracket `j` (zero for the first bracket).
    pub fn lower_boundary(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.cuts[j - 1]
        }
    }

    /// Upper boundary of bracket `j` (infinite for the last bracket).
    pub fn upper_boundary(&self, j: usize) -> f64 {
        if j + 1 == self.means.len() {
            f64::INFINITY
        } else {
            self.cuts[j]
        }
    }

    /// Bracket index of an income under the half-open convention
    /// `(K̄_{j-1}, K̄_j]`; zero income belongs to the first bracket.
    pub fn bracket_of(&self, k: f64) -> usize {
        self.cuts.iter().position(|c| k <= *c).unwrap_or(self.means.len() - 1)
    }
}

/// Fair counting months at the anchor incomes (age 60 at the reference
/// year in the published calibration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairAnchors {
    m_star: Vec<f64>,
}

impl FairAnchors {
    pub fn new(m_star: Vec<f64>) -> Result<Self, RulesError> {
        if m_star.is_empty() {
            return Err(RulesError::BadAnchors("no anchors".into()));
        }
        if m_star.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(RulesError::BadAnchors("anchors must be positive".into()));
        }
        Ok(Self { m_star })
    }

    /// Anchor the schedule to a fitted model: fair counting month per
    /// group at the given age and period-index value.
    pub fn from_model(
        model: &MortalityModel,
        basis: &AnnuityBasis,
        age: u32,
        kappa: f64,
        quintiles: &IncomeQuintiles,
    ) -> Result<Self, RulesError> {
        if model.groups() != quintiles.groups() {
            return Err(RulesError::GroupMismatch {
                anchors: model.groups(),
                groups: quintiles.groups(),
            });
        }
        let m_star = (0..model.groups())
            .map(|g| model.fair_cm_at_kappa(age, g, kappa, basis))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(m_star)
    }

    pub fn len(&self) -> usize {
        self.m_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_star.is_empty()
    }

    pub fn m_star(&self, j: usize) -> f64 {
        self.m_star[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.m_star
    }

    /// Normalized fair benefit at anchor `j`: `q_j = K_j / M*_j`.
    pub fn q(&self, j: usize, quintiles: &IncomeQuintiles) -> f64 {
        quintiles.mean(j) / self.m_star[j]
    }

    fn check_groups(&self, quintiles: &IncomeQuintiles) -> Result<(), RulesError> {
        if self.m_star.len() != quintiles.groups() {
            return Err(RulesError::GroupMismatch {
                anchors: self.m_star.len(),
                groups: quintiles.groups(),
            });
        }
        Ok(())
    }
}

/// The four rule families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Piecewise-constant average counting month by bracket.
    AvgStep,
    /// Piecewise-linear average counting month over the anchor incomes.
    AvgLinear,
    /// Piecewise-constant marginal counting month by bracket.
    MarginalStep,
    /// Piecewise-linear marginal counting month over the anchor incomes.
    MarginalLinear,
}

/// A calibrated counting-month rule. `values` holds average counting
/// months for the average rules and marginal ones for the marginal rules;
/// `cumulative` carries the accumulated normalized benefits the marginal
/// rules need (at bracket lower boundaries for the step rule, at the
/// anchor incomes for the linear rule). `anchors` records the fair
/// counting months the schedule was calibrated to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSchedule {
    pub kind: RuleKind,
    pub quintiles: IncomeQuintiles,
    pub anchors: Vec<f64>,
    pub values: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Bracket rule: every income in bracket `j` is converted at the anchor's
/// fair counting month.
pub fn method1_schedule(
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<RuleSchedule, RulesError> {
    anchors.check_groups(quintiles)?;
    Ok(RuleSchedule {
        kind: RuleKind::AvgStep,
        quintiles: quintiles.clone(),
        anchors: anchors.values().to_vec(),
        values: anchors.values().to_vec(),
        cumulative: Vec::new(),
    })
}

/// Interpolation rule: the average counting month is piecewise linear over
/// the anchor incomes and clamped outside them.
pub fn method2_schedule(
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<RuleSchedule, RulesError> {
    anchors.check_groups(quintiles)?;
    Ok(RuleSchedule {
        kind: RuleKind::AvgLinear,
        quintiles: quintiles.clone(),
        anchors: anchors.values().to_vec(),
        values: anchors.values().to_vec(),
        cumulative: Vec::new(),
    })
}

/// Clamped piecewise-linear interpolation over the anchor incomes; exact
/// at the knots.
fn interp_over_means(values: &[f64], q: &IncomeQuintiles, k: f64) -> f64 {
    let j = values.len();
    if k <= q.mean(0) {
        return values[0];
    }
    if k >= q.mean(j - 1) {
        return values[j - 1];
    }
    let mut g = 0;
    while k > q.mean(g + 1) {
        g += 1;
    }
    if k == q.mean(g + 1) {
        return values[g + 1];
    }
    let t = (k - q.mean(g)) / (q.mean(g + 1) - q.mean(g));
    values[g] + t * (values[g + 1] - values[g])
}

impl RuleSchedule {
    /// Average counting month `M_m(K)`. For the marginal rules this is the
    /// implied value `K / (B(K)/phi)`; at zero income it is the first
    /// marginal value (the limit from the right).
    pub fn average_cm(&self, k: f64) -> f64 {
        match self.kind {
            RuleKind::AvgStep => self.values[self.quintiles.bracket_of(k)],
            RuleKind::AvgLinear => interp_over_means(&self.values, &self.quintiles, k),
            RuleKind::MarginalStep | RuleKind::MarginalLinear => {
                if k == 0.0 {
                    self.values[0]
                } else {
                    k / self.normalized_benefit(k)
                }
            }
        }
    }

    /// Normalized benefit `B(K) / phi`.
    pub fn normalized_benefit(&self, k: f64) -> f64 {
        match self.kind {
            RuleKind::AvgStep | RuleKind::AvgLinear => {
                if k == 0.0 {
                    0.0
                } else {
                    k / self.average_cm(k)
                }
            }
            RuleKind::MarginalStep => {
                let g = self.quintiles.bracket_of(k);
                self.cumulative[g] + (k - self.quintiles.lower_boundary(g)) / self.values[g]
            }
            RuleKind::MarginalLinear => {
                let q = &self.quintiles;
                let j = self.values.len();
                if k <= q.mean(0) {
                    return k / self.values[0];
                }
                if k > q.mean(j - 1) {
                    return self.cumulative[j - 1] + (k - q.mean(j - 1)) / self.values[j - 1];
                }
                let mut g = 0;
                while k > q.mean(g + 1) {
                    g += 1;
                }
                self.cumulative[g]
                    + partial_integral_raw(
                        self.values[g],
                        self.values[g + 1],
                        q.mean(g),
                        q.mean(g + 1),
                        k,
                    )
            }
        }
    }

    /// Monthly benefit in CNY for account scale `phi`.
    pub fn benefit(&self, k: f64, phi: f64) -> f64 {
        phi * self.normalized_benefit(k)
    }

    /// Analytic marginal counting month on the smooth segment containing
    /// `k` (brackets are half-open to the right). For the average rules
    /// this is `M^2 / (M - K M')`; for the marginal rules it is the
    /// schedule itself.
    pub fn marginal_cm(&self, k: f64) -> f64 {
        match self.kind {
            RuleKind::AvgStep => self.values[self.quintiles.bracket_of(k)],
            RuleKind::AvgLinear => {
                let q = &self.quintiles;
                let j = self.values.len();
                let m = self.average_cm(k);
                let slope = if k <= q.mean(0) || k > q.mean(j - 1) {
                    0.0
                } else {
                    let mut g = 0;
                    while k > q.mean(g + 1) {
                        g += 1;
                    }
                    (self.values[g + 1] - self.values[g]) / (q.mean(g + 1) - q.mean(g))
                };
                m * m / (m - k * slope)
            }
            RuleKind::MarginalStep => self.values[self.quintiles.bracket_of(k)],
            RuleKind::MarginalLinear => interp_over_means(&self.values, &self.quintiles, k),
        }
    }

    /// Finite-difference marginal counting month
    /// `h / (B(K+h)/phi - B(K)/phi)`. A non-positive benefit increment
    /// (possible at the step rule's bracket boundaries) is reported as a
    /// notch.
    pub fn marginal_cm_fd(&self, k: f64, h: f64) -> Result<f64, RulesError> {
        let db = self.normalized_benefit(k + h) - self.normalized_benefit(k);
        if db <= 0.0 {
            return Err(RulesError::BenefitNotch { at: k });
        }
        Ok(h / db)
    }
}

/// Result of an exact-matching recursion: the bracket/knot marginal
/// counting months and the accumulated normalized benefits (at bracket
/// lower boundaries for the step rule, at the anchors for the linear
/// rule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSchedule {
    pub delta: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Exact-matching recursion for the step marginal rule:
/// `delta_j = (K_j - K̄_{j-1}) / (q_j - C_{j-1})`. Errors when a bracket's
/// accumulated benefit already reaches its anchor target.
pub fn method3_exact(
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<ExactSchedule, RulesError> {
    anchors.check_groups(quintiles)?;
    let j = quintiles.groups();
    let mut delta = Vec::with_capacity(j);
    let mut cumulative = Vec::with_capacity(j);
    let mut c = 0.0;
    for g in 0..j {
        cumulative.push(c);
        let target = anchors.q(g, quintiles);
        if target <= c {
            return Err(RulesError::Method3Infeasible {
                bracket: g,
                target,
                cumulative: c,
            });
        }
        let d = (quintiles.mean(g) - quintiles.lower_boundary(g)) / (target - c);
        delta.push(d);
        if g + 1 < j {
            c += (quintiles.upper_boundary(g) - quintiles.lower_boundary(g)) / d;
        }
    }
    Ok(ExactSchedule { delta, cumulative })
}

/// Normalized benefits delivered at the anchors by a candidate step
/// marginal schedule.
fn y3_values(delta: &[f64], quintiles: &IncomeQuintiles) -> Vec<f64> {
    let j = delta.len();
    let mut y = Vec::with_capacity(j);
    let mut c = 0.0;
    for g in 0..j {
        y.push(c + (quintiles.mean(g) - quintiles.lower_boundary(g)) / delta[g]);
        if g + 1 < j {
            c += (quintiles.upper_boundary(g) - quintiles.lower_boundary(g)) / delta[g];
        }
    }
    y
}

fn method3_objective(delta: &[f64], anchors: &FairAnchors, quintiles: &IncomeQuintiles) -> f64 {
    y3_values(delta, quintiles)
        .iter()
        .enumerate()
        .map(|(g, y)| {
            let r = y / anchors.q(g, quintiles) - 1.0;
            r * r
        })
        .sum()
}

/// Benefit schedule of the calibrated step marginal rule.
pub fn method3_benefit(k: f64, schedule: &RuleSchedule) -> Result<f64, RulesError> {
    if schedule.kind != RuleKind::MarginalStep {
        return Err(RulesError::KindMismatch {
            expected: RuleKind::MarginalStep,
            got: schedule.kind,
        });
    }
    Ok(schedule.normalized_benefit(k))
}

/// Benefit schedule of the calibrated linear marginal rule.
pub fn method4_benefit(k: f64, schedule: &RuleSchedule) -> Result<f64, RulesError> {
    if schedule.kind != RuleKind::MarginalLinear {
        return Err(RulesError::KindMismatch {
            expected: RuleKind::MarginalLinear,
            got: schedule.kind,
        });
    }
    Ok(schedule.normalized_benefit(k))
}

/// Closed form of `int_{K_j}^{K_{j+1}} dC / delta(C)` with `delta` linear
/// from `a` to `b` over the segment: `(K_{j+1}-K_j) log(b/a) / (b-a)`,
/// continuous at `a = b` where it equals `(K_{j+1}-K_j)/a`. Relative knot
/// differences below 1e-8 take the constant branch.
pub fn segment_integral(a: f64, b: f64, k_lo: f64, k_hi: f64) -> Result<f64, RulesError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(RulesError::NonPositiveMonths(a));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(RulesError::NonPositiveMonths(b));
    }
    if !(k_hi > k_lo) {
        return Err(RulesError::BadSegment(k_lo, k_hi));
    }
    Ok(segment_integral_raw(a, b, k_lo, k_hi))
}

fn segment_integral_raw(a: f64, b: f64, k_lo: f64, k_hi: f64) -> f64 {
    let w = k_hi - k_lo;
    let d = (b - a) / a;
    if d.abs() <= 1e-8 {
        w / a
    } else {
        w / (b - a) * d.ln_1p()
    }
}

/// Partial integral `int_{K_j}^{K} dC / delta(C)` for `K` inside the
/// segment, used to evaluate the linear marginal rule between anchors.
pub fn partial_segment_integral(
    a: f64,
    b: f64,
    k_lo: f64,
    k_hi: f64,
    k: f64,
) -> Result<f64, RulesError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(RulesError::NonPositiveMonths(a));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(RulesError::NonPositiveMonths(b));
    }
    if !(k_hi > k_lo) || k < k_lo || k > k_hi {
        return Err(RulesError::BadSegment(k_lo, k_hi));
    }
    Ok(partial_integral_raw(a, b, k_lo, k_hi, k))
}

fn partial_integral_raw(a: f64, b: f64, k_lo: f64, k_hi: f64, k: f64) -> f64 {
    let w = k_hi - k_lo;
    let d = (b - a) / a;
    if d.abs() <= 1e-8 {
        return (k - k_lo) / a;
    }
    let s = (k - k_lo) / w;
    w / (b - a) * (d * s).ln_1p()
}

/// Exact-matching recursion for the linear marginal rule: the first knot
/// reproduces the first anchor directly and each subsequent knot solves
/// `I_j(delta_j, b) = q_{j+1} - q_j` by bracketing bisection (residual
/// tolerance 1e-10, initial bracket `[delta_j * 1e-3, delta_j * 1e3]`).
pub fn method4_exact(
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<ExactSchedule, RulesError> {
    anchors.check_groups(quintiles)?;
    let j = quintiles.groups();
    let mut delta = Vec::with_capacity(j);
    delta.push(anchors.m_star(0));
    let mut y = vec![anchors.q(0, quintiles)];
    for g in 0..j - 1 {
        let dq = anchors.q(g + 1, quintiles) - anchors.q(g, quintiles);
        if dq <= 0.0 {
            return Err(RulesError::Method4Infeasible {
                step: g,
                side: BoundSide::Lower,
            });
        }
        let a = delta[g];
        let (k_lo, k_hi) = (quintiles.mean(g), quintiles.mean(g + 1));
        let residual = |b: f64| segment_integral_raw(a, b, k_lo, k_hi) - dq;
        // Constant continuation: when the increment is exactly width/a the
        // next knot equals the previous one.
        if residual(a).abs() <= 1e-10 {
            y.push(y[g] + (k_hi - k_lo) / a);
            delta.push(a);
            continue;
        }
        // The integral is strictly decreasing in the new knot.
        let mut lo = a * 1e-3;
        let mut hi = a * 1e3;
        let r_lo = residual(lo);
        let r_hi = residual(hi);
        if r_lo < 0.0 {
            // Even the steepest allowed schedule cannot deliver dq.
            return Err(RulesError::Method4Infeasible {
                step: g,
                side: BoundSide::Upper,
            });
        }
        if r_hi > 0.0 {
            // dq is too small for any knot within the bracket.
            return Err(RulesError::Method4Infeasible {
                step: g,
                side: BoundSide::Lower,
            });
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let r = residual(mid);
            if r.abs() <= 1e-10 {
                break;
            }
            if r > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        y.push(y[g] + segment_integral_raw(a, mid, k_lo, k_hi));
        delta.push(mid);
    }
    Ok(ExactSchedule {
        delta,
        cumulative: y,
    })
}

fn y4_values(delta: &[f64], quintiles: &IncomeQuintiles) -> Vec<f64> {
    let j = delta.len();
    let mut y = Vec::with_capacity(j);
    y.push(quintiles.mean(0) / delta[0]);
    for g in 0..j - 1 {
        let inc = segment_integral_raw(
            delta[g],
            delta[g + 1],
            quintiles.mean(g),
            quintiles.mean(g + 1),
        );
        y.push(y[g] + inc);
    }
    y
}

fn method4_objective(delta: &[f64], anchors: &FairAnchors, quintiles: &IncomeQuintiles) -> f64 {
    y4_values(delta, quintiles)
        .iter()
        .enumerate()
        .map(|(g, y)| {
            let r = y / anchors.q(g, quintiles) - 1.0;
            r * r
        })
        .sum()
}

/// Calibration diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub objective: f64,
    pub iterations: usize,
    pub starts: usize,
}

/// A calibrated marginal schedule with its report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibratedSchedule {
    pub schedule: RuleSchedule,
    pub report: CalibrationReport,
}

/// Constrained least squares over weakly increasing positive sequences:
/// BFGS on an increment reparameterization from five deterministic starts,
/// then an active-set pass that pools near-ties exactly and re-optimizes
/// block values until the unconstrained block optimum is itself monotone.
fn calibrate_monotone(
    objective: impl Fn(&[f64]) -> f64,
    start: &[f64],
    scale: f64,
) -> Result<(Vec<f64>, f64, usize), RulesError> {
    use rand::Rng;
    use rand::SeedableRng;

    let j = start.len();
    let expand = |t: &[f64]| -> Vec<f64> {
        let mut d = Vec::with_capacity(j);
        d.push(t[0].exp());
        for g in 1..j {
            d.push(d[g - 1] + t[g].exp());
        }
        d
    };
    let pack = |d: &[f64]| -> Vec<f64> {
        let mut t = Vec::with_capacity(j);
        t.push(d[0].ln());
        for g in 1..j {
            t.push((d[g] - d[g - 1]).max(1e-8 * scale).ln());
        }
        t
    };

    let base = pack(start);
    let mut starts = vec![base.clone()];
    for s in 1..5u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xCA11_B800 + s);
        starts.push(
            base.iter()
                .map(|v| v + rng.random_range(-0.5..0.5))
                .collect(),
        );
    }
    let opts = BfgsOptions {
        max_iters: 600,
        ..Default::default()
    };
    let cone_obj = |t: &[f64]| objective(&expand(t));
    let mut iterations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let res = optim::minimize(&cone_obj, None, s, &opts);
        iterations += res.iterations;
        if !res.value.is_finite() {
            continue;
        }
        if best.as_ref().map_or(true, |(_, v)| res.value < *v) {
            best = Some((expand(&res.x), res.value));
        }
    }
    let (cone_delta, cone_value) =
        best.ok_or_else(|| RulesError::CalibrationFailed("all starts diverged".into()))?;

    // Active-set polish: start from singleton blocks at the cone optimum,
    // optimize block values freely, and merge adjacent blocks whenever the
    // free optimum inverts their order. Pooled entries come out exactly
    // equal, which the cone parameterization can only approach.
    let mut blocks: Vec<(usize, f64)> = cone_delta.iter().map(|d| (1usize, *d)).collect();
    let mut polished: Option<(Vec<f64>, f64)> = None;
    for _ in 0..=j {
        let n = blocks.len();
        let sizes: Vec<usize> = blocks.iter().map(|b| b.0).collect();
        let to_delta = |vals: &[f64]| -> Vec<f64> {
            let mut d = Vec::with_capacity(j);
            for (i, &sz) in sizes.iter().enumerate() {
                for _ in 0..sz {
                    d.push(vals[i]);
                }
            }
            d
        };
        let block_obj = |lv: &[f64]| {
            let vals: Vec<f64> = lv.iter().map(|v| v.exp()).collect();
            objective(&to_delta(&vals))
        };
        let lv0: Vec<f64> = blocks.iter().map(|b| b.1.ln()).collect();
        let res = optim::minimize(&block_obj, None, &lv0, &opts);
        iterations += res.iterations;
        let vals: Vec<f64> = res.x.iter().map(|v| v.exp()).collect();
        if let Some(g) = (1..n).find(|&g| vals[g] < vals[g - 1]) {
            // Merge the inverted pair and try again.
            let merged = (
                blocks[g - 1].0 + blocks[g].0,
                0.5 * (vals[g - 1] + vals[g]),
            );
            blocks[g - 1] = merged;
            blocks.remove(g);
            continue;
        }
        let delta = to_delta(&vals);
        polished = Some((delta, res.value));
        break;
    }

    let (delta, value) = match polished {
        Some((d, v)) if v <= cone_value => (d, v),
        _ => (cone_delta, cone_value),
    };
    if delta.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(RulesError::CalibrationFailed("non-positive optimum".into()));
    }
    Ok((delta, value, iterations))
}

/// Monotone start for the calibrations: the exact-matching schedule
/// projected to be weakly increasing, or a flat schedule when exact
/// matching is infeasible.
fn monotone_start(
    exact: Result<ExactSchedule, RulesError>,
    anchors: &FairAnchors,
) -> Vec<f64> {
    match exact {
        Ok(e) => {
            let mut d = e.delta;
            for g in 1..d.len() {
                d[g] = d[g].max(d[g - 1]);
            }
            d
        }
        Err(_) => {
            let mean = anchors.values().iter().sum::<f64>() / anchors.len() as f64;
            vec![mean; anchors.len()]
        }
    }
}

/// Calibrate the step marginal rule: the weakly increasing bracket
/// schedule minimizing the squared proportional deviations from the fair
/// anchors.
pub fn method3_calibrate(
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<CalibratedSchedule, RulesError> {
    anchors.check_groups(quintiles)?;
    let scale = anchors.values().iter().sum::<f64>() / anchors.len() as f64;
    let start = monotone_start(method3_exact(anchors, quintiles), anchors);
    let (delta, objective, iterations) = calibrate_monotone(
        |d| method3_objective(d, anchors, quintiles),
        &start,
        scale,
    )?;
    let j = quintiles.groups();
    let mut cumulative = Vec::with_capacity(j);
    let mut c = 0.0;
    for g in 0..j {
        cumulative.push(c);
        if g + 1 < j {
            c += (quintiles.upper_boundary(g) - quintiles.lower_boundary(g)) / delta[g];
        }
    }
    Ok(CalibratedSchedule {
        schedule: RuleSchedule {
            kind: RuleKind::MarginalStep,
            quintiles: quintiles.clone(),
            anchors: anchors.values().to_vec(),
            values: delta,
            cumulative,
        },
        report: CalibrationReport {
            objective,
            iterations,
            starts: 5,
        },
    })
}

/// Calibrate the linear marginal rule: weakly increasing knot values at
/// the anchor incomes minimizing the squared proportional deviations.
pub fn method4_calibrate(
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<CalibratedSchedule, RulesError> {
    anchors.check_groups(quintiles)?;
    let scale = anchors.values().iter().sum::<f64>() / anchors.len() as f64;
    let start = monotone_start(method4_exact(anchors, quintiles), anchors);
    let (delta, objective, iterations) = calibrate_monotone(
        |d| method4_objective(d, anchors, quintiles),
        &start,
        scale,
    )?;
    let cumulative = y4_values(&delta, quintiles);
    Ok(CalibratedSchedule {
        schedule: RuleSchedule {
            kind: RuleKind::MarginalLinear,
            quintiles: quintiles.clone(),
            anchors: anchors.values().to_vec(),
            values: delta,
            cumulative,
        },
        report: CalibrationReport {
            objective,
            iterations,
            starts: 5,
        },
    })
}

/// Residual subsidy `Lambda_m(K) = M_fair(K) / M_m(K) - 1` against a fair
/// benchmark.
pub fn residual_subsidy(k: f64, schedule: &RuleSchedule, fair_cm_at: impl Fn(f64) -> f64) -> f64 {
    fair_cm_at(k) / schedule.average_cm(k) - 1.0
}

/// Anchors-only fair benchmark: the fair counting month interpolated over
/// the anchor incomes and clamped outside them. With a fitted model the
/// model-based [`fair_cm_continuous`] is the richer benchmark; both agree
/// at the anchors.
pub fn anchor_benchmark<'a>(
    anchors: &'a FairAnchors,
    quintiles: &'a IncomeQuintiles,
) -> impl Fn(f64) -> f64 + 'a {
    move |k: f64| interp_over_means(anchors.values(), quintiles, k)
}

/// Baseline log mortality at income `k`, linearly interpolated across the
/// per-group values at one age and clamped outside the anchor range.
pub fn alpha_continuous(k: f64, alphas_by_group: &[f64], quintiles: &IncomeQuintiles) -> f64 {
    interp_over_means(alphas_by_group, quintiles, k)
}

/// Continuously fair counting month at income `k`: annuity valuation on
/// the income-interpolated mortality curve. Reproduces the per-group fair
/// counting month at each anchor income.
pub fn fair_cm_continuous(
    k: f64,
    model: &MortalityModel,
    basis: &AnnuityBasis,
    age: u32,
    kappa: f64,
    quintiles: &IncomeQuintiles,
) -> Result<f64, RulesError> {
    if model.groups() != quintiles.groups() {
        return Err(RulesError::GroupMismatch {
            anchors: model.groups(),
            groups: quintiles.groups(),
        });
    }
    let groups = model.groups();
    let mut rates = Vec::with_capacity((basis.limit_age.saturating_sub(age)) as usize);
    let mut alphas = vec![0.0; groups];
    for x in age..basis.limit_age {
        for (g, slot) in alphas.iter_mut().enumerate() {
            *slot = model.log_m_at_kappa(x, g, kappa)?;
        }
        rates.push(alpha_continuous(k, &alphas, quintiles).exp());
    }
    let curve = annuity::survival_from_rates(age, &rates, basis).map_err(ModelError::Annuity)?;
    Ok(12.0 * annuity::annuity_monthly(&curve, basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_anchors() -> FairAnchors {
        FairAnchors::new(vec![157.0, 158.1, 158.9, 160.0, 161.1]).unwrap()
    }

    fn quintiles() -> IncomeQuintiles {
        IncomeQuintiles::charls2020()
    }

    #[test]
    fn quintile_geometry() {
        let q = quintiles();
        assert_eq!(q.groups(), 5);
        assert_eq!(q.lower_boundary(0), 0.0);
        assert_eq!(q.upper_boundary(4), f64::INFINITY);
        assert_eq!(q.bracket_of(0.0), 0);
        assert_eq!(q.bracket_of(3_847.0), 0);
        assert_eq!(q.bracket_of(3_847.0 + 1e-9), 1);
        assert_eq!(q.bracket_of(1e9), 4);
        // Means sit inside their brackets.
        for g in 0..5 {
            assert!(q.lower_boundary(g) < q.mean(g) && q.mean(g) <= q.upper_boundary(g));
        }
    }

    #[test]
    fn quintile_validation() {
        assert!(IncomeQuintiles::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(IncomeQuintiles::new(vec![2.0, 1.0], vec![1.5]).is_err());
        // Mean outside its bracket.
        assert!(IncomeQuintiles::new(vec![1.0, 3.0], vec![4.0]).is_err());
    }

    #[test]
    fn method1_examples() {
        let s = method1_schedule(&paper_anchors(), &quintiles()).unwrap();
        assert_eq!(s.average_cm(1_000.0), 157.0);
        assert_eq!(s.average_cm(3_847.0), 157.0);
        assert_eq!(s.average_cm(3_847.0 + 1e-6), 158.1);
        assert_eq!(s.average_cm(1e6), 161.1);
    }

    #[test]
    fn method2_examples() {
        let s = method2_schedule(&paper_anchors(), &quintiles()).unwrap();
        assert_abs_diff_eq!(s.average_cm(51_499.0), 161.0960, epsilon = 1e-4);
        assert_eq!(s.average_cm(100.0), 157.0);
        assert_eq!(s.average_cm(23_897.0), 160.0);
        assert_eq!(s.average_cm(1e7), 161.1);
    }

    #[test]
    fn marginal_examples() {
        let s2 = method2_schedule(&paper_anchors(), &quintiles()).unwrap();
        // Worked example: the counting month applied to the 100 CNY
        // between 51,499 and 51,599.
        let fd = s2.marginal_cm_fd(51_499.0, 100.0).unwrap();
        assert_abs_diff_eq!(fd, 163.17, epsilon = 0.05);
        // Just above the top anchor the divisor is flat.
        assert_abs_diff_eq!(s2.marginal_cm(51_599.0 + 1.0), 161.1, epsilon = 1e-9);
        // Constant segments have marginal equal to the average.
        let s1 = method1_schedule(&paper_anchors(), &quintiles()).unwrap();
        assert_eq!(s1.marginal_cm(1_000.0), 157.0);
        // A small increment across a bracket boundary shrinks the benefit.
        assert!(matches!(
            s1.marginal_cm_fd(3_847.0, 1.0),
            Err(RulesError::BenefitNotch { .. })
        ));
    }

    #[test]
    fn method3_exact_reproduces_published_recursion() {
        let e = method3_exact(&paper_anchors(), &quintiles()).unwrap();
        let expected = [157.0, 160.0, 159.4, 162.8, 161.8];
        for (d, want) in e.delta.iter().zip(expected) {
            assert_abs_diff_eq!(*d, want, epsilon = 0.05);
        }
        // Exact matching reproduces every anchor benefit.
        let y = y3_values(&e.delta, &quintiles());
        for g in 0..5 {
            assert_abs_diff_eq!(y[g], paper_anchors().q(g, &quintiles()), epsilon = 1e-9);
        }
    }

    #[test]
    fn method3_exact_single_bracket() {
        let anchors = FairAnchors::new(vec![150.0]).unwrap();
        let q = IncomeQuintiles::new(vec![2_000.0], vec![]).unwrap();
        let e = method3_exact(&anchors, &q).unwrap();
        assert_abs_diff_eq!(e.delta[0], 150.0, epsilon = 1e-12);
        assert_eq!(e.cumulative, vec![0.0]);
    }

    #[test]
    fn method3_infeasible_when_target_already_met() {
        // A top anchor with a huge counting month drives q_5 below the
        // benefit already accumulated in brackets 1-4.
        let anchors = FairAnchors::new(vec![100.0, 100.0, 100.0, 100.0, 1e5]).unwrap();
        let r = method3_exact(&anchors, &quintiles());
        assert!(matches!(
            r,
            Err(RulesError::Method3Infeasible { bracket: 4, .. })
        ));
    }

    #[test]
    fn method3_calibration_on_published_anchors() {
        let cal = method3_calibrate(&paper_anchors(), &quintiles()).unwrap();
        let d = &cal.schedule.values;
        for g in 1..5 {
            assert!(d[g] >= d[g - 1], "calibrated schedule must be monotone");
        }
        // The exact schedule is non-monotone, so the fit cannot be exact.
        assert!(cal.report.objective > 0.0);
        assert!(cal.report.objective < 1e-4);
    }

    /// Anchors whose exact step recursion equals a chosen schedule: set
    /// the anchor benefits to the benefits the schedule delivers.
    fn anchors_from_delta3(delta: &[f64], q: &IncomeQuintiles) -> FairAnchors {
        let y = y3_values(delta, q);
        let m_star = (0..delta.len()).map(|g| q.mean(g) / y[g]).collect();
        FairAnchors::new(m_star).unwrap()
    }

    #[test]
    fn method3_calibration_exact_when_feasible() {
        let q = quintiles();
        let target = [150.0, 152.0, 154.0, 156.0, 158.0];
        let anchors = anchors_from_delta3(&target, &q);
        let e = method3_exact(&anchors, &q).unwrap();
        for g in 0..5 {
            assert_abs_diff_eq!(e.delta[g], target[g], epsilon = 1e-9);
        }
        let cal = method3_calibrate(&anchors, &q).unwrap();
        assert!(cal.report.objective <= 1e-12);
        for g in 0..5 {
            assert_abs_diff_eq!(cal.schedule.values[g], e.delta[g], epsilon = 1e-5);
        }
    }

    #[test]
    fn method3_benefit_shape() {
        let cal = method3_calibrate(&paper_anchors(), &quintiles()).unwrap();
        let s = &cal.schedule;
        assert_eq!(method3_benefit(0.0, s).unwrap(), 0.0);
        // Continuity at an interior boundary: the bracket-1 formula at the
        // boundary equals the stored cumulative starting bracket 2.
        let q = quintiles();
        let at_boundary = method3_benefit(q.upper_boundary(0), s).unwrap();
        assert_eq!(at_boundary, s.cumulative[1]);
        // Slope within a bracket is the reciprocal marginal value.
        let b1 = method3_benefit(10_000.0, s).unwrap();
        let b2 = method3_benefit(10_100.0, s).unwrap();
        assert_abs_diff_eq!((b2 - b1) / 100.0, 1.0 / s.values[2], epsilon = 1e-12);
        // Wrong kind is rejected.
        let avg = method1_schedule(&paper_anchors(), &quintiles()).unwrap();
        assert!(method3_benefit(1.0, &avg).is_err());
    }

    #[test]
    fn segment_integral_examples() {
        // Constant case: width / value.
        assert_abs_diff_eq!(
            segment_integral(160.0, 160.0, 0.0, 100.0).unwrap(),
            0.625,
            epsilon = 1e-15
        );
        // Closed form against the hand-evaluated value.
        let v = segment_integral(150.0, 160.0, 0.0, 1_000.0).unwrap();
        assert_abs_diff_eq!(v, 1_000.0 / 10.0 * (160.0f64 / 150.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 6.4539, epsilon = 1e-4);
        // Near-tie takes the constant branch: the limit check.
        let a = 160.0;
        let tied = segment_integral(a, a * (1.0 + 1e-9), 0.0, 100.0).unwrap();
        assert!((tied - 0.625).abs() < 1e-10);
        // Bad inputs.
        assert!(segment_integral(0.0, 160.0, 0.0, 100.0).is_err());
        assert!(segment_integral(160.0, -1.0, 0.0, 100.0).is_err());
        assert!(segment_integral(160.0, 160.0, 100.0, 100.0).is_err());
    }

    #[test]
    fn partial_integral_matches_full_at_segment_end() {
        let (a, b) = (150.0, 163.0);
        let (lo, hi) = (6_131.0, 12_902.0);
        let full = segment_integral(a, b, lo, hi).unwrap();
        let partial = partial_segment_integral(a, b, lo, hi, hi).unwrap();
        assert_abs_diff_eq!(partial, full, epsilon = 1e-12);
        assert_eq!(partial_segment_integral(a, b, lo, hi, lo).unwrap(), 0.0);
        assert!(partial_segment_integral(a, b, lo, hi, hi + 1.0).is_err());
    }

    #[test]
    fn method4_exact_reproduces_published_recursion() {
        let e = method4_exact(&paper_anchors(), &quintiles()).unwrap();
        let expected = [157.0, 160.4, 158.8, 163.8, 160.3];
        for (d, want) in e.delta.iter().zip(expected) {
            assert_abs_diff_eq!(*d, want, epsilon = 0.05);
        }
        // Anchors are matched along the recursion.
        for g in 0..5 {
            assert_abs_diff_eq!(
                e.cumulative[g],
                paper_anchors().q(g, &quintiles()),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn method4_constant_delta_case() {
        // Constant anchors make q_j = K_j/d, so every increment is exactly
        // width/d and the recursion keeps the knot unchanged.
        let q = quintiles();
        let d = 150.0;
        let anchors = FairAnchors::new(vec![d; 5]).unwrap();
        let e = method4_exact(&anchors, &q).unwrap();
        for knot in &e.delta {
            assert_eq!(*knot, d);
        }
    }

    #[test]
    fn method4_infeasible_sides() {
        // Decreasing q: lower side.
        let anchors = FairAnchors::new(vec![100.0, 150.0, 1e5, 160.0, 161.0]).unwrap();
        let r = method4_exact(&anchors, &quintiles());
        assert!(matches!(
            r,
            Err(RulesError::Method4Infeasible {
                side: BoundSide::Lower,
                ..
            })
        ));
    }

    #[test]
    fn method4_calibration_on_published_anchors() {
        let cal = method4_calibrate(&paper_anchors(), &quintiles()).unwrap();
        let d = &cal.schedule.values;
        for g in 1..5 {
            assert!(d[g] >= d[g - 1]);
        }
        assert!(cal.report.objective > 0.0);
        assert!(cal.report.objective < 1e-4);
        // Cumulative field is consistent with the recursion.
        let y = y4_values(d, &quintiles());
        for g in 0..5 {
            assert_abs_diff_eq!(cal.schedule.cumulative[g], y[g], epsilon = 1e-12);
        }
    }

    #[test]
    fn method4_calibration_exact_when_feasible() {
        // Anchors derived from a monotone knot vector: exact matching is
        // feasible, so the calibration objective is zero there.
        let q = quintiles();
        let target = [150.0, 152.0, 154.0, 156.0, 158.0];
        let y = y4_values(&target, &q);
        let m_star: Vec<f64> = (0..5).map(|g| q.mean(g) / y[g]).collect();
        let anchors = FairAnchors::new(m_star).unwrap();
        let e = method4_exact(&anchors, &q).unwrap();
        for g in 0..5 {
            assert_abs_diff_eq!(e.delta[g], target[g], epsilon = 1e-6);
        }
        let cal = method4_calibrate(&anchors, &q).unwrap();
        assert!(cal.report.objective <= 1e-12);
        for g in 0..5 {
            assert_abs_diff_eq!(cal.schedule.values[g], e.delta[g], epsilon = 1e-4);
        }
    }

    #[test]
    fn method4_benefit_shape() {
        let cal = method4_calibrate(&paper_anchors(), &quintiles()).unwrap();
        let s = &cal.schedule;
        assert_eq!(method4_benefit(0.0, s).unwrap(), 0.0);
        let q = quintiles();
        // At each anchor the benefit equals the stored cumulative value.
        for g in 0..5 {
            let b = method4_benefit(q.mean(g), s).unwrap();
            assert_abs_diff_eq!(b, s.cumulative[g], epsilon = 1e-12);
        }
        // Strictly increasing.
        let mut last = -1.0;
        for i in 0..200 {
            let k = 120_000.0 * f64::from(i) / 199.0;
            let b = method4_benefit(k, s).unwrap();
            assert!(b > last);
            last = b;
        }
    }

    #[test]
    fn benefit_examples() {
        let q = quintiles();
        let s1 = method1_schedule(&paper_anchors(), &q).unwrap();
        let b = s1.benefit(2_181.0, 2.4);
        assert_abs_diff_eq!(b, 2.4 * 2_181.0 / 157.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 33.34, epsilon = 0.01);
        assert_eq!(s1.benefit(0.0, 2.4), 0.0);
        // The interpolation rule hits phi * q_j at each anchor.
        let s2 = method2_schedule(&paper_anchors(), &q).unwrap();
        for g in 0..5 {
            assert_abs_diff_eq!(
                s2.benefit(q.mean(g), 2.4),
                2.4 * paper_anchors().q(g, &q),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn residual_subsidy_zero_at_anchors_for_average_rules() {
        let q = quintiles();
        let anchors = paper_anchors();
        let fair = anchor_benchmark(&anchors, &q);
        let s1 = method1_schedule(&anchors, &q).unwrap();
        let s2 = method2_schedule(&anchors, &q).unwrap();
        for g in 0..5 {
            let k = q.mean(g);
            assert!(residual_subsidy(k, &s1, &fair).abs() <= 1e-9);
            assert!(residual_subsidy(k, &s2, &fair).abs() <= 1e-9);
        }
        // A rule identical to the benchmark has zero residual everywhere.
        for i in 0..50 {
            let k = 500.0 + 2_000.0 * f64::from(i);
            assert_abs_diff_eq!(residual_subsidy(k, &s2, &fair), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn alpha_continuous_examples() {
        let q = quintiles();
        let alphas = [-4.0, -4.2, -4.4, -4.6, -4.8];
        assert_eq!(alpha_continuous(q.mean(2), &alphas, &q), -4.4);
        let mid = 0.5 * (q.mean(0) + q.mean(1));
        assert_abs_diff_eq!(alpha_continuous(mid, &alphas, &q), -4.1, epsilon = 1e-12);
        assert_eq!(alpha_continuous(1e9, &alphas, &q), -4.8);
        assert_eq!(alpha_continuous(0.0, &alphas, &q), -4.0);
    }

    #[test]
    fn fair_cm_continuous_brackets_and_anchors() {
        use crate::hermite::{AgeGrid, Coeff, HermiteSpec, SpecVariant};
        use crate::lee_carter::LcParams;

        let grid = AgeGrid::new(50, 120).unwrap();
        let spec = HermiteSpec::new(
            SpecVariant::Hsm3,
            vec![-5.0, -5.15, -5.3, -5.45, -5.6],
            Coeff::Shared(-0.7),
            Coeff::PerGroup(vec![4.0, 4.2, 4.4, 4.6, 4.8]),
            Coeff::Shared(1.0),
        )
        .unwrap();
        let lc = LcParams {
            age_start: 50,
            alpha: vec![0.0; 51],
            beta: vec![0.02; 51],
            year_start: 2019,
            kappa: vec![-5.0, 0.0],
            ref_year: 2020,
        };
        let model = MortalityModel::new(spec, lc, grid);
        let basis = AnnuityBasis::new(0.07, 120).unwrap();
        let q = quintiles();
        let anchors = FairAnchors::from_model(&model, &basis, 60, 0.0, &q).unwrap();

        // Anchor incomes reproduce the per-group fair counting months.
        for g in 0..5 {
            let cm = fair_cm_continuous(q.mean(g), &model, &basis, 60, 0.0, &q).unwrap();
            assert_abs_diff_eq!(cm, anchors.m_star(g), epsilon = 1e-9);
        }
        // Clamped outside the anchor range.
        let lo = fair_cm_continuous(1.0, &model, &basis, 60, 0.0, &q).unwrap();
        assert_abs_diff_eq!(lo, anchors.m_star(0), epsilon = 1e-9);
        let hi = fair_cm_continuous(9e8, &model, &basis, 60, 0.0, &q).unwrap();
        assert_abs_diff_eq!(hi, anchors.m_star(4), epsilon = 1e-9);
        // Between anchors the value lies between the neighboring ones.
        let k = 0.5 * (q.mean(1) + q.mean(2));
        let cm = fair_cm_continuous(k, &model, &basis, 60, 0.0, &q).unwrap();
        assert!(cm > anchors.m_star(1) && cm < anchors.m_star(2));
    }
}
