//! Hermite basis evaluation, grouped spline specifications for baseline log
//! mortality, the Gompertz reduction, and crossover diagnostics.
//!
//! A baseline schedule for group `j` over standardized age `u` in `[0, 1]`
//! is `theta_j*h00(u) + omega_j*h01(u) + mu0_j*h10(u) + mu1_j*h11(u)`, so
//! `theta` and `omega` are the log mortality levels at the youngest and
//! oldest fitted ages and `mu0`/`mu1` are the endpoint slopes. Grouped
//! variants differ only in which coefficients are shared across groups.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{self, BfgsOptions};
use crate::subgroup::PooledCell;

/// Slack allowed when checking the non-crossover inequality; fitted specs
/// satisfy the constraint up to this feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Error, Debug)]
pub enum HermiteError {
    #[error("standardized age {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("age {age} outside grid [{x0}, {x1}]")]
    AgeOutOfRange { age: f64, x0: u32, x1: u32 },
    #[error("group index {index} out of range for {groups} groups")]
    GroupIndex { index: usize, groups: usize },
    #[error("age grid requires x0 < x1, got [{0}, {1}]")]
    DegenerateGrid(u32, u32),
    #[error("coefficient layout does not match variant {variant:?}: {detail}")]
    Layout {
        variant: SpecVariant,
        detail: String,
    },
    #[error("group {0} has all-zero deaths; Gompertz MLE is unbounded")]
    DegenerateGroup(usize),
    #[error("group {0} needs at least two distinct ages with positive exposure")]
    InsufficientAges(usize),
    #[error("Gompertz fit did not converge for group {group}: gradient norm {grad_norm:.3e}")]
    NonConvergence { group: usize, grad_norm: f64 },
}

/// Fitted age range with the standardized map `u = (x - x0)/(x1 - x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGrid {
    x0: u32,
    x1: u32,
}

impl AgeGrid {
    pub fn new(x0: u32, x1: u32) -> Result<Self, HermiteError> {
        if x0 >= x1 {
            return Err(HermiteError::DegenerateGrid(x0, x1));
        }
        Ok(Self { x0, x1 })
    }

    pub fn x0(&self) -> u32 {
        self.x0
    }

    pub fn x1(&self) -> u32 {
        self.x1
    }

    /// Width of the grid in years of age.
    pub fn span(&self) -> f64 {
        f64::from(self.x1 - self.x0)
    }

    /// Standardized age; 0 at `x0` and 1 at `x1`.
    pub fn standardize(&self, age: f64) -> f64 {
        (age - f64::from(self.x0)) / self.span()
    }

    pub fn contains(&self, age: f64) -> bool {
        age >= f64::from(self.x0) && age <= f64::from(self.x1)
    }
}

/// Values of the four cubic Hermite basis polynomials at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValues {
    pub h00: f64,
    pub h01: f64,
    pub h10: f64,
    pub h11: f64,
}

/// Evaluate the Hermite basis at standardized age `u`.
///
/// `u` within `1e-12` of an endpoint is snapped to it so that age-grid
/// endpoints evaluate exactly; anything further outside `[0, 1]` is a
/// domain error.
pub fn hermite_basis(u: f64) -> Result<BasisValues, HermiteError> {
    let u = if u.abs() < 1e-12 {
        0.0
    } else if (u - 1.0).abs() < 1e-12 {
        1.0
    } else {
        u
    };
    if !(0.0..=1.0).contains(&u) {
        return Err(HermiteError::OutOfDomain(u));
    }
    let om = 1.0 - u;
    Ok(BasisValues {
        h00: (1.0 + 2.0 * u) * om * om,
        h01: u * u * (3.0 - 2.0 * u),
        h10: u * om * om,
        h11: u * u * (u - 1.0),
    })
}

/// Grouped spline variants. The HSM variants follow the shared/group-specific
/// layouts below; the Gompertz variants are the two-parameter reduction with
/// both endpoint slopes tied to `omega - theta`.
///
/// | variant | group-specific      | shared            |
/// |---------|---------------------|-------------------|
/// | HSM-I   | theta, omega, mu0   | mu1               |
/// | HSM-II  | theta, omega        | mu0, mu1          |
/// | HSM-III | theta, mu0          | omega, mu1        |
/// | HSM-IV  | theta               | omega, mu0, mu1   |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecVariant {
    Hsm1,
    Hsm2,
    Hsm3,
    Hsm4,
    GompertzFree,
    GompertzConstrained,
}

impl SpecVariant {
    pub fn is_hsm(&self) -> bool {
        matches!(
            self,
            SpecVariant::Hsm1 | SpecVariant::Hsm2 | SpecVariant::Hsm3 | SpecVariant::Hsm4
        )
    }

    /// Number of free parameters for `groups` groups, as counted in the
    /// AIC/BIC comparison.
    pub fn free_params(&self, groups: usize) -> usize {
        match self {
            SpecVariant::Hsm1 => 3 * groups + 1,
            SpecVariant::Hsm2 | SpecVariant::Hsm3 => 2 * groups + 2,
            SpecVariant::Hsm4 => groups + 3,
            SpecVariant::GompertzFree | SpecVariant::GompertzConstrained => 2 * groups,
        }
    }
}

/// A coefficient that is either shared across groups or group-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coeff {
    Shared(f64),
    PerGroup(Vec<f64>),
}

impl Coeff {
    fn get(&self, group: usize) -> f64 {
        match self {
            Coeff::Shared(v) => *v,
            Coeff::PerGroup(v) => v[group],
        }
    }

    fn len_matches(&self, groups: usize) -> bool {
        match self {
            Coeff::Shared(_) => true,
            Coeff::PerGroup(v) => v.len() == groups,
        }
    }
}

/// A grouped baseline specification: variant tag plus coefficients over
/// standardized age. Groups are indexed `0..J`, ordered from low to high
/// socioeconomic status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteSpec {
    variant: SpecVariant,
    theta: Vec<f64>,
    omega: Coeff,
    mu0: Coeff,
    mu1: Coeff,
}

impl HermiteSpec {
    /// Build a spec, validating that the shared/group-specific layout
    /// matches the variant and, for Gompertz variants, that both slopes
    /// equal `omega - theta`.
    pub fn new(
        variant: SpecVariant,
        theta: Vec<f64>,
        omega: Coeff,
        mu0: Coeff,
        mu1: Coeff,
    ) -> Result<Self, HermiteError> {
        let groups = theta.len();
        let layout_err = |detail: &str| HermiteError::Layout {
            variant,
            detail: detail.to_string(),
        };
        if groups == 0 {
            return Err(layout_err("at least one group required"));
        }
        if !omega.len_matches(groups) || !mu0.len_matches(groups) || !mu1.len_matches(groups) {
            return Err(layout_err("per-group coefficient length mismatch"));
        }
        let want = |per_group: bool, c: &Coeff, name: &str| -> Result<(), HermiteError> {
            let ok = match c {
                Coeff::Shared(_) => !per_group,
                Coeff::PerGroup(_) => per_group,
            };
            if ok {
                Ok(())
            } else if per_group {
                Err(layout_err(&format!("{name} must be group-specific")))
            } else {
                Err(layout_err(&format!("{name} must be shared")))
            }
        };
        match variant {
            SpecVariant::Hsm1 => {
                want(true, &omega, "omega")?;
                want(true, &mu0, "mu0")?;
                want(false, &mu1, "mu1")?;
            }
            SpecVariant::Hsm2 => {
                want(true, &omega, "omega")?;
                want(false, &mu0, "mu0")?;
                want(false, &mu1, "mu1")?;
            }
            SpecVariant::Hsm3 => {
                want(false, &omega, "omega")?;
                want(true, &mu0, "mu0")?;
                want(false, &mu1, "mu1")?;
            }
            SpecVariant::Hsm4 => {
                want(false, &omega, "omega")?;
                want(false, &mu0, "mu0")?;
                want(false, &mu1, "mu1")?;
            }
            SpecVariant::GompertzFree | SpecVariant::GompertzConstrained => {
                want(true, &omega, "omega")?;
                want(true, &mu0, "mu0")?;
                want(true, &mu1, "mu1")?;
                for j in 0..groups {
                    let slope = omega.get(j) - theta[j];
                    if (mu0.get(j) - slope).abs() > 1e-12 || (mu1.get(j) - slope).abs() > 1e-12 {
                        return Err(layout_err("Gompertz slopes must equal omega - theta"));
                    }
                }
            }
        }
        Ok(Self {
            variant,
            theta,
            omega,
            mu0,
            mu1,
        })
    }

    /// Two-parameter Gompertz spec from endpoint log levels; slopes are
    /// derived as `omega - theta`.
    pub fn gompertz(
        constrained: bool,
        theta: Vec<f64>,
        omega: Vec<f64>,
    ) -> Result<Self, HermiteError> {
        let slopes: Vec<f64> = theta
            .iter()
            .zip(&omega)
            .map(|(t, w)| w - t)
            .collect();
        let variant = if constrained {
            SpecVariant::GompertzConstrained
        } else {
            SpecVariant::GompertzFree
        };
        Self::new(
            variant,
            theta,
            Coeff::PerGroup(omega),
            Coeff::PerGroup(slopes.clone()),
            Coeff::PerGroup(slopes),
        )
    }

    pub fn variant(&self) -> SpecVariant {
        self.variant
    }

    pub fn groups(&self) -> usize {
        self.theta.len()
    }

    fn check_group(&self, group: usize) -> Result<(), HermiteError> {
        if group >= self.groups() {
            return Err(HermiteError::GroupIndex {
                index: group,
                groups: self.groups(),
            });
        }
        Ok(())
    }

    pub fn theta(&self, group: usize) -> f64 {
        self.theta[group]
    }

    pub fn omega(&self, group: usize) -> f64 {
        self.omega.get(group)
    }

    pub fn mu0(&self, group: usize) -> f64 {
        self.mu0.get(group)
    }

    pub fn mu1(&self, group: usize) -> f64 {
        self.mu1.get(group)
    }

    pub fn theta_all(&self) -> &[f64] {
        &self.theta
    }

    /// Baseline log central death rate for `group` at `age` on `grid`.
    pub fn alpha(&self, group: usize, age: f64, grid: &AgeGrid) -> Result<f64, HermiteError> {
        self.check_group(group)?;
        if !grid.contains(age) {
            return Err(HermiteError::AgeOutOfRange {
                age,
                x0: grid.x0(),
                x1: grid.x1(),
            });
        }
        let b = hermite_basis(grid.standardize(age))?;
        Ok(self.theta[group] * b.h00
            + self.omega.get(group) * b.h01
            + self.mu0.get(group) * b.h10
            + self.mu1.get(group) * b.h11)
    }

    pub fn free_params(&self) -> usize {
        self.variant.free_params(self.groups())
    }
}

/// Result of the non-crossover diagnostic: whether the sufficient
/// inequality `mu0_j - mu0_i <= -3 (theta_j - theta_i)` holds for every
/// ordered pair `j > i`, plus the violating pairs `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossoverCheck {
    pub holds: bool,
    pub violations: Vec<(usize, usize)>,
}

/// Check the analytic non-crossover condition on a spec. Pairs violating
/// the inequality by more than [`FEASIBILITY_TOL`] are reported.
pub fn check_non_crossover(spec: &HermiteSpec) -> CrossoverCheck {
    let mut violations = Vec::new();
    let groups = spec.groups();
    for i in 0..groups {
        for j in (i + 1)..groups {
            let lhs = spec.mu0(j) - spec.mu0(i);
            let rhs = -3.0 * (spec.theta(j) - spec.theta(i));
            if lhs > rhs + FEASIBILITY_TOL {
                violations.push((i, j));
            }
        }
    }
    CrossoverCheck {
        holds: violations.is_empty(),
        violations,
    }
}

/// Per-group Gompertz coefficients on the actual age scale
/// (`log m = intercept + slope * age`) with the equivalent spline spec.
#[derive(Debug, Clone)]
pub struct GompertzFit {
    pub spec: HermiteSpec,
    pub intercept: Vec<f64>,
    pub slope: Vec<f64>,
    pub log_likelihood: f64,
}

/// Fit the Gompertz reduction to pooled group mortality cells by Poisson
/// maximum likelihood.
///
/// Unconstrained, each group is fitted independently. Constrained, the
/// intercepts and slopes are both required to be weakly decreasing in the
/// group index, via a difference reparameterization optimized jointly.
pub fn gompertz_fit(
    cells: &[PooledCell],
    grid: &AgeGrid,
    constrained: bool,
) -> Result<GompertzFit, HermiteError> {
    let groups = cells
        .iter()
        .map(|c| c.group + 1)
        .max()
        .unwrap_or(0);
    if groups == 0 {
        return Err(HermiteError::InsufficientAges(0));
    }
    let mut by_group: Vec<Vec<&PooledCell>> = vec![Vec::new(); groups];
    for c in cells.iter().filter(|c| c.exposure > 0.0) {
        by_group[c.group].push(c);
    }
    for (j, g) in by_group.iter().enumerate() {
        let mut ages: Vec<u32> = g.iter().map(|c| c.age).collect();
        ages.sort_unstable();
        ages.dedup();
        if ages.len() < 2 {
            return Err(HermiteError::InsufficientAges(j));
        }
        if g.iter().map(|c| c.deaths).sum::<f64>() <= 0.0 {
            return Err(HermiteError::DegenerateGroup(j));
        }
    }

    let (intercept, slope, log_likelihood) = if constrained {
        fit_gompertz_constrained(&by_group)?
    } else {
        let mut intercept = Vec::with_capacity(groups);
        let mut slope = Vec::with_capacity(groups);
        let mut ll = 0.0;
        for (j, g) in by_group.iter().enumerate() {
            let (a, b, l) = fit_gompertz_group(g, j)?;
            intercept.push(a);
            slope.push(b);
            ll += l;
        }
        (intercept, slope, ll)
    };

    let theta: Vec<f64> = intercept
        .iter()
        .zip(&slope)
        .map(|(a, b)| a + b * f64::from(grid.x0()))
        .collect();
    let omega: Vec<f64> = intercept
        .iter()
        .zip(&slope)
        .map(|(a, b)| a + b * f64::from(grid.x1()))
        .collect();
    let spec = HermiteSpec::gompertz(constrained, theta, omega)?;
    Ok(GompertzFit {
        spec,
        intercept,
        slope,
        log_likelihood,
    })
}

fn gompertz_loglik(cells: &[&PooledCell], a: f64, b: f64) -> f64 {
    cells
        .iter()
        .map(|c| {
            let eta = a + b * f64::from(c.age);
            c.deaths * eta - c.exposure * eta.exp()
        })
        .sum()
}

fn init_gompertz(cells: &[&PooledCell]) -> (f64, f64) {
    // Least squares on observed log rates where deaths are positive.
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.deaths > 0.0)
        .map(|c| (f64::from(c.age), (c.deaths / c.exposure).ln()))
        .collect();
    if pts.len() < 2 {
        let d: f64 = cells.iter().map(|c| c.deaths).sum();
        let e: f64 = cells.iter().map(|c| c.exposure).sum();
        return (((d.max(1e-12)) / e).ln(), 0.0);
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return (sy / n, 0.0);
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}

/// Damped 2-d Newton ascent on the per-group Poisson log likelihood.
fn fit_gompertz_group(
    cells: &[&PooledCell],
    group: usize,
) -> Result<(f64, f64, f64), HermiteError> {
    let (mut a, mut b) = init_gompertz(cells);
    let mut ll = gompertz_loglik(cells, a, b);
    for _ in 0..200 {
        let mut ga = 0.0;
        let mut gb = 0.0;
        let mut haa = 0.0;
        let mut hab = 0.0;
        let mut hbb = 0.0;
        for c in cells {
            let x = f64::from(c.age);
            let mu = c.exposure * (a + b * x).exp();
            let r = c.deaths - mu;
            ga += r;
            gb += r * x;
            haa += mu;
            hab += mu * x;
            hbb += mu * x * x;
        }
        let gnorm = ga.abs().max(gb.abs());
        let scale: f64 = cells.iter().map(|c| c.deaths).sum::<f64>().max(1.0);
        if gnorm < 1e-10 * scale {
            return Ok((a, b, ll));
        }
        // Newton step solves [haa hab; hab hbb] d = [ga; gb].
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            return Err(HermiteError::NonConvergence {
                group,
                grad_norm: gnorm,
            });
        }
        let da = (gb * hab - ga * hbb) / -det;
        let db = (ga * hab - gb * haa) / -det;
        let mut step = 1.0;
        loop {
            let cand_ll = gompertz_loglik(cells, a + step * da, b + step * db);
            if cand_ll >= ll || step < 1e-12 {
                a += step * da;
                b += step * db;
                ll = cand_ll.max(ll);
                break;
            }
            step *= 0.5;
        }
    }
    Err(HermiteError::NonConvergence {
        group,
        grad_norm: f64::NAN,
    })
}

/// Joint constrained fit: `a` and `b` sequences weakly decreasing in the
/// group index, expressed as a free first value minus cumulated
/// exponentials and optimized with BFGS from three deterministic starts.
fn fit_gompertz_constrained(
    by_group: &[Vec<&PooledCell>],
) -> Result<(Vec<f64>, Vec<f64>, f64), HermiteError> {
    let groups = by_group.len();
    let expand = |p: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![p[0]; groups];
        let mut b = vec![p[groups]; groups];
        for j in 1..groups {
            a[j] = a[j - 1] - p[j].exp();
            b[j] = b[j - 1] - p[groups + j].exp();
        }
        (a, b)
    };
    let objective = |p: &[f64]| -> f64 {
        let (a, b) = expand(p);
        -(0..groups)
            .map(|j| gompertz_loglik(&by_group[j], a[j], b[j]))
            .sum::<f64>()
    };

    // Start from per-group unconstrained estimates projected to be
    // weakly decreasing, plus two fixed perturbations.
    let mut a0 = Vec::with_capacity(groups);
    let mut b0 = Vec::with_capacity(groups);
    for g in by_group {
        let (a, b) = init_gompertz(g);
        a0.push(a);
        b0.push(b);
    }
    for j in 1..groups {
        a0[j] = a0[j].min(a0[j - 1]);
        b0[j] = b0[j].min(b0[j - 1]);
    }
    let pack = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; 2 * groups];
        p[0] = a[0];
        p[groups] = b[0];
        for j in 1..groups {
            p[j] = (a[j - 1] - a[j]).max(1e-8).ln();
            p[groups + j] = (b[j - 1] - b[j]).max(1e-8).ln();
        }
        p
    };
    let base = pack(&a0, &b0);
    let starts: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            base.iter()
                .enumerate()
                .map(|(i, v)| v + 0.05 * k as f64 * if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let opts = BfgsOptions {
        max_iters: 1000,
        ..Default::default()
    };
    let best = optim::minimize_multistart(objective, None, &starts, &opts).ok_or(
        HermiteError::NonConvergence {
            group: 0,
            grad_norm: f64::NAN,
        },
    )?;
    let (a, b) = expand(&best.x);
    Ok((a, b, -best.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgroup::PooledCell;
    use approx::assert_abs_diff_eq;

    fn cell(age: u32, group: usize, deaths: f64, exposure: f64) -> PooledCell {
        PooledCell {
            age,
            group,
            deaths,
            exposure,
        }
    }

    #[test]
    fn basis_endpoints() {
        let b0 = hermite_basis(0.0).unwrap();
        assert_eq!((b0.h00, b0.h01, b0.h10, b0.h11), (1.0, 0.0, 0.0, 0.0));
        let b1 = hermite_basis(1.0).unwrap();
        assert_eq!((b1.h00, b1.h01, b1.h10, b1.h11), (0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn basis_midpoint() {
        let b = hermite_basis(0.5).unwrap();
        assert_abs_diff_eq!(b.h00, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.h01, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.h10, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(b.h11, -0.125, epsilon = 1e-15);
    }

    #[test]
    fn basis_domain() {
        assert!(hermite_basis(-0.1).is_err());
        assert!(hermite_basis(1.1).is_err());
        // Tiny negative rounding noise snaps to the endpoint.
        let b = hermite_basis(-1e-13).unwrap();
        assert_eq!(b.h00, 1.0);
        let b = hermite_basis(1.0 + 1e-13).unwrap();
        assert_eq!(b.h01, 1.0);
    }

    #[test]
    fn alpha_endpoint_interpolation() {
        let grid = AgeGrid::new(50, 120).unwrap();
        let spec = HermiteSpec::new(
            SpecVariant::Hsm3,
            vec![-5.0],
            Coeff::Shared(0.0),
            Coeff::PerGroup(vec![0.0]),
            Coeff::Shared(0.0),
        )
        .unwrap();
        assert_eq!(spec.alpha(0, 120.0, &grid).unwrap(), 0.0);
        assert_eq!(spec.alpha(0, 50.0, &grid).unwrap(), -5.0);
    }

    #[test]
    fn alpha_gompertz_reduction_midpoint() {
        let grid = AgeGrid::new(50, 120).unwrap();
        let spec = HermiteSpec::gompertz(false, vec![-6.0], vec![-1.0]).unwrap();
        // Slopes are 5, so the curve is the linear interpolant -6 + 5u.
        let mid = spec.alpha(0, 85.0, &grid).unwrap();
        assert_abs_diff_eq!(mid, -3.5, epsilon = 1e-12);
    }

    #[test]
    fn alpha_rejects_bad_indices() {
        let grid = AgeGrid::new(50, 120).unwrap();
        let spec = HermiteSpec::gompertz(false, vec![-6.0], vec![-1.0]).unwrap();
        assert!(matches!(
            spec.alpha(1, 60.0, &grid),
            Err(HermiteError::GroupIndex { .. })
        ));
        assert!(matches!(
            spec.alpha(0, 130.0, &grid),
            Err(HermiteError::AgeOutOfRange { .. })
        ));
    }

    #[test]
    fn layout_validation() {
        // HSM-III needs shared omega.
        assert!(HermiteSpec::new(
            SpecVariant::Hsm3,
            vec![-5.0, -5.5],
            Coeff::PerGroup(vec![0.0, 0.0]),
            Coeff::PerGroup(vec![1.0, 1.0]),
            Coeff::Shared(0.0),
        )
        .is_err());
        // Gompertz slope identity enforced.
        assert!(HermiteSpec::new(
            SpecVariant::GompertzFree,
            vec![-5.0],
            Coeff::PerGroup(vec![0.0]),
            Coeff::PerGroup(vec![1.0]),
            Coeff::PerGroup(vec![5.0]),
        )
        .is_err());
    }

    #[test]
    fn non_crossover_examples() {
        let grid_spec = |mu0: Vec<f64>| {
            HermiteSpec::new(
                SpecVariant::Hsm3,
                vec![-5.0, -5.5],
                Coeff::Shared(0.0),
                Coeff::PerGroup(mu0),
                Coeff::Shared(0.0),
            )
            .unwrap()
        };
        let ok = check_non_crossover(&grid_spec(vec![1.0, 2.0]));
        assert!(ok.holds, "1.0 <= 1.5");
        let bad = check_non_crossover(&grid_spec(vec![1.0, 3.0]));
        assert!(!bad.holds, "2.0 > 1.5");
        assert_eq!(bad.violations, vec![(0, 1)]);

        let single = HermiteSpec::new(
            SpecVariant::Hsm3,
            vec![-5.0],
            Coeff::Shared(0.0),
            Coeff::PerGroup(vec![1.0]),
            Coeff::Shared(0.0),
        )
        .unwrap();
        assert!(check_non_crossover(&single).holds);
    }

    #[test]
    fn gompertz_two_points_exact_line() {
        let grid = AgeGrid::new(50, 120).unwrap();
        // Exact rates at two ages determine the line through the log rates.
        let a_true = -10.0;
        let b_true = 0.08;
        let cells: Vec<PooledCell> = [60u32, 80]
            .iter()
            .map(|&x| {
                let m = (a_true + b_true * f64::from(x)).exp();
                cell(x, 0, m * 1000.0, 1000.0)
            })
            .collect();
        let fit = gompertz_fit(&cells, &grid, false).unwrap();
        assert_abs_diff_eq!(fit.intercept[0], a_true, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.slope[0], b_true, epsilon = 1e-10);
    }

    #[test]
    fn gompertz_recovery_from_poisson_means() {
        let grid = AgeGrid::new(50, 120).unwrap();
        // Huge exposure with deaths set to the Poisson mean: the MLE must
        // recover the generating coefficients.
        let mut cells = Vec::new();
        for j in 0..3usize {
            let a = -10.0 + 0.2 * (j as f64 + 1.0);
            let b = 0.09;
            for x in (50..=100).step_by(5) {
                let e = 1e8;
                let m = (a + b * f64::from(x)).exp();
                cells.push(cell(x, j, e * m, e));
            }
        }
        let fit = gompertz_fit(&cells, &grid, false).unwrap();
        for j in 0..3 {
            let a = -10.0 + 0.2 * (j as f64 + 1.0);
            assert_abs_diff_eq!(fit.intercept[j], a, epsilon = 1e-2);
            assert_abs_diff_eq!(fit.slope[j], 0.09, epsilon = 1e-2);
        }
    }

    #[test]
    fn gompertz_constrained_orders_slopes() {
        let grid = AgeGrid::new(50, 120).unwrap();
        // True slopes increase with group (crossing curves); the
        // constrained fit must return weakly decreasing slopes.
        let mut cells = Vec::new();
        for j in 0..3usize {
            let a = -9.0 - 0.3 * j as f64;
            let b = 0.07 + 0.01 * j as f64;
            for x in (50..=100).step_by(2) {
                let e = 1e6;
                let m = (a + b * f64::from(x)).exp();
                cells.push(cell(x, j, e * m, e));
            }
        }
        let fit = gompertz_fit(&cells, &grid, true).unwrap();
        for j in 1..3 {
            assert!(fit.slope[j] <= fit.slope[j - 1] + 1e-12);
            assert!(fit.intercept[j] <= fit.intercept[j - 1] + 1e-12);
        }
        // Constrained likelihood cannot beat the unconstrained one.
        let free = gompertz_fit(&cells, &grid, false).unwrap();
        assert!(fit.log_likelihood <= free.log_likelihood + 1e-6);
    }

    #[test]
    fn gompertz_rejects_degenerate_groups() {
        let grid = AgeGrid::new(50, 120).unwrap();
        let cells = vec![cell(60, 0, 0.0, 100.0), cell(70, 0, 0.0, 100.0)];
        assert!(matches!(
            gompertz_fit(&cells, &grid, false),
            Err(HermiteError::DegenerateGroup(0))
        ));
        let one_age = vec![cell(60, 0, 5.0, 100.0)];
        assert!(matches!(
            gompertz_fit(&one_age, &grid, false),
            Err(HermiteError::InsufficientAges(0))
        ));
    }
}
