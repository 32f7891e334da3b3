//! Random-walk-with-drift dynamics for the period index and reproducible
//! path simulation.
//!
//! Sampling uses one ChaCha substream per path, so results are identical
//! regardless of how many paths are requested or how the work is
//! scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ProjectionError {
    #[error("random-walk fit needs a series of length >= 2, got {0}")]
    SeriesTooShort(usize),
}

/// Random walk with drift: `kappa_{t+1} = kappa_t + drift + sigma * Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwdParams {
    pub drift: f64,
    pub sigma: f64,
}

/// Maximum-likelihood estimates from a yearly series: the drift is the mean
/// first difference and sigma the standard deviation of the differences
/// about it (divisor = number of differences).
pub fn fit_rwd(kappa: &[f64]) -> Result<RwdParams, ProjectionError> {
    let t = kappa.len();
    if t < 2 {
        return Err(ProjectionError::SeriesTooShort(t));
    }
    let n = (t - 1) as f64;
    let drift = (kappa[t - 1] - kappa[0]) / n;
    let ss: f64 = kappa
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0] - drift;
            d * d
        })
        .sum();
    Ok(RwdParams {
        drift,
        sigma: (ss / n).sqrt(),
    })
}

/// Simulated paths of the period index. `values` is row-major
/// `[path][step]`; step `s` holds the index for `base_year + s + 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaPaths {
    pub base_year: i32,
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    values: Vec<f64>,
}

impl KappaPaths {
    pub fn value(&self, path: usize, step: usize) -> f64 {
        self.values[path * self.horizon + step]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        &self.values[path * self.horizon..(path + 1) * self.horizon]
    }

    pub fn year_of_step(&self, step: usize) -> i32 {
        self.base_year + step as i32 + 1
    }
}

/// Simulate forward from `kappa_base` at `base_year`. Each path draws its
/// Gaussian increments from its own counter-based substream, so path `i`
/// is the same whatever `n_paths` is.
pub fn simulate_kappa(
    params: &RwdParams,
    kappa_base: f64,
    base_year: i32,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> KappaPaths {
    let mut values = vec![0.0; n_paths * horizon];
    for p in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let mut k = kappa_base;
        for s in 0..horizon {
            let z: f64 = StandardNormal.sample(&mut rng);
            k += params.drift + params.sigma * z;
            values[p * horizon + s] = k;
        }
    }
    KappaPaths {
        base_year,
        horizon,
        n_paths,
        seed,
        values,
    }
}

/// Lower median: for even counts the smaller of the two central order
/// statistics is returned.
pub fn lower_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    values[(values.len() - 1) / 2]
}

/// Apply a per-path statistic to every simulated value and return the
/// per-step empirical (lower) median.
pub fn median_projection(paths: &KappaPaths, eval: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(paths.horizon);
    let mut buf = vec![0.0; paths.n_paths];
    for s in 0..paths.horizon {
        for (p, slot) in buf.iter_mut().enumerate() {
            *slot = eval(paths.value(p, s));
        }
        out.push(lower_median(&mut buf));
    }
    out
}
