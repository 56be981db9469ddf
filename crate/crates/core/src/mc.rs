//! Forward simulation of `X_{j+1} = X_j + A_j xi_{j+1} / sqrt n`, `X_0 = 0`.
//!
//! Each path draws from its own ChaCha stream (`seed`, stream = path index),
//! so estimates are bitwise reproducible regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{dp_solve, FeedbackPolicy};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{NoiseModel, ProblemSpec, Sampler};
use crate::Matrix;

/// How the adversary picks `A_j`.
#[derive(Debug, Clone)]
pub enum Strategy {
    /// `A_j = Phi_j(X_j)` read at the nearest grid node.
    Feedback(FeedbackPolicy),
    /// The same matrix at every step.
    FixedMatrix(Matrix),
    /// An extreme matrix drawn uniformly at every step.
    RandomizedScan,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Feedback(_) => "feedback",
            Self::FixedMatrix(_) => "fixed",
            Self::RandomizedScan => "randomized-scan",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub paths: usize,
    pub seed: u64,
    pub n: usize,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(paths)`.
    pub std_error: f64,
    pub paths: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let paths = samples.len();
        let mean = samples.iter().sum::<f64>() / paths as f64;
        let std_error = if paths > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
            (var / paths as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            paths,
        }
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Mean and standard error of `f(X_n)` under the configured strategy.
pub fn simulate(spec: &ProblemSpec, sim: &SimConfig) -> Result<McEstimate> {
    if sim.paths == 0 {
        return Err(Error::InvalidArgument("paths must be >= 1".into()));
    }
    if sim.n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let set = &spec.uncertainty;
    let extremes = set.enumerate_extremes();
    match &sim.strategy {
        Strategy::Feedback(policy) => policy.check_against(set, sim.n)?,
        Strategy::FixedMatrix(a) => {
            if !set.contains(a, 1e-12) {
                return Err(Error::InvalidArgument(
                    "fixed matrix is not a member of the uncertainty set".into(),
                ));
            }
        }
        Strategy::RandomizedScan => {}
    }
    let d = spec.dim();
    let scale = 1.0 / (sim.n as f64).sqrt();
    let samples: Vec<f64> = (0..sim.paths)
        .into_par_iter()
        .with_min_len(256)
        .map(|path| {
            let mut rng = path_rng(sim.seed, path);
            let mut x = vec![0.0; d];
            let mut z = vec![0.0; d];
            for j in 0..sim.n {
                let a = match &sim.strategy {
                    Strategy::Feedback(policy) => &extremes[policy.index_at(j, &x)],
                    Strategy::FixedMatrix(a) => a,
                    Strategy::RandomizedScan => &extremes[rng.random_range(0..extremes.len())],
                };
                spec.noise.sample(&mut rng, &mut z);
                for r in 0..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += a[(r, l)] * z[l];
                    }
                    x[r] += s * scale;
                }
            }
            spec.payoff.eval(&x)
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

#[derive(Debug, Clone, Serialize)]
pub struct EulerReport {
    pub n: usize,
    /// Increments drawn from the problem's own noise law.
    pub native: McEstimate,
    /// Increments drawn from the standard normal law.
    pub gaussian: McEstimate,
    pub difference: f64,
    pub combined_std_error: f64,
    /// Value of the dynamic program the shared policy came from.
    pub dp_value: f64,
}

impl EulerReport {
    /// `|difference| < k * combined stderr + slack`.
    pub fn agrees(&self, k: f64, slack: f64) -> bool {
        self.difference.abs() < k * self.combined_std_error + slack
    }
}

/// Simulates the same feedback policy with native and Gaussian increments.
///
/// The policy is extracted from the dynamic program on the default grid,
/// using the problem's atoms, or a 7-point Gauss-Hermite rule when the noise
/// can only be sampled.
pub fn euler_compare(spec: &ProblemSpec, n: usize, paths: usize, seed: u64) -> Result<EulerReport> {
    let d = spec.dim();
    let dp_spec = if spec.noise.nodes().is_some() {
        spec.clone()
    } else {
        spec.with_noise(NoiseModel::gauss_hermite(d, 7)?)?
    };
    let grid = SpatialGrid::default_with_half_width(
        &spec.uncertainty,
        n,
        spec.payoff.domain_half_width(),
    )?;
    let dp = dp_solve(&dp_spec, n, &grid)?;
    let policy = dp.policy.expect("policy kept by default");
    let sim = SimConfig {
        paths,
        seed,
        n,
        strategy: Strategy::Feedback(policy),
    };
    let native = simulate(spec, &sim)?;
    let gauss_spec = spec.with_noise(NoiseModel::sampler(d, Sampler::Gaussian)?)?;
    let gaussian = simulate(&gauss_spec, &sim)?;
    Ok(EulerReport {
        n,
        difference: native.mean - gaussian.mean,
        combined_std_error: native.std_error.hypot(gaussian.std_error),
        native,
        gaussian,
        dp_value: dp.summary.value_at_origin,
    })
}
