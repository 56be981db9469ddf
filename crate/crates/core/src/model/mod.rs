//! Problem inputs: the uncertainty set, the increment law and the payoff.

mod noise;
mod payoff;
mod uncertainty;

pub use noise::{
    gauss_hermite_1d, MomentDefects, NoiseKind, NoiseModel, Quadrature, Sampler,
    EXACT_MOMENT_TOL, SAMPLED_MOMENT_TOL,
};
pub use payoff::{within, Payoff, PayoffKind, Table, ROUNDING_RTOL};
pub use uncertainty::{UncertaintyKind, UncertaintySet};

use serde::Serialize;

use crate::error::{Error, Result};

/// Samples used for empirical moment checks of sample-only noise.
const EMPIRICAL_MOMENT_SAMPLES: usize = 1_000_000;
const PAYOFF_BOUND_SAMPLES: usize = 4_096;

/// Everything needed to define the worst-case limit on the horizon `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub uncertainty: UncertaintySet,
    pub noise: NoiseModel,
    pub payoff: Payoff,
}

impl ProblemSpec {
    pub fn new(uncertainty: UncertaintySet, noise: NoiseModel, payoff: Payoff) -> Result<Self> {
        let spec = Self {
            uncertainty,
            noise,
            payoff,
        };
        spec.check_dimensions()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.uncertainty.dim()
    }

    /// Time points `j / n`, `j = 0..=n`.
    pub fn time_points(n: usize) -> Vec<f64> {
        (0..=n).map(|j| j as f64 / n as f64).collect()
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(self.uncertainty.clone(), noise, self.payoff.clone())
    }

    pub fn with_uncertainty(&self, uncertainty: UncertaintySet) -> Result<Self> {
        Self::new(uncertainty, self.noise.clone(), self.payoff.clone())
    }

    fn check_dimensions(&self) -> Result<()> {
        let d = self.uncertainty.dim();
        if self.noise.dim() != d {
            return Err(Error::DimensionMismatch {
                what: "noise",
                expected: d,
                found: self.noise.dim(),
            });
        }
        if self.payoff.dim() != d {
            return Err(Error::DimensionMismatch {
                what: "payoff",
                expected: d,
                found: self.payoff.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

/// Per-invariant outcome of [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub moments: MomentDefects,
    /// `max |f| - M` over sampled domain points (nonpositive when the bound holds).
    pub payoff_bound_excess: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Checks the standing assumptions of a problem.
///
/// Dimension mismatches and moment defects beyond the noise tolerance are
/// hard errors; everything else is reported.
pub fn validate(spec: &ProblemSpec) -> Result<ValidationReport> {
    spec.check_dimensions()?;
    let tol = spec.noise.tolerance();
    let moments = spec.noise.moment_defects(EMPIRICAL_MOMENT_SAMPLES, 0x5eed);
    if !moments.within(tol) {
        return Err(Error::MomentDefect {
            mean_defect: moments.mean,
            covariance_defect: moments.covariance,
            tolerance: tol,
        });
    }
    let excess = spec.payoff.bound_violation(PAYOFF_BOUND_SAMPLES, 0xb0b);
    let checks = vec![
        Check {
            name: "weight-sum",
            passed: moments.weight_sum <= tol,
            measured: moments.weight_sum,
            tolerance: tol,
        },
        Check {
            name: "mean-zero",
            passed: moments.mean <= tol,
            measured: moments.mean,
            tolerance: tol,
        },
        Check {
            name: "identity-covariance",
            passed: moments.covariance <= tol,
            measured: moments.covariance,
            tolerance: tol,
        },
        Check {
            name: "payoff-bound",
            passed: excess <= 0.0,
            measured: excess,
            tolerance: 0.0,
        },
    ];
    Ok(ValidationReport {
        checks,
        moments,
        payoff_bound_excess: excess,
    })
}
