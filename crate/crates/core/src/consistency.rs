//! Consistency residuals of the discrete scheme against smooth test functions.
//!
//! For a test function `phi` the scheme expression
//! `n * max_A E[phi(t + 1/n, x + A xi / sqrt n) - phi(t, x)]`
//! should tend to `phi_t(t, x) + G(phi_xx(t, x))`. It is exact for affine
//! and time-independent quadratic functions.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::g_operator::{GOperator, SymMatrix};
use crate::model::{NoiseModel, UncertaintySet};
use crate::Matrix;

/// Threshold below which a residual counts as exact.
pub const EXACT_RESIDUAL_TOL: f64 = 1e-12;

/// Smooth test functions with analytic `phi_t` and `phi_xx`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `a . x + b`
    Affine { slope: Vec<f64>, intercept: f64 },
    /// `1/2 x^T S x`
    Quadratic(SymMatrix),
    /// `(1 + t) sum_r p(x_r)` with `p(y) = sum_k coeffs[k] y^k`
    PolyTime { coeffs: Vec<f64> },
    /// `cos(sum_r x_r) exp(rate t)`
    CosExp { rate: f64 },
    /// `cos(sum_r x_r) (1 + t)`
    CosLinearTime,
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Affine { .. } => "affine",
            Self::Quadratic(_) => "quadratic",
            Self::PolyTime { .. } => "poly-time",
            Self::CosExp { .. } => "cos-exp",
            Self::CosLinearTime => "cos-linear-time",
        }
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Self::Affine { slope, intercept } => dot(slope, x) + intercept,
            Self::Quadratic(s) => 0.5 * quad_form(s, x, x),
            Self::PolyTime { coeffs } => (1.0 + t) * x.iter().map(|&y| poly(coeffs, y)).sum::<f64>(),
            Self::CosExp { rate } => x.iter().sum::<f64>().cos() * (rate * t).exp(),
            Self::CosLinearTime => x.iter().sum::<f64>().cos() * (1.0 + t),
        }
    }

    pub fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Self::Affine { .. } | Self::Quadratic(_) => 0.0,
            Self::PolyTime { coeffs } => x.iter().map(|&y| poly(coeffs, y)).sum(),
            Self::CosExp { rate } => rate * x.iter().sum::<f64>().cos() * (rate * t).exp(),
            Self::CosLinearTime => x.iter().sum::<f64>().cos(),
        }
    }

    pub fn hessian(&self, t: f64, x: &[f64]) -> SymMatrix {
        let d = x.len();
        match self {
            Self::Affine { .. } => SymMatrix::zeros(d),
            Self::Quadratic(s) => s.clone(),
            Self::PolyTime { coeffs } => {
                let second: Vec<f64> = x
                    .iter()
                    .map(|&y| (1.0 + t) * poly(&second_derivative(coeffs), y))
                    .collect();
                SymMatrix::from_diagonal(&second)
            }
            Self::CosExp { .. } | Self::CosLinearTime => {
                let c = -x.iter().sum::<f64>().cos()
                    * match self {
                        Self::CosExp { rate } => (rate * t).exp(),
                        _ => 1.0 + t,
                    };
                let mut h = SymMatrix::zeros(d);
                for r in 0..d {
                    for l in r..d {
                        h.set(r, l, c);
                    }
                }
                h
            }
        }
    }

    /// `phi(t + dt, x + dx) - phi(t, x)`, arranged to avoid cancellation.
    pub fn increment(&self, t: f64, x: &[f64], dt: f64, dx: &[f64]) -> f64 {
        match self {
            Self::Affine { slope, .. } => dot(slope, dx),
            Self::Quadratic(s) => quad_form(s, x, dx) + 0.5 * quad_form(s, dx, dx),
            Self::PolyTime { coeffs } => {
                let mut space = 0.0;
                let mut shifted = 0.0;
                for (&y, &e) in x.iter().zip(dx) {
                    let p1 = poly(coeffs, y + e);
                    space += p1 - poly(coeffs, y);
                    shifted += p1;
                }
                (1.0 + t) * space + dt * shifted
            }
            Self::CosExp { rate } => {
                let u = x.iter().sum::<f64>();
                let s = dx.iter().sum::<f64>();
                (rate * t).exp() * ((rate * dt).exp_m1() * (u + s).cos() + cos_diff(u, s))
            }
            Self::CosLinearTime => {
                let u = x.iter().sum::<f64>();
                let s = dx.iter().sum::<f64>();
                (1.0 + t) * cos_diff(u, s) + dt * (u + s).cos()
            }
        }
    }
}

/// `cos(u + s) - cos(u)` without cancellation for small `s`.
fn cos_diff(u: f64, s: f64) -> f64 {
    -2.0 * (u + 0.5 * s).sin() * (0.5 * s).sin()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad_form(s: &SymMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let mut t = 0.0;
    for r in 0..d {
        for l in 0..d {
            t += a[r] * s.get(r, l) * b[l];
        }
    }
    t
}

fn poly(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

fn second_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(2)
        .map(|(k, c)| (k * (k - 1)) as f64 * c)
        .collect()
}

/// `|scheme(n) - (phi_t + G(phi_xx))|` at `(t, x)`.
pub fn scheme_residual(
    phi: &TestFunction,
    t: f64,
    x: &[f64],
    n: usize,
    set: &UncertaintySet,
    noise: &NoiseModel,
) -> Result<f64> {
    let op = GOperator::new(set);
    residual_with(phi, t, x, n, &op, noise)
}

fn residual_with(
    phi: &TestFunction,
    t: f64,
    x: &[f64],
    n: usize,
    op: &GOperator,
    noise: &NoiseModel,
) -> Result<f64> {
    let d = op.dim();
    if x.len() != d || noise.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "point or noise",
            expected: d,
            found: if x.len() != d { x.len() } else { noise.dim() },
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let nodes = noise.require_nodes()?;
    let nf = n as f64;
    let scale = 1.0 / nf.sqrt();
    let mut dx = vec![0.0; d];
    let mut best = f64::NEG_INFINITY;
    for a in op.extremes() {
        let mut acc = 0.0;
        for (z, p) in nodes.iter() {
            apply(a, z, scale, &mut dx);
            acc += p * phi.increment(t, x, 1.0 / nf, &dx);
        }
        best = best.max(nf * acc);
    }
    let limit = phi.time_derivative(t, x) + op.value(&phi.hessian(t, x));
    Ok((best - limit).abs())
}

fn apply(a: &Matrix, z: &[f64], scale: f64, out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (l, zl) in z.iter().enumerate() {
            s += a[(r, l)] * zl;
        }
        *o = s * scale;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub x: Vec<f64>,
    /// One residual per entry of the sweep's `n_list`.
    pub residuals: Vec<f64>,
    /// Strictly decreasing along `n_list`.
    pub decreasing: bool,
    /// Every residual at or below [`EXACT_RESIDUAL_TOL`].
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub function: &'static str,
    pub n_list: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn max_residual(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.residuals.iter())
            .fold(0.0, |m: f64, v| m.max(*v))
    }

    pub fn all_decreasing(&self) -> bool {
        self.rows.iter().all(|r| r.decreasing)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        let d = self.rows.first().map_or(0, |r| r.x.len());
        for r in 0..d {
            out.push_str(&format!(",x{r}"));
        }
        for n in &self.n_list {
            out.push_str(&format!(",n{n}"));
        }
        out.push_str(",decreasing\n");
        for row in &self.rows {
            out.push_str(&format!("{}", row.t));
            for v in &row.x {
                out.push_str(&format!(",{v}"));
            }
            for v in &row.residuals {
                out.push_str(&format!(",{v:e}"));
            }
            out.push_str(&format!(",{}\n", row.decreasing));
        }
        out
    }
}

/// Residuals for every `(point, n)` pair.
pub fn consistency_sweep(
    phi: &TestFunction,
    points: &[(f64, Vec<f64>)],
    n_list: &[usize],
    set: &UncertaintySet,
    noise: &NoiseModel,
) -> Result<SweepTable> {
    noise.require_nodes()?;
    let op = GOperator::new(set);
    let rows = points
        .par_iter()
        .map(|(t, x)| {
            let residuals = n_list
                .iter()
                .map(|&n| residual_with(phi, *t, x, n, &op, noise))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepRow {
                t: *t,
                x: x.clone(),
                decreasing: residuals.windows(2).all(|w| w[1] < w[0]),
                exact: residuals.iter().all(|r| *r <= EXACT_RESIDUAL_TOL),
                residuals,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        function: phi.name(),
        n_list: n_list.to_vec(),
        rows,
    })
}

/// Residuals along the drifting sequence `(t + 1/n, x + 1/sqrt n)`.
pub fn drifting_residuals(
    phi: &TestFunction,
    t: f64,
    x: &[f64],
    n_list: &[usize],
    set: &UncertaintySet,
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    let op = GOperator::new(set);
    n_list
        .iter()
        .map(|&n| {
            let shift = 1.0 / (n as f64).sqrt();
            let xn: Vec<f64> = x.iter().map(|v| v + shift).collect();
            residual_with(phi, t + 1.0 / n as f64, &xn, n, &op, noise)
        })
        .collect()
}
