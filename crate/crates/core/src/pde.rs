//! Explicit monotone finite differences for the G-heat equation
//! `-v_t - G(v_xx) = 0` on `[0, 1)`, `v(1, .) = f`.
//!
//! Each backward step sets `v(t) = v(t + dt) + dt * max_A L_A v(t + dt)`
//! where `L_A = 1/2 Tr(A A^T D^2_h)` uses central second differences and,
//! in two dimensions, the seven-point cross stencil matching the sign of the
//! off-diagonal covariance. Boundary nodes stay frozen at `f`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{terminal_slice, FeedbackPolicy, ValueGrid};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::model::within;
use crate::model::{ProblemSpec, UncertaintySet};
use crate::Matrix;

pub const DEFAULT_CFL_SAFETY: f64 = 0.9;
const MAX_PDE_DIM: usize = 2;

/// Largest stable explicit step `h^2 / (d * lambda_max)`.
pub fn cfl_max_dt(h: f64, set: &UncertaintySet, dim: usize) -> f64 {
    h * h / (dim as f64 * set.lambda_max())
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeConfig {
    pub grid: SpatialGrid,
    /// Requested time step; defaults to `theta * cfl_max_dt`, shrunk so
    /// that it divides the horizon.
    pub dt: Option<f64>,
    /// CFL safety factor in `(0, 1]`.
    pub theta: f64,
    /// Store every `save_every`-th slice in the returned grid. `None`
    /// keeps only `t = 0` and `t = 1`.
    pub save_every: Option<usize>,
}

impl PdeConfig {
    pub fn new(grid: SpatialGrid) -> Self {
        Self {
            grid,
            dt: None,
            theta: DEFAULT_CFL_SAFETY,
            save_every: None,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn saving_every(mut self, stride: usize) -> Self {
        self.save_every = Some(stride.max(1));
        self
    }

    /// `(number of steps, dt)` after the CFL check.
    pub fn resolve_steps(&self, set: &UncertaintySet) -> Result<(usize, f64)> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "CFL safety factor must lie in (0, 1], got {}",
                self.theta
            )));
        }
        let bound = self.theta * cfl_max_dt(self.grid.min_spacing(), set, self.grid.dim());
        let target = match self.dt {
            Some(dt) if !(dt.is_finite() && dt > 0.0) => {
                return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")))
            }
            Some(dt) if dt > bound => return Err(Error::CflViolation { dt, bound }),
            Some(dt) => dt,
            None => bound,
        };
        let steps = (1.0 / target - 1e-9).ceil().max(1.0) as usize;
        Ok((steps, 1.0 / steps as f64))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeSummary {
    pub value_at_origin: f64,
    pub steps: usize,
    pub dt: f64,
    pub spacing: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub terminal_min: f64,
    pub terminal_max: f64,
    pub max_abs_value: f64,
    pub bound: f64,
}

impl PdeSummary {
    /// `min f <= v <= max f` on every slice.
    pub fn maximum_principle_holds(&self) -> bool {
        within(self.terminal_min, self.min_value) && within(self.max_value, self.terminal_max)
    }

    pub fn bound_holds(&self) -> bool {
        within(self.max_abs_value, self.bound)
    }
}

#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub summary: PdeSummary,
    pub values: ValueGrid,
}

impl PdeSolution {
    pub fn value_at_origin(&self) -> f64 {
        self.summary.value_at_origin
    }
}

/// Spatial operator `max_A L_A` on a fixed grid.
#[derive(Debug, Clone)]
pub struct GStencil {
    grid: SpatialGrid,
    covariances: Vec<Matrix>,
}

impl GStencil {
    pub fn new(set: &UncertaintySet, grid: &SpatialGrid) -> Result<Self> {
        let dim = set.dim();
        if grid.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "grid",
                expected: dim,
                found: grid.dim(),
            });
        }
        if dim > MAX_PDE_DIM {
            return Err(Error::InvalidGrid(format!(
                "the finite-difference solver supports d <= {MAX_PDE_DIM}, got {dim}"
            )));
        }
        let covariances = set.covariances();
        if dim == 2 {
            let (hx, hy) = (grid.spacing()[0], grid.spacing()[1]);
            for c in &covariances {
                let off = c[(0, 1)].abs();
                if off > c[(0, 0)] * hy / hx + 1e-12 || off > c[(1, 1)] * hx / hy + 1e-12 {
                    return Err(Error::UnsupportedUncertainty(format!(
                        "covariance [[{}, {}], [{}, {}]] is not diagonally dominant; \
                         the seven-point stencil would not be monotone",
                        c[(0, 0)],
                        c[(0, 1)],
                        c[(1, 0)],
                        c[(1, 1)]
                    )));
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            covariances,
        })
    }

    /// `(max_A L_A v, first maximizing index)` at an interior node.
    #[inline]
    pub fn eval_at(&self, v: &[f64], node: usize) -> (f64, u16) {
        let g = &self.grid;
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0u16;
        match g.dim() {
            1 => {
                let h = g.spacing()[0];
                let dxx = (v[node + 1] - 2.0 * v[node] + v[node - 1]) / (h * h);
                for (i, c) in self.covariances.iter().enumerate() {
                    let l = 0.5 * c[(0, 0)] * dxx;
                    if l > best {
                        best = l;
                        arg = i as u16;
                    }
                }
            }
            _ => {
                let (hx, hy) = (g.spacing()[0], g.spacing()[1]);
                let row = g.strides()[0];
                let c0 = v[node];
                let (e, w) = (v[node + row], v[node - row]);
                let (n, s) = (v[node + 1], v[node - 1]);
                let dxx = (e - 2.0 * c0 + w) / (hx * hx);
                let dyy = (n - 2.0 * c0 + s) / (hy * hy);
                let axes = e + w + n + s;
                let dxy_pos =
                    (2.0 * c0 + v[node + row + 1] + v[node - row - 1] - axes) / (2.0 * hx * hy);
                let dxy_neg =
                    -(2.0 * c0 + v[node + row - 1] + v[node - row + 1] - axes) / (2.0 * hx * hy);
                for (i, c) in self.covariances.iter().enumerate() {
                    let off = c[(0, 1)];
                    let dxy = if off >= 0.0 { dxy_pos } else { dxy_neg };
                    let l = 0.5 * (c[(0, 0)] * dxx + c[(1, 1)] * dyy + 2.0 * off * dxy);
                    if l > best {
                        best = l;
                        arg = i as u16;
                    }
                }
            }
        }
        (best, arg)
    }

    /// One explicit backward step; boundary nodes are copied from `frozen`.
    pub fn step(&self, v: &[f64], frozen: &[f64], dt: f64) -> (Vec<f64>, Vec<u16>) {
        let out: Vec<(f64, u16)> = (0..v.len())
            .into_par_iter()
            .with_min_len(2048)
            .map(|node| {
                if self.grid.is_boundary(node) {
                    (frozen[node], 0)
                } else {
                    let (l, i) = self.eval_at(v, node);
                    (v[node] + dt * l, i)
                }
            })
            .collect();
        out.into_iter().unzip()
    }
}

fn march(spec: &ProblemSpec, config: &PdeConfig, want_policy: bool) -> Result<(PdeSolution, Option<FeedbackPolicy>)> {
    let grid = &config.grid;
    let stencil = GStencil::new(&spec.uncertainty, grid)?;
    let (steps, dt) = config.resolve_steps(&spec.uncertainty)?;
    let terminal = terminal_slice(spec, grid);
    let (terminal_min, terminal_max) = min_max(&terminal);
    let (mut lo, mut hi) = (terminal_min, terminal_max);

    let mut saved = vec![(1.0, terminal.clone())];
    let mut policy_rev = Vec::new();
    let mut current = terminal.clone();
    for k in (0..steps).rev() {
        let (next, idx) = stencil.step(&current, &terminal, dt);
        let (a, b) = min_max(&next);
        lo = lo.min(a);
        hi = hi.max(b);
        if want_policy {
            policy_rev.push(idx);
        }
        current = next;
        if let Some(stride) = config.save_every {
            if k > 0 && k % stride == 0 {
                saved.push((k as f64 * dt, current.clone()));
            }
        }
    }
    let value_at_origin = current[grid.origin_index()];
    saved.push((0.0, current));
    saved.reverse();
    let (times, slices) = saved.into_iter().unzip();

    let summary = PdeSummary {
        value_at_origin,
        steps,
        dt,
        spacing: grid.min_spacing(),
        min_value: lo,
        max_value: hi,
        terminal_min,
        terminal_max,
        max_abs_value: lo.abs().max(hi.abs()),
        bound: spec.payoff.bound(),
    };
    let policy = want_policy.then(|| {
        policy_rev.reverse();
        FeedbackPolicy {
            grid: grid.clone(),
            indices: policy_rev,
            extremes: spec.uncertainty.enumerate_extremes().len(),
        }
    });
    Ok((
        PdeSolution {
            summary,
            values: ValueGrid {
                grid: grid.clone(),
                times,
                slices,
                bound: spec.payoff.bound(),
            },
        },
        policy,
    ))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Marches from `t = 1` to `t = 0` and reads `v(0, 0)` at the origin node.
pub fn pde_solve(spec: &ProblemSpec, config: &PdeConfig) -> Result<PdeSolution> {
    march(spec, config, false).map(|(s, _)| s)
}

/// Maximizing extreme per PDE time step and node, `indices[k]` for the
/// step from `t_{k+1}` to `t_k`.
pub fn pde_policy(spec: &ProblemSpec, config: &PdeConfig) -> Result<FeedbackPolicy> {
    march(spec, config, true).map(|(_, p)| p.expect("policy requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseModel, Payoff, PayoffKind};

    fn spec(set: UncertaintySet, kind: PayoffKind, r: f64) -> ProblemSpec {
        let d = set.dim();
        ProblemSpec::new(set, NoiseModel::rademacher(d).unwrap(), Payoff::new(kind, d, r).unwrap())
            .unwrap()
    }

    #[test]
    fn cfl_formula() {
        let band = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        assert!((cfl_max_dt(0.1, &band, 1) - 0.0025).abs() < 1e-15);
        let unit = UncertaintySet::identity(1).unwrap();
        assert!((cfl_max_dt(0.1, &unit, 1) - 0.01).abs() < 1e-15);
        let unit2 = UncertaintySet::identity(2).unwrap();
        assert!((cfl_max_dt(0.2, &unit2, 2) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn rejects_unstable_step() {
        let set = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        let grid = SpatialGrid::with_spacing(1, 12.0, 0.1).unwrap();
        let s = spec(set, PayoffKind::Quadratic, 12.0);
        let err = pde_solve(&s, &PdeConfig::new(grid).with_dt(0.01)).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn rejects_non_dominant_covariance() {
        // A A^T = [[1, 0.9 * 2], ...] with a small first diagonal entry.
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.5]);
        let set = UncertaintySet::finite(vec![a]).unwrap();
        let grid = SpatialGrid::uniform(2, 3.0, 11).unwrap();
        let s = spec(set, PayoffKind::Cosine, 3.0);
        let err = pde_solve(&s, &PdeConfig::new(grid)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedUncertainty(_)));
    }

    #[test]
    fn rejects_three_dimensions() {
        let set = UncertaintySet::identity(3).unwrap();
        let grid = SpatialGrid::uniform(3, 3.0, 5).unwrap();
        let s = spec(set, PayoffKind::Cosine, 3.0);
        assert!(pde_solve(&s, &PdeConfig::new(grid)).is_err());
    }

    #[test]
    fn quadratic_payoff_is_exact_away_from_boundary() {
        let set = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        let grid = SpatialGrid::with_spacing(1, 12.0, 0.1).unwrap();
        let s = spec(set, PayoffKind::Quadratic, 12.0);
        let sol = pde_solve(&s, &PdeConfig::new(grid)).unwrap();
        assert!((sol.value_at_origin() - 4.0).abs() < 1e-9);
        assert!(sol.summary.maximum_principle_holds());
        assert!(sol.summary.bound_holds());
    }

    #[test]
    fn cross_stencils_are_exact_on_bilinear_functions() {
        let grid = SpatialGrid::uniform(2, 2.0, 9).unwrap();
        let mut x = [0.0; 2];
        let v: Vec<f64> = (0..grid.len())
            .map(|i| {
                grid.coords(i, &mut x);
                x[0] * x[1] + 0.5 * x[0] * x[0] - x[1] * x[1]
            })
            .collect();
        // Hessian [[1, 1], [1, -2]].
        for off in [0.3, -0.3] {
            let a = Matrix::from_row_slice(2, 2, &[1.0, off, off, 1.0]);
            let c = &a * a.transpose();
            let set = UncertaintySet::finite(vec![a]).unwrap();
            let stencil = GStencil::new(&set, &grid).unwrap();
            let expected = 0.5 * (c[(0, 0)] * 1.0 + c[(1, 1)] * -2.0 + 2.0 * c[(0, 1)] * 1.0);
            let node = grid.origin_index() + grid.strides()[0] + 1;
            assert!((stencil.eval_at(&v, node).0 - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn saves_requested_slices() {
        let set = UncertaintySet::identity(1).unwrap();
        let grid = SpatialGrid::with_spacing(1, 6.0, 0.2).unwrap();
        let s = spec(set, PayoffKind::Cosine, 6.0);
        let config = PdeConfig::new(grid).with_dt(0.01).saving_every(25);
        let sol = pde_solve(&s, &config).unwrap();
        assert_eq!(sol.summary.steps, 100);
        assert_eq!(sol.values.times.len(), 5);
        assert_eq!(sol.values.times[0], 0.0);
        assert_eq!(*sol.values.times.last().unwrap(), 1.0);
    }

    #[test]
    fn policy_is_sigma_hi_for_convex_and_sigma_lo_for_concave() {
        let set = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        let grid = SpatialGrid::with_spacing(1, 12.0, 0.2).unwrap();
        for (kind, want) in [(PayoffKind::Quadratic, 1u16), (PayoffKind::NegQuadratic, 0u16)] {
            let s = spec(set.clone(), kind, 12.0);
            let policy = pde_policy(&s, &PdeConfig::new(grid.clone())).unwrap();
            for slice in &policy.indices {
                for (node, &i) in slice.iter().enumerate() {
                    if !grid.is_boundary(node) {
                        let mut x = [0.0];
                        grid.coords(node, &mut x);
                        if x[0].abs() < 8.0 {
                            assert_eq!(i, want);
                        }
                    }
                }
            }
        }
    }
}
