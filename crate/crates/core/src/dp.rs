//! Backward dynamic programming for the discrete worst-case walk.
//!
//! `v_n(1, x) = f(x)` and
//! `v_n(t_j, x) = max_A sum_k p_k v_n(t_{j+1}, x + A z_k / sqrt n)`,
//! with the continuation interpolated multilinearly on a [`SpatialGrid`].
//! The maximizing extreme per node is kept as a [`FeedbackPolicy`].

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, MAX_GRID_DIM};
use crate::model::{within, NoiseModel, ProblemSpec, Quadrature, UncertaintySet};
use crate::Matrix;

/// Time-indexed stack of node values on a grid.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    pub grid: SpatialGrid,
    /// Time of each stored slice, increasing.
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    /// Payoff bound `M`.
    pub bound: f64,
}

impl ValueGrid {
    /// Slice stored for time `t`, if any.
    pub fn slice_at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|s| (s - t).abs() < 1e-12)
            .map(|i| self.slices[i].as_slice())
    }

    pub fn max_abs(&self) -> f64 {
        self.slices
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Index of the maximizing extreme matrix per step and node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub grid: SpatialGrid,
    /// `indices[j][node]` for `j = 0..steps`.
    pub indices: Vec<Vec<u16>>,
    /// Number of extreme matrices the indices refer to.
    pub extremes: usize,
}

impl FeedbackPolicy {
    pub fn steps(&self) -> usize {
        self.indices.len()
    }

    /// Extreme index used at step `j` at the node nearest to `x`.
    pub fn index_at(&self, j: usize, x: &[f64]) -> usize {
        self.indices[j][self.grid.nearest_index(x)] as usize
    }

    pub fn check_against(&self, set: &UncertaintySet, n: usize) -> Result<()> {
        if self.steps() != n {
            return Err(Error::PolicyMismatch(format!(
                "policy has {} steps but the simulation uses n = {n}",
                self.steps()
            )));
        }
        if self.grid.dim() != set.dim() {
            return Err(Error::PolicyMismatch(format!(
                "policy grid has dimension {}, problem has {}",
                self.grid.dim(),
                set.dim()
            )));
        }
        let count = set.enumerate_extremes().len();
        if self.extremes != count {
            return Err(Error::PolicyMismatch(format!(
                "policy refers to {} extreme matrices, uncertainty set has {count}",
                self.extremes
            )));
        }
        if let Some(slice) = self.indices.iter().find(|s| s.len() != self.grid.len()) {
            return Err(Error::PolicyMismatch(format!(
                "policy slice has {} nodes, grid has {}",
                slice.len(),
                self.grid.len()
            )));
        }
        if self.indices.iter().flatten().any(|&i| i as usize >= count) {
            return Err(Error::PolicyMismatch("policy index out of range".into()));
        }
        Ok(())
    }
}

/// The matrix the policy selects at step `j` for state `x` (nearest node).
pub fn extract_policy_matrix(
    policy: &FeedbackPolicy,
    set: &UncertaintySet,
    j: usize,
    x: &[f64],
) -> Matrix {
    set.enumerate_extremes()[policy.index_at(j, x)].clone()
}

/// Precomputed jumps `A_i z_k / sqrt n` and weights for one step.
#[derive(Debug, Clone)]
pub struct StepKernel {
    dim: usize,
    extremes: usize,
    atoms: usize,
    /// `offsets[(i * atoms + k) * dim + r]`
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

/// A jump expressed in grid units: whole-node shift plus fraction in `[0, 1)`.
#[derive(Debug, Clone, Copy)]
struct GridJump {
    shift: [i64; MAX_GRID_DIM],
    frac: [f64; MAX_GRID_DIM],
}

/// Fractions this close to a node are snapped onto it.
const SNAP: f64 = 1e-10;

impl StepKernel {
    pub fn new(extremes: &[Matrix], nodes: &Quadrature, n: usize) -> Self {
        let dim = nodes.dim;
        let scale = 1.0 / (n as f64).sqrt();
        let mut offsets = Vec::with_capacity(extremes.len() * nodes.len() * dim);
        for a in extremes {
            for (z, _) in nodes.iter() {
                for r in 0..dim {
                    let mut s = 0.0;
                    for l in 0..dim {
                        s += a[(r, l)] * z[l];
                    }
                    offsets.push(s * scale);
                }
            }
        }
        Self {
            dim,
            extremes: extremes.len(),
            atoms: nodes.len(),
            offsets,
            weights: nodes.weights.clone(),
        }
    }

    /// Jump offsets, `extremes * atoms` rows of `dim` values.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `(max_i E v(x + A_i xi / sqrt n), first maximizing i)` at an arbitrary point.
    pub fn apply_at(&self, grid: &SpatialGrid, v_next: &[f64], x: &[f64]) -> (f64, u16) {
        let d = self.dim;
        let mut y = [0.0f64; MAX_GRID_DIM];
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0u16;
        for i in 0..self.extremes {
            let mut acc = 0.0;
            for k in 0..self.atoms {
                let off = &self.offsets[(i * self.atoms + k) * d..(i * self.atoms + k + 1) * d];
                for r in 0..d {
                    y[r] = x[r] + off[r];
                }
                acc += self.weights[k] * grid.interpolate(v_next, &y[..d]);
            }
            if acc > best {
                best = acc;
                arg = i as u16;
            }
        }
        (best, arg)
    }

    fn grid_jumps(&self, grid: &SpatialGrid) -> Vec<GridJump> {
        let d = self.dim;
        self.offsets
            .chunks_exact(d)
            .map(|off| {
                let mut jump = GridJump {
                    shift: [0; MAX_GRID_DIM],
                    frac: [0.0; MAX_GRID_DIM],
                };
                for r in 0..d {
                    let u = off[r] / grid.spacing()[r];
                    let mut whole = u.floor();
                    let mut frac = u - whole;
                    if frac < SNAP {
                        frac = 0.0;
                    } else if frac > 1.0 - SNAP {
                        whole += 1.0;
                        frac = 0.0;
                    }
                    jump.shift[r] = whole as i64;
                    jump.frac[r] = frac;
                }
                jump
            })
            .collect()
    }

    /// One backward step over every node.
    ///
    /// Node coordinates are exact multiples of the spacing, so each jump
    /// lands at the same fractional position in every cell; only the
    /// clamping at the edges depends on the node.
    pub fn apply(&self, grid: &SpatialGrid, v_next: &[f64]) -> (Vec<f64>, Vec<u16>) {
        let d = self.dim;
        let jumps = self.grid_jumps(grid);
        let m = grid.nodes_per_axis();
        let strides = grid.strides();
        let out: Vec<(f64, u16)> = (0..grid.len())
            .into_par_iter()
            .with_min_len(512)
            .map(|node| {
                let mut idx = [0usize; MAX_GRID_DIM];
                grid.multi_index(node, &mut idx[..d]);
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0u16;
                for i in 0..self.extremes {
                    let mut acc = 0.0;
                    for k in 0..self.atoms {
                        let jump = &jumps[i * self.atoms + k];
                        let mut cell = [(0usize, 0.0f64); MAX_GRID_DIM];
                        for r in 0..d {
                            cell[r] = clamp_cell(idx[r], jump.shift[r], jump.frac[r], m[r]);
                        }
                        acc += self.weights[k] * corner_sum(v_next, &cell[..d], strides);
                    }
                    if acc > best {
                        best = acc;
                        arg = i as u16;
                    }
                }
                (best, arg)
            })
            .collect();
        out.into_iter().unzip()
    }
}

/// Cell and fraction for node `i` moved by `shift + frac` nodes, clamped to `[0, m - 1]`.
#[inline]
fn clamp_cell(i: usize, shift: i64, frac: f64, m: usize) -> (usize, f64) {
    let lower = i as i64 + shift;
    let top = m as i64 - 1;
    if lower < 0 {
        (0, 0.0)
    } else if lower >= top {
        (m - 2, 1.0)
    } else {
        (lower as usize, frac)
    }
}

#[inline]
fn corner_sum(v: &[f64], cell: &[(usize, f64)], strides: &[usize]) -> f64 {
    match cell.len() {
        1 => {
            let (i, t) = cell[0];
            if t == 0.0 {
                v[i]
            } else {
                v[i] + t * (v[i + 1] - v[i])
            }
        }
        2 => {
            let (i, s) = cell[0];
            let (j, t) = cell[1];
            let row = strides[0];
            let base = i * row + j;
            let lo = v[base] + t * (v[base + 1] - v[base]);
            if s == 0.0 {
                return lo;
            }
            let hi = v[base + row] + t * (v[base + row + 1] - v[base + row]);
            lo + s * (hi - lo)
        }
        d => {
            let mut total = 0.0;
            for corner in 0..(1usize << d) {
                let mut w = 1.0;
                let mut flat = 0;
                for r in 0..d {
                    let (i, t) = cell[r];
                    if corner >> r & 1 == 1 {
                        w *= t;
                        flat += (i + 1) * strides[r];
                    } else {
                        w *= 1.0 - t;
                        flat += i * strides[r];
                    }
                }
                if w != 0.0 {
                    total += w * v[flat];
                }
            }
            total
        }
    }
}

fn check_grid(set: &UncertaintySet, grid: &SpatialGrid) -> Result<()> {
    if grid.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            what: "grid",
            expected: set.dim(),
            found: grid.dim(),
        });
    }
    if set.enumerate_extremes().len() > u16::MAX as usize {
        return Err(Error::InvalidUncertainty("too many extreme matrices".into()));
    }
    Ok(())
}

/// One step of the recurrence: values and maximizing extreme index per node.
pub fn dp_step(
    v_next: &[f64],
    set: &UncertaintySet,
    noise: &NoiseModel,
    n: usize,
    grid: &SpatialGrid,
) -> Result<(Vec<f64>, Vec<u16>)> {
    check_grid(set, grid)?;
    let nodes = noise.require_nodes()?;
    if v_next.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            what: "value slice",
            expected: grid.len(),
            found: v_next.len(),
        });
    }
    if v_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("value slice must be finite".into()));
    }
    let kernel = StepKernel::new(&set.enumerate_extremes(), nodes, n.max(1));
    Ok(kernel.apply(grid, v_next))
}

/// What to retain from a backward solve.
#[derive(Debug, Clone, Copy)]
pub struct DpOptions {
    pub keep_slices: bool,
    pub keep_policy: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            keep_slices: true,
            keep_policy: true,
        }
    }
}

impl DpOptions {
    /// Only the value at the origin and the bound check.
    pub fn value_only() -> Self {
        Self {
            keep_slices: false,
            keep_policy: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DpSummary {
    pub n: usize,
    pub value_at_origin: f64,
    /// Largest `|v_n(t_j, x)|` over all slices and nodes.
    pub max_abs_value: f64,
    pub bound: f64,
    pub warnings: Vec<String>,
}

impl DpSummary {
    pub fn bound_holds(&self) -> bool {
        within(self.max_abs_value, self.bound)
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub summary: DpSummary,
    /// Slices `j = 0..=n` when kept, otherwise `t = 0` and `t = 1` only.
    pub values: ValueGrid,
    pub policy: Option<FeedbackPolicy>,
}

impl DpSolution {
    pub fn value_at_origin(&self) -> f64 {
        self.summary.value_at_origin
    }
}

/// Payoff sampled at every grid node.
pub fn terminal_slice(spec: &ProblemSpec, grid: &SpatialGrid) -> Vec<f64> {
    let d = grid.dim();
    let mut x = vec![0.0; d];
    (0..grid.len())
        .map(|i| {
            grid.coords(i, &mut x);
            spec.payoff.eval(&x)
        })
        .collect()
}

pub fn dp_solve(spec: &ProblemSpec, n: usize, grid: &SpatialGrid) -> Result<DpSolution> {
    dp_solve_with(spec, n, grid, DpOptions::default())
}

/// Backward recursion from `j = n - 1` down to `0`; reads `v_n(0, 0)` at
/// the origin node.
pub fn dp_solve_with(
    spec: &ProblemSpec,
    n: usize,
    grid: &SpatialGrid,
    options: DpOptions,
) -> Result<DpSolution> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of steps must be >= 1".into()));
    }
    check_grid(&spec.uncertainty, grid)?;
    let nodes = spec.noise.require_nodes()?;
    let extremes = spec.uncertainty.enumerate_extremes();
    let kernel = StepKernel::new(&extremes, nodes, n);
    let mut warnings = grid.warnings(&spec.uncertainty, n);
    let payoff_domain = spec.payoff.domain_half_width();
    if grid.half_width().iter().any(|&r| r > payoff_domain * (1.0 + 1e-12)) {
        warnings.push(format!(
            "grid extends beyond the payoff domain half-width {payoff_domain}; \
             the bound M does not cover every node"
        ));
    }

    let terminal = terminal_slice(spec, grid);
    let abs_max = |s: &[f64]| s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut max_abs_value = abs_max(&terminal);

    let mut slices_rev = Vec::new();
    let mut policy_rev = Vec::new();
    let mut current = terminal.clone();
    for _ in (0..n).rev() {
        let (next, idx) = kernel.apply(grid, &current);
        max_abs_value = max_abs_value.max(abs_max(&next));
        if options.keep_policy {
            policy_rev.push(idx);
        }
        let prev = std::mem::replace(&mut current, next);
        if options.keep_slices {
            slices_rev.push(prev);
        }
    }
    let value_at_origin = current[grid.origin_index()];

    let values = if options.keep_slices {
        slices_rev.push(current);
        slices_rev.reverse();
        ValueGrid {
            grid: grid.clone(),
            times: ProblemSpec::time_points(n),
            slices: slices_rev,
            bound: spec.payoff.bound(),
        }
    } else {
        ValueGrid {
            grid: grid.clone(),
            times: vec![0.0, 1.0],
            slices: vec![current, terminal],
            bound: spec.payoff.bound(),
        }
    };
    let policy = options.keep_policy.then(|| {
        policy_rev.reverse();
        FeedbackPolicy {
            grid: grid.clone(),
            indices: policy_rev,
            extremes: extremes.len(),
        }
    });
    Ok(DpSolution {
        summary: DpSummary {
            n,
            value_at_origin,
            max_abs_value,
            bound: spec.payoff.bound(),
            warnings,
        },
        values,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Payoff, PayoffKind, Sampler};

    fn spec(set: UncertaintySet, kind: PayoffKind, r: f64) -> ProblemSpec {
        let d = set.dim();
        ProblemSpec::new(set, NoiseModel::rademacher(d).unwrap(), Payoff::new(kind, d, r).unwrap())
            .unwrap()
    }

    fn finite_1d(values: &[f64]) -> UncertaintySet {
        UncertaintySet::finite(values.iter().map(|&v| Matrix::from_element(1, 1, v)).collect())
            .unwrap()
    }

    #[test]
    fn single_step_two_atom_average() {
        let s = spec(finite_1d(&[1.0]), PayoffKind::Quadratic, 4.0);
        let grid = SpatialGrid::uniform(1, 4.0, 9).unwrap();
        let terminal = terminal_slice(&s, &grid);
        let (v, idx) = dp_step(&terminal, &s.uncertainty, &s.noise, 1, &grid).unwrap();
        assert_eq!(v[grid.origin_index()], 1.0);
        assert_eq!(idx[grid.origin_index()], 0);
    }

    #[test]
    fn single_step_picks_larger_volatility() {
        let s = spec(finite_1d(&[1.0, 2.0]), PayoffKind::Quadratic, 4.0);
        let grid = SpatialGrid::uniform(1, 4.0, 9).unwrap();
        let terminal = terminal_slice(&s, &grid);
        let (v, idx) = dp_step(&terminal, &s.uncertainty, &s.noise, 1, &grid).unwrap();
        assert_eq!(v[grid.origin_index()], 4.0);
        assert_eq!(idx[grid.origin_index()], 1);
    }

    #[test]
    fn constants_are_preserved() {
        let set = UncertaintySet::diagonal_box(vec![(0.5, 1.5), (1.0, 2.0)]).unwrap();
        let noise = NoiseModel::gauss_hermite(2, 4).unwrap();
        let grid = SpatialGrid::uniform(2, 3.0, 13).unwrap();
        let (v, _) = dp_step(&vec![2.5; grid.len()], &set, &noise, 3, &grid).unwrap();
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-14));
    }

    #[test]
    fn sampler_noise_is_rejected() {
        let set = finite_1d(&[1.0]);
        let noise = NoiseModel::sampler(1, Sampler::Gaussian).unwrap();
        let grid = SpatialGrid::uniform(1, 1.0, 5).unwrap();
        let err = dp_step(&[0.0; 5], &set, &noise, 1, &grid).unwrap_err();
        assert!(matches!(err, Error::UnsupportedNoise(_)));
    }

    #[test]
    fn two_steps_on_convex_payoff() {
        // v(1/2, x) = x^2 + 2, then v(0, 0) = max_A A^2/2 + 2 = 4
        let s = spec(finite_1d(&[1.0, 2.0]), PayoffKind::Quadratic, 8.0);
        let step = 1.0 / (2.0_f64).sqrt();
        // Spacing divides both jumps 1/sqrt 2 and 2/sqrt 2.
        let grid = SpatialGrid::uniform(1, 8.0 * step, 17).unwrap();
        let sol = dp_solve(&s, 2, &grid).unwrap();
        assert!((sol.value_at_origin() - 4.0).abs() < 1e-12);
        let mid = &sol.values.slices[1];
        assert!((mid[grid.origin_index()] - 2.0).abs() < 1e-12);
        assert!(sol.summary.bound_holds());
    }

    #[test]
    fn policy_follows_convexity() {
        let set = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        for (kind, expected) in [(PayoffKind::Quadratic, 2.0), (PayoffKind::NegQuadratic, 1.0)] {
            let s = spec(set.clone(), kind, 12.0);
            let grid = SpatialGrid::default_for(&set, 8).unwrap();
            let sol = dp_solve(&s, 8, &grid).unwrap();
            let policy = sol.policy.as_ref().unwrap();
            for j in 0..8 {
                for x in [-3.0, -0.5, 0.0, 1.25, 4.0] {
                    let a = extract_policy_matrix(policy, &set, j, &[x]);
                    assert_eq!(a[(0, 0)], expected, "j={j} x={x}");
                }
            }
        }
    }

    #[test]
    fn value_only_keeps_end_slices() {
        let set = UncertaintySet::identity(1).unwrap();
        let s = spec(set.clone(), PayoffKind::Cosine, 6.0);
        let grid = SpatialGrid::default_for(&set, 4).unwrap();
        let full = dp_solve(&s, 4, &grid).unwrap();
        let lean = dp_solve_with(&s, 4, &grid, DpOptions::value_only()).unwrap();
        assert_eq!(full.value_at_origin(), lean.value_at_origin());
        assert_eq!(full.values.slices.len(), 5);
        assert_eq!(lean.values.slices.len(), 2);
        assert!(lean.policy.is_none());
        assert_eq!(full.summary.max_abs_value, lean.summary.max_abs_value);
    }

    #[test]
    fn policy_checks() {
        let set = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        let s = spec(set.clone(), PayoffKind::Quadratic, 12.0);
        let grid = SpatialGrid::default_for(&set, 4).unwrap();
        let policy = dp_solve(&s, 4, &grid).unwrap().policy.unwrap();
        assert!(policy.check_against(&set, 4).is_ok());
        assert!(matches!(policy.check_against(&set, 5), Err(Error::PolicyMismatch(_))));
        let single = UncertaintySet::identity(1).unwrap();
        assert!(policy.check_against(&single, 4).is_err());
    }
}
