//! Tensor grids symmetric about the origin, with clamped multilinear
//! interpolation and nearest-node lookup.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Quadrature, UncertaintySet};

/// Largest dimension supported by the grid solvers.
pub const MAX_GRID_DIM: usize = 3;

/// Domain half-width in units of the largest spectral norm over the uncertainty set.
pub const DEFAULT_WIDTH_FACTOR: f64 = 6.0;

/// Below this many units of the spectral norm the truncated domain is flagged.
pub const MIN_WIDTH_FACTOR: f64 = 3.0;

const MAX_NODES_PER_AXIS: [usize; MAX_GRID_DIM] = [400_001, 1_201, 161];

/// Uniform grid on `[-R_r, R_r]` per axis, odd node counts so the origin is a node.
///
/// Nodes are flattened row-major: axis 0 varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialGrid {
    half_width: Vec<f64>,
    nodes: Vec<usize>,
    #[serde(skip)]
    spacing: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(half_width: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        let dim = half_width.len();
        if dim == 0 || dim > MAX_GRID_DIM {
            return Err(Error::InvalidGrid(format!(
                "grid dimension must be in 1..={MAX_GRID_DIM}, got {dim}"
            )));
        }
        if nodes.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "grid node counts",
                expected: dim,
                found: nodes.len(),
            });
        }
        for (&r, &m) in half_width.iter().zip(&nodes) {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidGrid(format!("half-width must be positive, got {r}")));
            }
            if m < 3 || m % 2 == 0 {
                return Err(Error::InvalidGrid(format!(
                    "node count per axis must be odd and >= 3, got {m}"
                )));
            }
        }
        let spacing = half_width
            .iter()
            .zip(&nodes)
            .map(|(r, m)| 2.0 * r / (m - 1) as f64)
            .collect();
        let mut strides = vec![1; dim];
        for r in (0..dim.saturating_sub(1)).rev() {
            strides[r] = strides[r + 1] * nodes[r + 1];
        }
        Ok(Self {
            half_width,
            nodes,
            spacing,
            strides,
        })
    }

    pub fn uniform(dim: usize, half_width: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![half_width; dim], vec![nodes; dim])
    }

    /// Keeps `half_width` and uses the coarsest spacing `<= spacing`.
    pub fn with_spacing(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        let cells = (half_width / spacing - 1e-9).ceil().max(1.0) as usize;
        Self::uniform(dim, half_width, 2 * cells + 1)
    }

    /// Default grid for `n` steps: half-width `6 sigma_max`, spacing
    /// `sigma_max / n` in one dimension and `sigma_max / (2 sqrt n)` above,
    /// capped by a per-dimension node budget.
    pub fn default_for(set: &UncertaintySet, n: usize) -> Result<Self> {
        let half_width = DEFAULT_WIDTH_FACTOR * set.sigma_max();
        Self::default_with_half_width(set, n, half_width)
    }

    pub fn default_with_half_width(set: &UncertaintySet, n: usize, half_width: f64) -> Result<Self> {
        let dim = set.dim();
        if dim > MAX_GRID_DIM {
            return Err(Error::InvalidGrid(format!(
                "grid solvers support d <= {MAX_GRID_DIM}, got {dim}"
            )));
        }
        let sigma = set.sigma_max();
        let n = n.max(1) as f64;
        let spacing = match dim {
            1 => sigma / n,
            2 => sigma / (2.0 * n.sqrt()),
            _ => sigma / n.sqrt(),
        };
        let cap = MAX_NODES_PER_AXIS[dim - 1];
        let min_spacing = 2.0 * half_width / (cap - 1) as f64;
        Self::with_spacing(dim, half_width, spacing.max(min_spacing))
    }

    /// Grid on which every jump `A z_k / sqrt n` over the extremes and
    /// atoms is a whole number of nodes per axis, so the dynamic program
    /// never interpolates away from the boundary.
    ///
    /// Tries spacings `g / k`, `k = 1..=8`, where `g` is the smallest nonzero
    /// jump on the axis. `None` if no such spacing fits the node budget.
    pub fn lattice_aligned(
        set: &UncertaintySet,
        nodes: &Quadrature,
        n: usize,
        half_width: f64,
    ) -> Option<Self> {
        const TOL: f64 = 1e-9;
        let dim = set.dim();
        if dim == 0 || dim > MAX_GRID_DIM || nodes.dim != dim {
            return None;
        }
        let scale = 1.0 / (n.max(1) as f64).sqrt();
        let extremes = set.enumerate_extremes();
        let mut per_axis = vec![Vec::new(); dim];
        for a in &extremes {
            for (z, _) in nodes.iter() {
                for (r, axis) in per_axis.iter_mut().enumerate() {
                    let jump: f64 = (0..dim).map(|l| a[(r, l)] * z[l]).sum::<f64>() * scale;
                    if jump.abs() > TOL {
                        axis.push(jump.abs());
                    }
                }
            }
        }
        let fallback = set.sigma_max() * scale;
        let cap = MAX_NODES_PER_AXIS[dim - 1];
        let mut widths = Vec::with_capacity(dim);
        let mut counts = Vec::with_capacity(dim);
        for jumps in &per_axis {
            let h = match jumps.iter().copied().reduce(f64::min) {
                None => fallback,
                Some(base) => (1..=8).map(|k| base / k as f64).find(|h| {
                    jumps.iter().all(|j| {
                        let u = j / h;
                        (u - u.round()).abs() <= TOL * u.max(1.0)
                    })
                })?,
            };
            let cells = (half_width / h - TOL).ceil().max(1.0) as usize;
            if 2 * cells + 1 > cap {
                return None;
            }
            widths.push(cells as f64 * h);
            counts.push(2 * cells + 1);
        }
        Self::new(widths, counts).ok()
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half_width(&self) -> &[f64] {
        &self.half_width
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        // Scaling the half-width keeps the end nodes at exactly +-R.
        let mid = ((self.nodes[axis] - 1) / 2) as f64;
        self.half_width[axis] * ((i as f64 - mid) / mid)
    }

    /// Per-axis indices of a flat node index.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for r in 0..self.dim() {
            out[r] = flat / self.strides[r];
            flat %= self.strides[r];
        }
    }

    pub fn coords(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for r in 0..self.dim() {
            let i = rem / self.strides[r];
            rem %= self.strides[r];
            out[r] = self.axis_coord(r, i);
        }
    }

    pub fn origin_index(&self) -> usize {
        self.nodes
            .iter()
            .zip(&self.strides)
            .map(|(m, s)| (m - 1) / 2 * s)
            .sum()
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let mut rem = flat;
        for r in 0..self.dim() {
            let i = rem / self.strides[r];
            rem %= self.strides[r];
            if i == 0 || i + 1 == self.nodes[r] {
                return true;
            }
        }
        false
    }

    /// Flat index of the node nearest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let mut flat = 0;
        for r in 0..self.dim() {
            let mid = ((self.nodes[r] - 1) / 2) as f64;
            let i = (x[r] / self.spacing[r] + mid).round();
            let i = i.clamp(0.0, (self.nodes[r] - 1) as f64) as usize;
            flat += i * self.strides[r];
        }
        flat
    }

    /// Multilinear interpolation of node values; points outside the box
    /// are clamped onto it.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        match self.dim() {
            1 => {
                let (i, t) = self.locate(0, x[0]);
                values[i] + t * (values[i + 1] - values[i])
            }
            2 => {
                let (i, s) = self.locate(0, x[0]);
                let (j, t) = self.locate(1, x[1]);
                let row = self.strides[0];
                let base = i * row + j;
                let lo = values[base] + t * (values[base + 1] - values[base]);
                let hi = values[base + row] + t * (values[base + row + 1] - values[base + row]);
                lo + s * (hi - lo)
            }
            _ => {
                let mut cell = [(0usize, 0.0f64); MAX_GRID_DIM];
                for r in 0..self.dim() {
                    cell[r] = self.locate(r, x[r]);
                }
                let d = self.dim();
                let mut total = 0.0;
                for corner in 0..(1usize << d) {
                    let mut w = 1.0;
                    let mut flat = 0;
                    for r in 0..d {
                        let (i, t) = cell[r];
                        if corner >> r & 1 == 1 {
                            w *= t;
                            flat += (i + 1) * self.strides[r];
                        } else {
                            w *= 1.0 - t;
                            flat += i * self.strides[r];
                        }
                    }
                    total += w * values[flat];
                }
                total
            }
        }
    }

    /// Lower cell index and fractional position along `axis`, clamped.
    #[inline]
    fn locate(&self, axis: usize, v: f64) -> (usize, f64) {
        let m = self.nodes[axis];
        let u = (v + self.half_width[axis]) / self.spacing[axis];
        let top = (m - 1) as f64;
        if !(u > 0.0) {
            return (0, 0.0);
        }
        if u >= top {
            return (m - 2, 1.0);
        }
        let i = u.floor();
        (i as usize, u - i)
    }

    /// Human-readable warnings about domain width and resolution for `n` steps.
    pub fn warnings(&self, set: &UncertaintySet, n: usize) -> Vec<String> {
        let sigma = set.sigma_max();
        let mut out = Vec::new();
        let width = self.half_width.iter().copied().fold(f64::INFINITY, f64::min);
        if width < MIN_WIDTH_FACTOR * sigma {
            out.push(format!(
                "domain half-width {width} is below {MIN_WIDTH_FACTOR} sigma_max = {}",
                MIN_WIDTH_FACTOR * sigma
            ));
        }
        let jump = sigma / (n.max(1) as f64).sqrt();
        if self.max_spacing() > jump {
            out.push(format!(
                "grid spacing {} exceeds the largest noise jump sigma_max/sqrt(n) = {jump}",
                self.max_spacing()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_aligned_spacing_divides_every_jump() {
        use crate::model::NoiseModel;
        let set = UncertaintySet::diagonal_box(vec![(0.5, 1.0), (1.0, 1.5)]).unwrap();
        let noise = NoiseModel::rademacher(2).unwrap();
        let g = SpatialGrid::lattice_aligned(&set, noise.nodes().unwrap(), 4, 3.0).unwrap();
        assert!((g.spacing()[0] - 0.25).abs() < 1e-15);
        assert!((g.spacing()[1] - 0.25).abs() < 1e-15);
        assert!(g.half_width()[0] >= 3.0);
        let gh = NoiseModel::gauss_hermite(2, 5).unwrap();
        assert!(SpatialGrid::lattice_aligned(&set, gh.nodes().unwrap(), 4, 3.0).is_none());
    }

    #[test]
    fn origin_is_a_node() {
        let g = SpatialGrid::new(vec![2.0, 3.0], vec![5, 7]).unwrap();
        let mut x = [0.0; 2];
        g.coords(g.origin_index(), &mut x);
        assert_eq!(x, [0.0, 0.0]);
        assert_eq!(g.spacing(), &[1.0, 1.0]);
        assert_eq!(g.len(), 35);
    }

    #[test]
    fn rejects_even_node_counts() {
        assert!(SpatialGrid::uniform(1, 1.0, 4).is_err());
        assert!(SpatialGrid::uniform(4, 1.0, 5).is_err());
        assert!(SpatialGrid::uniform(1, -1.0, 5).is_err());
    }

    #[test]
    fn with_spacing_keeps_width() {
        let g = SpatialGrid::with_spacing(1, 12.0, 0.05).unwrap();
        assert_eq!(g.nodes_per_axis(), &[481]);
        assert!((g.spacing()[0] - 0.05).abs() < 1e-12);
        let g = SpatialGrid::with_spacing(1, 1.0, 0.3).unwrap();
        assert!(g.spacing()[0] <= 0.3);
    }

    #[test]
    fn interpolation_is_exact_for_multilinear_functions() {
        for dim in 1..=3 {
            let g = SpatialGrid::uniform(dim, 2.0, 9).unwrap();
            let f = |x: &[f64]| -> f64 {
                let mut v = 1.0;
                for (r, xr) in x.iter().enumerate() {
                    v *= 1.0 + (r as f64 + 1.0) * xr;
                }
                v
            };
            let mut x = vec![0.0; dim];
            let values: Vec<f64> = (0..g.len())
                .map(|i| {
                    g.coords(i, &mut x);
                    f(&x)
                })
                .collect();
            let p: Vec<f64> = (0..dim).map(|r| 0.37 - 0.61 * r as f64).collect();
            assert!((g.interpolate(&values, &p) - f(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_clamps_outside() {
        let g = SpatialGrid::uniform(1, 1.0, 5).unwrap();
        let values = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(g.interpolate(&values, &[-7.0]), 1.0);
        assert_eq!(g.interpolate(&values, &[7.0]), 5.0);
        assert_eq!(g.interpolate(&values, &[1.0]), 5.0);
        assert_eq!(g.interpolate(&values, &[0.25]), 3.5);
    }

    #[test]
    fn nearest_node_lookup() {
        let g = SpatialGrid::uniform(2, 1.0, 5).unwrap();
        let mut x = [0.0; 2];
        g.coords(g.nearest_index(&[0.4, -0.9]), &mut x);
        assert_eq!(x, [0.5, -1.0]);
        g.coords(g.nearest_index(&[9.0, -9.0]), &mut x);
        assert_eq!(x, [1.0, -1.0]);
        assert!(g.is_boundary(g.nearest_index(&[9.0, 0.0])));
        assert!(!g.is_boundary(g.origin_index()));
    }

    #[test]
    fn default_grid_resolves_noise_jumps() {
        let set = UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap();
        let g = SpatialGrid::default_for(&set, 64).unwrap();
        assert_eq!(g.half_width(), &[12.0]);
        assert!(g.warnings(&set, 64).is_empty());
        let coarse = SpatialGrid::uniform(1, 2.0, 5).unwrap();
        assert_eq!(coarse.warnings(&set, 64).len(), 2);
    }
}
