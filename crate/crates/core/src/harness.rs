//! Experiment drivers behind the command-line front end: convergence of the
//! dynamic program to the PDE value, invariance under `Lambda -> Lambda O`,
//! and independence of the limit from the noise law.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::config::LoadedConfig;
use crate::dp::{dp_solve_with, DpOptions};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{validate, NoiseKind, NoiseModel, ProblemSpec};
use crate::pde::{pde_solve, PdeSummary};
use crate::Matrix;

/// Largest `|O O^T - I|` entry accepted as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Per-n agreement required when the quadrature is invariant under `O`.
pub const INVARIANCE_TOL: f64 = 1e-6;

fn sorted_unique(n_list: &[usize]) -> Result<Vec<usize>> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidArgument("n-list must be non-empty with n >= 1".into()));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    Ok(ns)
}

fn dp_value(spec: &ProblemSpec, n: usize, grid: &SpatialGrid) -> Result<(f64, f64, f64)> {
    let start = Instant::now();
    let sol = dp_solve_with(spec, n, grid, DpOptions::value_only())?;
    Ok((
        sol.summary.value_at_origin,
        sol.summary.max_abs_value,
        start.elapsed().as_secs_f64(),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dp_value: f64,
    /// `|dp - pde|`
    pub gap: f64,
    pub runtime_s: f64,
    /// `ln(gap_prev / gap) / ln(n / n_prev)`; empty on the first row.
    pub rate: Option<f64>,
    pub grid_nodes: usize,
    pub grid_spacing: f64,
    pub max_abs_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    /// Sorted by `n`.
    pub rows: Vec<ConvergenceRow>,
    pub pde_reference: f64,
    pub pde: PdeSummary,
    pub pde_runtime_s: f64,
    /// Rate between the last two rows.
    pub rate: Option<f64>,
    pub gaps_decreasing: bool,
    pub bound: f64,
}

impl ConvergenceReport {
    pub fn final_gap(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.gap)
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pde reference {:.8} ({} steps, h = {})", self.pde_reference, self.pde.steps, self.pde.spacing)?;
        writeln!(f, "{:>8} {:>14} {:>12} {:>8} {:>10}", "n", "dp value", "gap", "rate", "time [s]")?;
        for r in &self.rows {
            let rate = r.rate.map_or_else(|| "-".to_owned(), |v| format!("{v:.3}"));
            writeln!(f, "{:>8} {:>14.8} {:>12.3e} {:>8} {:>10.3}", r.n, r.dp_value, r.gap, rate, r.runtime_s)?;
        }
        Ok(())
    }
}

/// One PDE reference, then the dynamic program for each `n`.
pub fn converge(cfg: &LoadedConfig, n_list: &[usize]) -> Result<ConvergenceReport> {
    let ns = sorted_unique(n_list)?;
    let spec = &cfg.spec;
    let start = Instant::now();
    let pde = pde_solve(spec, &cfg.pde_config()?)?.summary;
    let pde_runtime_s = start.elapsed().as_secs_f64();
    let reference = pde.value_at_origin;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(ns.len());
    for &n in &ns {
        let grid = cfg.dp_grid(n)?;
        let (value, max_abs, runtime_s) = dp_value(spec, n, &grid)?;
        let gap = (value - reference).abs();
        let rate = rows.last().map(|prev| {
            (prev.gap / gap).ln() / (n as f64 / prev.n as f64).ln()
        });
        rows.push(ConvergenceRow {
            n,
            dp_value: value,
            gap,
            runtime_s,
            rate,
            grid_nodes: grid.len(),
            grid_spacing: grid.max_spacing(),
            max_abs_value: max_abs,
        });
    }
    Ok(ConvergenceReport {
        rate: rows.last().and_then(|r| r.rate),
        gaps_decreasing: rows.windows(2).all(|w| w[1].gap < w[0].gap),
        pde_reference: reference,
        bound: spec.payoff.bound(),
        pde,
        pde_runtime_s,
        rows,
    })
}

/// `max |O O^T - I|`.
pub fn orthogonality_defect(o: &Matrix) -> f64 {
    if !o.is_square() {
        return f64::INFINITY;
    }
    let product = o * o.transpose();
    let id = Matrix::identity(o.nrows(), o.ncols());
    (product - id).amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum InvarianceMode {
    /// The quadrature is mapped onto itself by `O`: per-n values must agree.
    Equality { tolerance: f64 },
    /// Invariance only holds in the limit: the gap must shrink with `n`.
    Decay,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceRow {
    pub n: usize,
    pub value: f64,
    pub rotated_value: f64,
    pub gap: f64,
    pub grid_nodes: Vec<usize>,
    pub rotated_grid_nodes: Vec<usize>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub orthogonality_defect: f64,
    pub noise: String,
    pub mode: InvarianceMode,
    /// `lattice-aligned` or `configured`.
    pub grid: &'static str,
    pub rows: Vec<InvarianceRow>,
    pub passed: bool,
}

impl fmt::Display for InvarianceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "noise {}, {:?}, {} grid", self.noise, self.mode, self.grid)?;
        writeln!(f, "{:>8} {:>14} {:>14} {:>12}", "n", "Lambda", "Lambda O", "gap")?;
        for r in &self.rows {
            writeln!(f, "{:>8} {:>14.9} {:>14.9} {:>12.3e}", r.n, r.value, r.rotated_value, r.gap)?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

fn is_gaussian(noise: &NoiseModel) -> bool {
    matches!(noise.kind(), NoiseKind::GaussHermite { .. } | NoiseKind::GaussPolar { .. })
}

/// A planar Gaussian rule mapped onto itself by `o`, if one with at most
/// 64 angles exists.
fn invariant_polar_rule(o: &Matrix, radial: usize) -> Option<NoiseModel> {
    (4..=64)
        .filter_map(|k| NoiseModel::gauss_polar(radial, k).ok())
        .find(|m| m.nodes().is_some_and(|q| q.is_invariant_under(o, 1e-12)))
}

/// Solves with `Lambda` and with `Lambda O` for every `n`.
///
/// Gaussian noise in the plane is replaced by a polar rule invariant under
/// `O` when the configured rule is not. Invariant quadratures require per-n
/// agreement within [`INVARIANCE_TOL`]; otherwise the last gap must be below
/// the first. Without an explicit grid in the config, non-invariant atom laws
/// run on lattice-aligned grids where available.
pub fn invariance(cfg: &LoadedConfig, o: &Matrix, n_list: &[usize]) -> Result<InvarianceReport> {
    let ns = sorted_unique(n_list)?;
    let spec = &cfg.spec;
    let d = spec.dim();
    if o.nrows() != d || o.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "orthogonal matrix",
            expected: d,
            found: o.nrows(),
        });
    }
    let defect = orthogonality_defect(o);
    if defect > ORTHOGONALITY_TOL {
        return Err(Error::NotOrthogonal(defect));
    }
    let mut noise = spec.noise.clone();
    let mut nodes = noise.require_nodes()?;
    if d == 2 && is_gaussian(&noise) && !nodes.is_invariant_under(o, 1e-12) {
        let radial = match noise.kind() {
            NoiseKind::GaussPolar { radial, .. } => *radial,
            _ => 5,
        };
        if let Some(polar) = invariant_polar_rule(o, radial) {
            noise = polar;
            nodes = noise.require_nodes()?;
        }
    }
    let invariant = nodes.is_invariant_under(o, 1e-12);
    let mode = if invariant {
        InvarianceMode::Equality {
            tolerance: INVARIANCE_TOL,
        }
    } else {
        InvarianceMode::Decay
    };
    let base = spec.with_noise(noise.clone())?;
    let rotated = base.with_uncertainty(spec.uncertainty.right_multiplied(o)?)?;
    let configured = cfg.resolved.grid.nodes.is_some() || cfg.resolved.grid.spacing.is_some();
    let half_width = cfg
        .resolved
        .grid
        .half_width
        .unwrap_or_else(|| spec.payoff.domain_half_width());

    let mut aligned_all = !invariant && !configured;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let start = Instant::now();
        let aligned = if aligned_all {
            SpatialGrid::lattice_aligned(&base.uncertainty, nodes, n, half_width).zip(
                SpatialGrid::lattice_aligned(&rotated.uncertainty, nodes, n, half_width),
            )
        } else {
            None
        };
        let (g1, g2) = match aligned {
            Some(pair) => pair,
            None => {
                // Mixing aligned and unaligned rows would confound the gaps.
                if aligned_all && !rows.is_empty() {
                    return Err(Error::InvalidGrid(format!(
                        "no lattice-aligned grid fits the node budget at n = {n}"
                    )));
                }
                aligned_all = false;
                let g = cfg.dp_grid(n)?;
                (g.clone(), g)
            }
        };
        let (a, _, _) = dp_value(&base, n, &g1)?;
        let (b, _, _) = dp_value(&rotated, n, &g2)?;
        rows.push(InvarianceRow {
            n,
            value: a,
            rotated_value: b,
            gap: (a - b).abs(),
            grid_nodes: g1.nodes_per_axis().to_vec(),
            rotated_grid_nodes: g2.nodes_per_axis().to_vec(),
            runtime_s: start.elapsed().as_secs_f64(),
        });
    }
    let passed = match mode {
        InvarianceMode::Equality { tolerance } => rows.iter().all(|r| r.gap <= tolerance),
        InvarianceMode::Decay => {
            let first = rows.first().map_or(0.0, |r| r.gap);
            let last = rows.last().map_or(0.0, |r| r.gap);
            last < first || last <= 1e-12
        }
    };
    Ok(InvarianceReport {
        orthogonality_defect: defect,
        noise: noise.label().to_owned(),
        mode,
        grid: if aligned_all { "lattice-aligned" } else { "configured" },
        rows,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudyRow {
    pub n: usize,
    /// One value per noise, in input order.
    pub values: Vec<f64>,
    /// Largest pairwise difference.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudyReport {
    pub noises: Vec<String>,
    pub rows: Vec<NoiseStudyRow>,
    pub passed: bool,
}

impl fmt::Display for NoiseStudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>8}", "n")?;
        for name in &self.noises {
            write!(f, " {name:>20}")?;
        }
        writeln!(f, " {:>12}", "spread")?;
        for r in &self.rows {
            write!(f, "{:>8}", r.n)?;
            for v in &r.values {
                write!(f, " {v:>20.9}")?;
            }
            writeln!(f, " {:>12.3e}", r.spread)?;
        }
        write!(f, "{}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// Dynamic-program values per noise law and `n`. Every law is validated
/// first; the spread at the largest `n` must be below that at the smallest.
pub fn noise_study(cfg: &LoadedConfig, noises: &[NoiseModel], n_list: &[usize]) -> Result<NoiseStudyReport> {
    let ns = sorted_unique(n_list)?;
    if noises.is_empty() {
        return Err(Error::InvalidArgument("noise list is empty".into()));
    }
    let specs = noises
        .iter()
        .map(|noise| {
            let spec = cfg.spec.with_noise(noise.clone())?;
            validate(&spec)?;
            noise.require_nodes()?;
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let grid = cfg.dp_grid(n)?;
        let values = specs
            .iter()
            .map(|s| dp_value(s, n, &grid).map(|v| v.0))
            .collect::<Result<Vec<_>>>()?;
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(NoiseStudyRow {
            n,
            values,
            spread: hi - lo,
        });
    }
    let first = rows.first().map_or(0.0, |r| r.spread);
    let last = rows.last().map_or(0.0, |r| r.spread);
    Ok(NoiseStudyReport {
        noises: noises.iter().map(|m| m.label().to_owned()).collect(),
        passed: noises.len() == 1 || ns.len() == 1 || last < first || last <= 1e-12,
        rows,
    })
}
