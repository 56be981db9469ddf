//! TOML problem files.
//!
//! ```toml
//! [uncertainty]
//! kind = "interval"      # identity | interval | box | finite
//! dim = 1
//! lo = 1.0
//! hi = 2.0
//!
//! [noise]
//! kind = "rademacher"    # rademacher | atoms | gauss-hermite | gauss-polar | sampler
//!
//! [payoff]
//! kind = "quadratic"
//! domain_half_width = 12.0
//!
//! [grid]                 # optional
//! half_width = 12.0
//!
//! [pde]                  # optional
//! spacing = 0.05
//! theta = 0.9
//!
//! [simulation]           # optional
//! paths = 100000
//! seed = 0
//! ```
//!
//! `[[noise_study]]` tables list extra laws for the noise study. Parse
//! failures and semantic errors both report the offending line.

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, DEFAULT_WIDTH_FACTOR};
use crate::model::{
    NoiseModel, Payoff, PayoffKind, ProblemSpec, Sampler, Table, UncertaintySet,
};
use crate::pde::{PdeConfig, DEFAULT_CFL_SAFETY};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyChoice {
    Identity,
    Interval,
    Box,
    Finite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    pub kind: UncertaintyChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    /// Per-axis `[lo, hi]` for `box`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    /// Row-major `dim x dim` matrices for `finite`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseChoice {
    Rademacher,
    Atoms,
    GaussHermite,
    GaussPolar,
    Sampler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Rescale the atoms to exact moments instead of rejecting them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whiten: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl NoiseSection {
    pub fn of_kind(kind: NoiseChoice) -> Self {
        Self {
            kind,
            points: None,
            weights: None,
            whiten: None,
            order: None,
            radial: None,
            angles: None,
            law: None,
            tolerance: None,
        }
    }

    /// Parses `rademacher`, `gauss-hermite:7`, `gauss-polar:5:16`,
    /// `sampler:gaussian` or `atoms:-2,2` (equal weights, one dimension).
    pub fn from_shorthand(text: &str) -> Result<Self> {
        let mut parts = text.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::Config(format!("cannot parse noise `{text}`"));
        let int = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        let mut out = match head {
            "rademacher" => Self::of_kind(NoiseChoice::Rademacher),
            "gauss-hermite" => Self::of_kind(NoiseChoice::GaussHermite),
            "gauss-polar" => Self::of_kind(NoiseChoice::GaussPolar),
            "sampler" => Self::of_kind(NoiseChoice::Sampler),
            "atoms" => Self::of_kind(NoiseChoice::Atoms),
            _ => return Err(bad()),
        };
        match (out.kind, args.as_slice()) {
            (NoiseChoice::Rademacher, []) => {}
            (NoiseChoice::GaussHermite, []) => {}
            (NoiseChoice::GaussHermite, [o]) => out.order = Some(int(o)?),
            (NoiseChoice::GaussPolar, []) => {}
            (NoiseChoice::GaussPolar, [r, a]) => {
                out.radial = Some(int(r)?);
                out.angles = Some(int(a)?);
            }
            (NoiseChoice::Sampler, [law]) => {
                out.law = Some(match law.trim() {
                    "rademacher" => Sampler::Rademacher,
                    "gaussian" => Sampler::Gaussian,
                    "uniform" => Sampler::Uniform,
                    _ => return Err(bad()),
                })
            }
            (NoiseChoice::Atoms, [list]) => {
                let points: Vec<Vec<f64>> = list
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map(|v| vec![v]).map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                out.weights = Some(vec![1.0 / points.len() as f64; points.len()]);
                out.points = Some(points);
            }
            _ => return Err(bad()),
        }
        Ok(out)
    }

    /// Fills defaults and builds the law in dimension `dim`.
    pub fn build(&mut self, dim: usize) -> Result<NoiseModel> {
        let missing = |field: &str| Error::Config(format!("noise kind {:?} needs `{field}`", self.kind));
        let mut noise = match self.kind {
            NoiseChoice::Rademacher => NoiseModel::rademacher(dim)?,
            NoiseChoice::GaussHermite => NoiseModel::gauss_hermite(dim, *self.order.get_or_insert(7))?,
            NoiseChoice::GaussPolar => {
                if dim != 2 {
                    return Err(Error::Config(format!(
                        "gauss-polar is a planar rule, problem dimension is {dim}"
                    )));
                }
                NoiseModel::gauss_polar(*self.radial.get_or_insert(5), *self.angles.get_or_insert(16))?
            }
            NoiseChoice::Sampler => NoiseModel::sampler(dim, self.law.ok_or_else(|| missing("law"))?)?,
            NoiseChoice::Atoms => {
                let points = self.points.clone().ok_or_else(|| missing("points"))?;
                let weights = self
                    .weights
                    .get_or_insert_with(|| vec![1.0 / points.len().max(1) as f64; points.len()])
                    .clone();
                if *self.whiten.get_or_insert(false) {
                    NoiseModel::whitened(dim, points, weights)?
                } else {
                    NoiseModel::atoms(dim, points, weights)?
                }
            }
        };
        match self.tolerance {
            Some(tol) => noise = noise.with_tolerance(tol),
            None => self.tolerance = Some(noise.tolerance()),
        }
        noise.check_exact_moments()?;
        Ok(noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffChoice {
    Cosine,
    Quadratic,
    NegQuadratic,
    GaussianBump,
    ClippedLinear,
    Constant,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSection {
    pub kind: PayoffChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Vec<f64>>>,
    /// Row-major table values, last axis fastest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Nodes per axis; overrides the default spacing rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    uncertainty: Spanned<UncertaintySection>,
    noise: Option<Spanned<NoiseSection>>,
    payoff: Spanned<PayoffSection>,
    grid: Option<Spanned<GridSection>>,
    pde: Option<Spanned<PdeSection>>,
    simulation: Option<Spanned<SimulationSection>>,
    #[serde(default)]
    noise_study: Vec<Spanned<NoiseSection>>,
}

/// A problem file with every default filled in.
///
/// Serializing it gives a file that reproduces the same run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub uncertainty: UncertaintySection,
    pub noise: NoiseSection,
    pub payoff: PayoffSection,
    pub grid: GridSection,
    pub pde: PdeSection,
    pub simulation: SimulationSection,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub noise_study: Vec<NoiseSection>,
}

/// A parsed problem file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub spec: ProblemSpec,
    pub resolved: ResolvedConfig,
    /// Built laws of `[[noise_study]]`, in file order.
    pub noise_study: Vec<NoiseModel>,
}

impl LoadedConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let at = |span: std::ops::Range<usize>, section: &str| {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            let section = section.to_owned();
            move |e: Error| Error::Config(format!("line {line}, [{section}]: {e}"))
        };

        let span = raw.uncertainty.span();
        let mut uncertainty = raw.uncertainty.into_inner();
        let set = build_uncertainty(&mut uncertainty).map_err(at(span, "uncertainty"))?;
        let dim = set.dim();

        let (mut noise, span) = match raw.noise {
            Some(s) => {
                let span = s.span();
                (s.into_inner(), span)
            }
            None => (NoiseSection::of_kind(NoiseChoice::Rademacher), 0..0),
        };
        let noise_model = noise.build(dim).map_err(at(span, "noise"))?;

        let span = raw.payoff.span();
        let mut payoff = raw.payoff.into_inner();
        let payoff_model = build_payoff(&mut payoff, &set).map_err(at(span, "payoff"))?;

        let spec = ProblemSpec::new(set, noise_model, payoff_model)?;

        let (mut grid, span) = split(raw.grid);
        grid.half_width.get_or_insert(spec.payoff.domain_half_width());
        check_grid(&grid, dim).map_err(at(span, "grid"))?;

        let (mut pde, span) = split(raw.pde);
        pde.half_width.get_or_insert(grid.half_width.unwrap_or_default());
        pde.spacing.get_or_insert(if dim == 1 { 0.05 } else { 0.1 });
        pde.theta.get_or_insert(DEFAULT_CFL_SAFETY);
        resolve_pde(&pde, &spec).map_err(at(span, "pde"))?;

        let (mut simulation, _) = split(raw.simulation);
        simulation.paths.get_or_insert(100_000);
        simulation.seed.get_or_insert(0);

        let mut study = Vec::with_capacity(raw.noise_study.len());
        let mut study_models = Vec::with_capacity(raw.noise_study.len());
        for entry in raw.noise_study {
            let span = entry.span();
            let mut section = entry.into_inner();
            study_models.push(section.build(dim).map_err(at(span, "noise_study"))?);
            study.push(section);
        }

        Ok(Self {
            spec,
            resolved: ResolvedConfig {
                uncertainty,
                noise,
                payoff,
                grid,
                pde,
                simulation,
                noise_study: study,
            },
            noise_study: study_models,
        })
    }

    /// Grid for `n` steps: explicit nodes or spacing if configured,
    /// otherwise the default rule on the configured half-width.
    pub fn dp_grid(&self, n: usize) -> Result<SpatialGrid> {
        let g = &self.resolved.grid;
        let dim = self.spec.dim();
        let r = g.half_width.unwrap_or_else(|| self.spec.payoff.domain_half_width());
        match (g.nodes, g.spacing) {
            (Some(m), _) => SpatialGrid::uniform(dim, r, m),
            (None, Some(h)) => SpatialGrid::with_spacing(dim, r, h),
            (None, None) => SpatialGrid::default_with_half_width(&self.spec.uncertainty, n, r),
        }
    }

    pub fn pde_config(&self) -> Result<PdeConfig> {
        resolve_pde(&self.resolved.pde, &self.spec)
    }

    pub fn paths(&self) -> usize {
        self.resolved.simulation.paths.unwrap_or(100_000)
    }

    pub fn seed(&self) -> u64 {
        self.resolved.simulation.seed.unwrap_or(0)
    }
}

fn split<T: Default>(section: Option<Spanned<T>>) -> (T, std::ops::Range<usize>) {
    match section {
        Some(s) => {
            let span = s.span();
            (s.into_inner(), span)
        }
        None => (T::default(), 0..0),
    }
}

fn build_uncertainty(u: &mut UncertaintySection) -> Result<UncertaintySet> {
    let need = |field: &str| Error::Config(format!("uncertainty kind {:?} needs `{field}`", u.kind));
    match u.kind {
        UncertaintyChoice::Identity => UncertaintySet::identity(*u.dim.get_or_insert(1)),
        UncertaintyChoice::Interval => {
            let lo = u.lo.ok_or_else(|| need("lo"))?;
            let hi = u.hi.ok_or_else(|| need("hi"))?;
            UncertaintySet::scalar_interval(*u.dim.get_or_insert(1), lo, hi)
        }
        UncertaintyChoice::Box => {
            let bounds = u.bounds.clone().ok_or_else(|| need("bounds"))?;
            u.dim = Some(bounds.len());
            UncertaintySet::diagonal_box(bounds.into_iter().map(|[lo, hi]| (lo, hi)).collect())
        }
        UncertaintyChoice::Finite => {
            let rows = u.matrices.clone().ok_or_else(|| need("matrices"))?;
            let first = rows.first().map_or(0, Vec::len);
            let dim = (first as f64).sqrt().round() as usize;
            if dim * dim != first || dim == 0 {
                return Err(Error::Config(format!(
                    "finite matrices must have a square number of entries, got {first}"
                )));
            }
            let mut matrices = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != dim * dim {
                    return Err(Error::Config(format!(
                        "every matrix needs {} entries, got {}",
                        dim * dim,
                        row.len()
                    )));
                }
                matrices.push(Matrix::from_row_slice(dim, dim, &row));
            }
            u.dim = Some(dim);
            UncertaintySet::finite(matrices)
        }
    }
}

fn build_payoff(p: &mut PayoffSection, set: &UncertaintySet) -> Result<Payoff> {
    let need = |field: &str| Error::Config(format!("payoff kind {:?} needs `{field}`", p.kind));
    let kind = match p.kind {
        PayoffChoice::Cosine => PayoffKind::Cosine,
        PayoffChoice::Quadratic => PayoffKind::Quadratic,
        PayoffChoice::NegQuadratic => PayoffKind::NegQuadratic,
        PayoffChoice::GaussianBump => PayoffKind::GaussianBump,
        PayoffChoice::ClippedLinear => PayoffKind::ClippedLinear {
            clip: p.clip.ok_or_else(|| need("clip"))?,
        },
        PayoffChoice::Constant => PayoffKind::Constant {
            value: p.value.ok_or_else(|| need("value"))?,
        },
        PayoffChoice::Table => PayoffKind::Tabulated(Table::new(
            p.axes.clone().ok_or_else(|| need("axes"))?,
            p.values.clone().ok_or_else(|| need("values"))?,
        )?),
    };
    let r = *p
        .domain_half_width
        .get_or_insert(DEFAULT_WIDTH_FACTOR * set.sigma_max());
    Payoff::new(kind, set.dim(), r)
}

fn check_grid(g: &GridSection, dim: usize) -> Result<()> {
    let r = g.half_width.unwrap_or(1.0);
    if let Some(m) = g.nodes {
        SpatialGrid::uniform(dim, r, m)?;
    }
    if let Some(h) = g.spacing {
        SpatialGrid::with_spacing(dim, r, h)?;
    }
    Ok(())
}

fn resolve_pde(p: &PdeSection, spec: &ProblemSpec) -> Result<PdeConfig> {
    let dim = spec.dim();
    let r = p.half_width.unwrap_or_else(|| spec.payoff.domain_half_width());
    let grid = SpatialGrid::with_spacing(dim, r, p.spacing.unwrap_or(0.05))?;
    let mut cfg = PdeConfig::new(grid).with_theta(p.theta.unwrap_or(DEFAULT_CFL_SAFETY));
    if let Some(dt) = p.dt {
        cfg = cfg.with_dt(dt);
    }
    Ok(cfg)
}
