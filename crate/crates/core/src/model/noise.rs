//! Laws of the i.i.d. increments: explicit atoms, Gauss-Hermite nodes, or
//! sample-only generators.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default moment tolerance for atoms and quadrature rules.
pub const EXACT_MOMENT_TOL: f64 = 1e-10;
/// Default moment tolerance for empirical checks of sample-only laws.
pub const SAMPLED_MOMENT_TOL: f64 = 1e-2;

/// Generators for laws that are only ever sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Independent `+-1` coordinates.
    Rademacher,
    /// Standard normal coordinates.
    Gaussian,
    /// Independent coordinates uniform on `[-sqrt 3, sqrt 3]`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Atoms,
    GaussHermite { order: usize },
    /// Planar normal rule: Gauss-Laguerre radii times equally spaced angles.
    GaussPolar { radial: usize, angles: usize },
    SamplerOnly(Sampler),
}

/// Discrete law: `weights[k]` on the point `points[k*dim..(k+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn moment_defects(&self) -> MomentDefects {
        let d = self.dim;
        let mut mean = vec![0.0; d];
        let mut cov = vec![0.0; d * d];
        for (z, p) in self.iter() {
            for r in 0..d {
                mean[r] += p * z[r];
                for l in 0..d {
                    cov[r * d + l] += p * z[r] * z[l];
                }
            }
        }
        let weight_sum: f64 = self.weights.iter().sum();
        MomentDefects::from_moments(weight_sum, &mean, &cov, d)
    }

    /// Whether `{O z_k}` with the same weights is this rule again, up to `tol`.
    pub fn is_invariant_under(&self, o: &crate::Matrix, tol: f64) -> bool {
        let d = self.dim;
        if o.nrows() != d || o.ncols() != d {
            return false;
        }
        let mut image = vec![0.0; d];
        let mut used = vec![false; self.len()];
        for (z, p) in self.iter() {
            for r in 0..d {
                image[r] = (0..d).map(|l| o[(r, l)] * z[l]).sum();
            }
            let hit = (0..self.len()).find(|&k| {
                !used[k]
                    && (self.weights[k] - p).abs() <= tol
                    && self.point(k).iter().zip(&image).all(|(a, b)| (a - b).abs() <= tol)
            });
            match hit {
                Some(k) => used[k] = true,
                None => return false,
            }
        }
        true
    }
}

/// Measured departures from `E xi = 0`, `E xi xi^T = I` and unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentDefects {
    pub weight_sum: f64,
    /// `max_r |E xi_r|`
    pub mean: f64,
    /// `max_{r,l} |E xi_r xi_l - I_{rl}|`
    pub covariance: f64,
}

impl MomentDefects {
    fn from_moments(weight_sum: f64, mean: &[f64], cov: &[f64], d: usize) -> Self {
        let mean_defect = mean.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut cov_defect = 0.0_f64;
        for r in 0..d {
            for l in 0..d {
                let target = if r == l { 1.0 } else { 0.0 };
                cov_defect = cov_defect.max((cov[r * d + l] - target).abs());
            }
        }
        Self {
            weight_sum: (weight_sum - 1.0).abs(),
            mean: mean_defect,
            covariance: cov_defect,
        }
    }

    pub fn within(&self, tol: f64) -> bool {
        self.weight_sum <= tol && self.mean <= tol && self.covariance <= tol
    }
}

/// Law of a single increment `xi` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    dim: usize,
    kind: NoiseKind,
    tolerance: f64,
    nodes: Option<Quadrature>,
    label: String,
}

impl NoiseModel {
    /// Explicit atoms. Moments are not checked here; see [`crate::model::validate`].
    pub fn atoms(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNoise("dimension must be positive".into()));
        }
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidNoise(format!(
                "need a positive number of atoms with one weight each (got {} points, {} weights)",
                points.len(),
                weights.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "noise atom",
                expected: dim,
                found: p.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidNoise("weights must be positive".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidNoise("atoms must be finite".into()));
        }
        let label = format!("atoms({})", points.len());
        Ok(Self {
            dim,
            kind: NoiseKind::Atoms,
            tolerance: EXACT_MOMENT_TOL,
            nodes: Some(Quadrature {
                dim,
                points: points.into_iter().flatten().collect(),
                weights,
            }),
            label,
        })
    }

    /// Product Rademacher law: `2^dim` equally weighted sign vectors.
    pub fn rademacher(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 16 {
            return Err(Error::InvalidNoise(format!(
                "rademacher atoms supported for 1 <= dim <= 16, got {dim}"
            )));
        }
        let count = 1usize << dim;
        let points = (0..count)
            .map(|mask| {
                (0..dim)
                    .map(|r| if mask >> (dim - 1 - r) & 1 == 0 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let mut noise = Self::atoms(dim, points, vec![1.0 / count as f64; count])?;
        noise.label = "rademacher".into();
        Ok(noise)
    }

    /// Arbitrary atoms affinely normalized to mean zero and identity covariance.
    pub fn whitened(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let raw = Self::atoms(dim, points, weights)?;
        let q = raw.nodes.as_ref().expect("atoms have nodes");
        let total: f64 = q.weights.iter().sum();
        let weights: Vec<f64> = q.weights.iter().map(|w| w / total).collect();
        let mut mean = vec![0.0; dim];
        for (z, &p) in q.points.chunks_exact(dim).zip(&weights) {
            for r in 0..dim {
                mean[r] += p * z[r];
            }
        }
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for (z, &p) in q.points.chunks_exact(dim).zip(&weights) {
            for r in 0..dim {
                for l in 0..dim {
                    cov[(r, l)] += p * (z[r] - mean[r]) * (z[l] - mean[l]);
                }
            }
        }
        let chol = cov.cholesky().ok_or_else(|| {
            Error::InvalidNoise("atoms have a singular covariance and cannot be whitened".into())
        })?;
        let l = chol.l();
        let points = q
            .points
            .chunks_exact(dim)
            .map(|z| {
                let centered = nalgebra::DVector::from_iterator(
                    dim,
                    z.iter().zip(&mean).map(|(a, m)| a - m),
                );
                let y = l
                    .solve_lower_triangular(&centered)
                    .expect("cholesky factor is invertible");
                y.iter().copied().collect()
            })
            .collect();
        let mut noise = Self::atoms(dim, points, weights)?;
        noise.label = format!("whitened({})", noise.nodes.as_ref().map_or(0, |q| q.len()));
        Ok(noise)
    }

    /// Tensorized Gauss-Hermite rule for the standard normal law.
    pub fn gauss_hermite(dim: usize, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNoise("dimension must be positive".into()));
        }
        if order < 2 {
            // A single node at zero cannot carry unit variance.
            return Err(Error::InvalidNoise(format!(
                "gauss-hermite order must be >= 2, got {order}"
            )));
        }
        let (x, w) = gauss_hermite_1d(order);
        let count = order.checked_pow(dim as u32).filter(|c| *c <= 1 << 20).ok_or_else(|| {
            Error::InvalidNoise(format!("gauss-hermite order {order} in dimension {dim} is too large"))
        })?;
        let mut points = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rem = flat;
            let mut idx = vec![0; dim];
            for r in (0..dim).rev() {
                idx[r] = rem % order;
                rem /= order;
            }
            weights.push(idx.iter().map(|&i| w[i]).product());
            points.extend(idx.iter().map(|&i| x[i]));
        }
        Ok(Self {
            dim,
            kind: NoiseKind::GaussHermite { order },
            tolerance: EXACT_MOMENT_TOL,
            nodes: Some(Quadrature {
                dim,
                points,
                weights,
            }),
            label: format!("gauss-hermite({order})"),
        })
    }

    /// Rotation-invariant rule for the planar standard normal law.
    ///
    /// `r^2 / 2` is standard exponential, so the radii come from a
    /// `radial`-point Gauss-Laguerre rule; the angles are `2 pi j / angles`.
    /// The node set is invariant under rotations by multiples of
    /// `2 pi / angles` and under reflection in the first axis.
    pub fn gauss_polar(radial: usize, angles: usize) -> Result<Self> {
        if radial < 1 || angles < 3 {
            return Err(Error::InvalidNoise(format!(
                "polar rule needs radial >= 1 and angles >= 3, got {radial} and {angles}"
            )));
        }
        let (s, w) = gauss_laguerre(radial);
        let mut points = Vec::with_capacity(2 * radial * angles);
        let mut weights = Vec::with_capacity(radial * angles);
        for (si, wi) in s.iter().zip(&w) {
            let r = (2.0 * si).sqrt();
            for j in 0..angles {
                let (sin, cos) = (std::f64::consts::TAU * j as f64 / angles as f64).sin_cos();
                points.push(r * cos);
                points.push(r * sin);
                weights.push(wi / angles as f64);
            }
        }
        Ok(Self {
            dim: 2,
            kind: NoiseKind::GaussPolar { radial, angles },
            tolerance: EXACT_MOMENT_TOL,
            nodes: Some(Quadrature {
                dim: 2,
                points,
                weights,
            }),
            label: format!("gauss-polar({radial},{angles})"),
        })
    }

    pub fn sampler(dim: usize, sampler: Sampler) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNoise("dimension must be positive".into()));
        }
        let label = match sampler {
            Sampler::Rademacher => "rademacher-sampler",
            Sampler::Gaussian => "gaussian-sampler",
            Sampler::Uniform => "uniform-sampler",
        };
        Ok(Self {
            dim,
            kind: NoiseKind::SamplerOnly(sampler),
            tolerance: SAMPLED_MOMENT_TOL,
            nodes: None,
            label: label.into(),
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Atoms or quadrature nodes, if this law has them.
    pub fn nodes(&self) -> Option<&Quadrature> {
        self.nodes.as_ref()
    }

    pub fn require_nodes(&self) -> Result<&Quadrature> {
        self.nodes
            .as_ref()
            .ok_or_else(|| Error::UnsupportedNoise(self.label.clone()))
    }

    /// Draws one increment into `out`.
    ///
    /// Gauss-Hermite and polar models stand for the normal law and draw true normals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            NoiseKind::Atoms => {
                let q = self.nodes.as_ref().expect("atoms have nodes");
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = q.len() - 1;
                for (k, w) in q.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                out.copy_from_slice(q.point(pick));
            }
            NoiseKind::GaussHermite { .. }
            | NoiseKind::GaussPolar { .. }
            | NoiseKind::SamplerOnly(Sampler::Gaussian) => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            NoiseKind::SamplerOnly(Sampler::Rademacher) => {
                for v in out.iter_mut() {
                    *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            NoiseKind::SamplerOnly(Sampler::Uniform) => {
                let s = 3.0_f64.sqrt();
                for v in out.iter_mut() {
                    *v = rng.random_range(-s..s);
                }
            }
        }
    }

    /// Rejects atom and quadrature laws whose exact moments miss the tolerance.
    /// Sample-only laws pass; `validate` checks them empirically.
    pub fn check_exact_moments(&self) -> Result<()> {
        if let Some(q) = &self.nodes {
            let m = q.moment_defects();
            if !m.within(self.tolerance) {
                return Err(Error::MomentDefect {
                    mean_defect: m.mean,
                    covariance_defect: m.covariance,
                    tolerance: self.tolerance,
                });
            }
        }
        Ok(())
    }

    /// Exact defects for atom/quadrature laws, empirical ones otherwise.
    pub fn moment_defects(&self, samples: usize, seed: u64) -> MomentDefects {
        match &self.nodes {
            Some(q) => q.moment_defects(),
            None => self.empirical_moment_defects(samples, seed),
        }
    }

    pub fn empirical_moment_defects(&self, samples: usize, seed: u64) -> MomentDefects {
        use rand::SeedableRng;
        let d = self.dim;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut z = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut cov = vec![0.0; d * d];
        for _ in 0..samples {
            self.sample(&mut rng, &mut z);
            for r in 0..d {
                mean[r] += z[r];
                for l in 0..d {
                    cov[r * d + l] += z[r] * z[l];
                }
            }
        }
        let n = samples.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        cov.iter_mut().for_each(|c| *c /= n);
        MomentDefects::from_moments(1.0, &mean, &cov, d)
    }
}

/// Nodes and weights of the `order`-point rule for `E g(eta)`, `eta ~ N(0,1)`.
///
/// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
/// polynomials, then symmetrized so odd moments vanish exactly.
pub fn gauss_hermite_1d(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let node = 0.5 * (x[j] - x[i]);
        let weight = 0.5 * (w[i] + w[j]);
        x[i] = -node;
        x[j] = node;
        w[i] = weight;
        w[j] = weight;
    }
    if order % 2 == 1 {
        x[order / 2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (x, w)
}

/// Nodes and weights of the `order`-point rule for `E g(s)`, `s ~ Exp(1)`.
fn gauss_laguerre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 0..order {
        jacobi[(k, k)] = (2 * k + 1) as f64;
        if k > 0 {
            jacobi[(k - 1, k)] = k as f64;
            jacobi[(k, k - 1)] = k as f64;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_moments_are_exact() {
        for d in 1..=3 {
            let noise = NoiseModel::rademacher(d).unwrap();
            let q = noise.nodes().unwrap();
            assert_eq!(q.len(), 1 << d);
            let m = q.moment_defects();
            assert_eq!(m.mean, 0.0);
            assert_eq!(m.covariance, 0.0);
            assert_eq!(m.weight_sum, 0.0);
        }
    }

    #[test]
    fn gauss_hermite_1d_matches_normal_moments() {
        // E eta^{2k} = (2k-1)!!, exact up to degree 2m-1.
        let double_factorial = |k: u32| (1..=k).map(|i| (2 * i - 1) as f64).product::<f64>();
        for order in 2..=10 {
            let (x, w) = gauss_hermite_1d(order);
            for k in 0..order as u32 {
                let moment: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * k as i32)).sum();
                let exact = double_factorial(k);
                assert!(
                    (moment - exact).abs() <= 1e-11 * exact.max(1.0),
                    "order {order} moment {}: {moment} vs {exact}",
                    2 * k
                );
            }
        }
    }

    #[test]
    fn gauss_hermite_tensor_is_exact_to_tolerance() {
        let noise = NoiseModel::gauss_hermite(2, 7).unwrap();
        assert_eq!(noise.nodes().unwrap().len(), 49);
        assert!(noise.nodes().unwrap().moment_defects().within(1e-13));
    }

    #[test]
    fn whitening_produces_exact_moments() {
        let noise = NoiseModel::whitened(
            2,
            vec![vec![0.0, 1.0], vec![3.0, -1.0], vec![1.0, 4.0], vec![-2.0, 0.5]],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        assert!(noise.nodes().unwrap().moment_defects().within(1e-13));
    }

    #[test]
    fn polar_rule_is_exact_and_rotation_invariant() {
        let noise = NoiseModel::gauss_polar(5, 16).unwrap();
        let q = noise.nodes().unwrap();
        assert!(q.moment_defects().within(1e-12));
        let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
        let rot = crate::Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(q.is_invariant_under(&rot, 1e-12));
        let odd = crate::Matrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        assert!(!q.is_invariant_under(&odd, 1e-9));
        let gh = NoiseModel::gauss_hermite(2, 5).unwrap();
        assert!(!gh.nodes().unwrap().is_invariant_under(&rot, 1e-9));
        // E (r^2/2)^2 = 2 for the exponential law.
        let fourth: f64 = q.iter().map(|(z, p)| p * (0.5 * (z[0] * z[0] + z[1] * z[1])).powi(2)).sum();
        assert!((fourth - 2.0).abs() < 1e-12);
    }

    #[test]
    fn samplers_have_no_nodes() {
        let noise = NoiseModel::sampler(1, Sampler::Gaussian).unwrap();
        assert!(matches!(noise.require_nodes(), Err(Error::UnsupportedNoise(_))));
    }

    #[test]
    fn empirical_moments_of_samplers() {
        for s in [Sampler::Rademacher, Sampler::Gaussian, Sampler::Uniform] {
            let noise = NoiseModel::sampler(2, s).unwrap();
            let m = noise.empirical_moment_defects(200_000, 7);
            assert!(m.within(SAMPLED_MOMENT_TOL), "{s:?}: {m:?}");
        }
    }

    #[test]
    fn atom_sampling_respects_weights() {
        use rand::SeedableRng;
        let noise = NoiseModel::atoms(1, vec![vec![-1.0], vec![2.0]], vec![2.0 / 3.0, 1.0 / 3.0])
            .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut z = [0.0];
        let mut hits = 0;
        for _ in 0..30_000 {
            noise.sample(&mut rng, &mut z);
            if z[0] > 0.0 {
                hits += 1;
            }
        }
        let frac = hits as f64 / 30_000.0;
        assert!((frac - 1.0 / 3.0).abs() < 0.01, "{frac}");
    }

    #[test]
    fn rejects_malformed_atoms() {
        assert!(NoiseModel::atoms(1, vec![], vec![]).is_err());
        assert!(NoiseModel::atoms(1, vec![vec![1.0]], vec![0.0]).is_err());
        assert!(NoiseModel::atoms(2, vec![vec![1.0]], vec![1.0]).is_err());
        assert!(NoiseModel::gauss_hermite(1, 1).is_err());
    }
}
