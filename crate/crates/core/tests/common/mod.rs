//! Fixtures and grid-free oracles shared by the integration tests.
#![allow(dead_code)]

use gclt_core::{Matrix, NoiseModel, Payoff, PayoffKind, ProblemSpec, UncertaintySet};

pub fn problem(set: UncertaintySet, noise: NoiseModel, kind: PayoffKind, half_width: f64) -> ProblemSpec {
    let d = set.dim();
    ProblemSpec::new(set, noise, Payoff::new(kind, d, half_width).unwrap()).unwrap()
}

/// Scalar extremes of a one-dimensional set.
fn scalars(spec: &ProblemSpec) -> Vec<f64> {
    spec.uncertainty.enumerate_extremes().iter().map(|a| a[(0, 0)]).collect()
}

/// Best expected payoff over every history-dependent strategy of a
/// one-dimensional Rademacher walk, found by trying every strategy table.
///
/// A table assigns an extreme to each of the `2^n - 1` histories of signs
/// seen before a step; the walk is averaged over all `2^n` sign paths.
pub fn brute_force_tree(spec: &ProblemSpec, n: usize) -> f64 {
    let sigmas = scalars(spec);
    let k = sigmas.len();
    let histories = (1usize << n) - 1;
    let tables = k.checked_pow(histories as u32).expect("strategy count overflows");
    assert!(tables <= 1 << 20, "too many strategy tables");
    let scale = 1.0 / (n as f64).sqrt();
    let mut choice = vec![0usize; histories];
    let mut best = f64::NEG_INFINITY;
    for table in 0..tables {
        let mut rest = table;
        for c in choice.iter_mut() {
            *c = rest % k;
            rest /= k;
        }
        let mut total = 0.0;
        for path in 0..(1usize << n) {
            let mut x = 0.0;
            for j in 0..n {
                let history = (1 << j) - 1 + (path & ((1 << j) - 1));
                let sign = if path >> j & 1 == 1 { 1.0 } else { -1.0 };
                x += sigmas[choice[history]] * sign * scale;
            }
            total += spec.payoff.eval(&[x]);
        }
        best = best.max(total / (1usize << n) as f64);
    }
    best
}

/// Backward maximization over the sign tree; equal to [`brute_force_tree`]
/// by dynamic programming, computed without enumerating tables.
pub fn tree_recursion(spec: &ProblemSpec, n: usize) -> f64 {
    let sigmas = scalars(spec);
    let scale = 1.0 / (n as f64).sqrt();
    fn go(spec: &ProblemSpec, sigmas: &[f64], scale: f64, x: f64, left: usize) -> f64 {
        if left == 0 {
            return spec.payoff.eval(&[x]);
        }
        sigmas
            .iter()
            .map(|s| {
                0.5 * (go(spec, sigmas, scale, x + s * scale, left - 1)
                    + go(spec, sigmas, scale, x - s * scale, left - 1))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    go(spec, &sigmas, scale, 0.0, n)
}

/// `E f(sigma S_n / sqrt n)` for a Rademacher sum `S_n`, by the binomial law.
pub fn classical_binomial(f: impl Fn(f64) -> f64, sigma: f64, n: usize) -> f64 {
    let mut coeff = 1.0f64;
    let mut total = 0.0;
    for k in 0..=n {
        if k > 0 {
            coeff *= (n - k + 1) as f64 / k as f64;
        }
        let s = (2 * k) as f64 - n as f64;
        total += coeff * f(sigma * s / (n as f64).sqrt());
    }
    total / 2f64.powi(n as i32)
}

pub struct OracleCase {
    pub label: String,
    pub spec: ProblemSpec,
    pub n: usize,
    /// `sup |f''|` on the domain.
    pub curvature: f64,
}

/// Every `(n <= 4, |Lambda| <= 2, Rademacher, d = 1)` configuration used
/// against the strategy-tree oracle.
pub fn oracle_suite() -> Vec<OracleCase> {
    let sets: Vec<(&str, UncertaintySet)> = vec![
        ("{1}", UncertaintySet::identity(1).unwrap()),
        ("[1,2]", UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap()),
        (
            "{0.5,1.5}",
            UncertaintySet::finite(vec![Matrix::from_element(1, 1, 0.5), Matrix::from_element(1, 1, 1.5)]).unwrap(),
        ),
    ];
    let payoffs = [
        ("x^2", PayoffKind::Quadratic, 2.0),
        ("-x^2", PayoffKind::NegQuadratic, 2.0),
        ("cos", PayoffKind::Cosine, 1.0),
        ("bump", PayoffKind::GaussianBump, 1.0),
    ];
    let mut out = Vec::new();
    for (set_name, set) in &sets {
        for (f_name, kind, curvature) in &payoffs {
            for n in 1..=4 {
                let r = 6.0 * set.sigma_max();
                out.push(OracleCase {
                    label: format!("{set_name} {f_name}"),
                    spec: problem(set.clone(), NoiseModel::rademacher(1).unwrap(), kind.clone(), r),
                    n,
                    curvature: *curvature,
                });
            }
        }
    }
    out
}
