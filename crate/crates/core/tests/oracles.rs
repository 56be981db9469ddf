//! Grid-free oracles for the one-dimensional Rademacher walk.

mod common;

use common::{brute_force_tree, classical_binomial, oracle_suite, problem, tree_recursion};
use gclt_core::dp::{dp_solve_with, DpOptions};
use gclt_core::{Matrix, NoiseModel, PayoffKind, SpatialGrid, UncertaintySet};

fn dp_at(spec: &gclt_core::ProblemSpec, n: usize, grid: &SpatialGrid) -> f64 {
    dp_solve_with(spec, n, grid, DpOptions::value_only())
        .unwrap()
        .summary
        .value_at_origin
}

#[test]
fn table_enumeration_agrees_with_tree_recursion() {
    for case in oracle_suite() {
        let a = brute_force_tree(&case.spec, case.n);
        let b = tree_recursion(&case.spec, case.n);
        assert!((a - b).abs() < 1e-12, "{} n={}: {a} vs {b}", case.label, case.n);
    }
}

#[test]
fn singleton_tree_is_the_binomial_expectation() {
    for case in oracle_suite().into_iter().filter(|c| c.label.starts_with("{1}")) {
        let payoff = case.spec.payoff.clone();
        let exact = classical_binomial(|x| payoff.eval(&[x]), 1.0, case.n);
        assert!((brute_force_tree(&case.spec, case.n) - exact).abs() < 1e-12);
    }
}

/// Interpolation error per step is at most `h^2 sup|f''| / 8`; the scheme is
/// a monotone average, so `n` steps give `C = n sup|f''| / 8`.
#[test]
fn dp_matches_strategy_tree_within_c_h_squared() {
    let mut worst = 0.0f64;
    for case in oracle_suite() {
        let exact = brute_force_tree(&case.spec, case.n);
        let bound = case.n as f64 * case.curvature / 8.0;
        let coarse = SpatialGrid::default_for(&case.spec.uncertainty, case.n).unwrap();
        let h = coarse.max_spacing();
        let fine = SpatialGrid::with_spacing(1, coarse.half_width()[0], h / 4.0).unwrap();
        let mut errors = Vec::new();
        for grid in [&coarse, &fine] {
            let h = grid.max_spacing();
            let err = (dp_at(&case.spec, case.n, grid) - exact).abs();
            let c = err / (h * h);
            worst = worst.max(c / bound);
            assert!(c <= bound + 1e-9, "{} n={}: C = {c} exceeds {bound}", case.label, case.n);
            errors.push(err);
        }
        assert!(errors[1] <= errors[0] + 1e-12, "{} n={}: {errors:?}", case.label, case.n);
    }
    println!("largest measured C relative to n sup|f''| / 8: {worst:.3}");
}

#[test]
fn aligned_grid_reproduces_the_tree_exactly() {
    // Jumps of +-sigma/sqrt(n) that are whole multiples of h never interpolate.
    for case in oracle_suite() {
        let nodes = case.spec.noise.nodes().unwrap();
        let Some(grid) = SpatialGrid::lattice_aligned(&case.spec.uncertainty, nodes, case.n, 12.0) else {
            continue;
        };
        let exact = brute_force_tree(&case.spec, case.n);
        assert!(
            (dp_at(&case.spec, case.n, &grid) - exact).abs() < 1e-12,
            "{} n={}",
            case.label,
            case.n
        );
    }
}

#[test]
fn classical_walk_matches_binomial_law_for_large_n() {
    for (kind, curvature) in [(PayoffKind::Cosine, 1.0), (PayoffKind::GaussianBump, 1.0)] {
        for sigma in [0.7, 1.3] {
            let set = UncertaintySet::scalar_interval(1, sigma, sigma).unwrap();
            let spec = problem(set, NoiseModel::rademacher(1).unwrap(), kind.clone(), 6.0 * sigma);
            let payoff = spec.payoff.clone();
            for n in [16, 64, 256] {
                let grid = SpatialGrid::default_for(&spec.uncertainty, n).unwrap();
                let h = grid.max_spacing();
                let exact = classical_binomial(|x| payoff.eval(&[x]), sigma, n);
                let err = (dp_at(&spec, n, &grid) - exact).abs();
                assert!(err <= n as f64 * curvature * h * h / 8.0, "{kind:?} sigma={sigma} n={n}: {err}");
            }
        }
    }
}

#[test]
fn tree_value_dominates_every_fixed_volatility() {
    // The supremum over strategies is at least each constant strategy.
    for case in oracle_suite() {
        let exact = brute_force_tree(&case.spec, case.n);
        for a in case.spec.uncertainty.enumerate_extremes() {
            let sigma = a[(0, 0)];
            let payoff = case.spec.payoff.clone();
            let fixed = classical_binomial(|x| payoff.eval(&[x]), sigma, case.n);
            assert!(fixed <= exact + 1e-12, "{} n={}", case.label, case.n);
        }
    }
}

#[test]
fn convex_and_concave_tree_values() {
    let set = UncertaintySet::finite(vec![Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 2.0)]).unwrap();
    let convex = problem(set.clone(), NoiseModel::rademacher(1).unwrap(), PayoffKind::Quadratic, 12.0);
    let concave = problem(set, NoiseModel::rademacher(1).unwrap(), PayoffKind::NegQuadratic, 12.0);
    for n in 1..=4 {
        assert!((brute_force_tree(&convex, n) - 4.0).abs() < 1e-12);
        assert!((brute_force_tree(&concave, n) + 1.0).abs() < 1e-12);
    }
}
