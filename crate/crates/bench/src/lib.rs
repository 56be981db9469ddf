//! Problem fixtures shared by the benchmarks.

use gclt_core::{NoiseModel, Payoff, PayoffKind, ProblemSpec, UncertaintySet};

/// `Lambda = [1, 2]`, `f(x) = x^2` on `[-12, 12]`, Rademacher increments.
pub fn convex() -> ProblemSpec {
    ProblemSpec::new(
        UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap(),
        NoiseModel::rademacher(1).unwrap(),
        Payoff::new(PayoffKind::Quadratic, 1, 12.0).unwrap(),
    )
    .unwrap()
}

/// Diagonal box `[0.5, 1]^2`, Gaussian bump, planar polar quadrature.
pub fn plane() -> ProblemSpec {
    ProblemSpec::new(
        UncertaintySet::diagonal_box(vec![(0.5, 1.0), (0.5, 1.0)]).unwrap(),
        NoiseModel::gauss_polar(5, 16).unwrap(),
        Payoff::new(PayoffKind::GaussianBump, 2, 6.0).unwrap(),
    )
    .unwrap()
}
