//! The nonlinearity `G(S) = 1/2 sup_{A in Lambda} Tr(A A^T S)`.
//!
//! The supremum is linear in `A A^T`, so it is taken exactly over the
//! extreme points of the uncertainty set.

use crate::error::{Error, Result};
use crate::model::UncertaintySet;
use crate::Matrix;

/// Symmetric `d x d` matrix stored as its upper triangle, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for r in 0..dim {
            s.set(r, r, 1.0);
        }
        s
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut s = Self::zeros(diag.len());
        for (r, v) in diag.iter().enumerate() {
            s.set(r, r, *v);
        }
        s
    }

    /// Symmetric part `(M + M^T) / 2` of a square matrix.
    pub fn from_matrix(m: &Matrix) -> Self {
        let dim = m.nrows();
        let mut s = Self::zeros(dim);
        for r in 0..dim {
            for c in r..dim {
                s.set(r, c, 0.5 * (m[(r, c)] + m[(c, r)]));
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn index(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        r * self.dim - r * (r + 1) / 2 + c
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.upper[self.index(r, c)]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let i = self.index(r, c);
        self.upper[i] = v;
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |r, c| self.get(r, c))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|v| v * k).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b).collect(),
        }
    }

    /// `Tr(C S)` for a symmetric `C` given in full.
    pub fn trace_product(&self, c: &Matrix) -> f64 {
        let mut t = 0.0;
        for r in 0..self.dim {
            t += c[(r, r)] * self.get(r, r);
            for l in r + 1..self.dim {
                t += 2.0 * c[(r, l)] * self.get(r, l);
            }
        }
        t
    }
}

/// `G` over a fixed uncertainty set, with `A A^T` precomputed per extreme.
#[derive(Debug, Clone)]
pub struct GOperator {
    extremes: Vec<Matrix>,
    covariances: Vec<Matrix>,
}

impl GOperator {
    pub fn new(set: &UncertaintySet) -> Self {
        let extremes = set.enumerate_extremes();
        let covariances = extremes.iter().map(|a| a * a.transpose()).collect();
        Self {
            extremes,
            covariances,
        }
    }

    pub fn dim(&self) -> usize {
        self.extremes[0].nrows()
    }

    pub fn extremes(&self) -> &[Matrix] {
        &self.extremes
    }

    pub fn covariances(&self) -> &[Matrix] {
        &self.covariances
    }

    /// `(G(S), index of the first maximizing extreme)`.
    pub fn eval(&self, s: &SymMatrix) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, c) in self.covariances.iter().enumerate() {
            let v = 0.5 * s.trace_product(c);
            if v > best {
                best = v;
                arg = i;
            }
        }
        (best, arg)
    }

    pub fn value(&self, s: &SymMatrix) -> f64 {
        self.eval(s).0
    }

    pub fn argmax(&self, s: &SymMatrix) -> usize {
        self.eval(s).1
    }
}

fn check_dim(s: &SymMatrix, set: &UncertaintySet) -> Result<()> {
    if s.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            what: "symmetric matrix",
            expected: set.dim(),
            found: s.dim(),
        });
    }
    Ok(())
}

/// `G(S)` for the given uncertainty set.
pub fn g_value(s: &SymMatrix, set: &UncertaintySet) -> Result<f64> {
    check_dim(s, set)?;
    Ok(GOperator::new(set).value(s))
}

/// An extreme matrix attaining `G(S)`; ties go to the lowest enumeration index.
pub fn g_argmax(s: &SymMatrix, set: &UncertaintySet) -> Result<Matrix> {
    check_dim(s, set)?;
    let op = GOperator::new(set);
    let i = op.argmax(s);
    Ok(op.extremes[i].clone())
}

/// One-dimensional closed form for `A = sigma` with `sigma` in `[lo, hi]`.
pub fn g_scalar_interval(s: f64, lo: f64, hi: f64) -> f64 {
    0.5 * (hi * hi * s.max(0.0) - lo * lo * (-s).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval() -> UncertaintySet {
        UncertaintySet::scalar_interval(1, 1.0, 2.0).unwrap()
    }

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    #[test]
    fn zero_matrix_gives_zero() {
        for set in [
            interval(),
            UncertaintySet::identity(3).unwrap(),
            UncertaintySet::diagonal_box(vec![(0.5, 1.0), (1.0, 2.0)]).unwrap(),
        ] {
            let s = SymMatrix::zeros(set.dim());
            assert_eq!(g_value(&s, &set).unwrap(), 0.0);
        }
    }

    #[test]
    fn singleton_identity_is_half_trace() {
        let set = UncertaintySet::identity(2).unwrap();
        let s = SymMatrix::from_diagonal(&[1.0, 3.0]);
        assert_eq!(g_value(&s, &set).unwrap(), 2.0);
        assert_eq!(g_argmax(&s, &set).unwrap(), Matrix::identity(2, 2));
    }

    #[test]
    fn scalar_interval_values_and_sign_rule() {
        let set = interval();
        let pos = SymMatrix::from_diagonal(&[1.0]);
        let neg = SymMatrix::from_diagonal(&[-1.0]);
        assert_eq!(g_value(&pos, &set).unwrap(), 2.0);
        assert_eq!(g_value(&neg, &set).unwrap(), -0.5);
        assert_eq!(g_argmax(&pos, &set).unwrap()[(0, 0)], 2.0);
        assert_eq!(g_argmax(&neg, &set).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn finite_set_by_enumeration() {
        let set = UncertaintySet::finite(vec![diag(&[1.0, 1.0]), diag(&[2.0, 0.5])]).unwrap();
        let s = SymMatrix::identity(2);
        // max(1/2 (1 + 1), 1/2 (4 + 0.25))
        assert_eq!(g_value(&s, &set).unwrap(), 2.125);
        assert_eq!(g_argmax(&s, &set).unwrap(), diag(&[2.0, 0.5]));
    }

    #[test]
    fn ties_go_to_first_extreme() {
        let set = UncertaintySet::diagonal_box(vec![(1.0, 2.0), (1.0, 3.0)]).unwrap();
        let s = SymMatrix::zeros(2);
        assert_eq!(g_argmax(&s, &set).unwrap(), set.enumerate_extremes()[0]);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(g_value(&SymMatrix::zeros(2), &interval()).is_err());
    }

    #[test]
    fn sym_matrix_storage() {
        let m = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let s = SymMatrix::from_matrix(&m);
        assert_eq!(s.to_matrix(), m);
        assert_eq!(s.get(2, 0), 3.0);
        assert_eq!(s.trace_product(&Matrix::identity(3, 3)), 11.0);
    }

    fn sym_strategy(d: usize) -> impl Strategy<Value = SymMatrix> {
        prop::collection::vec(-5.0..5.0f64, d * d).prop_map(move |v| {
            SymMatrix::from_matrix(&Matrix::from_row_slice(d, d, &v))
        })
    }

    fn set_strategy(d: usize) -> impl Strategy<Value = UncertaintySet> {
        prop_oneof![
            prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d * d), 1..4).prop_map(
                move |ms| UncertaintySet::finite(
                    ms.iter().map(|v| Matrix::from_row_slice(d, d, v)).collect()
                )
                .unwrap()
            ),
            (0.1..2.0f64, 0.0..2.0f64)
                .prop_map(move |(lo, w)| UncertaintySet::scalar_interval(d, lo, lo + w).unwrap()),
            prop::collection::vec((0.1..2.0f64, 0.0..2.0f64), d).prop_map(|b| {
                UncertaintySet::diagonal_box(b.into_iter().map(|(lo, w)| (lo, lo + w)).collect())
                    .unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn positive_homogeneity(set in set_strategy(2), s in sym_strategy(2), k in 0.0..10.0f64) {
            let op = GOperator::new(&set);
            let lhs = op.value(&s.scaled(k));
            let rhs = k * op.value(&s);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn subadditivity(set in set_strategy(3), a in sym_strategy(3), b in sym_strategy(3)) {
            let op = GOperator::new(&set);
            prop_assert!(op.value(&a.add(&b)) <= op.value(&a) + op.value(&b) + 1e-12);
        }

        #[test]
        fn monotone_in_loewner_order(
            set in set_strategy(2),
            s in sym_strategy(2),
            p in prop::collection::vec(-3.0..3.0f64, 4),
        ) {
            let p = Matrix::from_row_slice(2, 2, &p);
            let larger = s.add(&SymMatrix::from_matrix(&(&p * p.transpose())));
            let op = GOperator::new(&set);
            prop_assert!(op.value(&s) <= op.value(&larger) + 1e-12);
        }

        #[test]
        fn closed_form_matches_enumeration(s in -10.0..10.0f64, lo in 0.1..3.0f64, w in 0.0..3.0f64) {
            let set = UncertaintySet::scalar_interval(1, lo, lo + w).unwrap();
            let v = g_value(&SymMatrix::from_diagonal(&[s]), &set).unwrap();
            prop_assert!((v - g_scalar_interval(s, lo, lo + w)).abs() <= 1e-12);
        }

        #[test]
        fn extremes_dominate_dense_sample(
            bounds in prop::collection::vec((0.1..2.0f64, 0.0..2.0f64), 2),
            s in sym_strategy(2),
            samples in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 200),
        ) {
            let bounds: Vec<(f64, f64)> = bounds.into_iter().map(|(lo, w)| (lo, lo + w)).collect();
            let set = UncertaintySet::diagonal_box(bounds.clone()).unwrap();
            let g = GOperator::new(&set).value(&s);
            let mut sampled = f64::NEG_INFINITY;
            for (u, v) in samples.into_iter().chain([(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]) {
                let a = diag(&[
                    bounds[0].0 + u * (bounds[0].1 - bounds[0].0),
                    bounds[1].0 + v * (bounds[1].1 - bounds[1].0),
                ]);
                prop_assert!(set.contains(&a, 1e-12));
                sampled = sampled.max(0.5 * s.trace_product(&(&a * a.transpose())));
            }
            prop_assert!(sampled <= g + 1e-9);
            prop_assert!((sampled - g).abs() <= 1e-9);
        }
    }
}
