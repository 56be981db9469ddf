//! The compact set of linear transformations available to the adversary.

use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyKind {
    /// An explicit list of `d x d` matrices.
    Finite(Vec<Matrix>),
    /// `A = sigma * I` with `sigma` in `[lo, hi]`.
    ScalarInterval { lo: f64, hi: f64 },
    /// Diagonal matrices with entry `r` in `bounds[r]`.
    DiagonalBox(Vec<(f64, f64)>),
}

/// A nonempty compact set of `d x d` matrices.
///
/// Interval and box variants are reduced to their extreme points by
/// [`UncertaintySet::enumerate_extremes`]; anything linear in `A A^T`
/// attains its supremum over the set at one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    dim: usize,
    kind: UncertaintyKind,
}

impl UncertaintySet {
    pub fn finite(matrices: Vec<Matrix>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidUncertainty("finite set is empty".into()))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::InvalidUncertainty("matrices must be at least 1x1".into()));
        }
        for m in &matrices {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidUncertainty(format!(
                    "all matrices must be {dim}x{dim}, found {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidUncertainty("matrix entries must be finite".into()));
            }
        }
        Ok(Self {
            dim,
            kind: UncertaintyKind::Finite(matrices),
        })
    }

    /// Singleton `{I}` in dimension `dim`.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::finite(vec![Matrix::identity(dim, dim)])
    }

    pub fn scalar_interval(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidUncertainty("dimension must be positive".into()));
        }
        check_interval(lo, hi)?;
        Ok(Self {
            dim,
            kind: UncertaintyKind::ScalarInterval { lo, hi },
        })
    }

    pub fn diagonal_box(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidUncertainty("box needs at least one axis".into()));
        }
        for &(lo, hi) in &bounds {
            check_interval(lo, hi)?;
        }
        Ok(Self {
            dim: bounds.len(),
            kind: UncertaintyKind::DiagonalBox(bounds),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &UncertaintyKind {
        &self.kind
    }

    /// Finite list of members whose convex hull (in `A A^T`) covers the set.
    ///
    /// Box vertices are listed lexicographically with axis 0 varying slowest.
    /// Degenerate intervals contribute a single value.
    pub fn enumerate_extremes(&self) -> Vec<Matrix> {
        match &self.kind {
            UncertaintyKind::Finite(list) => list.clone(),
            UncertaintyKind::ScalarInterval { lo, hi } => endpoints(*lo, *hi)
                .into_iter()
                .map(|s| Matrix::identity(self.dim, self.dim) * s)
                .collect(),
            UncertaintyKind::DiagonalBox(bounds) => {
                let mut out = vec![Vec::with_capacity(bounds.len())];
                for &(lo, hi) in bounds {
                    let ends = endpoints(lo, hi);
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            ends.iter().map(move |&e| {
                                let mut p = prefix.clone();
                                p.push(e);
                                p
                            })
                        })
                        .collect();
                }
                out.into_iter()
                    .map(|diag| Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
                    .collect()
            }
        }
    }

    /// Membership test with absolute tolerance `tol` on the entries.
    pub fn contains(&self, a: &Matrix, tol: f64) -> bool {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return false;
        }
        let off_diagonal_zero = || {
            (0..self.dim).all(|r| (0..self.dim).all(|c| r == c || a[(r, c)].abs() <= tol))
        };
        match &self.kind {
            UncertaintyKind::Finite(list) => list.iter().any(|m| (m - a).amax() <= tol),
            UncertaintyKind::ScalarInterval { lo, hi } => {
                let s = a[(0, 0)];
                off_diagonal_zero()
                    && (0..self.dim).all(|r| (a[(r, r)] - s).abs() <= tol)
                    && s >= lo - tol
                    && s <= hi + tol
            }
            UncertaintyKind::DiagonalBox(bounds) => {
                off_diagonal_zero()
                    && bounds
                        .iter()
                        .enumerate()
                        .all(|(r, &(lo, hi))| a[(r, r)] >= lo - tol && a[(r, r)] <= hi + tol)
            }
        }
    }

    /// `A A^T` for every extreme matrix, in enumeration order.
    pub fn covariances(&self) -> Vec<Matrix> {
        self.enumerate_extremes()
            .iter()
            .map(|a| a * a.transpose())
            .collect()
    }

    /// Largest spectral norm over the extreme matrices.
    pub fn sigma_max(&self) -> f64 {
        self.lambda_max().sqrt()
    }

    /// Largest eigenvalue of `A A^T` over the extreme matrices.
    pub fn lambda_max(&self) -> f64 {
        self.covariances()
            .into_iter()
            .map(|c| {
                c.symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max)
    }

    /// The finite set `{A O : A extreme}`.
    pub fn right_multiplied(&self, o: &Matrix) -> Result<Self> {
        if o.nrows() != self.dim || o.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "rotation matrix",
                expected: self.dim,
                found: o.nrows(),
            });
        }
        Self::finite(self.enumerate_extremes().iter().map(|a| a * o).collect())
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
        return Err(Error::InvalidUncertainty(format!(
            "interval [{lo}, {hi}] must satisfy 0 < lo <= hi"
        )));
    }
    Ok(())
}

fn endpoints(lo: f64, hi: f64) -> Vec<f64> {
    if lo == hi {
        vec![lo]
    } else {
        vec![lo, hi]
    }
}
