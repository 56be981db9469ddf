//! Terminal payoffs with an explicit bound on the computational domain.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative slack for `value <= limit` checks on solver output. Both solvers
/// form convex combinations, which can round one ulp past a plateau.
pub const ROUNDING_RTOL: f64 = 1e-12;

/// `value <= limit` up to [`ROUNDING_RTOL`].
pub fn within(value: f64, limit: f64) -> bool {
    value <= limit + ROUNDING_RTOL * limit.abs().max(1.0)
}

/// Values on a tensor grid, interpolated piecewise-multilinearly and
/// extended by the boundary value outside the table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    axes: Vec<Vec<f64>>,
    /// Row-major, last axis fastest.
    values: Vec<f64>,
}

impl Table {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidPayoff("table needs at least one axis".into()));
        }
        for axis in &axes {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidPayoff(
                    "table axes must be nonempty and strictly increasing".into(),
                ));
            }
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::InvalidPayoff(format!(
                "table has {} values, axes require {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPayoff("table values must be finite".into()));
        }
        Ok(Self { axes, values })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// The same table with every value negated.
    pub fn negated(&self) -> Self {
        Self {
            axes: self.axes.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.axes.len();
        // Per axis: lower index and weight of the upper neighbour.
        let mut lower = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for r in 0..d {
            let axis = &self.axes[r];
            let v = x[r];
            if axis.len() == 1 || v <= axis[0] {
                lower[r] = 0;
                frac[r] = 0.0;
            } else if v >= axis[axis.len() - 1] {
                lower[r] = axis.len() - 2;
                frac[r] = 1.0;
            } else {
                let i = axis.partition_point(|&a| a <= v) - 1;
                lower[r] = i;
                frac[r] = (v - axis[i]) / (axis[i + 1] - axis[i]);
            }
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0;
            for r in 0..d {
                let up = corner >> r & 1 == 1;
                let len = self.axes[r].len();
                let idx = if up { (lower[r] + 1).min(len - 1) } else { lower[r] };
                weight *= if up { frac[r] } else { 1.0 - frac[r] };
                flat = flat * len + idx;
            }
            if weight != 0.0 {
                total += weight * self.values[flat];
            }
        }
        total
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffKind {
    /// `cos(sum_r x_r)`
    Cosine,
    /// `|x|^2`
    Quadratic,
    /// `-|x|^2`
    NegQuadratic,
    /// `exp(-|x|^2)`
    GaussianBump,
    /// `x_0` clamped to `[-clip, clip]`
    ClippedLinear { clip: f64 },
    Constant { value: f64 },
    Tabulated(Table),
}

/// Terminal function `f` together with its bound `M` on the domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Payoff {
    kind: PayoffKind,
    dim: usize,
    bound: f64,
    lipschitz: Option<f64>,
    /// Per-axis half-width of the box the bound refers to.
    domain_half_width: f64,
}

impl Payoff {
    /// Builds `f` on the box `[-half_width, half_width]^dim`.
    ///
    /// Unbounded kinds get `M = max |f|` over that box.
    pub fn new(kind: PayoffKind, dim: usize, half_width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPayoff("dimension must be positive".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidPayoff(format!(
                "domain half-width must be positive, got {half_width}"
            )));
        }
        let d = dim as f64;
        let r2 = d * half_width * half_width;
        let (bound, lipschitz) = match &kind {
            PayoffKind::Cosine => (1.0, Some(d.sqrt())),
            PayoffKind::Quadratic | PayoffKind::NegQuadratic => {
                (r2, Some(2.0 * half_width * d.sqrt()))
            }
            PayoffKind::GaussianBump => (1.0, Some((2.0 / std::f64::consts::E).sqrt())),
            PayoffKind::ClippedLinear { clip } => {
                if !(clip.is_finite() && *clip > 0.0) {
                    return Err(Error::InvalidPayoff("clip must be positive".into()));
                }
                (*clip, Some(1.0))
            }
            PayoffKind::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidPayoff("constant must be finite".into()));
                }
                (value.abs(), Some(0.0))
            }
            PayoffKind::Tabulated(table) => {
                if table.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "payoff table",
                        expected: dim,
                        found: table.dim(),
                    });
                }
                (table.max_abs(), None)
            }
        };
        Ok(Self {
            kind,
            dim,
            bound,
            lipschitz,
            domain_half_width: half_width,
        })
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `M` with `|f| <= M` on the domain box.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn domain_half_width(&self) -> f64 {
        self.domain_half_width
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PayoffKind::Cosine => x.iter().sum::<f64>().cos(),
            PayoffKind::Quadratic => x.iter().map(|v| v * v).sum(),
            PayoffKind::NegQuadratic => -x.iter().map(|v| v * v).sum::<f64>(),
            PayoffKind::GaussianBump => (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
            PayoffKind::ClippedLinear { clip } => x[0].clamp(-clip, *clip),
            PayoffKind::Constant { value } => *value,
            PayoffKind::Tabulated(table) => table.eval(x),
        }
    }

    /// Largest `|f(x)| - M` over `samples` seeded points of the domain box
    /// plus its corners; positive means the bound is violated.
    pub fn bound_violation(&self, samples: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = self.domain_half_width;
        let mut worst = f64::NEG_INFINITY;
        let mut x = vec![0.0; self.dim];
        let corners = if self.dim <= 10 { 1usize << self.dim } else { 0 };
        for c in 0..corners {
            for (k, v) in x.iter_mut().enumerate() {
                *v = if c >> k & 1 == 1 { r } else { -r };
            }
            worst = worst.max(self.eval(&x).abs() - self.bound);
        }
        for _ in 0..samples {
            for v in x.iter_mut() {
                *v = rng.random_range(-r..=r);
            }
            worst = worst.max(self.eval(&x).abs() - self.bound);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_evaluate() {
        let cos = Payoff::new(PayoffKind::Cosine, 2, 5.0).unwrap();
        assert!((cos.eval(&[0.5, 0.25]) - 0.75_f64.cos()).abs() < 1e-15);
        let q = Payoff::new(PayoffKind::Quadratic, 1, 12.0).unwrap();
        assert_eq!(q.eval(&[3.0]), 9.0);
        assert_eq!(q.bound(), 144.0);
        let nq = Payoff::new(PayoffKind::NegQuadratic, 2, 2.0).unwrap();
        assert_eq!(nq.eval(&[1.0, 1.0]), -2.0);
        assert_eq!(nq.bound(), 8.0);
        let clip = Payoff::new(PayoffKind::ClippedLinear { clip: 3.0 }, 2, 10.0).unwrap();
        assert_eq!(clip.eval(&[5.0, 0.0]), 3.0);
        assert_eq!(clip.eval(&[-1.5, 9.0]), -1.5);
    }

    #[test]
    fn bounds_hold_on_domain() {
        for kind in [
            PayoffKind::Cosine,
            PayoffKind::Quadratic,
            PayoffKind::NegQuadratic,
            PayoffKind::GaussianBump,
            PayoffKind::ClippedLinear { clip: 1.0 },
            PayoffKind::Constant { value: -2.0 },
        ] {
            let p = Payoff::new(kind, 2, 6.0).unwrap();
            assert!(p.bound_violation(2_000, 1) <= 0.0);
        }
    }

    #[test]
    fn table_interpolates_and_extends_constantly() {
        let table = Table::new(
            vec![vec![0.0, 1.0], vec![0.0, 2.0]],
            vec![0.0, 2.0, 1.0, 5.0],
        )
        .unwrap();
        // f(x, y) on corners: (0,0)=0 (0,2)=2 (1,0)=1 (1,2)=5
        assert_eq!(table.eval(&[0.0, 0.0]), 0.0);
        assert_eq!(table.eval(&[1.0, 2.0]), 5.0);
        assert!((table.eval(&[0.5, 1.0]) - 2.0).abs() < 1e-15);
        assert_eq!(table.eval(&[-3.0, -3.0]), 0.0);
        assert_eq!(table.eval(&[9.0, 9.0]), 5.0);
        assert!((table.eval(&[9.0, 1.0]) - 3.0).abs() < 1e-15);
        let p = Payoff::new(PayoffKind::Tabulated(table), 2, 4.0).unwrap();
        assert_eq!(p.bound(), 5.0);
        assert!(p.bound_violation(1000, 2) <= 0.0);
    }

    #[test]
    fn table_rejects_bad_shapes() {
        assert!(Table::new(vec![vec![0.0, 0.0]], vec![1.0, 2.0]).is_err());
        assert!(Table::new(vec![vec![0.0, 1.0]], vec![1.0]).is_err());
        let t = Table::new(vec![vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap();
        assert!(Payoff::new(PayoffKind::Tabulated(t), 2, 1.0).is_err());
    }
}
