//! Worst-case limits of normalized sums under uncertain linear transformations.
//!
//! The limit `lim_n sup_A E f(sum_j A_j xi_{j+1} / sqrt n)` is computed two
//! independent ways:
//!
//! * [`dp`]: backward dynamic programming over the discrete controlled walk,
//!   with feedback-policy extraction;
//! * [`pde`]: an explicit monotone finite-difference solver for the G-heat
//!   equation `-v_t - G(v_xx) = 0`, `v(1, .) = f`.
//!
//! [`mc`] simulates the walk forward under extracted or fixed strategies,
//! [`consistency`] measures the scheme's consistency residual against
//! smooth test functions, and [`harness`] runs the convergence and
//! invariance studies.

pub mod config;
pub mod consistency;
pub mod dp;
pub mod error;
pub mod g_operator;
pub mod grid;
pub mod harness;
pub mod io;
pub mod mc;
pub mod model;
pub mod pde;

pub use error::{Error, Result};

/// Dense real matrix used for the uncertainty set.
pub type Matrix = nalgebra::DMatrix<f64>;

pub use dp::{dp_solve, dp_solve_with, dp_step, extract_policy_matrix, DpOptions, DpSolution, FeedbackPolicy, ValueGrid};
pub use g_operator::{g_argmax, g_value, GOperator, SymMatrix};
pub use grid::SpatialGrid;
pub use mc::{simulate, McEstimate, SimConfig, Strategy};
pub use model::{validate, NoiseModel, Payoff, PayoffKind, ProblemSpec, UncertaintySet};
pub use pde::{cfl_max_dt, pde_policy, pde_solve, PdeConfig, PdeSolution};
