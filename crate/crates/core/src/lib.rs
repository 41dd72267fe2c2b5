//! Parameter estimation for systems of ODEs by derivative matching.
//!
//! Given samples `(t_d, x_d)` of a system `dx/dt = F(t, x, a)`, the unknown
//! parameters `a` are found by driving the mismatch between finite-difference
//! derivative estimates of the data and the model right-hand side to zero:
//!
//! ```text
//! E_(d,j)(a) = f_j(t_d, x_d, a) - x'_j(t_d)
//! ```
//!
//! The stacked residual and its parameter Jacobian are solved with
//! Newton-Raphson (Gauss-Newton form), gradient descent with an explicit
//! step-size rule, and stochastic variants of both that draw a random subset
//! of the ODE components every iteration. A box-constrained trajectory
//! least-squares fit is provided as a comparison baseline, together with the
//! usual error metrics (bias, MAPE, MAE, RMSE, R²).
//!
//! Module map:
//!
//! * [`series`] - time series storage, IO, and derivative estimators
//! * [`model`] - the [`OdeModel`](model::OdeModel) trait and preset systems
//! * [`residual`] - residual/Jacobian assembly and equation subset sampling
//! * [`solver`] - NR, SNR, GD and SGD iteration loops
//! * [`sim`] - RK4 integration and synthetic dataset generation
//! * [`metrics`] - error metrics and report tables
//! * [`baseline`] - projected Levenberg-Marquardt trajectory fit

pub mod baseline;
pub mod error;
pub mod metrics;
pub mod model;
pub mod residual;
pub mod series;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use model::{OdeModel, ParameterVector};
pub use series::{DerivativeEstimate, DerivativeMethod, TimeSeries};
pub use solver::{FitResult, Method, SolverConfig, Termination};
