//! Stiff ODE integration with variable-stepsize BDF methods and time filters.
//!
//! The core idea: solve a single implicit BDF3 stage per step, then obtain
//! candidate solutions of orders two, three and four by adding cheap linear
//! combinations of stored solution values (time filters). The differences
//! between candidates are embedded error estimates, which drive the MOOSE234
//! variable-step, variable-order controller at the cost of adaptive BDF3.
//!
//! Module map:
//! - [`coeffs`]: backward divided differences and all stepsize-dependent
//!   coefficients (BDF weights, filter scalars, stepsize-ratio forms).
//! - [`newton`]: the damped Newton stage solver with dense LU.
//! - [`stepper`]: one embedded step (BDF3 + BDF3-Stab + FBDF4 + estimators)
//!   and standalone filtered BDF stepping of any order.
//! - [`controller`]: the adaptive order/stepsize loop.
//! - [`fixed`]: constant-stepsize drivers for convergence studies.
//! - [`gstab`]: numerical G-stability certification of the BDF3-Stab filter
//!   and linear stability scans.
//! - [`problems`]: built-in test problems.

// Validation sites use `!(x > 0.0)` so that NaN counts as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod controller;
mod error;
pub mod exec;
pub mod fixed;
pub mod gstab;
pub mod history;
pub mod newton;
pub mod problems;
pub mod stepper;

pub use error::Error;
pub use history::TimeHistory;
pub use newton::{NewtonConfig, NewtonDiagnostics, ProblemDefinition};

/// State vectors are dense column vectors of `f64`.
pub type State = nalgebra::DVector<f64>;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
