//! Sparse generalized additive models in high dimensions.
//!
//! Each feature is expanded in a centered B-spline basis. A group lasso
//! screens features down to at most `floor(n / m)` groups, an adaptive group
//! lasso re-fits the survivors with weights `1 / ||beta_j||`, and the
//! generalized information criterion picks the final penalty level. Both
//! stages are solved by groupwise majorization descent with an optional
//! P-spline difference penalty.
//!
//! ```no_run
//! use hdgam::{fit_model, Family, ModelConfig};
//! # let (x, y): (nalgebra::DMatrix<f64>, Vec<f64>) = unimplemented!();
//! let (model, result) = fit_model(&x, &y, Family::Bernoulli, &ModelConfig::default())?;
//! println!("selected {:?} with GIC {}", model.coef.support(), result.gic);
//! # Ok::<(), hdgam::GamError>(())
//! ```

// `!(x > y)` style comparisons are used on purpose so NaN lands on the error
// branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod family;
pub mod io;
pub mod selection;
pub mod sim;
pub mod solver;
pub mod spline;
pub mod two_step;

pub use design::{fit_basis_specs, ExpandedDesign};
pub use error::{GamError, Result};
pub use family::Family;
pub use selection::{a_n, gic, FitPath, PathEntry};
pub use sim::{MetricRow, SimScenario, TableResult};
pub use solver::{
    fit_penalized, group_update, kkt_residual, lambda_max, CoefBlocks, FitResult, PenaltyConfig,
    SolverConfig,
};
pub use spline::{BasisSpec, DiffPenaltyMatrix};
pub use two_step::{
    fit_model, fit_two_step, theoretical_lambda, GamModel, ModelConfig, PathConfig, TwoStepResult,
};

pub use nalgebra::DMatrix;
