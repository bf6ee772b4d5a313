//! Causality-aware confounding adjustment for anticausal prediction.
//!
//! When the outcome `Y` causes the features `X` and a confounder `C` affects
//! both, a predictor trained on `X` picks up the `C`–`Y` association. Shifts
//! in `P(C, Y)` between training and deployment (selection bias) then move
//! its performance around. Regressing each feature on `(Y, C)` in the
//! training data and subtracting the fitted confounder contribution from
//! *both* training and test features removes that dependence: the expected
//! MSE of a linear predictor on the adjusted test features depends on
//! `Var(Y)` only.
//!
//! Modules:
//!
//! * [`scm`] — linear structural models and moment-targeted simulation.
//! * [`selection`] — selection by (C, Y) cell, matching, inverse-propensity
//!   oversampling, rebalancing toward a target table.
//! * [`adjust`] — the adjustment itself and the strategy roster.
//! * [`models`] — least squares (QR) and logistic regression (IRLS).
//! * [`metrics`] — MSE, AUROC, stability error, closed-form expected MSE.
//! * [`harness`] — replicated stability experiments.
//!
//! ```
//! use deconfound::adjust::{fit_adjustment, transform};
//! use deconfound::rng::stream;
//! use deconfound::scm::{draw_params, simulate_regression, EnvironmentMoments};
//! use deconfound::Task;
//!
//! let train_env = EnvironmentMoments::regression(1.0, 0.8, 1.0);
//! let test_env = EnvironmentMoments::regression(3.0, -0.8, 1.0);
//! let mut rng = stream(7);
//! let params = draw_params(Task::Regression, 5, 1, &[train_env, test_env], &mut rng)?;
//! let train = simulate_regression(&params, &train_env, 1000, &mut rng)?;
//! let test = simulate_regression(&params, &test_env, 1000, &mut rng)?;
//!
//! let model = fit_adjustment(&train)?;
//! let test_adjusted = transform(test.x.view(), test.c.view(), &model)?;
//! assert_eq!(test_adjusted.dim(), (1000, 5));
//! # Ok::<(), deconfound::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjust;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod report;
pub mod rng;
pub mod scm;
pub mod selection;

pub use adjust::{AdjustmentModel, Strategy};
pub use dataset::{Dataset, Task};
pub use error::{Cell, Error, Result};
pub use harness::{builtin_config, run_experiment, BuiltinName, ExperimentConfig, ResultRow, Summary};
pub use scm::{EnvironmentMoments, ScmParams};
pub use selection::CellProbs;

/// The guide in `book/` is compiled here so its listings run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/structural-model.md")]
    pub mod structural_model {}
    #[doc = include_str!("../../../book/src/selection.md")]
    pub mod selection {}
    #[doc = include_str!("../../../book/src/adjustment.md")]
    pub mod adjustment {}
    #[doc = include_str!("../../../book/src/expected-mse.md")]
    pub mod expected_mse {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
