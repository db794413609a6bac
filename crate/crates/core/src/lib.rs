//! AI-augmented estimation for choice-based conjoint studies.
//!
//! A conjoint study asks respondents to pick one of `k` product profiles (or
//! nothing). Besides a small *primary* sample where both the human choice `y`
//! and an AI-generated choice `z` are observed, a large *auxiliary* sample
//! carries only `z`. The augmented estimator first learns `P(y | x, z)` on the
//! primary sample and then fits the multinomial logit to the auxiliary sample
//! using those conditional probabilities as soft targets.
//!
//! Modules:
//!
//! - [`choice`]: MNL probabilities, soft log-likelihood, score, curvature and
//!   the damped-Newton fitter.
//! - [`gmodel`]: conditional label models (parametric MNL-with-z and a small MLP).
//! - [`estimators`]: primary-only, auxiliary-only, naive pooled and augmented fits.
//! - [`inference`]: plug-in sandwich covariances, variance dominance and the
//!   population residual decomposition.
//! - [`simlab`]: synthetic worlds, oracles, the eta sweep and Monte Carlo harness.
//! - [`metrics`]: MAPE, MSE and data-savings computations.
//! - [`io`]: CSV dataset exchange and deterministic report emission.

pub mod choice;
pub mod error;
pub mod estimators;
pub mod gmodel;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod simlab;

pub use choice::{
    curvature_matrix, fit_mnl, mnl_probs, soft_loglik, soft_score, ChoiceTask, Dataset,
    DatasetKind, FitOptions, MnlParams, SoftTarget, TargetedTask,
};
pub use error::{Error, ErrorClass, Result};
pub use estimators::{fit_aae, fit_baseline, AaeOptions, BaselineMode, EstimatorKind, EstimatorResult};
pub use gmodel::{fit_g, GFitOptions, GModel, GVariant, LabelModel, MlpGParams, ParametricGParams};
pub use inference::{dominance_check, estimate_asymptotics, AsymptoticReport, DominanceCheck};
pub use metrics::{data_savings, mape, mse, ErrorCurve, MetricsReport, SavingsResult};
pub use simlab::{
    eta_sweep, example1_oracle, monte_carlo_benchmark, oracle_beta_star, sample_dataset,
    SimulationConfig, WorldSpec,
};
