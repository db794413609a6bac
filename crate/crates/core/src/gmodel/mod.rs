//! Conditional label models `g_j(x, z; theta) ~ P(y = j | x, z)`.
//!
//! The augmented estimator only needs two things from a label model: the
//! probability vector over `{0..k}` for a task with a known AI label, and the
//! Jacobian of that vector with respect to the model parameters (for the
//! sandwich covariance). [`LabelModel`] captures exactly that, and [`GModel`]
//! implements it for the two shipped families.

mod mlp;
mod parametric;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::choice::{ChoiceTask, Dataset, DatasetKind, FitOptions};
use crate::error::{Error, Result};

pub use mlp::{train_mlp, MlpGParams, MlpTrainOptions, MlpTraining, HIDDEN_LAYERS};
pub use parametric::ParametricGParams;

/// Anything that maps a task with an AI label to a probability vector over
/// `{0..k}`, differentiably in its parameters.
pub trait LabelModel: Sync {
    /// `(g_0, ..., g_k)` for the task's AI label.
    fn probs(&self, task: &ChoiceTask) -> Result<DVector<f64>>;

    /// Number of free parameters `q`.
    fn num_params(&self) -> usize;

    /// `(k + 1) x q` matrix whose row `j` is the gradient of `g_j` in the parameters.
    fn jacobian(&self, task: &ChoiceTask) -> Result<DMatrix<f64>>;
}

/// A fitted conditional label model.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum GModel {
    Parametric(ParametricGParams),
    Mlp(MlpGParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GVariant {
    Parametric,
    Mlp,
}

impl std::str::FromStr for GVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parametric" => Ok(Self::Parametric),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::invalid(format!("unknown g variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GFitOptions {
    /// Newton settings for the parametric family.
    pub newton: FitOptions,
    pub mlp: MlpTrainOptions,
}

pub(crate) fn ai_label(task: &ChoiceTask) -> Result<usize> {
    task.ai_label()
        .ok_or_else(|| Error::MissingLabel("label model needs the task's AI label".into()))
}

impl GModel {
    pub fn g_probs(&self, task: &ChoiceTask) -> Result<DVector<f64>> {
        match self {
            GModel::Parametric(p) => p.probs(task),
            GModel::Mlp(m) => m.probs(task),
        }
    }

    /// Gradient of `g_j` with respect to all parameters.
    pub fn g_grad_theta(&self, task: &ChoiceTask, j: usize) -> Result<DVector<f64>> {
        if j > task.k() {
            return Err(Error::invalid(format!("label {j} outside 0..={}", task.k())));
        }
        Ok(self.jacobian(task)?.row(j).transpose())
    }

    /// Flattened parameter vector (`theta_check` then `eta` for the parametric family).
    pub fn params(&self) -> DVector<f64> {
        match self {
            GModel::Parametric(p) => p.to_vector(),
            GModel::Mlp(m) => DVector::from_column_slice(m.theta()),
        }
    }

    /// Same family and shape with a new parameter vector.
    pub fn with_params(&self, theta: &DVector<f64>) -> Result<GModel> {
        if theta.len() != self.num_params() {
            return Err(Error::dims(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        Ok(match self {
            GModel::Parametric(_) => GModel::Parametric(ParametricGParams::from_vector(theta)?),
            GModel::Mlp(m) => GModel::Mlp(MlpGParams::from_theta(m.k(), m.d(), theta.as_slice().to_vec())?),
        })
    }
}

impl LabelModel for GModel {
    fn probs(&self, task: &ChoiceTask) -> Result<DVector<f64>> {
        self.g_probs(task)
    }

    fn num_params(&self) -> usize {
        match self {
            GModel::Parametric(p) => p.num_params(),
            GModel::Mlp(m) => m.num_params(),
        }
    }

    fn jacobian(&self, task: &ChoiceTask) -> Result<DMatrix<f64>> {
        match self {
            GModel::Parametric(p) => p.jacobian(task),
            GModel::Mlp(m) => m.jacobian(task),
        }
    }
}

/// Step 1 of the augmented estimator: learn `P(y | x, z)` on primary data.
pub fn fit_g(primary: &Dataset, variant: GVariant, options: &GFitOptions) -> Result<GModel> {
    if primary.kind() != DatasetKind::Primary {
        return Err(Error::invalid("label model must be fitted on primary data"));
    }
    if primary.is_empty() {
        return Err(Error::invalid("primary dataset is empty"));
    }
    let q = match variant {
        GVariant::Parametric => primary.d() + 1,
        GVariant::Mlp => MlpGParams::param_count(primary.k(), primary.d()),
    };
    if primary.len() < q {
        log::warn!(
            "fitting a {q}-parameter label model on only {} primary tasks",
            primary.len()
        );
    }
    match variant {
        GVariant::Parametric => Ok(GModel::Parametric(parametric::fit(primary, &options.newton)?)),
        GVariant::Mlp => Ok(GModel::Mlp(train_mlp(primary, &options.mlp)?.params)),
    }
}
