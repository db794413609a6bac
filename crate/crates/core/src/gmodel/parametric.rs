use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::ai_label;
use crate::choice::{fit_mnl, softmax_in_place, ChoiceTask, Dataset, FitOptions, SoftTarget, TargetedTask};
use crate::error::{Error, Result};

/// MNL in the attributes plus a bonus `eta` on the alternative the AI picked:
///
/// ```text
/// g_j(x, z) = exp(theta . x_j + eta * 1{z = j}) / (1 + sum_l exp(theta . x_l + eta * 1{z = l}))
/// ```
///
/// `z = 0` (outside option) adds the bonus to no alternative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParametricGParams {
    pub theta_check: Vec<f64>,
    pub eta: f64,
}

impl ParametricGParams {
    pub fn new(theta_check: Vec<f64>, eta: f64) -> Result<Self> {
        if theta_check.is_empty() {
            return Err(Error::invalid("theta_check is empty"));
        }
        if theta_check.iter().any(|v| !v.is_finite()) || !eta.is_finite() {
            return Err(Error::NonFinite("parametric label model parameters".into()));
        }
        Ok(Self { theta_check, eta })
    }

    pub fn from_vector(theta: &DVector<f64>) -> Result<Self> {
        let q = theta.len();
        if q < 2 {
            return Err(Error::dims("parametric label model needs d + 1 >= 2 parameters"));
        }
        Self::new(theta.rows(0, q - 1).iter().copied().collect(), theta[q - 1])
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.theta_check.clone();
        v.push(self.eta);
        DVector::from_vec(v)
    }

    pub fn num_params(&self) -> usize {
        self.theta_check.len() + 1
    }

    fn check(&self, task: &ChoiceTask) -> Result<usize> {
        if task.d() != self.theta_check.len() {
            return Err(Error::dims(format!(
                "task has d = {}, label model expects {}",
                task.d(),
                self.theta_check.len()
            )));
        }
        ai_label(task)
    }

    fn probs_raw(&self, task: &ChoiceTask, z: usize) -> Vec<f64> {
        let mut u = vec![0.0; task.k() + 1];
        task.utilities_into(&self.theta_check, &mut u);
        if z > 0 {
            u[z] += self.eta;
        }
        softmax_in_place(&mut u);
        u
    }

    pub fn probs(&self, task: &ChoiceTask) -> Result<DVector<f64>> {
        let z = self.check(task)?;
        Ok(DVector::from_vec(self.probs_raw(task, z)))
    }

    /// Row `j`: `g_j (xt_j - sum_l g_l xt_l)` with `xt_j = (x_j, 1{z = j})` and `xt_0 = 0`.
    pub fn jacobian(&self, task: &ChoiceTask) -> Result<DMatrix<f64>> {
        let z = self.check(task)?;
        let g = self.probs_raw(task, z);
        let (k, d) = (task.k(), task.d());
        let q = d + 1;
        let aug = |j: usize, c: usize| -> f64 {
            if j == 0 {
                0.0
            } else if c < d {
                task.x(j, c)
            } else if z == j {
                1.0
            } else {
                0.0
            }
        };
        let mean: Vec<f64> = (0..q).map(|c| (1..=k).map(|l| g[l] * aug(l, c)).sum()).collect();
        Ok(DMatrix::from_fn(k + 1, q, |j, c| g[j] * (aug(j, c) - mean[c])))
    }
}

/// Augmented task `(x_j, 1{z = j})` carrying the human label.
fn augment(task: &ChoiceTask) -> Result<ChoiceTask> {
    let z = ai_label(task)?;
    let (k, d) = (task.k(), task.d());
    let feats = DMatrix::from_fn(k, d + 1, |r, c| {
        if c < d {
            task.features()[(r, c)]
        } else if z == r + 1 {
            1.0
        } else {
            0.0
        }
    });
    ChoiceTask::new(feats, task.human_label(), None)
}

/// Maximum likelihood: the family is an MNL on the augmented attributes, so the
/// shared Newton fitter applies directly.
pub(super) fn fit(primary: &Dataset, options: &FitOptions) -> Result<ParametricGParams> {
    let augmented: Vec<ChoiceTask> = primary.tasks().iter().map(augment).collect::<Result<_>>()?;
    let samples: Vec<TargetedTask> = augmented
        .iter()
        .map(|t| {
            let y = t
                .human_label()
                .ok_or_else(|| Error::MissingLabel("primary task without human label".into()))?;
            Ok(TargetedTask::new(t, SoftTarget::one_hot(t.k(), y)?))
        })
        .collect::<Result<_>>()?;
    let beta = fit_mnl(&samples, options)?;
    ParametricGParams::from_vector(&beta.to_vector())
}
