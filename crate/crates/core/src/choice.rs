//! Multinomial logit with an outside option.
//!
//! Every choice task offers `k` alternatives described by `d` attributes plus
//! an outside option (index 0) whose utility is fixed at zero, so
//!
//! ```text
//! sigma_j(x; beta) = exp(x_j . beta) / (1 + sum_l exp(x_l . beta)),   j = 1..k
//! sigma_0(x; beta) = 1 / (1 + sum_l exp(x_l . beta))
//! ```
//!
//! Fitting works on *soft targets*: each task carries a probability vector
//! over `{0..k}` and the objective is the weighted mean of
//! `sum_j alpha_j log sigma_j`. A hard label is the one-hot target, so the same
//! fitter produces ordinary maximum likelihood estimates as well as the
//! second stage of the augmented estimator.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// One respondent decision: a `k x d` attribute matrix plus optional labels.
///
/// Row `j - 1` holds the attributes of alternative `j`. Labels live in
/// `{0..k}` with 0 the outside option.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceTask {
    features: DMatrix<f64>,
    human_label: Option<usize>,
    ai_label: Option<usize>,
}

impl ChoiceTask {
    pub fn new(
        features: DMatrix<f64>,
        human_label: Option<usize>,
        ai_label: Option<usize>,
    ) -> Result<Self> {
        let (k, d) = features.shape();
        if k == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "choice task needs k >= 1 and d >= 1, got {k}x{d}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("task features".into()));
        }
        for (name, label) in [("human", human_label), ("ai", ai_label)] {
            if let Some(l) = label {
                if l > k {
                    return Err(Error::invalid(format!(
                        "{name} label {l} outside 0..={k}"
                    )));
                }
            }
        }
        Ok(Self {
            features,
            human_label,
            ai_label,
        })
    }

    /// Builds a task from row-major attribute data.
    pub fn from_rows(
        k: usize,
        d: usize,
        rows: &[f64],
        human_label: Option<usize>,
        ai_label: Option<usize>,
    ) -> Result<Self> {
        if rows.len() != k * d {
            return Err(Error::dims(format!(
                "expected {} feature values for a {k}x{d} task, got {}",
                k * d,
                rows.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(k, d, rows), human_label, ai_label)
    }

    pub fn k(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Attribute `c` of alternative `j` (1-based, so `j` in `1..=k`).
    #[inline]
    pub fn x(&self, j: usize, c: usize) -> f64 {
        self.features[(j - 1, c)]
    }

    pub fn human_label(&self) -> Option<usize> {
        self.human_label
    }

    pub fn ai_label(&self) -> Option<usize> {
        self.ai_label
    }

    pub fn with_labels(&self, human_label: Option<usize>, ai_label: Option<usize>) -> Result<Self> {
        Self::new(self.features.clone(), human_label, ai_label)
    }

    /// Utilities `(0, x_1 . beta, ..., x_k . beta)` written into `out`.
    #[inline]
    pub(crate) fn utilities_into(&self, beta: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        for j in 0..self.k() {
            let mut u = 0.0;
            for (c, b) in beta.iter().enumerate() {
                u += self.features[(j, c)] * b;
            }
            out[j + 1] = u;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DatasetKind {
    /// Rows carry both the human label `y` and the AI label `z`.
    Primary,
    /// Rows carry only the AI label `z`.
    Auxiliary,
}

/// An ordered collection of tasks sharing `k` and `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    kind: DatasetKind,
    k: usize,
    d: usize,
    tasks: Vec<ChoiceTask>,
}

impl Dataset {
    /// Builds a non-empty dataset, taking `k` and `d` from the first task.
    pub fn new(kind: DatasetKind, tasks: Vec<ChoiceTask>) -> Result<Self> {
        let first = tasks
            .first()
            .ok_or_else(|| Error::invalid("dataset has no tasks; use Dataset::with_shape"))?;
        let (k, d) = (first.k(), first.d());
        Self::with_shape(kind, k, d, tasks)
    }

    /// Builds a dataset of known shape; may be empty.
    pub fn with_shape(kind: DatasetKind, k: usize, d: usize, tasks: Vec<ChoiceTask>) -> Result<Self> {
        for (i, t) in tasks.iter().enumerate() {
            if t.k() != k || t.d() != d {
                return Err(Error::dims(format!(
                    "task {i} is {}x{}, dataset is {k}x{d}",
                    t.k(),
                    t.d()
                )));
            }
            if t.ai_label.is_none() {
                return Err(Error::MissingLabel(format!("task {i} has no AI label")));
            }
            match kind {
                DatasetKind::Primary if t.human_label.is_none() => {
                    return Err(Error::MissingLabel(format!(
                        "primary task {i} has no human label"
                    )));
                }
                DatasetKind::Auxiliary if t.human_label.is_some() => {
                    return Err(Error::invalid(format!(
                        "auxiliary task {i} carries a human label"
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { kind, k, d, tasks })
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tasks(&self) -> &[ChoiceTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// One-hot targets from the human labels (primary data only).
    pub fn human_targets(&self) -> Result<Vec<TargetedTask<'_>>> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let y = t
                    .human_label
                    .ok_or_else(|| Error::MissingLabel(format!("task {i} has no human label")))?;
                Ok(TargetedTask::new(t, SoftTarget::one_hot(t.k(), y)?))
            })
            .collect()
    }

    /// One-hot targets from the AI labels.
    pub fn ai_targets(&self) -> Result<Vec<TargetedTask<'_>>> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let z = t
                    .ai_label
                    .ok_or_else(|| Error::MissingLabel(format!("task {i} has no AI label")))?;
                Ok(TargetedTask::new(t, SoftTarget::one_hot(t.k(), z)?))
            })
            .collect()
    }
}

/// Part-worth coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MnlParams(Vec<f64>);

impl MnlParams {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("coefficient vector is empty"));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("coefficients".into()));
        }
        Ok(Self(beta))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn max_abs_diff(&self, other: &MnlParams) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// A probability vector over `{0..k}` used as the target of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTarget(DVector<f64>);

const TARGET_SUM_TOL: f64 = 1e-12;

impl SoftTarget {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("soft target needs at least two entries"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("soft target weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > TARGET_SUM_TOL {
            return Err(Error::invalid(format!("soft target sums to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Point mass on alternative `label` out of `{0..k}`.
    pub fn one_hot(k: usize, label: usize) -> Result<Self> {
        if label > k {
            return Err(Error::invalid(format!("label {label} outside 0..={k}")));
        }
        let mut w = DVector::zeros(k + 1);
        w[label] = 1.0;
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        Self(DVector::from_element(k + 1, 1.0 / (k + 1) as f64))
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A task paired with its soft target and a non-negative sample weight.
#[derive(Debug, Clone)]
pub struct TargetedTask<'a> {
    pub task: &'a ChoiceTask,
    pub target: SoftTarget,
    pub weight: f64,
}

impl<'a> TargetedTask<'a> {
    pub fn new(task: &'a ChoiceTask, target: SoftTarget) -> Self {
        Self {
            task,
            target,
            weight: 1.0,
        }
    }

    pub fn weighted(task: &'a ChoiceTask, target: SoftTarget, weight: f64) -> Self {
        Self {
            task,
            target,
            weight,
        }
    }
}

fn check_params(task: &ChoiceTask, params: &MnlParams) -> Result<()> {
    if task.d() != params.dim() {
        return Err(Error::dims(format!(
            "task has d = {}, coefficients have {}",
            task.d(),
            params.dim()
        )));
    }
    if params.0.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("coefficients".into()));
    }
    Ok(())
}

fn check_target(task: &ChoiceTask, target: &SoftTarget) -> Result<()> {
    if target.len() != task.k() + 1 {
        return Err(Error::dims(format!(
            "target has {} entries, task has k + 1 = {}",
            target.len(),
            task.k() + 1
        )));
    }
    Ok(())
}

/// In-place softmax over `utils` (entry 0 is the outside option). Returns the
/// log normalizer `log sum_j exp(u_j)`. The maximum is subtracted first.
#[inline]
pub(crate) fn softmax_in_place(utils: &mut [f64]) -> f64 {
    let max = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for u in utils.iter_mut() {
        *u = (*u - max).exp();
        sum += *u;
    }
    for u in utils.iter_mut() {
        *u /= sum;
    }
    max + sum.ln()
}

/// Choice probabilities `(sigma_0, ..., sigma_k)`.
pub fn mnl_probs(task: &ChoiceTask, params: &MnlParams) -> Result<DVector<f64>> {
    check_params(task, params)?;
    let mut buf = vec![0.0; task.k() + 1];
    task.utilities_into(params.as_slice(), &mut buf);
    softmax_in_place(&mut buf);
    Ok(DVector::from_vec(buf))
}

/// Weighted mean of `sum_j alpha_j log sigma_j` over the targeted tasks.
pub fn soft_loglik(samples: &[TargetedTask<'_>], params: &MnlParams) -> Result<f64> {
    validate_samples(samples, params.dim())?;
    check_params(samples[0].task, params)?;
    let obj = Objective::new(samples, 0.0);
    Ok(obj.value(params.as_slice()))
}

/// Gradient of `sum_j alpha_j log sigma_j` for one task:
/// `sum_{j=1..k} (alpha_j - sigma_j) x_j`.
pub fn soft_score(task: &ChoiceTask, target: &SoftTarget, params: &MnlParams) -> Result<DVector<f64>> {
    check_params(task, params)?;
    check_target(task, target)?;
    let sigma = mnl_probs(task, params)?;
    let alpha = target.weights();
    let mut s = DVector::zeros(task.d());
    for j in 1..=task.k() {
        let coef = alpha[j] - sigma[j];
        for c in 0..task.d() {
            s[c] += coef * task.x(j, c);
        }
    }
    Ok(s)
}

/// `A(x; beta) = sum_j sigma_j x_j x_j^T - (sum_j sigma_j x_j)(sum_j sigma_j x_j)^T`,
/// the negative Hessian of the per-task soft log-likelihood. Symmetrized.
pub fn curvature_matrix(task: &ChoiceTask, params: &MnlParams) -> Result<DMatrix<f64>> {
    check_params(task, params)?;
    let sigma = mnl_probs(task, params)?;
    let d = task.d();
    let mut a = DMatrix::zeros(d, d);
    let mut mean = vec![0.0; d];
    accumulate_curvature(task, sigma.as_slice(), 1.0, &mut a, &mut mean);
    Ok(linalg::symmetrize(&a))
}

/// Adds `w * A(x; beta)` into `acc` given the probabilities `sigma`.
/// `scratch` must have length `d`.
#[inline]
pub(crate) fn accumulate_curvature(
    task: &ChoiceTask,
    sigma: &[f64],
    w: f64,
    acc: &mut DMatrix<f64>,
    scratch: &mut [f64],
) {
    let d = task.d();
    scratch.iter_mut().for_each(|v| *v = 0.0);
    for j in 1..=task.k() {
        let sj = sigma[j];
        for c in 0..d {
            scratch[c] += sj * task.x(j, c);
        }
    }
    for r in 0..d {
        for c in 0..=r {
            let mut v = 0.0;
            for j in 1..=task.k() {
                v += sigma[j] * task.x(j, r) * task.x(j, c);
            }
            v -= scratch[r] * scratch[c];
            acc[(r, c)] += w * v;
            if r != c {
                acc[(c, r)] += w * v;
            }
        }
    }
}

fn validate_samples(samples: &[TargetedTask<'_>], d: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("no tasks to evaluate"));
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if s.task.d() != d {
            return Err(Error::dims(format!(
                "task {i} has d = {}, expected {d}",
                s.task.d()
            )));
        }
        check_target(s.task, &s.target)?;
        if !s.weight.is_finite() || s.weight < 0.0 {
            return Err(Error::invalid(format!("task {i} has invalid weight {}", s.weight)));
        }
        total += s.weight;
    }
    if total <= 0.0 {
        return Err(Error::invalid("sample weights sum to zero"));
    }
    Ok(())
}

/// Options for [`fit_mnl`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stop once the gradient's infinity norm drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Abort with [`Error::Separation`] when any coefficient exceeds this in magnitude.
    pub divergence_cap: f64,
    /// On separation, refit with the penalty `ridge_lambda * |beta|^2`.
    pub ridge_fallback: bool,
    pub ridge_lambda: f64,
    /// Starting point; zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            divergence_cap: 1e3,
            ridge_fallback: false,
            ridge_lambda: 1e-6,
            initial: None,
        }
    }
}

/// Weighted soft-target objective with an optional ridge penalty.
struct Objective<'s, 'a> {
    samples: &'s [TargetedTask<'a>],
    total_weight: f64,
    ridge: f64,
    max_k: usize,
}

struct Derivatives {
    value: f64,
    gradient: DVector<f64>,
    /// Negative Hessian (mean curvature plus the ridge term).
    curvature: DMatrix<f64>,
}

impl<'s, 'a> Objective<'s, 'a> {
    fn new(samples: &'s [TargetedTask<'a>], ridge: f64) -> Self {
        Self {
            samples,
            total_weight: samples.iter().map(|s| s.weight).sum(),
            ridge,
            max_k: samples.iter().map(|s| s.task.k()).max().unwrap_or(1),
        }
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.max_k + 1];
        let mut acc = 0.0;
        for s in self.samples {
            if s.weight == 0.0 {
                continue;
            }
            let k = s.task.k();
            let u = &mut buf[..=k];
            s.task.utilities_into(beta, u);
            let alpha = s.target.weights();
            let mut dot = 0.0;
            let mut max = 0.0_f64;
            for j in 0..=k {
                dot += alpha[j] * u[j];
                max = max.max(u[j]);
            }
            let lse = max + u.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            acc += s.weight * (dot - lse);
        }
        acc / self.total_weight - self.ridge * beta.iter().map(|b| b * b).sum::<f64>()
    }

    fn derivatives(&self, beta: &[f64]) -> Derivatives {
        let d = beta.len();
        let mut buf = vec![0.0; self.max_k + 1];
        let mut scratch = vec![0.0; d];
        let mut value = 0.0;
        let mut gradient = DVector::zeros(d);
        let mut curvature = DMatrix::zeros(d, d);
        for s in self.samples {
            if s.weight == 0.0 {
                continue;
            }
            let k = s.task.k();
            let u = &mut buf[..=k];
            s.task.utilities_into(beta, u);
            let alpha = s.target.weights();
            let dot: f64 = (0..=k).map(|j| alpha[j] * u[j]).sum();
            let lse = softmax_in_place(u);
            value += s.weight * (dot - lse);
            for j in 1..=k {
                let coef = s.weight * (alpha[j] - u[j]);
                for c in 0..d {
                    gradient[c] += coef * s.task.x(j, c);
                }
            }
            accumulate_curvature(s.task, u, s.weight, &mut curvature, &mut scratch);
        }
        let w = self.total_weight;
        value /= w;
        gradient /= w;
        curvature /= w;
        if self.ridge > 0.0 {
            for c in 0..d {
                value -= self.ridge * beta[c] * beta[c];
                gradient[c] -= 2.0 * self.ridge * beta[c];
                curvature[(c, c)] += 2.0 * self.ridge;
            }
        }
        Derivatives {
            value,
            gradient,
            curvature,
        }
    }
}

/// Checks that the stacked attribute second-moment matrix has full rank.
fn check_identification(samples: &[TargetedTask<'_>], d: usize) -> Result<()> {
    let mut m = DMatrix::zeros(d, d);
    for s in samples.iter().filter(|s| s.weight > 0.0) {
        for j in 1..=s.task.k() {
            for r in 0..d {
                let xr = s.task.x(j, r);
                if xr == 0.0 {
                    continue;
                }
                for c in 0..d {
                    m[(r, c)] += s.weight * xr * s.task.x(j, c);
                }
            }
        }
    }
    let eigs = linalg::sorted_eigenvalues(&m);
    let max = eigs.last().copied().unwrap_or(0.0);
    let min = eigs.first().copied().unwrap_or(0.0);
    if max <= 0.0 || min <= 1e-10 * max {
        return Err(Error::RankDeficient(format!(
            "attribute second-moment matrix is rank deficient (eigenvalues {min:.3e} .. {max:.3e})"
        )));
    }
    Ok(())
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Maximizes the weighted soft log-likelihood by damped Newton with step halving.
pub fn fit_mnl(samples: &[TargetedTask<'_>], options: &FitOptions) -> Result<MnlParams> {
    let d = samples
        .first()
        .ok_or_else(|| Error::invalid("no tasks to fit"))?
        .task
        .d();
    validate_samples(samples, d)?;
    if let Some(init) = &options.initial {
        if init.len() != d || init.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial coefficients have wrong length or non-finite entries"));
        }
    }
    check_identification(samples, d)?;
    match newton(samples, options, 0.0) {
        Err(Error::Separation { .. }) if options.ridge_fallback => {
            log::warn!(
                "separation detected; refitting with ridge penalty {}",
                options.ridge_lambda
            );
            newton(samples, options, options.ridge_lambda)
        }
        other => other,
    }
}

fn newton(samples: &[TargetedTask<'_>], options: &FitOptions, ridge: f64) -> Result<MnlParams> {
    let obj = Objective::new(samples, ridge);
    let d = samples[0].task.d();
    let mut beta: Vec<f64> = options.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    let mut last_norm = f64::INFINITY;
    for _ in 0..options.max_iterations {
        let der = obj.derivatives(&beta);
        let gnorm = inf_norm(&der.gradient);
        last_norm = gnorm;
        let step = newton_step(&der)?;
        if gnorm < options.tolerance {
            // One more full step costs a single evaluation and removes the
            // remaining first-order error.
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            if obj.value(&cand) >= der.value - slack(der.value) {
                beta = cand;
            }
            return MnlParams::new(beta);
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let v = obj.value(&cand);
            if v.is_finite() && v >= der.value - slack(der.value) {
                beta = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let max_abs = beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if max_abs > options.divergence_cap {
            return Err(Error::Separation {
                max_abs,
                cap: options.divergence_cap,
            });
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iterations,
        gradient_norm: last_norm,
    })
}

#[inline]
fn slack(v: f64) -> f64 {
    1e-13 * (1.0 + v.abs())
}

fn newton_step(der: &Derivatives) -> Result<DVector<f64>> {
    match der.curvature.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&der.gradient)),
        None => Err(Error::RankDeficient(
            "curvature matrix is not positive definite at the current iterate".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task(k: usize, d: usize, rows: &[f64]) -> ChoiceTask {
        ChoiceTask::from_rows(k, d, rows, None, None).unwrap()
    }

    fn random_task(rng: &mut ChaCha8Rng, k: usize, d: usize) -> ChoiceTask {
        let rows: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        task(k, d, &rows)
    }

    fn random_target(rng: &mut ChaCha8Rng, k: usize) -> SoftTarget {
        let raw: Vec<f64> = (0..=k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        // Put the rounding residue on the last entry so the sum is 1 to the last bit.
        let partial: f64 = w[..k].iter().sum();
        w[k] = 1.0 - partial;
        SoftTarget::new(DVector::from_vec(w)).unwrap()
    }

    fn random_beta(rng: &mut ChaCha8Rng, d: usize) -> MnlParams {
        MnlParams::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        let den = a.iter().chain(b).fold(1e-3_f64, |m, x| m.max(x.abs()));
        num / den
    }

    #[test]
    fn zero_coefficients_give_uniform_probabilities() {
        let t = task(2, 3, &[0.3, -1.0, 2.0, 5.0, 0.1, -0.7]);
        let p = mnl_probs(&t, &MnlParams::zeros(3)).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let t1 = task(1, 1, &[1.0]);
        let p1 = mnl_probs(&t1, &MnlParams::zeros(1)).unwrap();
        assert!((p1[0] - 0.5).abs() < 1e-15 && (p1[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probabilities_by_direct_evaluation() {
        let t = task(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let beta = MnlParams::new(vec![2f64.ln(), 4f64.ln()]).unwrap();
        let p = mnl_probs(&t, &beta).unwrap();
        let want = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn mnl_probs_rejects_bad_input() {
        let t = task(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            mnl_probs(&t, &MnlParams::zeros(3)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(MnlParams::new(vec![f64::NAN]).is_err());
        assert!(ChoiceTask::from_rows(1, 1, &[f64::INFINITY], None, None).is_err());
        assert!(ChoiceTask::from_rows(1, 1, &[1.0], Some(2), None).is_err());
    }

    #[test]
    fn loglik_special_cases() {
        let t = task(2, 2, &[0.5, -1.0, 1.0, 2.0]);
        let beta = MnlParams::new(vec![0.3, -0.2]).unwrap();
        let p = mnl_probs(&t, &beta).unwrap();
        for j in 0..=2 {
            let s = [TargetedTask::new(&t, SoftTarget::one_hot(2, j).unwrap())];
            let ll = soft_loglik(&s, &beta).unwrap();
            assert!((ll - p[j].ln()).abs() < 1e-14);
        }
        let s = [TargetedTask::new(&t, SoftTarget::uniform(2))];
        let ll = soft_loglik(&s, &MnlParams::zeros(2)).unwrap();
        assert!((ll - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(soft_loglik(&[], &beta).is_err());
    }

    #[test]
    fn loglik_matches_independent_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tasks: Vec<ChoiceTask> = (0..3).map(|_| random_task(&mut rng, 3, 2)).collect();
        let targets: Vec<SoftTarget> = (0..3).map(|_| random_target(&mut rng, 3)).collect();
        let beta = random_beta(&mut rng, 2);
        let samples: Vec<TargetedTask> = tasks
            .iter()
            .zip(&targets)
            .map(|(t, a)| TargetedTask::new(t, a.clone()))
            .collect();
        // Oracle: plain exp/log without the max shift.
        let mut want = 0.0;
        for (t, a) in tasks.iter().zip(&targets) {
            let ex: Vec<f64> = (0..t.k())
                .map(|j| (t.features().row(j).dot(&beta.to_vector().transpose())).exp())
                .collect();
            let denom = 1.0 + ex.iter().sum::<f64>();
            want += a.weights()[0] * (1.0 / denom).ln();
            for j in 0..t.k() {
                want += a.weights()[j + 1] * (ex[j] / denom).ln();
            }
        }
        want /= 3.0;
        let got = soft_loglik(&samples, &beta).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn score_special_cases() {
        let t = task(1, 1, &[1.0]);
        let s = soft_score(&t, &SoftTarget::one_hot(1, 1).unwrap(), &MnlParams::zeros(1)).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_task(&mut rng, 3, 4);
        let beta = random_beta(&mut rng, 4);
        let p = mnl_probs(&t, &beta).unwrap();
        let s = soft_score(&t, &SoftTarget::new(p).unwrap(), &beta).unwrap();
        assert!(s.amax() < 1e-15);
    }

    #[test]
    fn binary_logit_curvature() {
        let t = task(1, 1, &[1.0]);
        let a = curvature_matrix(&t, &MnlParams::zeros(1)).unwrap();
        assert!((a[(0, 0)] - 0.25).abs() < 1e-15);
    }

    /// Central differences of the soft log-likelihood against the analytic score
    /// and curvature on 100 random instances.
    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let k = rng.random_range(1..=4);
            let d = rng.random_range(1..=4);
            let t = random_task(&mut rng, k, d);
            let target = random_target(&mut rng, k);
            let beta = random_beta(&mut rng, d);
            let f = |b: &[f64]| {
                let p = MnlParams::new(b.to_vec()).unwrap();
                soft_loglik(&[TargetedTask::new(&t, target.clone())], &p).unwrap()
            };
            let b0 = beta.as_slice().to_vec();
            let h = 1e-5;
            let fd: Vec<f64> = (0..d)
                .map(|c| {
                    let mut up = b0.clone();
                    let mut dn = b0.clone();
                    up[c] += h;
                    dn[c] -= h;
                    (f(&up) - f(&dn)) / (2.0 * h)
                })
                .collect();
            let score = soft_score(&t, &target, &beta).unwrap();
            assert!(rel_err(score.as_slice(), &fd) < 1e-6);

            let h2 = 1e-4;
            let mut fd_hess = vec![0.0; d * d];
            for r in 0..d {
                for c in 0..d {
                    let eval = |sr: f64, sc: f64| {
                        let mut b = b0.clone();
                        b[r] += sr;
                        b[c] += sc;
                        f(&b)
                    };
                    fd_hess[r * d + c] = (eval(h2, h2) - eval(h2, -h2) - eval(-h2, h2)
                        + eval(-h2, -h2))
                        / (4.0 * h2 * h2);
                }
            }
            let a = curvature_matrix(&t, &beta).unwrap();
            let neg_a: Vec<f64> = (0..d * d).map(|i| -a[(i / d, i % d)]).collect();
            assert!(rel_err(&neg_a, &fd_hess) < 1e-5, "{neg_a:?} vs {fd_hess:?}");
        }
    }

    #[test]
    fn curvature_is_psd_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let k = rng.random_range(1..=4);
            let d = rng.random_range(1..=4);
            let t = random_task(&mut rng, k, d);
            let beta = random_beta(&mut rng, d);
            let a = curvature_matrix(&t, &beta).unwrap();
            assert!(linalg::min_eigenvalue(&a) >= -1e-10);
            let sigma = mnl_probs(&t, &beta).unwrap();
            let mut u = DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-1.0..1.0)));
            u /= u.norm();
            let quad = (u.transpose() * &a * &u)[(0, 0)];
            let inner: f64 = (0..k).map(|j| t.features().row(j).transpose().dot(&u).powi(2)).sum();
            let lo = sigma[0] * sigma.rows(1, k).min() * inner;
            let hi = sigma.rows(1, k).max() * inner;
            assert!(quad >= lo - 1e-12 && quad <= hi + 1e-12, "{lo} <= {quad} <= {hi}");
            if k == 1 {
                // A single alternative makes the lower bound an equality.
                assert!((quad - lo).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upper_bound_needs_the_full_max_probability() {
        // sigma = (0.1, 0.45, 0.45): along u orthogonal to x_1 + x_2 the curvature
        // is 0.45 |u|^2, well above sigma_0 * max sigma_j * |u|^2 = 0.045 |u|^2.
        let t = ChoiceTask::from_rows(2, 2, &[1.0, 0.0, 0.0, 1.0], None, None).unwrap();
        let b = (0.45f64 / 0.1).ln();
        let beta = MnlParams::new(vec![b, b]).unwrap();
        let a = curvature_matrix(&t, &beta).unwrap();
        let u = DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
        let quad = (u.transpose() * &a * &u)[(0, 0)];
        assert!((quad - 0.45).abs() < 1e-12);
        assert!(quad > 0.1 * 0.45);
    }

    #[test]
    fn fit_recovers_generating_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let beta0 = MnlParams::new(vec![0.7, -1.2, 0.4]).unwrap();
        let tasks: Vec<ChoiceTask> = (0..40).map(|_| random_task(&mut rng, 3, 3)).collect();
        let samples: Vec<TargetedTask> = tasks
            .iter()
            .map(|t| TargetedTask::new(t, SoftTarget::new(mnl_probs(t, &beta0).unwrap()).unwrap()))
            .collect();
        let fit = fit_mnl(&samples, &FitOptions::default()).unwrap();
        assert!(fit.max_abs_diff(&beta0) < 1e-8, "{fit:?}");
    }

    #[test]
    fn fit_balanced_binary_labels_gives_zero() {
        let t = task(1, 1, &[1.0]);
        let samples: Vec<TargetedTask> = [1, 1, 0, 0]
            .iter()
            .map(|&y| TargetedTask::new(&t, SoftTarget::one_hot(1, y).unwrap()))
            .collect();
        let fit = fit_mnl(&samples, &FitOptions::default()).unwrap();
        assert!(fit.as_slice()[0].abs() < 1e-12);
    }

    /// Independent optimizer: coarse-to-fine grid over [-5, 5]^2 down to a
    /// 1e-3 step, then coordinate-wise golden-section polishing.
    fn grid_oracle(f: &dyn Fn(f64, f64) -> f64) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        let mut best_v = f64::NEG_INFINITY;
        let (mut lo0, mut lo1, mut span, mut step) = (-5.0_f64, -5.0_f64, 10.0_f64, 0.05_f64);
        while step >= 1e-3 {
            let n = (span / step).round() as usize;
            for i in 0..=n {
                for j in 0..=n {
                    let (a, b) = (lo0 + i as f64 * step, lo1 + j as f64 * step);
                    let v = f(a, b);
                    if v > best_v {
                        best_v = v;
                        best = (a, b);
                    }
                }
            }
            span = 4.0 * step;
            lo0 = best.0 - 2.0 * step;
            lo1 = best.1 - 2.0 * step;
            step /= 10.0;
        }
        let golden = |g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
            let r = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let c = b - r * (b - a);
                let e = a + r * (b - a);
                if g(c) > g(e) {
                    b = e;
                } else {
                    a = c;
                }
            }
            0.5 * (a + b)
        };
        for _ in 0..20 {
            let b1 = best.1;
            best.0 = golden(&|a| f(a, b1), best.0 - 1e-2, best.0 + 1e-2);
            let b0 = best.0;
            best.1 = golden(&|b| f(b0, b), best.1 - 1e-2, best.1 + 1e-2);
        }
        best
    }

    #[test]
    fn fit_matches_grid_search_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let tasks: Vec<ChoiceTask> = (0..25).map(|_| random_task(&mut rng, 2, 2)).collect();
        let targets: Vec<SoftTarget> = (0..25)
            .map(|_| SoftTarget::one_hot(2, rng.random_range(0..=2)).unwrap())
            .collect();
        let samples: Vec<TargetedTask> = tasks
            .iter()
            .zip(&targets)
            .map(|(t, a)| TargetedTask::new(t, a.clone()))
            .collect();
        let fit = fit_mnl(&samples, &FitOptions::default()).unwrap();
        // Oracle objective written independently of the Objective type.
        let f = |a: f64, b: f64| -> f64 {
            let mut s = 0.0;
            for (t, tg) in tasks.iter().zip(&targets) {
                let u: Vec<f64> = (0..2).map(|j| t.x(j + 1, 0) * a + t.x(j + 1, 1) * b).collect();
                let denom = 1.0 + u.iter().map(|v| v.exp()).sum::<f64>();
                let y = tg.weights().iter().position(|w| *w == 1.0).unwrap();
                s += if y == 0 { -denom.ln() } else { u[y - 1] - denom.ln() };
            }
            s
        };
        let (a, b) = grid_oracle(&f);
        assert!((fit.as_slice()[0] - a).abs() < 1e-3 && (fit.as_slice()[1] - b).abs() < 1e-3);
    }

    #[test]
    fn fit_reports_rank_deficiency() {
        // Second attribute is identically zero.
        let tasks: Vec<ChoiceTask> = (0..5).map(|i| task(2, 2, &[i as f64, 0.0, 1.0, 0.0])).collect();
        let samples: Vec<TargetedTask> = tasks
            .iter()
            .map(|t| TargetedTask::new(t, SoftTarget::one_hot(2, 1).unwrap()))
            .collect();
        assert!(matches!(
            fit_mnl(&samples, &FitOptions::default()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn separation_is_reported_and_ridge_recovers() {
        // Alternative 1 is always chosen: the likelihood increases without bound.
        // Newton steps grow like 1/sigma_0, so a low cap is crossed long before
        // the gradient underflows the tolerance.
        let t = task(1, 1, &[1.0]);
        let samples = vec![TargetedTask::new(&t, SoftTarget::one_hot(1, 1).unwrap()); 4];
        let opts = FitOptions {
            divergence_cap: 10.0,
            ..FitOptions::default()
        };
        let err = fit_mnl(&samples, &opts).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
        let opts = FitOptions {
            ridge_fallback: true,
            ridge_lambda: 1e-2,
            ..opts
        };
        let fit = fit_mnl(&samples, &opts).unwrap();
        // Penalized optimum solves 1 - sigma(b) = 2 * lambda * b.
        let b = fit.as_slice()[0];
        let sigma = 1.0 / (1.0 + (-b).exp());
        assert!((1.0 - sigma - 2e-2 * b).abs() < 1e-8, "b = {b}");
    }

    #[test]
    fn fit_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tasks: Vec<ChoiceTask> = (0..60).map(|_| random_task(&mut rng, 3, 3)).collect();
        let labels: Vec<usize> = (0..60).map(|_| rng.random_range(0..=3)).collect();
        let mut samples: Vec<TargetedTask> = tasks
            .iter()
            .zip(&labels)
            .map(|(t, &y)| TargetedTask::new(t, SoftTarget::one_hot(3, y).unwrap()))
            .collect();
        let a = fit_mnl(&samples, &FitOptions::default()).unwrap();
        samples.reverse();
        samples.swap(3, 40);
        let b = fit_mnl(&samples, &FitOptions::default()).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    proptest! {
        #[test]
        fn probabilities_form_a_distribution(
            k in 1usize..5,
            d in 1usize..4,
            seed in any::<u64>(),
            scale in prop_oneof![Just(1.0), Just(10.0), Just(1e3)],
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_task(&mut rng, k, d);
            let beta = MnlParams::new((0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap();
            let p = mnl_probs(&t, &beta).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            if scale == 1.0 {
                prop_assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
            }
        }

        #[test]
        fn loglik_is_concave_on_segments(seed in any::<u64>(), lambda in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tasks: Vec<ChoiceTask> = (0..4).map(|_| random_task(&mut rng, 2, 3)).collect();
            let samples: Vec<TargetedTask> = tasks
                .iter()
                .map(|t| TargetedTask::new(t, random_target(&mut rng, 2)))
                .collect();
            let a = MnlParams::new((0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let b = MnlParams::new((0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let mid = MnlParams::new(
                a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect(),
            ).unwrap();
            let fa = soft_loglik(&samples, &a).unwrap();
            let fb = soft_loglik(&samples, &b).unwrap();
            let fm = soft_loglik(&samples, &mid).unwrap();
            prop_assert!(fm >= lambda * fa + (1.0 - lambda) * fb - 1e-10);
        }
    }
}
