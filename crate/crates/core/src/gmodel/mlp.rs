//! A two-hidden-layer perceptron for `P(y | x, z)`.
//!
//! Input: the task's `k x d` attributes flattened row by row, followed by a
//! one-hot encoding of `z` over `{0..k}`. Two sigmoid layers of widths 10 and
//! 5 feed a softmax over the `k + 1` outcomes. Gradients are computed by
//! hand-written backpropagation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ai_label;
use crate::choice::{softmax_in_place, ChoiceTask, Dataset};
use crate::error::{Error, Result};

pub const HIDDEN_LAYERS: [usize; 2] = [10, 5];

/// Flat parameter vector laid out as `W1, b1, W2, b2, W3, b3`, weight
/// matrices row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlpGParams {
    k: usize,
    d: usize,
    theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    input: usize,
    out: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl Layout {
    fn new(k: usize, d: usize) -> Self {
        let [h1, h2] = HIDDEN_LAYERS;
        let input = d * k + k + 1;
        let out = k + 1;
        let w1 = 0;
        let b1 = w1 + h1 * input;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + out * h2;
        let total = b3 + out;
        Self {
            input,
            out,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            total,
        }
    }
}

struct Forward {
    h1: [f64; HIDDEN_LAYERS[0]],
    h2: [f64; HIDDEN_LAYERS[1]],
    probs: Vec<f64>,
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl MlpGParams {
    pub fn param_count(k: usize, d: usize) -> usize {
        Layout::new(k, d).total
    }

    pub fn from_theta(k: usize, d: usize, theta: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::invalid("mlp needs k >= 1 and d >= 1"));
        }
        let want = Self::param_count(k, d);
        if theta.len() != want {
            return Err(Error::dims(format!(
                "mlp for k = {k}, d = {d} has {want} parameters, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp parameters".into()));
        }
        Ok(Self { k, d, theta })
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            theta: vec![0.0; Self::param_count(k, d)],
        }
    }

    /// Weights drawn uniformly from `[-scale, scale]`.
    pub fn random(k: usize, d: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..Self::param_count(k, d))
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self { k, d, theta }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    fn input(&self, task: &ChoiceTask) -> Result<Vec<f64>> {
        if task.k() != self.k || task.d() != self.d {
            return Err(Error::dims(format!(
                "task is {}x{}, mlp expects {}x{}",
                task.k(),
                task.d(),
                self.k,
                self.d
            )));
        }
        let z = ai_label(task)?;
        let mut v = Vec::with_capacity(Layout::new(self.k, self.d).input);
        for j in 1..=self.k {
            for c in 0..self.d {
                v.push(task.x(j, c));
            }
        }
        v.extend((0..=self.k).map(|l| if l == z { 1.0 } else { 0.0 }));
        Ok(v)
    }

    fn forward(&self, input: &[f64]) -> Forward {
        let l = Layout::new(self.k, self.d);
        let t = &self.theta;
        let [h1n, h2n] = HIDDEN_LAYERS;
        let mut h1 = [0.0; HIDDEN_LAYERS[0]];
        for (i, h) in h1.iter_mut().enumerate() {
            let row = &t[l.w1 + i * l.input..l.w1 + (i + 1) * l.input];
            let a: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + t[l.b1 + i];
            *h = sigmoid(a);
        }
        let mut h2 = [0.0; HIDDEN_LAYERS[1]];
        for (i, h) in h2.iter_mut().enumerate() {
            let row = &t[l.w2 + i * h1n..l.w2 + (i + 1) * h1n];
            let a: f64 = row.iter().zip(&h1).map(|(w, x)| w * x).sum::<f64>() + t[l.b2 + i];
            *h = sigmoid(a);
        }
        let mut probs = vec![0.0; l.out];
        for (i, p) in probs.iter_mut().enumerate() {
            let row = &t[l.w3 + i * h2n..l.w3 + (i + 1) * h2n];
            *p = row.iter().zip(&h2).map(|(w, x)| w * x).sum::<f64>() + t[l.b3 + i];
        }
        softmax_in_place(&mut probs);
        Forward { h1, h2, probs }
    }

    /// Adds `scale * d(v . logits)/d(theta)` into `grad`.
    fn backward(&self, input: &[f64], fwd: &Forward, v: &[f64], scale: f64, grad: &mut [f64]) {
        let l = Layout::new(self.k, self.d);
        let t = &self.theta;
        let [h1n, h2n] = HIDDEN_LAYERS;
        let mut dz2 = [0.0; HIDDEN_LAYERS[1]];
        for (i, vi) in v.iter().enumerate() {
            let s = scale * vi;
            for h in 0..h2n {
                grad[l.w3 + i * h2n + h] += s * fwd.h2[h];
                dz2[h] += vi * t[l.w3 + i * h2n + h];
            }
            grad[l.b3 + i] += s;
        }
        let mut dz1 = [0.0; HIDDEN_LAYERS[0]];
        for h in 0..h2n {
            dz2[h] *= fwd.h2[h] * (1.0 - fwd.h2[h]);
            let s = scale * dz2[h];
            for i in 0..h1n {
                grad[l.w2 + h * h1n + i] += s * fwd.h1[i];
                dz1[i] += dz2[h] * t[l.w2 + h * h1n + i];
            }
            grad[l.b2 + h] += s;
        }
        for i in 0..h1n {
            dz1[i] *= fwd.h1[i] * (1.0 - fwd.h1[i]);
            let s = scale * dz1[i];
            let row = l.w1 + i * l.input;
            for (c, x) in input.iter().enumerate() {
                grad[row + c] += s * x;
            }
            grad[l.b1 + i] += s;
        }
    }

    pub fn probs(&self, task: &ChoiceTask) -> Result<DVector<f64>> {
        let input = self.input(task)?;
        Ok(DVector::from_vec(self.forward(&input).probs))
    }

    pub fn jacobian(&self, task: &ChoiceTask) -> Result<DMatrix<f64>> {
        let input = self.input(task)?;
        let fwd = self.forward(&input);
        let out = self.k + 1;
        let q = self.num_params();
        let mut jac = DMatrix::zeros(out, q);
        let mut row = vec![0.0; q];
        let mut v = vec![0.0; out];
        for j in 0..out {
            // d g_j / d logit_l = g_j (1{j = l} - g_l)
            for (l, vl) in v.iter_mut().enumerate() {
                *vl = fwd.probs[j] * (if l == j { 1.0 } else { 0.0 } - fwd.probs[l]);
            }
            row.iter_mut().for_each(|r| *r = 0.0);
            self.backward(&input, &fwd, &v, 1.0, &mut row);
            for (c, r) in row.iter().enumerate() {
                jac[(j, c)] = *r;
            }
        }
        Ok(jac)
    }
}

/// Full-batch Adam on the mean cross-entropy of the human labels.
#[derive(Debug, Clone)]
pub struct MlpTrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Initial weights are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MlpTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_scale: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpTraining {
    pub params: MlpGParams,
    /// Mean cross-entropy before each epoch's update, plus the final value.
    pub loss_history: Vec<f64>,
}

pub fn train_mlp(primary: &Dataset, options: &MlpTrainOptions) -> Result<MlpTraining> {
    if primary.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let (k, d) = (primary.k(), primary.d());
    let mut model = MlpGParams::random(k, d, options.init_scale, options.seed);
    let inputs: Vec<Vec<f64>> = primary
        .tasks()
        .iter()
        .map(|t| model.input(t))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = primary
        .tasks()
        .iter()
        .map(|t| {
            t.human_label()
                .ok_or_else(|| Error::MissingLabel("primary task without human label".into()))
        })
        .collect::<Result<_>>()?;
    let q = model.num_params();
    let n = inputs.len() as f64;
    let mut m1 = vec![0.0; q];
    let mut m2 = vec![0.0; q];
    let mut grad = vec![0.0; q];
    let mut v = vec![0.0; k + 1];
    let mut history = Vec::with_capacity(options.epochs + 1);

    let loss_and_grad = |model: &MlpGParams, grad: &mut [f64], v: &mut [f64], with_grad: bool| -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(&labels) {
            let fwd = model.forward(x);
            loss -= fwd.probs[y].ln();
            if with_grad {
                for (l, vl) in v.iter_mut().enumerate() {
                    *vl = fwd.probs[l] - if l == y { 1.0 } else { 0.0 };
                }
                model.backward(x, &fwd, v, 1.0 / n, grad);
            }
        }
        loss / n
    };

    for epoch in 1..=options.epochs {
        let loss = loss_and_grad(&model, &mut grad, &mut v, true);
        if !loss.is_finite() {
            return Err(Error::NotConverged {
                iterations: epoch,
                gradient_norm: f64::NAN,
            });
        }
        history.push(loss);
        let b1t = 1.0 - options.beta1.powi(epoch as i32);
        let b2t = 1.0 - options.beta2.powi(epoch as i32);
        for i in 0..q {
            m1[i] = options.beta1 * m1[i] + (1.0 - options.beta1) * grad[i];
            m2[i] = options.beta2 * m2[i] + (1.0 - options.beta2) * grad[i] * grad[i];
            let mhat = m1[i] / b1t;
            let vhat = m2[i] / b2t;
            model.theta[i] -= options.learning_rate * mhat / (vhat.sqrt() + options.epsilon);
        }
    }
    history.push(loss_and_grad(&model, &mut grad, &mut v, false));
    if model.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("mlp weights after training".into()));
    }
    Ok(MlpTraining {
        params: model,
        loss_history: history,
    })
}
