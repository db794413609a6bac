//! Population-level versions of the sandwich ingredients.
//!
//! A [`Population`] is a finite weighted list of `(x, z)` cells with the
//! conditional law of `y` in each cell. Finite-support worlds enumerate it
//! exactly; continuous worlds use a fixed sample of `x` draws with the `z` and
//! `y` laws still summed out exactly.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{dominance_of, DominanceCheck, Moments};
use crate::choice::{fit_mnl, softmax_in_place, ChoiceTask, FitOptions, MnlParams, SoftTarget, TargetedTask};
use crate::error::{Error, Result};
use crate::gmodel::{GModel, LabelModel};
use crate::linalg::{self, serialize_matrix, spd_inverse};
use crate::simlab::WorldSpec;

#[derive(Debug, Clone)]
pub struct Population {
    k: usize,
    d: usize,
    /// One task per cell, carrying the cell's AI label.
    cells: Arc<Vec<ChoiceTask>>,
    /// Cells of attribute draw `i` occupy `groups[i]`.
    groups: Arc<Vec<Range<usize>>>,
    /// `P(x) P(z | x)` per cell.
    weights: Arc<Vec<f64>>,
    /// `P(y | x, z)`, `k + 1` entries per cell.
    y_law: Vec<f64>,
}

/// Population sandwich ingredients at a given `(beta, g)`.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationMatrices {
    #[serde(serialize_with = "serialize_matrix")]
    pub omega: DMatrix<f64>,
    /// `E[sum_j (x_j - xbar) grad g_j^T]`.
    #[serde(serialize_with = "serialize_matrix")]
    pub gamma: DMatrix<f64>,
    /// `E[w u^T]` under the population law of `y`.
    #[serde(serialize_with = "serialize_matrix")]
    pub gamma_wu: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub lambda: DMatrix<f64>,
    /// `E[s s^T]`; with `r = -s` this is also `E[r r^T]`.
    #[serde(serialize_with = "serialize_matrix")]
    pub j: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub j_check: DMatrix<f64>,
    /// Symmetrized `Jcheck - Gamma Lambda Gamma^T`.
    #[serde(serialize_with = "serialize_matrix")]
    pub dominance: DMatrix<f64>,
}

impl PopulationMatrices {
    pub fn dominance_check(&self) -> DominanceCheck {
        dominance_of(&self.dominance)
    }
}

/// `E[r r^T]` split into the MNL misspecification part and the part explained
/// by the AI label, with `r = sum_j (sigma_j - g_j) x_j`.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualDecomposition {
    #[serde(serialize_with = "serialize_matrix")]
    pub total: DMatrix<f64>,
    /// `E[(m_sigma - m_p)(m_sigma - m_p)^T]`, `m_p = sum_j P(y = j | x) x_j`.
    #[serde(serialize_with = "serialize_matrix")]
    pub misspecification_term: DMatrix<f64>,
    /// `E[(m_p - m_g)(m_p - m_g)^T]`, the conditional covariance of `sum_j g_j x_j` given `x`.
    #[serde(serialize_with = "serialize_matrix")]
    pub z_information_term: DMatrix<f64>,
}

impl ResidualDecomposition {
    /// Largest entry of `|total - misspecification - z_information|`.
    pub fn gap(&self) -> f64 {
        linalg::max_abs_diff(&self.total, &(&self.misspecification_term + &self.z_information_term))
    }
}

fn mean_attr(task: &ChoiceTask, weights: &[f64]) -> DVector<f64> {
    let mut m = DVector::zeros(task.d());
    for j in 1..=task.k() {
        for c in 0..task.d() {
            m[c] += weights[j] * task.x(j, c);
        }
    }
    m
}

impl Population {
    /// Builds a population from per-draw attributes and laws.
    ///
    /// `x_weights[i]` is the probability of draw `i`; `z_law(i)` gives
    /// `P(z | x_i)` and `y_law(i, z)` gives `P(y | x_i, z)`. Cells with zero
    /// probability are dropped.
    pub fn from_laws(
        tasks: &[ChoiceTask],
        x_weights: &[f64],
        mut z_law: impl FnMut(usize) -> Result<Vec<f64>>,
        mut y_law: impl FnMut(usize, usize) -> Result<Vec<f64>>,
    ) -> Result<Self> {
        let first = tasks.first().ok_or_else(|| Error::invalid("population has no attribute draws"))?;
        if x_weights.len() != tasks.len() {
            return Err(Error::dims("one weight per attribute draw is required"));
        }
        let (k, d) = (first.k(), first.d());
        let mut cells = Vec::new();
        let mut groups = Vec::with_capacity(tasks.len());
        let mut weights = Vec::new();
        let mut ys = Vec::new();
        for (i, t) in tasks.iter().enumerate() {
            if t.k() != k || t.d() != d {
                return Err(Error::dims("attribute draws differ in shape"));
            }
            let zl = z_law(i)?;
            check_law(&zl, k, "z law")?;
            let start = cells.len();
            for (z, pz) in zl.iter().enumerate() {
                if *pz == 0.0 {
                    continue;
                }
                let yl = y_law(i, z)?;
                check_law(&yl, k, "y law")?;
                cells.push(t.with_labels(None, Some(z))?);
                weights.push(x_weights[i] * pz);
                ys.extend(yl);
            }
            groups.push(start..cells.len());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("population weights sum to {total}")));
        }
        Ok(Self {
            k,
            d,
            cells: Arc::new(cells),
            groups: Arc::new(groups),
            weights: Arc::new(weights),
            y_law: ys,
        })
    }

    /// Same cells with a new law of `y`, given per cell.
    pub fn with_y_law(&self, mut y_law: impl FnMut(&ChoiceTask) -> Result<Vec<f64>>) -> Result<Self> {
        let mut ys = Vec::with_capacity(self.y_law.len());
        for c in self.cells.iter() {
            let yl = y_law(c)?;
            check_law(&yl, self.k, "y law")?;
            ys.extend(yl);
        }
        Ok(Self {
            y_law: ys,
            ..self.clone_shell()
        })
    }

    fn clone_shell(&self) -> Self {
        Self {
            k: self.k,
            d: self.d,
            cells: Arc::clone(&self.cells),
            groups: Arc::clone(&self.groups),
            weights: Arc::clone(&self.weights),
            y_law: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    fn y_row(&self, cell: usize) -> &[f64] {
        &self.y_law[cell * (self.k + 1)..(cell + 1) * (self.k + 1)]
    }

    /// `(P(x_i), P(y | x_i))` per attribute draw.
    fn marginal_y(&self) -> Vec<(f64, Vec<f64>)> {
        self.groups
            .iter()
            .map(|g| {
                let px: f64 = g.clone().map(|c| self.weights[c]).sum();
                let mut py = vec![0.0; self.k + 1];
                for c in g.clone() {
                    for (acc, v) in py.iter_mut().zip(self.y_row(c)) {
                        *acc += self.weights[c] * v / px;
                    }
                }
                (px, py)
            })
            .collect()
    }

    /// Best-in-class coefficients: the MNL closest in expected KL to the
    /// population law of `y` given `x`.
    pub fn beta_star(&self, options: &FitOptions) -> Result<MnlParams> {
        let marg = self.marginal_y();
        let samples: Vec<TargetedTask> = self
            .groups
            .iter()
            .zip(marg)
            .filter(|(g, _)| !g.is_empty())
            .map(|(g, (px, py))| {
                let s: f64 = py.iter().sum();
                let target = SoftTarget::new(DVector::from_iterator(py.len(), py.iter().map(|v| v / s)))?;
                Ok(TargetedTask::weighted(&self.cells[g.start], target, px))
            })
            .collect::<Result<_>>()?;
        fit_mnl(&samples, options)
    }

    /// Infinity norm of the population score `E[sum_j (P(y = j | x) - sigma_j) x_j]`.
    pub fn score_norm(&self, beta: &MnlParams) -> Result<f64> {
        self.check_beta(beta)?;
        let mut sigma = vec![0.0; self.k + 1];
        let mut score = DVector::zeros(self.d);
        for (g, (px, py)) in self.groups.iter().zip(self.marginal_y()) {
            let Some(c) = g.clone().next() else { continue };
            let t = &self.cells[c];
            t.utilities_into(beta.as_slice(), &mut sigma);
            softmax_in_place(&mut sigma);
            let diff: Vec<f64> = py.iter().zip(&sigma).map(|(a, b)| a - b).collect();
            score += mean_attr(t, &diff) * px;
        }
        Ok(score.amax())
    }

    fn check_beta(&self, beta: &MnlParams) -> Result<()> {
        if beta.dim() != self.d {
            return Err(Error::dims(format!("coefficients have {} entries, population has d = {}", beta.dim(), self.d)));
        }
        Ok(())
    }

    /// Population sandwich ingredients. `g` plays the role of the label model
    /// in `Gamma`, `Lambda` and `J`; `y` follows the population law.
    pub fn matrices<M: LabelModel + ?Sized>(&self, beta: &MnlParams, g: &M) -> Result<PopulationMatrices> {
        self.check_beta(beta)?;
        let mut mom = Moments::new(self.d, g.num_params(), self.k);
        let mut yw = vec![0.0; self.k + 1];
        for (c, t) in self.cells.iter().enumerate() {
            let w = self.weights[c];
            for (dst, p) in yw.iter_mut().zip(self.y_row(c)) {
                *dst = w * p;
            }
            mom.add(t, beta.as_slice(), g, w, &yw)?;
        }
        let lambda = spd_inverse(&linalg::symmetrize(&mom.info), "Lambda")?;
        let ggt = &mom.gamma * &lambda * mom.gamma.transpose();
        let j_check = linalg::symmetrize(&mom.j_check);
        Ok(PopulationMatrices {
            omega: linalg::symmetrize(&mom.omega),
            dominance: linalg::symmetrize(&(&j_check - ggt)),
            gamma: mom.gamma,
            gamma_wu: mom.gamma_wu,
            lambda,
            j: linalg::symmetrize(&mom.j),
            j_check,
        })
    }

    /// `E[r r^T]` and its two components at `(beta, g)`.
    pub fn decomposition<M: LabelModel + ?Sized>(&self, beta: &MnlParams, g: &M) -> Result<ResidualDecomposition> {
        self.check_beta(beta)?;
        let d = self.d;
        let mut total = DMatrix::zeros(d, d);
        let mut mis = DMatrix::zeros(d, d);
        let mut zinfo = DMatrix::zeros(d, d);
        let mut sigma = vec![0.0; self.k + 1];
        for (grp, (px, py)) in self.groups.iter().zip(self.marginal_y()) {
            let Some(first) = grp.clone().next() else { continue };
            let t = &self.cells[first];
            t.utilities_into(beta.as_slice(), &mut sigma);
            softmax_in_place(&mut sigma);
            let m_sigma = mean_attr(t, &sigma);
            let m_p = mean_attr(t, &py);
            let a = &m_sigma - &m_p;
            mis.ger(px, &a, &a, 1.0);
            for c in grp.clone() {
                let gp = g.probs(&self.cells[c])?;
                let m_g = mean_attr(t, gp.as_slice());
                let r = &m_sigma - &m_g;
                let b = &m_p - &m_g;
                total.ger(self.weights[c], &r, &r, 1.0);
                zinfo.ger(self.weights[c], &b, &b, 1.0);
            }
        }
        Ok(ResidualDecomposition {
            total: linalg::symmetrize(&total),
            misspecification_term: linalg::symmetrize(&mis),
            z_information_term: linalg::symmetrize(&zinfo),
        })
    }

    /// `E[(1/k) sum_{j=1..k} |sigma_j(x; beta) - g_j(x, z)|]`.
    pub fn abs_prob_diff<M: LabelModel + ?Sized>(&self, beta: &MnlParams, g: &M) -> Result<f64> {
        self.check_beta(beta)?;
        let mut sigma = vec![0.0; self.k + 1];
        let mut acc = 0.0;
        for (c, t) in self.cells.iter().enumerate() {
            t.utilities_into(beta.as_slice(), &mut sigma);
            softmax_in_place(&mut sigma);
            let gp = g.probs(t)?;
            let dev: f64 = (1..=self.k).map(|j| (sigma[j] - gp[j]).abs()).sum();
            acc += self.weights[c] * dev / self.k as f64;
        }
        Ok(acc)
    }
}

fn check_law(law: &[f64], k: usize, what: &str) -> Result<()> {
    if law.len() != k + 1 {
        return Err(Error::dims(format!("{what} has {} entries, expected {}", law.len(), k + 1)));
    }
    if law.iter().any(|p| !p.is_finite() || *p < 0.0) || (law.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} is not a probability vector")));
    }
    Ok(())
}

/// Exact decomposition of `E[r r^T]` for a finite-support world, with
/// `r = sum_j (sigma_j(x; beta_star) - g_j(x, z; theta_star)) x_j`.
pub fn residual_decomposition(world: &WorldSpec, beta_star: &MnlParams, g_star: &GModel) -> Result<ResidualDecomposition> {
    if !world.has_finite_support() {
        return Err(Error::invalid("residual decomposition needs a finite attribute support"));
    }
    world.population(0, 0)?.decomposition(beta_star, g_star)
}
