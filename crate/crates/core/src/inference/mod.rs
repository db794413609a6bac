//! Plug-in sandwich covariances for the augmented and primary-only estimators.
//!
//! With `sigma = sigma(x; beta)`, `xbar = sum_j sigma_j x_j` and `x_0 = 0`:
//!
//! ```text
//! Omega   = E_aux[ A(x; beta) ]
//! Gamma   = E_aux[ sum_{j=0..k} (x_j - xbar) grad_theta g_j^T ]
//! Lambda  = E_pri[ u u^T ]^{-1},           u = grad_theta log g_y
//! J       = E_aux[ s s^T ],                s = sum_j (g_j - sigma_j) x_j
//! Jcheck  = E_pri[ w w^T ],                w = x_y - xbar
//!
//! Var_aae = Omega^-1 J Omega^-1 / n + Omega^-1 Gamma Lambda Gamma^T Omega^-1 / m
//! Var_p   = Omega^-1 Jcheck Omega^-1 / m
//! ```
//!
//! The augmented estimator has the smaller asymptotic variance exactly when
//! `Jcheck - Gamma Lambda Gamma^T` is positive semidefinite.

mod population;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::choice::{accumulate_curvature, softmax_in_place, ChoiceTask, Dataset, DatasetKind, MnlParams};
use crate::error::{Error, Result};
use crate::gmodel::LabelModel;
use crate::linalg::{self, serialize_matrix, spd_inverse};

pub use population::{
    residual_decomposition, PopulationMatrices, Population, ResidualDecomposition,
};

/// Fitted probabilities below this floor trigger a warning: the plug-in
/// formulas assume every alternative keeps non-negligible mass.
pub const PROBABILITY_FLOOR: f64 = 1e-6;

/// Eigenvalues at or below this count as zero in [`dominance_check`].
pub const DOMINANCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    #[serde(serialize_with = "serialize_matrix")]
    pub omega_hat: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub gamma_hat: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub lambda_hat: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub j_hat: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub j_check_hat: DMatrix<f64>,
    /// Primary size.
    pub m: usize,
    /// Auxiliary size.
    pub n: usize,
    pub rho: f64,
    #[serde(serialize_with = "serialize_matrix")]
    pub var_aae: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub var_primary: DMatrix<f64>,
    /// Ascending eigenvalues of the symmetrized `Jcheck - Gamma Lambda Gamma^T`.
    pub dominance_eigs: Vec<f64>,
}

impl AsymptoticReport {
    /// `Jcheck - Gamma Lambda Gamma^T`, symmetrized.
    pub fn dominance_matrix(&self) -> DMatrix<f64> {
        let ggt = &self.gamma_hat * &self.lambda_hat * self.gamma_hat.transpose();
        linalg::symmetrize(&(&self.j_check_hat - ggt))
    }

    /// Standard errors of the augmented estimate, `sqrt(diag Var_aae)`.
    pub fn aae_standard_errors(&self) -> DVector<f64> {
        self.var_aae.diagonal().map(|v| v.max(0.0).sqrt())
    }

    pub fn primary_standard_errors(&self) -> DVector<f64> {
        self.var_primary.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceCheck {
    pub eigenvalues: Vec<f64>,
    pub min: f64,
    /// Every eigenvalue exceeds [`DOMINANCE_TOLERANCE`].
    pub dominant: bool,
}

pub fn dominance_check(report: &AsymptoticReport) -> DominanceCheck {
    dominance_of(&report.dominance_matrix())
}

pub(crate) fn dominance_of(m: &DMatrix<f64>) -> DominanceCheck {
    let eigenvalues = linalg::sorted_eigenvalues(m);
    let min = eigenvalues.first().copied().unwrap_or(0.0);
    DominanceCheck {
        dominant: !eigenvalues.is_empty() && min > DOMINANCE_TOLERANCE,
        eigenvalues,
        min,
    }
}

/// Weighted sums of the per-observation outer products.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub omega: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub info: DMatrix<f64>,
    pub j_check: DMatrix<f64>,
    pub gamma_wu: DMatrix<f64>,
    sigma: Vec<f64>,
    xbar: Vec<f64>,
    centered: DMatrix<f64>,
    s: DVector<f64>,
    wv: DVector<f64>,
    u: DVector<f64>,
    /// Smallest fitted choice or label probability seen so far.
    pub min_prob: f64,
}

impl Moments {
    pub fn new(d: usize, q: usize, k: usize) -> Self {
        Self {
            omega: DMatrix::zeros(d, d),
            gamma: DMatrix::zeros(d, q),
            j: DMatrix::zeros(d, d),
            info: DMatrix::zeros(q, q),
            j_check: DMatrix::zeros(d, d),
            gamma_wu: DMatrix::zeros(d, q),
            sigma: vec![0.0; k + 1],
            xbar: vec![0.0; d],
            centered: DMatrix::zeros(k + 1, d),
            s: DVector::zeros(d),
            wv: DVector::zeros(d),
            u: DVector::zeros(q),
            min_prob: f64::INFINITY,
        }
    }

    /// Adds one `(x, z)` cell. `w_aux` weights the auxiliary moments; entry
    /// `y` of `y_weights` weights the primary moments with human label `y`.
    pub fn add<M: LabelModel + ?Sized>(
        &mut self,
        task: &ChoiceTask,
        beta: &[f64],
        g: &M,
        w_aux: f64,
        y_weights: &[f64],
    ) -> Result<()> {
        let (k, d) = (task.k(), task.d());
        task.utilities_into(beta, &mut self.sigma);
        softmax_in_place(&mut self.sigma);
        let gp = g.probs(task)?;
        let jac = g.jacobian(task)?;
        let q = jac.ncols();
        if gp.len() != k + 1 || jac.nrows() != k + 1 || q != self.gamma.ncols() {
            return Err(Error::dims("label model output does not match the task"));
        }
        let lo = self.sigma.iter().chain(gp.iter()).fold(f64::INFINITY, |a, &b| a.min(b));
        self.min_prob = self.min_prob.min(lo);
        if self.centered.shape() != (k + 1, d) {
            return Err(Error::dims("task shape differs from earlier cells"));
        }
        if w_aux != 0.0 {
            accumulate_curvature(task, &self.sigma, w_aux, &mut self.omega, &mut self.xbar);
        } else {
            self.xbar.iter_mut().for_each(|v| *v = 0.0);
            for j in 1..=k {
                for c in 0..d {
                    self.xbar[c] += self.sigma[j] * task.x(j, c);
                }
            }
        }
        // Centered attributes x_j - xbar, with x_0 = 0.
        for j in 0..=k {
            for c in 0..d {
                let xj = if j == 0 { 0.0 } else { task.x(j, c) };
                self.centered[(j, c)] = xj - self.xbar[c];
            }
        }
        if w_aux != 0.0 {
            self.s.fill(0.0);
            for j in 1..=k {
                for c in 0..d {
                    self.s[c] += (gp[j] - self.sigma[j]) * task.x(j, c);
                }
            }
            self.j.ger(w_aux, &self.s, &self.s, 1.0);
            self.gamma.gemm_tr(w_aux, &self.centered, &jac, 1.0);
        }
        for (y, &wy) in y_weights.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            for c in 0..d {
                self.wv[c] = self.centered[(y, c)];
            }
            for c in 0..q {
                self.u[c] = jac[(y, c)] / gp[y];
            }
            self.j_check.ger(wy, &self.wv, &self.wv, 1.0);
            self.info.ger(wy, &self.u, &self.u, 1.0);
            self.gamma_wu.ger(wy, &self.wv, &self.u, 1.0);
        }
        Ok(())
    }

    pub fn scale(&mut self, aux: f64, pri: f64) {
        self.omega *= aux;
        self.gamma *= aux;
        self.j *= aux;
        self.info *= pri;
        self.j_check *= pri;
        self.gamma_wu *= pri;
    }
}

fn check_inputs(primary: &Dataset, auxiliary: &Dataset, beta: &MnlParams) -> Result<()> {
    if primary.kind() != DatasetKind::Primary || auxiliary.kind() != DatasetKind::Auxiliary {
        return Err(Error::invalid("expected primary and auxiliary datasets in that order"));
    }
    if primary.len() < 2 || auxiliary.len() < 2 {
        return Err(Error::invalid("inference needs at least two primary and two auxiliary tasks"));
    }
    if primary.k() != auxiliary.k() || primary.d() != auxiliary.d() {
        return Err(Error::dims("primary and auxiliary shapes differ"));
    }
    if beta.dim() != primary.d() {
        return Err(Error::dims(format!(
            "coefficients have {} entries, data has d = {}",
            beta.dim(),
            primary.d()
        )));
    }
    Ok(())
}

/// Sample plug-in estimates of the sandwich ingredients at `(beta_hat, g)`.
pub fn estimate_asymptotics<M: LabelModel + ?Sized>(
    primary: &Dataset,
    auxiliary: &Dataset,
    beta_hat: &MnlParams,
    g: &M,
) -> Result<AsymptoticReport> {
    check_inputs(primary, auxiliary, beta_hat)?;
    let (k, d, q) = (primary.k(), primary.d(), g.num_params());
    let (m, n) = (primary.len(), auxiliary.len());
    let beta = beta_hat.as_slice();
    let mut mom = Moments::new(d, q, k);
    for t in auxiliary.tasks() {
        mom.add(t, beta, g, 1.0, &[])?;
    }
    let mut yw = vec![0.0; k + 1];
    for t in primary.tasks() {
        let y = t
            .human_label()
            .ok_or_else(|| Error::MissingLabel("primary task without human label".into()))?;
        yw[y] = 1.0;
        mom.add(t, beta, g, 0.0, &yw)?;
        yw[y] = 0.0;
    }
    mom.scale(1.0 / n as f64, 1.0 / m as f64);
    if mom.min_prob < PROBABILITY_FLOOR {
        log::warn!(
            "smallest fitted probability is {:.3e}; standard errors may be unreliable",
            mom.min_prob
        );
    }
    assemble(mom, m, n)
}

pub(crate) fn assemble(mom: Moments, m: usize, n: usize) -> Result<AsymptoticReport> {
    let omega = linalg::symmetrize(&mom.omega);
    let j = linalg::symmetrize(&mom.j);
    let j_check = linalg::symmetrize(&mom.j_check);
    let omega_inv = spd_inverse(&omega, "Omega")?;
    let lambda = spd_inverse(&linalg::symmetrize(&mom.info), "Lambda")?;
    let gamma = mom.gamma;
    let ggt = &gamma * &lambda * gamma.transpose();
    let var_aae = linalg::symmetrize(
        &(&omega_inv * &j * &omega_inv / n as f64 + &omega_inv * &ggt * &omega_inv / m as f64),
    );
    let var_primary = linalg::symmetrize(&(&omega_inv * &j_check * &omega_inv / m as f64));
    let dominance_eigs = linalg::sorted_eigenvalues(&(&j_check - &ggt));
    Ok(AsymptoticReport {
        omega_hat: omega,
        gamma_hat: gamma,
        lambda_hat: lambda,
        j_hat: j,
        j_check_hat: j_check,
        m,
        n,
        rho: n as f64 / m as f64,
        var_aae,
        var_primary,
        dominance_eigs,
    })
}
