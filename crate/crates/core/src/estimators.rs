//! Primary-only, auxiliary-only, naive pooled and augmented estimators.

use serde::Serialize;

use crate::choice::{fit_mnl, Dataset, DatasetKind, FitOptions, MnlParams, SoftTarget, TargetedTask};
use crate::error::{Error, Result};
use crate::gmodel::{fit_g, GFitOptions, GModel, GVariant, LabelModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// MLE on the human labels of the primary sample.
    Primary,
    /// MLE on the AI labels of the auxiliary sample.
    Auxiliary,
    /// MLE on primary rows labelled by `y` pooled with auxiliary rows labelled by `z`.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Primary,
    Auxiliary,
    Naive,
    Aae,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::Primary, Self::Auxiliary, Self::Naive, Self::Aae];

    pub fn name(self) -> &'static str {
        match self {
            Self::Primary => "primary",
            Self::Auxiliary => "auxiliary",
            Self::Naive => "naive",
            Self::Aae => "aae",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator {s:?}")))
    }
}

impl From<BaselineMode> for EstimatorKind {
    fn from(mode: BaselineMode) -> Self {
        match mode {
            BaselineMode::Primary => Self::Primary,
            BaselineMode::Auxiliary => Self::Auxiliary,
            BaselineMode::Naive => Self::Naive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub beta_hat: MnlParams,
    pub kind: EstimatorKind,
    /// The step-1 label model; present only for the augmented estimator.
    pub g_model: Option<GModel>,
    /// `(m, n)`: primary and auxiliary sizes used by the fit.
    pub sample_sizes: (usize, usize),
    /// `n / m`, or `None` when `m = 0`.
    pub rho: Option<f64>,
}

fn ratio(m: usize, n: usize) -> Option<f64> {
    (m > 0).then(|| n as f64 / m as f64)
}

fn require<'a>(data: Option<&'a Dataset>, kind: DatasetKind, what: &str) -> Result<&'a Dataset> {
    let data = data.ok_or_else(|| Error::invalid(format!("{what} estimator needs a {kind:?} dataset")))?;
    if data.kind() != kind {
        return Err(Error::invalid(format!("expected {kind:?} data, got {:?}", data.kind())));
    }
    Ok(data)
}

pub fn fit_baseline(
    primary: Option<&Dataset>,
    auxiliary: Option<&Dataset>,
    mode: BaselineMode,
    options: &FitOptions,
) -> Result<EstimatorResult> {
    let m = primary.map_or(0, Dataset::len);
    let n = auxiliary.map_or(0, Dataset::len);
    let (samples, sizes) = match mode {
        BaselineMode::Primary => {
            let p = require(primary, DatasetKind::Primary, "primary-only")?;
            (p.human_targets()?, (m, 0))
        }
        BaselineMode::Auxiliary => {
            let a = require(auxiliary, DatasetKind::Auxiliary, "auxiliary-only")?;
            (a.ai_targets()?, (0, n))
        }
        BaselineMode::Naive => {
            let p = require(primary, DatasetKind::Primary, "naive")?;
            let a = require(auxiliary, DatasetKind::Auxiliary, "naive")?;
            if a.len() > 0 && (a.k() != p.k() || a.d() != p.d()) {
                return Err(Error::dims("primary and auxiliary shapes differ"));
            }
            let mut s = p.human_targets()?;
            s.extend(a.ai_targets()?);
            (s, (m, n))
        }
    };
    let beta_hat = fit_mnl(&samples, options)?;
    Ok(EstimatorResult {
        beta_hat,
        kind: mode.into(),
        g_model: None,
        sample_sizes: sizes,
        rho: ratio(sizes.0, sizes.1),
    })
}

#[derive(Debug, Clone, Default)]
pub struct AaeOptions {
    pub g: GFitOptions,
    /// Newton settings for step 2.
    pub step2: FitOptions,
}

/// Step 2 alone: fit the MNL to the auxiliary tasks with `g(x, z)` as soft targets.
pub fn aae_step2<M: LabelModel + ?Sized>(auxiliary: &Dataset, g: &M, options: &FitOptions) -> Result<MnlParams> {
    if auxiliary.is_empty() {
        return Err(Error::invalid("auxiliary dataset is empty"));
    }
    let samples: Vec<TargetedTask> = auxiliary
        .tasks()
        .iter()
        .map(|t| Ok(TargetedTask::new(t, SoftTarget::new(g.probs(t)?)?)))
        .collect::<Result<_>>()?;
    fit_mnl(&samples, options)
}

pub fn fit_aae(
    primary: &Dataset,
    auxiliary: &Dataset,
    variant: GVariant,
    options: &AaeOptions,
) -> Result<EstimatorResult> {
    if primary.kind() != DatasetKind::Primary || auxiliary.kind() != DatasetKind::Auxiliary {
        return Err(Error::invalid("augmented estimator needs primary and auxiliary data in that order"));
    }
    if primary.is_empty() || auxiliary.is_empty() {
        return Err(Error::invalid("augmented estimator needs non-empty primary and auxiliary data"));
    }
    if primary.k() != auxiliary.k() || primary.d() != auxiliary.d() {
        return Err(Error::dims(format!(
            "primary is {}x{}, auxiliary is {}x{}",
            primary.k(),
            primary.d(),
            auxiliary.k(),
            auxiliary.d()
        )));
    }
    let g = fit_g(primary, variant, &options.g)?;
    let beta_hat = aae_step2(auxiliary, &g, &options.step2)?;
    let (m, n) = (primary.len(), auxiliary.len());
    Ok(EstimatorResult {
        beta_hat,
        kind: EstimatorKind::Aae,
        g_model: Some(g),
        sample_sizes: (m, n),
        rho: ratio(m, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{mnl_probs, soft_score, ChoiceTask};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, m: usize, n: usize) -> (Dataset, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut task = |labelled: bool| {
            let rows: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z = rng.random_range(0..=3);
            let y = labelled.then(|| rng.random_range(0..=3));
            ChoiceTask::from_rows(3, 2, &rows, y, Some(z)).unwrap()
        };
        let p: Vec<_> = (0..m).map(|_| task(true)).collect();
        let a: Vec<_> = (0..n).map(|_| task(false)).collect();
        (
            Dataset::with_shape(DatasetKind::Primary, 3, 2, p).unwrap(),
            Dataset::with_shape(DatasetKind::Auxiliary, 3, 2, a).unwrap(),
        )
    }

    struct OneHotZ;

    impl LabelModel for OneHotZ {
        fn probs(&self, task: &ChoiceTask) -> Result<DVector<f64>> {
            let z = task.ai_label().unwrap();
            Ok(DVector::from_fn(task.k() + 1, |j, _| if j == z { 1.0 } else { 0.0 }))
        }
        fn num_params(&self) -> usize {
            0
        }
        fn jacobian(&self, task: &ChoiceTask) -> Result<DMatrix<f64>> {
            Ok(DMatrix::zeros(task.k() + 1, 0))
        }
    }

    #[test]
    fn one_hot_label_model_reproduces_auxiliary_fit() {
        let (_, aux) = random_data(1, 0, 400);
        let a = aae_step2(&aux, &OneHotZ, &FitOptions::default()).unwrap();
        let b = fit_baseline(None, Some(&aux), BaselineMode::Auxiliary, &FitOptions::default()).unwrap();
        assert_eq!(a, b.beta_hat);
    }

    #[test]
    fn naive_with_empty_auxiliary_is_primary() {
        let (p, aux) = random_data(2, 300, 0);
        let naive = fit_baseline(Some(&p), Some(&aux), BaselineMode::Naive, &FitOptions::default()).unwrap();
        let prim = fit_baseline(Some(&p), None, BaselineMode::Primary, &FitOptions::default()).unwrap();
        assert_eq!(naive.beta_hat, prim.beta_hat);
        assert_eq!(naive.sample_sizes, (300, 0));
    }

    #[test]
    fn missing_datasets_are_rejected() {
        let (p, _) = random_data(3, 10, 0);
        assert!(fit_baseline(None, None, BaselineMode::Primary, &FitOptions::default()).is_err());
        assert!(fit_baseline(Some(&p), None, BaselineMode::Naive, &FitOptions::default()).is_err());
        assert!(fit_baseline(Some(&p), None, BaselineMode::Auxiliary, &FitOptions::default()).is_err());
    }

    #[test]
    fn aae_result_carries_label_model_and_ratio() {
        let (p, a) = random_data(4, 200, 800);
        let r = fit_aae(&p, &a, GVariant::Parametric, &AaeOptions::default()).unwrap();
        assert!(matches!(r.g_model, Some(GModel::Parametric(_))));
        assert_eq!(r.sample_sizes, (200, 800));
        assert_eq!(r.rho, Some(4.0));
        let again = fit_aae(&p, &a, GVariant::Parametric, &AaeOptions::default()).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn soft_score_identity() {
        // sum_j g_j grad log sigma_j, with grad log sigma_j = x_j - sum_l sigma_l x_l
        // and x_0 = 0, equals sum_{j >= 1} (g_j - sigma_j) x_j.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let k = rng.random_range(1..=4);
            let d = rng.random_range(1..=4);
            let rows: Vec<f64> = (0..k * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = ChoiceTask::from_rows(k, d, &rows, None, None).unwrap();
            let beta = MnlParams::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let raw: Vec<f64> = (0..=k).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let g = DVector::from_iterator(k + 1, raw.iter().map(|v| v / s));
            let sigma = mnl_probs(&t, &beta).unwrap();
            let mut xbar = DVector::zeros(d);
            for l in 1..=k {
                xbar += t.features().row(l - 1).transpose() * sigma[l];
            }
            let mut lhs = -xbar.clone() * g[0];
            for j in 1..=k {
                lhs += (t.features().row(j - 1).transpose() - &xbar) * g[j];
            }
            let rhs = soft_score(&t, &SoftTarget::new(g).unwrap(), &beta).unwrap();
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
