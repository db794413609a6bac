//! Monte Carlo comparison of the estimators against the oracle coefficients.

use rayon::prelude::*;
use serde::Serialize;

use super::oracle::{oracle_beta_star_with, DEFAULT_EXPECTATION_DRAWS, ORACLE_SEED};
use super::seed::derive_seed;
use super::world::WorldSpec;
use crate::choice::{FitOptions, MnlParams};
use crate::error::{Error, Result};
use crate::estimators::{fit_aae, fit_baseline, AaeOptions, BaselineMode, EstimatorKind};
use crate::gmodel::GVariant;
use crate::metrics::{self, data_savings, ErrorCurve, SavingsResult, DEFAULT_EPSILON};

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub world: WorldSpec,
    pub m: usize,
    pub n: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub g_variant: GVariant,
    pub aae: AaeOptions,
    pub fit: FitOptions,
    /// MAPE denominator adjustment.
    pub epsilon: f64,
    /// Attribute draws for the oracle in continuous worlds.
    pub oracle_draws: usize,
}

impl SimulationConfig {
    pub fn new(world: WorldSpec, m: usize, n: usize, replications: usize, master_seed: u64) -> Self {
        Self {
            world,
            m,
            n,
            replications,
            master_seed,
            estimators: EstimatorKind::ALL.to_vec(),
            g_variant: GVariant::Parametric,
            aae: AaeOptions::default(),
            fit: FitOptions::default(),
            epsilon: DEFAULT_EPSILON,
            oracle_draws: DEFAULT_EXPECTATION_DRAWS,
        }
    }

    fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.replications == 0 {
            return Err(Error::invalid("at least one replication is required"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators requested"));
        }
        for e in &self.estimators {
            let ok = match e {
                EstimatorKind::Primary => self.m > 0,
                EstimatorKind::Auxiliary => self.n > 0,
                EstimatorKind::Naive => self.m > 0,
                EstimatorKind::Aae => self.m > 0 && self.n > 0,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "estimator {} cannot run with m = {}, n = {}",
                    e.name(),
                    self.m,
                    self.n
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Errors {
    pub mape: f64,
    pub mse: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    /// One entry per requested estimator, `None` when the fit failed.
    pub errors: Vec<Option<Errors>>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub successes: usize,
    pub failures: usize,
    pub mape_mean: f64,
    pub mape_sd: f64,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub l2_mean: f64,
    pub l2_sd: f64,
    pub l2_median: f64,
}

/// MAPE of `first` minus MAPE of `second` over replications where both succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDifference {
    pub first: EstimatorKind,
    pub second: EstimatorKind,
    pub pairs: usize,
    pub mean_mape_diff: f64,
    /// Share of pairs with `first` strictly more accurate.
    pub first_better_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub beta_star: MnlParams,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    pub summaries: Vec<EstimatorSummary>,
    pub paired: Vec<PairedDifference>,
    pub replications: Vec<ReplicationRecord>,
}

impl BenchmarkResult {
    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == kind)
    }

    pub fn pair(&self, first: EstimatorKind, second: EstimatorKind) -> Option<&PairedDifference> {
        self.paired.iter().find(|p| p.first == first && p.second == second)
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let h = s.len() / 2;
    if s.len() % 2 == 0 {
        (s[h - 1] + s[h]) / 2.0
    } else {
        s[h]
    }
}

pub(crate) fn fit_one(
    kind: EstimatorKind,
    primary: &crate::choice::Dataset,
    auxiliary: &crate::choice::Dataset,
    config_fit: &FitOptions,
    aae: &AaeOptions,
    variant: GVariant,
) -> Result<MnlParams> {
    let r = match kind {
        EstimatorKind::Primary => fit_baseline(Some(primary), None, BaselineMode::Primary, config_fit)?,
        EstimatorKind::Auxiliary => fit_baseline(None, Some(auxiliary), BaselineMode::Auxiliary, config_fit)?,
        EstimatorKind::Naive => fit_baseline(Some(primary), Some(auxiliary), BaselineMode::Naive, config_fit)?,
        EstimatorKind::Aae => fit_aae(primary, auxiliary, variant, aae)?,
    };
    Ok(r.beta_hat)
}

fn replicate(config: &SimulationConfig, beta_star: &MnlParams, r: usize) -> Result<ReplicationRecord> {
    let seed = derive_seed(config.master_seed, r as u64);
    let (p, a) = config.world.sample(config.m, config.n, seed)?;
    let mut errors = Vec::with_capacity(config.estimators.len());
    let mut failures = Vec::new();
    for &kind in &config.estimators {
        match fit_one(kind, &p, &a, &config.fit, &config.aae, config.g_variant) {
            Ok(b) => errors.push(Some(Errors {
                mape: metrics::mape(&b, beta_star, config.epsilon)?,
                mse: metrics::mse(&b, beta_star)?,
                l2: metrics::l2_error(&b, beta_star)?,
            })),
            Err(e) => {
                failures.push(format!("{}: {e}", kind.name()));
                errors.push(None);
            }
        }
    }
    Ok(ReplicationRecord {
        replication: r,
        seed,
        errors,
        failures,
    })
}

/// Runs `replications` independent draws and scores every estimator against
/// the oracle. Estimator failures are recorded, not fatal.
pub fn monte_carlo_benchmark(config: &SimulationConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let beta_star = oracle_beta_star_with(&config.world, config.oracle_draws, ORACLE_SEED)?;
    let replications: Vec<ReplicationRecord> = (0..config.replications)
        .into_par_iter()
        .map(|r| replicate(config, &beta_star, r))
        .collect::<Result<_>>()?;
    let column = |i: usize, f: fn(&Errors) -> f64| -> Vec<f64> {
        replications.iter().filter_map(|r| r.errors[i].as_ref().map(f)).collect()
    };
    let summaries = config
        .estimators
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let mapes = column(i, |e| e.mape);
            let mses = column(i, |e| e.mse);
            let l2s = column(i, |e| e.l2);
            let (mape_mean, mape_sd) = mean_sd(&mapes);
            let (mse_mean, mse_sd) = mean_sd(&mses);
            let (l2_mean, l2_sd) = mean_sd(&l2s);
            EstimatorSummary {
                estimator: kind,
                successes: mapes.len(),
                failures: config.replications - mapes.len(),
                mape_mean,
                mape_sd,
                mse_mean,
                mse_sd,
                l2_mean,
                l2_sd,
                l2_median: median(&l2s),
            }
        })
        .collect();
    let mut paired = Vec::new();
    for i in 0..config.estimators.len() {
        for j in 0..config.estimators.len() {
            if i == j {
                continue;
            }
            let diffs: Vec<f64> = replications
                .iter()
                .filter_map(|r| match (&r.errors[i], &r.errors[j]) {
                    (Some(a), Some(b)) => Some(a.mape - b.mape),
                    _ => None,
                })
                .collect();
            let better = diffs.iter().filter(|d| **d < 0.0).count();
            paired.push(PairedDifference {
                first: config.estimators[i],
                second: config.estimators[j],
                pairs: diffs.len(),
                mean_mape_diff: mean_sd(&diffs).0,
                first_better_share: if diffs.is_empty() { f64::NAN } else { better as f64 / diffs.len() as f64 },
            });
        }
    }
    Ok(BenchmarkResult {
        beta_star,
        m: config.m,
        n: config.n,
        epsilon: config.epsilon,
        summaries,
        paired,
        replications,
    })
}

#[derive(Debug, Clone)]
pub struct SavingsStudyConfig {
    pub world: WorldSpec,
    /// Primary sizes at which the augmented estimator is evaluated.
    pub primary_sizes: Vec<usize>,
    /// Auxiliary size shared by every augmented fit.
    pub n: usize,
    /// Primary sizes of the primary-only error curve.
    pub curve_sizes: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub epsilon: f64,
    pub g_variant: GVariant,
    pub aae: AaeOptions,
    pub oracle_draws: usize,
}

impl SavingsStudyConfig {
    pub fn new(world: WorldSpec, master_seed: u64) -> Self {
        Self {
            world,
            primary_sizes: vec![50, 100, 150, 200],
            n: 1000,
            curve_sizes: vec![25, 50, 75, 100, 150, 200, 300, 400, 600, 800, 1200, 1600],
            replications: 100,
            master_seed,
            epsilon: DEFAULT_EPSILON,
            g_variant: GVariant::Parametric,
            aae: AaeOptions::default(),
            oracle_draws: DEFAULT_EXPECTATION_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingsEntry {
    pub m: usize,
    pub aae_mape: f64,
    pub savings: SavingsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingsStudy {
    pub beta_star: MnlParams,
    pub n: usize,
    pub curve: ErrorCurve,
    pub entries: Vec<SavingsEntry>,
    /// Fits that failed and were left out of the averages.
    pub failures: usize,
}

/// Mean-MAPE curve of the primary-only estimator and the savings of the
/// augmented estimator at each primary size. Replication `r` reuses the same
/// seed at every size, so larger samples extend smaller ones.
pub fn savings_study(config: &SavingsStudyConfig) -> Result<SavingsStudy> {
    config.world.validate()?;
    if config.replications == 0 || config.primary_sizes.is_empty() || config.curve_sizes.len() < 2 {
        return Err(Error::invalid("savings study needs replications, primary sizes and a curve"));
    }
    let beta_star = oracle_beta_star_with(&config.world, config.oracle_draws, ORACLE_SEED)?;
    let fit = FitOptions::default();
    let per_rep: Vec<(Vec<Option<f64>>, Vec<Option<f64>>)> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.master_seed, r as u64);
            let max_m = config.curve_sizes.iter().chain(&config.primary_sizes).copied().max().unwrap_or(0);
            let (p_all, a) = config.world.sample(max_m, config.n, seed)?;
            let score = |kind: EstimatorKind, m: usize| -> Result<Option<f64>> {
                let p = crate::choice::Dataset::with_shape(
                    p_all.kind(),
                    p_all.k(),
                    p_all.d(),
                    p_all.tasks()[..m].to_vec(),
                )?;
                Ok(fit_one(kind, &p, &a, &fit, &config.aae, config.g_variant)
                    .ok()
                    .map(|b| metrics::mape(&b, &beta_star, config.epsilon))
                    .transpose()?)
            };
            let curve = config
                .curve_sizes
                .iter()
                .map(|&m| score(EstimatorKind::Primary, m))
                .collect::<Result<Vec<_>>>()?;
            let aae = config
                .primary_sizes
                .iter()
                .map(|&m| score(EstimatorKind::Aae, m))
                .collect::<Result<Vec<_>>>()?;
            Ok((curve, aae))
        })
        .collect::<Result<_>>()?;
    let mut failures = 0;
    let mut mean_at = |get: &dyn Fn(&(Vec<Option<f64>>, Vec<Option<f64>>)) -> Option<f64>| -> f64 {
        let v: Vec<f64> = per_rep.iter().filter_map(get).collect();
        failures += per_rep.len() - v.len();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let curve_pts: Vec<(f64, f64)> = (0..config.curve_sizes.len())
        .map(|i| (config.curve_sizes[i] as f64, mean_at(&|r| r.0[i])))
        .collect();
    let aae_means: Vec<f64> = (0..config.primary_sizes.len()).map(|i| mean_at(&|r| r.1[i])).collect();
    let curve = ErrorCurve::new(curve_pts)?;
    let entries = config
        .primary_sizes
        .iter()
        .zip(aae_means)
        .map(|(&m, err)| {
            Ok(SavingsEntry {
                m,
                aae_mape: err,
                savings: data_savings(err, &curve, m as f64)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SavingsStudy {
        beta_star,
        n: config.n,
        curve,
        entries,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_moments() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        let w = WorldSpec::example1(0.3, 0.8).unwrap();
        let mut c = SimulationConfig::new(w, 0, 10, 1, 0);
        assert!(monte_carlo_benchmark(&c).is_err());
        c.estimators = vec![EstimatorKind::Auxiliary];
        assert!(monte_carlo_benchmark(&c).is_ok());
        c.replications = 0;
        assert!(monte_carlo_benchmark(&c).is_err());
    }

    #[test]
    fn benchmark_is_reproducible() {
        let w = WorldSpec::parametric(vec![0.5, -0.5], vec![-1.0, 1.0], 1.5, 2).unwrap();
        let mut c = SimulationConfig::new(w, 80, 300, 4, 17);
        c.oracle_draws = 5_000;
        let a = monte_carlo_benchmark(&c).unwrap();
        let b = monte_carlo_benchmark(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summaries.len(), 4);
        assert_eq!(a.paired.len(), 12);
    }
}
