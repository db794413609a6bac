//! Dominance and misalignment across the alignment parameter `eta`.

use rayon::prelude::*;
use serde::Serialize;

use super::seed::{derive_seed, rng_from};
use super::world::{parametric_law, WorldSpec};
use crate::choice::{FitOptions, MnlParams};
use crate::error::{Error, Result};

pub const DEFAULT_ETA_GRID: [f64; 11] = [0.01, 0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_instances: usize,
    pub eta_grid: Vec<f64>,
    pub d: usize,
    pub k: usize,
    pub expectation_draws: usize,
    pub master_seed: u64,
    /// Fresh draws tried per instance before giving up.
    pub max_attempts: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_instances: 50,
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            d: 5,
            k: 2,
            expectation_draws: 100_000,
            master_seed: 0,
            max_attempts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub instance: usize,
    /// Smallest eigenvalue of `Jcheck - Gamma Lambda Gamma^T`.
    pub min_eig: f64,
    pub abs_prob_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub eta: f64,
    pub min_eig_mean: f64,
    pub min_eig_min: f64,
    pub min_eig_max: f64,
    pub abs_prob_diff_mean: f64,
    pub abs_prob_diff_min: f64,
    pub abs_prob_diff_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
    /// Instances redrawn because the oracle or an inversion failed.
    pub resampled: usize,
}

struct Instance {
    rows: Vec<SweepRow>,
    retries: usize,
}

fn run_instance(config: &SweepConfig, index: usize) -> Result<Instance> {
    let parent = derive_seed(config.master_seed, index as u64);
    let mut last_err = None;
    for attempt in 0..config.max_attempts {
        let mut rng = rng_from(derive_seed(parent, attempt as u64));
        let base = WorldSpec::random_parametric(config.d, config.k, 0.0, &mut rng)?;
        let draws_seed = rand::Rng::random::<u64>(&mut rng);
        match sweep_world(&base, config, draws_seed, index) {
            Ok(rows) => return Ok(Instance { rows, retries: attempt }),
            Err(e) => {
                log::warn!("sweep instance {index} attempt {attempt} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::invalid("max_attempts is zero")))
}

fn sweep_world(base: &WorldSpec, config: &SweepConfig, draws_seed: u64, index: usize) -> Result<Vec<SweepRow>> {
    let super::world::WorldKind::Parametric { theta_check, zeta, .. } = &base.kind else {
        unreachable!("sweep worlds are parametric worlds")
    };
    let pop0 = base.population(config.expectation_draws, draws_seed)?;
    let mut warm: Option<MnlParams> = None;
    let mut rows = Vec::with_capacity(config.eta_grid.len());
    for &eta in &config.eta_grid {
        let world = WorldSpec::parametric(theta_check.clone(), zeta.clone(), eta, config.k)?;
        let pop = pop0.with_y_law(|t| Ok(parametric_law(t.features(), theta_check, eta, t.ai_label().unwrap_or(0))))?;
        let opts = FitOptions {
            initial: warm.as_ref().map(|b| b.as_slice().to_vec()),
            ..FitOptions::default()
        };
        let beta = pop.beta_star(&opts)?;
        let g = world.true_g()?;
        let mats = pop.matrices(&beta, &g)?;
        let min_eig = mats.dominance_check().min;
        let abs_prob_diff = pop.abs_prob_diff(&beta, &g)?;
        rows.push(SweepRow {
            eta,
            instance: index,
            min_eig,
            abs_prob_diff,
        });
        warm = Some(beta);
    }
    Ok(rows)
}

/// Runs every instance over the whole grid; rows are ordered by `eta`, then instance.
pub fn eta_sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.n_instances == 0 || config.eta_grid.is_empty() {
        return Err(Error::invalid("sweep needs at least one instance and one eta"));
    }
    let instances: Vec<Instance> = (0..config.n_instances)
        .into_par_iter()
        .map(|i| run_instance(config, i))
        .collect::<Result<_>>()?;
    let resampled = instances.iter().map(|i| i.retries).sum();
    let mut rows = Vec::with_capacity(config.n_instances * config.eta_grid.len());
    for e in 0..config.eta_grid.len() {
        rows.extend(instances.iter().map(|i| i.rows[e].clone()));
    }
    let summary = config
        .eta_grid
        .iter()
        .enumerate()
        .map(|(e, &eta)| {
            let cell: Vec<&SweepRow> = instances.iter().map(|i| &i.rows[e]).collect();
            let stats = |f: fn(&SweepRow) -> f64| {
                let v: Vec<f64> = cell.iter().map(|r| f(r)).collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (mean, min, max)
            };
            let (a, b, c) = stats(|r| r.min_eig);
            let (x, y, z) = stats(|r| r.abs_prob_diff);
            SweepSummary {
                eta,
                min_eig_mean: a,
                min_eig_min: b,
                min_eig_max: c,
                abs_prob_diff_mean: x,
                abs_prob_diff_min: y,
                abs_prob_diff_max: z,
            }
        })
        .collect();
    Ok(SweepResult {
        rows,
        summary,
        resampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_eta_has_no_residual() {
        let config = SweepConfig {
            n_instances: 2,
            eta_grid: vec![0.0, 1.0],
            expectation_draws: 2_000,
            ..SweepConfig::default()
        };
        let r = eta_sweep(&config).unwrap();
        assert_eq!(r.rows.len(), 4);
        for row in &r.rows[..2] {
            assert!(row.min_eig.abs() < 1e-10, "{}", row.min_eig);
            assert!(row.abs_prob_diff < 1e-10);
        }
        for row in &r.rows[2..] {
            assert!(row.min_eig > 0.0);
            assert!(row.abs_prob_diff > 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let config = SweepConfig {
            n_instances: 2,
            eta_grid: vec![0.5, 2.0],
            expectation_draws: 1_000,
            master_seed: 11,
            ..SweepConfig::default()
        };
        assert_eq!(eta_sweep(&config).unwrap(), eta_sweep(&config).unwrap());
    }
}
