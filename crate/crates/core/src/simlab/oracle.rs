//! Best-in-class coefficients of synthetic worlds.

use serde::Serialize;

use super::world::{logit, WorldSpec};
use crate::choice::{FitOptions, MnlParams};
use crate::error::{Error, Result};

/// Attribute draws behind population expectations in continuous worlds.
pub const DEFAULT_EXPECTATION_DRAWS: usize = 100_000;
/// Seed of the oracle's attribute draws when none is given.
pub const ORACLE_SEED: u64 = 0x0a11_ce5e_ed00;

/// `beta*` by Newton on the population objective: exact for finite supports,
/// [`DEFAULT_EXPECTATION_DRAWS`] seeded draws otherwise.
pub fn oracle_beta_star(world: &WorldSpec) -> Result<MnlParams> {
    oracle_beta_star_with(world, DEFAULT_EXPECTATION_DRAWS, ORACLE_SEED)
}

pub fn oracle_beta_star_with(world: &WorldSpec, draws: usize, seed: u64) -> Result<MnlParams> {
    world.population(draws, seed)?.beta_star(&FitOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Example1Oracle {
    pub beta_star: f64,
    /// Probability limit of the naive pooled estimator when `n / m -> rho`.
    pub naive_limit: f64,
}

/// Closed forms for the one-attribute world: with `q = alpha p + (1 - alpha)(1 - p)`,
/// `beta* = logit(q)` and the naive limit is `logit((alpha rho + q) / (1 + rho))`.
pub fn example1_oracle(alpha: f64, p: f64, rho: f64) -> Result<Example1Oracle> {
    if !(alpha > 0.0 && alpha < 1.0) || !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("alpha and p must lie in (0, 1)"));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::invalid("rho must be finite and non-negative"));
    }
    let q = alpha * p + (1.0 - alpha) * (1.0 - p);
    Ok(Example1Oracle {
        beta_star: logit(q),
        naive_limit: logit((alpha * rho + q) / (1.0 + rho)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let o = example1_oracle(0.3, 0.8, 1.0).unwrap();
        assert!((o.beta_star - (0.38f64 / 0.62).ln()).abs() < 1e-15);
        assert!((o.naive_limit - (0.34f64 / 0.66).ln()).abs() < 1e-15);
        assert!((o.beta_star + 0.4895).abs() < 1e-4);
        assert!((o.naive_limit + 0.6633).abs() < 1e-4);
        let h = example1_oracle(0.5, 0.8, 1.0).unwrap();
        assert_eq!(h.beta_star, 0.0);
        assert_eq!(h.naive_limit, 0.0);
    }

    #[test]
    fn naive_limit_approaches_beta_star_as_p_goes_to_one() {
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6] {
            let o = example1_oracle(0.3, 1.0 - eps, 2.0).unwrap();
            let gap = (o.naive_limit - o.beta_star).abs();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn boundary_parameters_are_rejected() {
        assert!(example1_oracle(0.0, 0.5, 1.0).is_err());
        assert!(example1_oracle(0.5, 1.0, 1.0).is_err());
        assert!(example1_oracle(0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn newton_oracle_matches_closed_form() {
        for (alpha, p) in [(0.3, 0.8), (0.5, 0.7), (0.9, 0.6)] {
            let w = WorldSpec::example1(alpha, p).unwrap();
            let b = oracle_beta_star(&w).unwrap();
            let o = example1_oracle(alpha, p, 0.0).unwrap();
            assert!((b.as_slice()[0] - o.beta_star).abs() < 1e-10);
        }
    }
}
