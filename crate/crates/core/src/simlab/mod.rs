//! Synthetic worlds, oracles and Monte Carlo experiments.

mod benchmark;
mod oracle;
pub mod presets;
mod seed;
mod sweep;
mod world;

pub use benchmark::{
    monte_carlo_benchmark, savings_study, BenchmarkResult, EstimatorSummary, PairedDifference,
    Errors, ReplicationRecord, SavingsEntry, SavingsStudy, SavingsStudyConfig, SimulationConfig,
};
pub use oracle::{
    example1_oracle, oracle_beta_star, oracle_beta_star_with, Example1Oracle, DEFAULT_EXPECTATION_DRAWS,
    ORACLE_SEED,
};
pub use seed::{derive_seed, rng_from};
pub use sweep::{eta_sweep, SweepConfig, SweepResult, SweepRow, SweepSummary, DEFAULT_ETA_GRID};
pub use world::{sample_dataset, FeatureLaw, WorldKind, WorldSpec};
