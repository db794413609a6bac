//! `aae`: command-line front end for AI-augmented conjoint estimation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aae_core::inference::DominanceCheck;
use aae_core::io::{emit_dataset_csv, ingest_csv, render_report, Cell, Report, ReportFormat, Table};
use aae_core::metrics::{data_savings_with, DEFAULT_EPSILON};
use aae_core::simlab::{
    presets, savings_study, SavingsStudyConfig, SweepConfig, DEFAULT_ETA_GRID, DEFAULT_EXPECTATION_DRAWS,
};
use aae_core::{
    dominance_check, estimate_asymptotics, eta_sweep, fit_aae, fit_baseline, monte_carlo_benchmark,
    AaeOptions, AsymptoticReport, BaselineMode, DatasetKind, Error, ErrorClass, ErrorCurve, EstimatorKind,
    EstimatorResult, FitOptions, GVariant, MetricsReport, MnlParams, Result, SimulationConfig, WorldSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "aae", version, about = "AI-augmented estimation for choice-based conjoint data")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file (a directory for `simulate`). Reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Estimator {
    Primary,
    Auxiliary,
    Naive,
    Aae,
}

impl From<Estimator> for EstimatorKind {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Primary => EstimatorKind::Primary,
            Estimator::Auxiliary => EstimatorKind::Auxiliary,
            Estimator::Naive => EstimatorKind::Naive,
            Estimator::Aae => EstimatorKind::Aae,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GKind {
    Parametric,
    Mlp,
}

impl From<GKind> for GVariant {
    fn from(g: GKind) -> Self {
        match g {
            GKind::Parametric => GVariant::Parametric,
            GKind::Mlp => GVariant::Mlp,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct WorldArgs {
    /// One of example1, parametric, misaligned, finite.
    #[arg(long, default_value = "misaligned")]
    world: String,
    /// Alignment parameter for `parametric`.
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    /// Draw index of the random `parametric` coefficients.
    #[arg(long, default_value_t = 0)]
    instance: u64,
    /// Override `alpha` of `example1`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override `p` of `example1`.
    #[arg(long)]
    p: Option<f64>,
}

impl WorldArgs {
    fn build(&self) -> Result<WorldSpec> {
        if self.world == "example1" && (self.alpha.is_some() || self.p.is_some()) {
            return WorldSpec::example1(self.alpha.unwrap_or(0.3), self.p.unwrap_or(0.8));
        }
        presets::by_name(&self.world, self.eta, self.instance)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one estimator to CSV data.
    Fit {
        #[arg(long)]
        primary: Option<PathBuf>,
        #[arg(long)]
        auxiliary: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Estimator::Aae)]
        estimator: Estimator,
        #[arg(long, value_enum, default_value_t = GKind::Parametric)]
        g: GKind,
        /// Reference coefficients; adds MAPE and MSE to the report.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta_star: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Fit the augmented estimator and report plug-in covariances.
    Infer {
        #[arg(long)]
        primary: PathBuf,
        #[arg(long)]
        auxiliary: PathBuf,
        #[arg(long, value_enum, default_value_t = GKind::Parametric)]
        g: GKind,
    },
    /// Draw primary.csv and auxiliary.csv from a synthetic world.
    Simulate {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    /// Dominance and misalignment across eta on random continuous worlds.
    SweepEta {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = DEFAULT_EXPECTATION_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_delimiter = ',')]
        eta_grid: Option<Vec<f64>>,
    },
    /// Monte Carlo comparison of the estimators.
    Benchmark {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, value_enum, value_delimiter = ',')]
        estimators: Option<Vec<Estimator>>,
        #[arg(long, value_enum, default_value_t = GKind::Parametric)]
        g: GKind,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_EXPECTATION_DRAWS)]
        oracle_draws: usize,
    },
    /// Data savings, from a given error curve or from a Monte Carlo study.
    Savings(SavingsArgs),
}

#[derive(Args, Debug)]
struct SavingsArgs {
    /// CSV with columns `size,error`; selects curve mode.
    #[arg(long, requires_all = ["aae_error", "n1"])]
    curve: Option<PathBuf>,
    #[arg(long)]
    aae_error: Option<f64>,
    #[arg(long)]
    n1: Option<f64>,
    /// Fail instead of extrapolating beyond the curve.
    #[arg(long)]
    no_extrapolate: bool,

    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, value_delimiter = ',')]
    primary_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    curve_sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = GKind::Parametric)]
    g: GKind,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Serialize)]
struct FitReport {
    fit: EstimatorResult,
    metrics: Option<MetricsReport>,
}

impl Report for FitReport {
    fn kind(&self) -> &'static str {
        "fit"
    }

    fn table(&self) -> Table {
        let mut t = self.fit.table();
        if let Some(m) = &self.metrics {
            t.rows.push(vec![Cell::Text("mape".into()), 0usize.into(), m.mape.into()]);
            t.rows.push(vec![Cell::Text("mse".into()), 0usize.into(), m.mse.into()]);
        }
        t
    }
}

#[derive(Serialize)]
struct InferReport {
    beta_hat: MnlParams,
    aae_standard_errors: Vec<f64>,
    primary_standard_errors: Vec<f64>,
    dominance: DominanceCheck,
    asymptotics: AsymptoticReport,
}

impl Report for InferReport {
    fn kind(&self) -> &'static str {
        "inference"
    }

    fn table(&self) -> Table {
        let mut t = self.asymptotics.table();
        let mut push = |name: &str, v: &[f64]| {
            for (i, x) in v.iter().enumerate() {
                t.rows.push(vec![Cell::Text(name.into()), i.into(), 0usize.into(), (*x).into()]);
            }
        };
        push("beta_hat", self.beta_hat.as_slice());
        push("aae_se", &self.aae_standard_errors);
        push("primary_se", &self.primary_standard_errors);
        t
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn emit<R: Report>(cli: &Cli, report: &R) -> Result<()> {
    let bytes = render_report(report, Some(cli.seed), cli.format.into())?;
    write_output(cli.out.as_deref(), &bytes)
}

fn read_curve(path: &Path) -> Result<ErrorCurve> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["size", "error"] {
        return Err(Error::Invalid(format!("curve header must be size,error; got {header:?}")));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Invalid(format!("bad curve row {:?}", rec)))
        };
        points.push((num(0)?, num(1)?));
    }
    ErrorCurve::new(points)
}

fn g_options(seed: u64) -> AaeOptions {
    let mut opts = AaeOptions::default();
    opts.g.mlp.seed = seed;
    opts
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit {
            primary,
            auxiliary,
            estimator,
            g,
            beta_star,
            epsilon,
        } => {
            let p = primary.as_ref().map(|f| ingest_csv(f, DatasetKind::Primary)).transpose()?;
            let a = auxiliary.as_ref().map(|f| ingest_csv(f, DatasetKind::Auxiliary)).transpose()?;
            let fit = match EstimatorKind::from(*estimator) {
                EstimatorKind::Aae => {
                    let (Some(p), Some(a)) = (&p, &a) else {
                        return Err(Error::Invalid("aae needs --primary and --auxiliary".into()));
                    };
                    fit_aae(p, a, (*g).into(), &g_options(cli.seed))?
                }
                EstimatorKind::Primary => fit_baseline(p.as_ref(), a.as_ref(), BaselineMode::Primary, &FitOptions::default())?,
                EstimatorKind::Auxiliary => {
                    fit_baseline(p.as_ref(), a.as_ref(), BaselineMode::Auxiliary, &FitOptions::default())?
                }
                EstimatorKind::Naive => fit_baseline(p.as_ref(), a.as_ref(), BaselineMode::Naive, &FitOptions::default())?,
            };
            let metrics = beta_star
                .as_ref()
                .map(|b| MetricsReport::compute(&fit.beta_hat, &MnlParams::new(b.clone())?, *epsilon))
                .transpose()?;
            emit(cli, &FitReport { fit, metrics })
        }
        Command::Infer { primary, auxiliary, g } => {
            let p = ingest_csv(primary, DatasetKind::Primary)?;
            let a = ingest_csv(auxiliary, DatasetKind::Auxiliary)?;
            let fit = fit_aae(&p, &a, (*g).into(), &g_options(cli.seed))?;
            let model = fit.g_model.as_ref().expect("augmented fit carries its label model");
            let asymptotics = estimate_asymptotics(&p, &a, &fit.beta_hat, model)?;
            let report = InferReport {
                beta_hat: fit.beta_hat.clone(),
                aae_standard_errors: asymptotics.aae_standard_errors().iter().copied().collect(),
                primary_standard_errors: asymptotics.primary_standard_errors().iter().copied().collect(),
                dominance: dominance_check(&asymptotics),
                asymptotics,
            };
            emit(cli, &report)
        }
        Command::Simulate { world, m, n } => {
            let w = world.build()?;
            let (p, a) = w.sample(*m, *n, cli.seed)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            emit_dataset_csv(dir.join("primary.csv"), &p)?;
            emit_dataset_csv(dir.join("auxiliary.csv"), &a)?;
            log::info!("wrote {m} primary and {n} auxiliary tasks to {}", dir.display());
            Ok(())
        }
        Command::SweepEta {
            instances,
            draws,
            d,
            k,
            eta_grid,
        } => {
            let config = SweepConfig {
                n_instances: *instances,
                eta_grid: eta_grid.clone().unwrap_or_else(|| DEFAULT_ETA_GRID.to_vec()),
                d: *d,
                k: *k,
                expectation_draws: *draws,
                master_seed: cli.seed,
                ..SweepConfig::default()
            };
            emit(cli, &eta_sweep(&config)?)
        }
        Command::Benchmark {
            world,
            m,
            n,
            reps,
            estimators,
            g,
            epsilon,
            oracle_draws,
        } => {
            let mut config = SimulationConfig::new(world.build()?, *m, *n, *reps, cli.seed);
            if let Some(list) = estimators {
                config.estimators = list.iter().map(|e| (*e).into()).collect();
            }
            config.g_variant = (*g).into();
            config.aae = g_options(cli.seed);
            config.epsilon = *epsilon;
            config.oracle_draws = *oracle_draws;
            emit(cli, &monte_carlo_benchmark(&config)?)
        }
        Command::Savings(args) => {
            if let Some(curve) = &args.curve {
                let curve = read_curve(curve)?;
                let (err, n1) = (args.aae_error.unwrap_or_default(), args.n1.unwrap_or_default());
                return emit(cli, &data_savings_with(err, &curve, n1, !args.no_extrapolate)?);
            }
            let mut config = SavingsStudyConfig::new(args.world.build()?, cli.seed);
            config.n = args.n;
            if let Some(s) = &args.primary_sizes {
                config.primary_sizes = s.clone();
            }
            if let Some(s) = &args.curve_sizes {
                config.curve_sizes = s.clone();
            }
            config.replications = args.reps;
            config.g_variant = args.g.into();
            config.aae = g_options(cli.seed);
            config.epsilon = args.epsilon;
            emit(cli, &savings_study(&config)?)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
