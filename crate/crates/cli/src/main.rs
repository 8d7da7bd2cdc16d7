use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nash_queue::dynamics::{covariance_matrix_from, propagate};
use nash_queue::equilibrium::{solve, EquilibriumArtifact};
use nash_queue::estimator::{
    estimator_early_birds, mean_estimator, EstimationFailure, PairEstimate, Weights,
};
use nash_queue::experiments::{emit_outputs, run_experiment, ExperimentPlan, OutputSelection};
use nash_queue::simulator::simulate;
use nash_queue::{ModelConfig, ObservationSet, SamplingSchedule, SupportEstimate, Variant};

#[derive(Parser)]
#[command(
    name = "nash-queue",
    version,
    about = "Equilibrium arrivals and θ estimation for a ?/M/1 queue"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the equilibrium arrival distribution.
    Solve(SolveArgs),
    /// Simulate days under a solved equilibrium and record queue lengths.
    Simulate(SimulateArgs),
    /// Estimate θ from recorded queue lengths.
    Estimate(EstimateArgs),
    /// Run a replication study and write tables and figure data.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Model configuration (JSON). Defaults to λ=5, μ=1, α=2, β=0.2.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the equilibrium artifact.
    #[arg(long, short, default_value = "equilibrium.json")]
    out: PathBuf,
    /// Also write the density on the grid as CSV.
    #[arg(long)]
    density_csv: Option<PathBuf>,
    /// Also write P0, mean and variance of the queue length as CSV.
    #[arg(long)]
    dynamics_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Equilibrium artifact written by `solve`.
    #[arg(long)]
    equilibrium: PathBuf,
    /// Explicit sampling times, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["start", "spacing", "end"])]
    times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    start: f64,
    #[arg(long)]
    spacing: Option<f64>,
    /// Last sampling time; defaults to the model horizon.
    #[arg(long)]
    end: Option<f64>,
    /// Number of days.
    #[arg(long, short)]
    days: usize,
    /// Overrides the seed stored with the model, if any.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short, default_value = "observations.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    NoEarlyBirds,
    ClosingTime,
    EarlyBirds,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::NoEarlyBirds => Variant::NoEarlyBirds,
            VariantArg::ClosingTime => Variant::ClosingTime,
            VariantArg::EarlyBirds => Variant::EarlyBirds,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Observations CSV written by `simulate`.
    #[arg(long)]
    observations: PathBuf,
    /// Service rate; taken from the equilibrium artifact when omitted.
    #[arg(long)]
    mu: Option<f64>,
    /// Game variant; taken from the equilibrium artifact when omitted.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Leave time 0 out of the estimation times.
    #[arg(long)]
    no_zero: bool,
    /// Equilibrium artifact; enables grid-truth support indices, the
    /// asymptotic variance and a confidence interval.
    #[arg(long)]
    equilibrium: Option<PathBuf>,
    /// Result document; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment plan (JSON).
    #[arg(long)]
    plan: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = "experiment-out")]
    out_dir: PathBuf,
    /// Write tables (all outputs when neither flag is given).
    #[arg(long)]
    tables: bool,
    /// Write figure data.
    #[arg(long)]
    figures: bool,
    /// Overrides the master seed of the plan.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ModelConfig::from_json(&text)?
        }
        None => ModelConfig::default(),
    };
    let params = config.to_params()?;
    let eq = solve(&params)?;
    EquilibriumArtifact::new(&params, eq.clone()).save(&args.out)?;

    if let Some(path) = &args.density_csv {
        let mut out = create(path)?;
        eq.write_density_csv(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.dynamics_csv {
        let series = propagate(&eq, &params)?;
        let mut out = create(path)?;
        series.write_csv(&mut out)?;
        out.flush()?;
    }

    println!("variant      {}", params.variant());
    println!("theta        {:.6}", params.theta());
    println!("atom         {:.6}", eq.atom);
    if eq.pre_width > 0.0 {
        println!("early width  {:.4}", eq.pre_width);
    }
    println!(
        "support      [{:.3}, {:.3}]",
        eq.support_start, eq.support_end
    );
    println!("cost         {:.6}", eq.equilibrium_cost);
    println!("wrote        {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let artifact = EquilibriumArtifact::load(&args.equilibrium)?;
    let params = artifact.model_params()?;
    let schedule = match (&args.times, args.spacing) {
        (Some(times), _) => SamplingSchedule::new(times.clone())?,
        (None, Some(spacing)) => SamplingSchedule::equidistant(
            args.start,
            spacing,
            args.end.unwrap_or(params.horizon()),
        )?,
        (None, None) => bail!("give either --times or --spacing"),
    };
    let seed = args.seed.or(artifact.params.seed).unwrap_or(0);
    let obs = simulate(&artifact.equilibrium, &params, &schedule, args.days, seed)?;
    let mut out = create(&args.out)?;
    obs.write_csv(&mut out)?;
    out.flush()?;
    println!(
        "{} days x {} times (seed {seed}) -> {}",
        obs.days(),
        schedule.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport {
    variant: Variant,
    mu: f64,
    days: usize,
    success: bool,
    failure: Option<EstimationFailure>,
    failure_reason: Option<String>,
    theta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    support: Option<SupportEstimate>,
    estimation_times: Vec<f64>,
    pairs: Vec<PairEstimate>,
    weights: Option<Weights>,
    asymptotic_variance: Option<f64>,
    confidence_interval_95: Option<[f64; 2]>,
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let file = File::open(&args.observations)
        .with_context(|| format!("opening {}", args.observations.display()))?;
    let obs = ObservationSet::read_csv(BufReader::new(file))?;
    let artifact = args
        .equilibrium
        .as_ref()
        .map(EquilibriumArtifact::load)
        .transpose()?;
    let params = artifact.as_ref().map(|a| a.model_params()).transpose()?;

    let mu = match (args.mu, &params) {
        (Some(mu), _) => mu,
        (None, Some(p)) => p.mu(),
        (None, None) => bail!("--mu is required without --equilibrium"),
    };
    if mu.is_nan() || mu <= 0.0 {
        bail!("mu must be positive");
    }
    let variant = args
        .variant
        .map(Variant::from)
        .or(params.as_ref().map(|p| p.variant()))
        .unwrap_or(Variant::NoEarlyBirds);

    let mut result = match variant {
        Variant::EarlyBirds => estimator_early_birds(&obs, mu),
        _ => mean_estimator(&obs, mu, !args.no_zero),
    };

    if let (Some(artifact), Some(params)) = (&artifact, &params) {
        let eq = &artifact.equilibrium;
        if let Some(support) = result.support.as_mut() {
            *support = support.with_grid_truth(obs.times(), eq.support_start, eq.support_end);
        }
        if let Some(weights) = &result.weights {
            let series = propagate(eq, params)?;
            let sigma = covariance_matrix_from(eq, params, &weights.times, &series)?;
            result.attach_variance(&sigma)?;
        }
    }

    let report = EstimateReport {
        variant,
        mu,
        days: result.days,
        success: result.success(),
        failure: result.failure,
        failure_reason: result.failure.map(|f| f.to_string()),
        theta_hat: result.theta_hat,
        theta: params.as_ref().map(|p| p.theta()),
        confidence_interval_95: result.confidence_interval().map(|(lo, hi)| [lo, hi]),
        support: result.support,
        estimation_times: result.estimation_times,
        pairs: result.pairs,
        weights: result.weights,
        asymptotic_variance: result.asymptotic_variance,
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&args.plan)
        .with_context(|| format!("reading {}", args.plan.display()))?;
    let mut plan = ExperimentPlan::from_json(&text)?;
    if let Some(seed) = args.seed {
        plan.master_seed = seed;
    }
    let selection = if args.tables || args.figures {
        OutputSelection {
            tables: args.tables,
            figures: args.figures,
        }
    } else {
        OutputSelection::default()
    };
    let results = run_experiment(&plan)?;
    let written = emit_outputs(&results, &args.out_dir, selection)?;

    for row in &results.summaries {
        for cell in row {
            println!(
                "n={:<6} {:<24} {}",
                cell.n,
                plan.schedules[cell.schedule_index].label(),
                cell.cell()
            );
        }
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
