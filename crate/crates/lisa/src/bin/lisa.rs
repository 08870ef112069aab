//! Command line front end. Every subcommand exits 0 on success; failures
//! print a single JSON object `{"error":{"kind":...,"message":...}}` on
//! stderr and exit 1 so callers can branch on the kind without scraping
//! message text.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lisa::dynsys::{integrate, OdeSystem, TrajectoryConfig};
use lisa::error::{Error, Result};
use lisa::harness::{
    self, export_forecast, prepare, run_context_sweep, run_temperature_sweep, ExperimentConfig,
    TrainedModel,
};
use lisa::icm::IcmConfig;
use lisa::metrics::{evaluate, DivergenceKind, MetricConfig};
use lisa::rollout::{roll, Method, RolloutConfig};
use lisa::series::fmt_f64;

#[derive(Parser)]
#[command(
    name = "lisa",
    version,
    about = "Spectral time-series forecasting with in-context residual adapters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory or synthetic load series and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit the encoder and decoder for a config and save the model artifact.
    Train(TrainArgs),
    /// Roll out a single forecast from a saved model artifact.
    Forecast(ForecastArgs),
    /// Score every method across context lengths.
    SweepContext(SweepArgs),
    /// Score every method across adapter temperatures at a fixed context.
    SweepTemperature(SweepArgs),
    /// Compare plug-in and oracle low-rank covariance adaptation as the
    /// context grows.
    IcpcaDemo(IcpcaDemoArgs),
    /// Score a forecast CSV against a truth CSV.
    Metrics(MetricsArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SimulateSource {
    /// Experiment config; its [dataset] section describes the series.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Benchmark system name (lorenz63, rossler, chua, ...).
    #[arg(long)]
    system: Option<String>,
    /// Synthetic seasonal load with this many hourly samples.
    #[arg(long, value_name = "N")]
    seasonal: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SimulateSource,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Total integration steps including burn-in (--system/--seasonal).
    #[arg(long, default_value_t = 11_000)]
    n_steps: usize,
    /// Leading steps to discard (--system only).
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
    /// Integration step; defaults to the system's.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for the initial condition or generator noise.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Keep every k-th sample.
    #[arg(long)]
    decimate: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output path for the model artifact (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    /// Model artifact written by `lisa train`.
    #[arg(long)]
    model: PathBuf,
    /// nlsa, lisa, or alsa.
    #[arg(long)]
    method: String,
    /// Forecast start index within the test segment.
    #[arg(long)]
    start: usize,
    /// Context length as a multiple of the window length.
    #[arg(long, default_value_t = 1)]
    context_multiple: usize,
    /// Steps to forecast; defaults to the config's sweep horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Adapter temperature.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Output CSV (original units, truth columns included).
    #[arg(long)]
    out: PathBuf,
    /// Also write per-step correction diagnostics to this CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Reuse a saved model artifact instead of retraining.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory for the output tables.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IcpcaDemoArgs {
    /// Ambient dimension.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Retained principal components.
    #[arg(long, default_value_t = 3)]
    rank: usize,
    /// Samples drawn from the training distribution.
    #[arg(long, default_value_t = 4_000)]
    train_samples: usize,
    /// Comma-separated context sizes.
    #[arg(long, default_value = "8,32,128,512,2048")]
    contexts: String,
    /// Held-out samples used to score each adaptation.
    #[arg(long, default_value_t = 4_000)]
    eval_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Forecast CSV (numeric columns, optional leading time column).
    #[arg(long)]
    forecast: PathBuf,
    /// Ground-truth CSV with the same shape.
    #[arg(long)]
    truth: PathBuf,
    /// Autocorrelation horizon; defaults to min(H - 1, 50).
    #[arg(long)]
    tau_max: Option<usize>,
    /// Spectral divergence: js or kl.
    #[arg(long, default_value = "js")]
    divergence: String,
    /// Seed for the random-feature kernel estimate.
    #[arg(long, default_value_t = 0)]
    mmd_seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "kind": error_kind(&e), "message": e.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Shape { .. } => "shape",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Degeneracy(_) => "degeneracy",
        Error::Conditioning(_) => "conditioning",
        Error::Eigensolver(_) => "eigensolver",
        Error::Blowup { .. } => "blowup",
        Error::Parse { .. } => "parse",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train(args),
        Command::Forecast(args) => forecast(args),
        Command::SweepContext(args) => sweep(args, true),
        Command::SweepTemperature(args) => sweep(args, false),
        Command::IcpcaDemo(args) => icpca_demo(args),
        Command::Metrics(args) => metrics(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    if let Some(path) = &args.source.config {
        let cfg = ExperimentConfig::from_toml_path(path)?;
        let prep = prepare(&cfg)?;
        harness::export_trajectory(&prep, &args.out)?;
        println!(
            "{}",
            serde_json::json!({
                "out": args.out, "samples": prep.full.len(), "dim": prep.full.dim(),
                "dt": prep.full.dt(), "split_index": prep.split_index,
            })
        );
        return Ok(());
    }

    let series = if let Some(n) = args.source.seasonal {
        harness::seasonal_load(n, args.seed)
    } else {
        let name = args.source.system.as_deref().expect("clap group");
        let system = OdeSystem::from_name(name)?;
        let dt = args.dt.unwrap_or_else(|| system.default_dt());
        let traj = TrajectoryConfig::new(dt, args.n_steps, args.burn_in, args.seed);
        let full = integrate(&system, &traj)?;
        match args.decimate {
            Some(k) => full.decimate(k)?,
            None => full,
        }
    };
    series.save_csv(&args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out, "samples": series.len(), "dim": series.dim(), "dt": series.dt(),
        })
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_toml_path(&args.config)?;
    let prep = prepare(&cfg)?;
    let model = harness::train(&cfg, &prep)?;
    model.save(&args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out, "window": model.window, "rank": cfg.model.rank,
            "train_windows": model.encoder.n_train(), "train_hash": model.train_hash,
        })
    );
    Ok(())
}

fn forecast(args: ForecastArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let method = Method::from_name(&args.method)?;
    let prep = prepare(&model.config)?;
    if prep.train_hash != model.train_hash {
        return Err(Error::Config(
            "model artifact was trained on different data than its config prepares".into(),
        ));
    }
    let context_len = args.context_multiple * model.window;
    if args.start < context_len {
        return Err(Error::InvalidArgument(format!(
            "start {} leaves no room for a context of {} samples",
            args.start, context_len
        )));
    }
    let horizon = args.horizon.unwrap_or(model.config.sweep.horizon);
    if args.start + horizon > prep.test.nrows() {
        return Err(Error::InvalidArgument(format!(
            "start {} plus horizon {horizon} exceeds the test segment ({} samples)",
            args.start,
            prep.test.nrows()
        )));
    }

    let cfg = &model.config;
    let rollout_cfg = RolloutConfig {
        horizon,
        method,
        context_length: context_len,
        icm: IcmConfig {
            kernel: lisa::gplm::RbfKernel {
                beta: 1.0,
                epsilon: model.icm_epsilon,
            },
            sigma2: cfg.icm.sigma2,
            tau2: cfg.icm.tau2,
            k0: cfg.icm.k0,
            gain: cfg.icm.gain,
            temperature: args.temperature,
            mode: lisa::icm::IcmMode::None, // the method picks its own mode
        },
        stochastic: cfg.icm.stochastic,
        seed: cfg.seed,
    };
    let prefix = prep
        .test
        .slice(ndarray::s![args.start - context_len..args.start, ..]);
    let fc = roll(prefix, &model.encoder, &model.decoder, &rollout_cfg)?;
    export_forecast(&args.out, &model, &prep, args.start, &fc)?;
    if let Some(path) = &args.diagnostics {
        fc.save_csv(path)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "out": args.out, "method": method.name(), "start": args.start,
            "context_len": context_len, "steps": fc.values.nrows(),
            "diverged_at": fc.divergence,
        })
    );
    Ok(())
}

fn sweep(args: SweepArgs, context: bool) -> Result<()> {
    let cfg = ExperimentConfig::from_toml_path(&args.config)?;
    let model = match &args.model {
        Some(path) => Some(TrainedModel::load(path)?),
        None => None,
    };
    let (result, _) = if context {
        run_context_sweep(&cfg, model, Some(&args.out_dir))?
    } else {
        run_temperature_sweep(&cfg, model, Some(&args.out_dir))?
    };
    println!(
        "{}",
        serde_json::json!({
            "out_dir": args.out_dir, "rows": result.rows.len(),
            "starts": result.starts, "with_replacement": result.starts_with_replacement,
        })
    );
    Ok(())
}

fn icpca_demo(args: IcpcaDemoArgs) -> Result<()> {
    let contexts = args
        .contexts
        .split(',')
        .map(|s| {
            s.trim().parse::<usize>().map_err(|e| {
                Error::InvalidArgument(format!("bad context size {:?}: {e}", s.trim()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = lisa::icpca::adaptation_demo(
        args.dim,
        args.rank,
        args.train_samples,
        &contexts,
        args.eval_samples,
        args.seed,
    )?;
    let mut text = String::from("context_len,plug_in_err,oracle_err\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{}\n",
            row.context_len,
            fmt_f64(row.plug_in_err),
            fmt_f64(row.oracle_err)
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let forecast = harness::ingest_csv(&args.forecast, false)?;
    let truth = harness::ingest_csv(&args.truth, false)?;
    let divergence = match args.divergence.as_str() {
        "js" => DivergenceKind::Js,
        "kl" => DivergenceKind::Kl,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown divergence {other:?}; expected js or kl"
            )))
        }
    };
    let cfg = MetricConfig {
        divergence,
        tau_max: args.tau_max,
        mmd_seed: args.mmd_seed,
        ..MetricConfig::default()
    };
    let report = evaluate(forecast.data().view(), truth.data().view(), &cfg)?;
    let record = report.flat_record();
    let header: Vec<&str> = record.iter().map(|(k, _)| *k).collect();
    let values: Vec<&str> = record.iter().map(|(_, v)| v.as_str()).collect();
    println!("{}", header.join(","));
    println!("{}", values.join(","));
    Ok(())
}
