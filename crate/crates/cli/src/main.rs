//! `cascade`: simulate -> train -> predict -> evaluate -> report, plus the
//! advisory HTTP service.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascade_advisory::ServiceConfig;
use cascade_core::cascade::Policy;
use cascade_core::grid::native::Dialect;
use cascade_core::influence::PredictionMode;
use cascade_core::pipeline::{self, RunConfig};
use cascade_core::{Error, ErrorBody, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Cascading-failure simulation and flow-free influence-model prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Monte Carlo pool per loading level.
    Simulate(SimulateArgs),
    /// Train link and load-shed influence models on pools.
    Train(TrainArgs),
    /// Predict the cascade and load shedding for one contingency.
    Predict(PredictArgs),
    /// Score a model on pools.
    Evaluate(EvaluateArgs),
    /// Write loss / accuracy tables, heat maps and criticality.
    Report(ReportArgs),
    /// Run the advisory HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct CaseArgs {
    /// Case file (MATPOWER `.m` or native JSON), or `ieee30`.
    #[arg(long, default_value = pipeline::BUILTIN_IEEE30)]
    case: String,
    /// Case dialect: matpower-m or native-json (guessed from the extension).
    #[arg(long)]
    dialect: Option<Dialect>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Loading multipliers, comma separated (default: 0.9,1.0,...,1.8).
    #[arg(long, value_delimiter = ',')]
    loading: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Training share of each pool.
    #[arg(long, default_value_t = 0.9)]
    split: f64,
}

#[derive(Args)]
struct AlphaArgs {
    #[arg(long = "alpha-d", default_value_t = 0.9)]
    alpha_d: f64,
    #[arg(long = "alpha-e", default_value_t = 0.9)]
    alpha_e: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "none")]
    policy: Policy,
    /// Pool file for one level, directory for several.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Pool file(s); a model trained on several pools covers all their levels.
    #[arg(long, required = true)]
    pool: Vec<PathBuf>,
    #[command(flatten)]
    alpha: AlphaArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Two 1-based branch ids, e.g. "3,17".
    #[arg(long)]
    contingency: String,
    #[arg(long)]
    loading: f64,
    #[arg(long, default_value = "advisory")]
    mode: PredictionMode,
    /// Pool holding the observed cascade (eval mode).
    #[arg(long)]
    states: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required = true)]
    pool: Vec<PathBuf>,
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run the whole pipeline from the case instead of reading artifacts.
    #[arg(long)]
    all: bool,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    alpha: AlphaArgs,
    /// Policies for --all (default: all three).
    #[arg(long)]
    policy: Vec<Policy>,
    #[arg(long, required_unless_present = "all")]
    model: Option<PathBuf>,
    #[arg(long)]
    pool: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long = "store-dir", default_value = "store")]
    store_dir: PathBuf,
    /// Built UI assets to serve under `/`.
    #[arg(long = "static-dir")]
    static_dir: Option<PathBuf>,
    /// Allowed browser origin (any when omitted).
    #[arg(long = "cors-origin")]
    cors_origin: Option<String>,
}

fn run_config(sim: &SimArgs, alpha: Option<&AlphaArgs>, policy: Policy) -> RunConfig {
    let mut cfg = RunConfig {
        case: sim.case.case.clone(),
        dialect: sim.case.dialect,
        policy,
        samples: sim.samples,
        seed: sim.seed,
        split: sim.split,
        ..RunConfig::default()
    };
    if !sim.loading.is_empty() {
        cfg.loading = sim.loading.clone();
    }
    if let Some(a) = alpha {
        cfg.alpha_d = a.alpha_d;
        cfg.alpha_e = a.alpha_e;
    }
    cfg
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = run_config(&a.sim, None, a.policy);
            let manifests = pipeline::cmd_simulate(&cfg, &a.out)?;
            let summary: Vec<_> = manifests
                .iter()
                .map(|m| serde_json::json!({ "loading_c": m.loading_c, "n_samples": m.n_samples, "skipped": m.skipped }))
                .collect();
            print_json(&summary)
        }
        Command::Train(a) => {
            let cfg = RunConfig { alpha_d: a.alpha.alpha_d, alpha_e: a.alpha.alpha_e, ..RunConfig::default() };
            let model = pipeline::cmd_train(&cfg, &a.pool, &a.out)?;
            print_json(&model.provenance)
        }
        Command::Predict(a) => {
            let p = pipeline::cmd_predict(&a.model, &a.contingency, a.loading, a.mode, a.states.as_deref())?;
            match &a.out {
                Some(path) => pipeline::write_json_compact(path, &p),
                None => emit(&serde_json::to_string(&p)?),
            }
        }
        Command::Evaluate(a) => {
            let net = pipeline::load_case(&a.case.case, a.case.dialect)?;
            let report = pipeline::cmd_evaluate(&a.model, &a.pool, &net, &a.out)?;
            let metrics: Vec<_> = report.levels.iter().map(|l| &l.metrics).collect();
            print_json(&metrics)
        }
        Command::Report(a) => {
            let report = if a.all {
                let policies = if a.policy.is_empty() { Policy::ALL.to_vec() } else { a.policy.clone() };
                let cfg = run_config(&a.sim, Some(&a.alpha), policies[0]);
                pipeline::cmd_report_all(&cfg, &policies, &a.out)?
            } else {
                let model = a.model.as_deref().expect("clap enforces --model");
                if a.pool.is_empty() {
                    return Err(Error::Config("report needs --pool unless --all is given".into()));
                }
                let net = pipeline::load_case(&a.sim.case.case, a.sim.case.dialect)?;
                pipeline::cmd_report(model, &a.pool, &net, &a.out)?
            };
            print_json(&report.series)
        }
        Command::Serve(a) => serve(a),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    if !Path::new(&a.store_dir).is_dir() {
        return Err(Error::Config(format!("store directory {} does not exist", a.store_dir.display())));
    }
    let cfg = ServiceConfig { store_dir: a.store_dir, static_dir: a.static_dir, cors_origin: a.cors_origin };
    let addr = SocketAddr::from(([0, 0, 0, 0], a.port));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(cascade_advisory::serve(cfg, addr))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CASCADE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = ErrorBody::from(&e);
            eprintln!("{}", serde_json::to_string(&body).expect("error body serializes"));
            ExitCode::FAILURE
        }
    }
}
