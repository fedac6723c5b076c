use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use poisson_gibbs::experiment::{self, merge_config, read_config_file, RawConfig, SweepGrid};
use poisson_gibbs::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "poisson-gibbs", version, about = "Minibatched Gibbs samplers on factor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run(RunArgs),
    /// Run the cartesian product of comma-separated lambda, lambda-mult, m and k lists.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// File of `key = <json>` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name (potts, potts-full, spin, spin-full, spin2, gmm, gmm-full, toy:<name>) or a JSON model file.
    #[arg(long)]
    model: Option<String>,
    /// gibbs, poisson-gibbs, pgits, pgda, gibbs-its, gibbs-da, rejection, poisson-mh, mh.
    #[arg(long)]
    sampler: Option<String>,
    /// random (default) or systematic; systematic excludes checks and MH samplers.
    #[arg(long)]
    scan: Option<String>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write a metrics row every this many iterations.
    #[arg(long)]
    every: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// gap-bound, reversibility, stationarity, aux-marginal; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    check: Vec<String>,
    /// Draws per state for transition-matrix checks, or per tuple for aux-marginal.
    #[arg(long)]
    draws_per_state: Option<usize>,
    /// Proposal as JSON, e.g. '{"kind":"gaussian","scale":0.45}'.
    #[arg(long)]
    proposal: Option<String>,
    /// Rejection envelope as JSON, e.g. '{"kind":"log_constant","log_w":3}'.
    #[arg(long)]
    envelope: Option<String>,
    #[arg(long)]
    max_trials: Option<u64>,
    /// Also write the state at every recorded iteration.
    #[arg(long)]
    dump_samples: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Absolute minibatch intensity.
    #[arg(long, conflicts_with = "lambda_mult")]
    lambda: Option<f64>,
    /// Minibatch intensity as a multiple of L².
    #[arg(long)]
    lambda_mult: Option<f64>,
    /// Chebyshev degree of the energy (or density) interpolant.
    #[arg(long)]
    m: Option<usize>,
    /// Chebyshev degree of the density interpolant in the double approximation.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    lambda_mult: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    k: Option<String>,
}

fn parse_list<T: std::str::FromStr>(name: &str, text: &Option<String>) -> Result<Option<Vec<T>>, Error> {
    let Some(text) = text else {
        return Ok(None);
    };
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("bad {name} value '{s}'"))))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn json_arg(name: &str, text: &Option<String>) -> Result<Option<Value>, Error> {
    text.as_deref()
        .map(|t| serde_json::from_str(t).map_err(|e| Error::Config(format!("--{name}: {e}"))))
        .transpose()
}

fn model_value(model: &Option<String>) -> Result<Option<Value>, Error> {
    match model {
        None => Ok(None),
        Some(m) if Path::new(m).is_file() => {
            let text = std::fs::read_to_string(m)?;
            Ok(Some(serde_json::from_str(&text).map_err(|e| Error::Config(format!("{m}: {e}")))?))
        }
        Some(m) => Ok(Some(Value::String(m.clone()))),
    }
}

fn common_flags(c: &Common) -> Result<BTreeMap<&'static str, Option<Value>>, Error> {
    Ok(BTreeMap::from([
        ("model", model_value(&c.model)?),
        ("sampler", c.sampler.clone().map(Value::String)),
        ("scan", c.scan.clone().map(Value::String)),
        ("iters", c.iters.map(|v| json!(v))),
        ("chains", c.chains.map(|v| json!(v))),
        ("seed", c.seed.map(|v| json!(v))),
        ("every", c.every.map(|v| json!(v))),
        ("out", c.out.as_ref().map(|p| json!(p))),
        ("check", (!c.check.is_empty()).then(|| json!(c.check))),
        ("draws-per-state", c.draws_per_state.map(|v| json!(v))),
        ("proposal", json_arg("proposal", &c.proposal)?),
        ("envelope", json_arg("envelope", &c.envelope)?),
        ("max-trials", c.max_trials.map(|v| json!(v))),
        ("dump-samples", c.dump_samples.then_some(json!(true))),
    ]))
}

fn load(c: &Common, extra: BTreeMap<&'static str, Option<Value>>) -> Result<RawConfig, Error> {
    let base = match &c.config {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    let mut flags = common_flags(c)?;
    flags.extend(extra);
    merge_config(base, experiment::flag_map(flags))
}

fn report(checks: &[experiment::CheckOutcome]) -> bool {
    for c in checks {
        println!("{}", c.line());
    }
    checks.iter().all(|c| c.pass)
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run(args) => {
            let raw = load(
                &args.common,
                BTreeMap::from([
                    ("lambda", args.lambda.map(|v| json!(v))),
                    ("lambda-mult", args.lambda_mult.map(|v| json!(v))),
                    ("m", args.m.map(|v| json!(v))),
                    ("k", args.k.map(|v| json!(v))),
                ]),
            )?;
            let (cfg, outcome) = experiment::run(raw)?;
            log::info!(
                "{} on {}: {} chains x {} iterations in {:.2}s, output in {}",
                cfg.sampler.kind,
                cfg.model_name,
                cfg.chains,
                cfg.iters,
                outcome.seconds,
                cfg.out.display()
            );
            Ok(report(&outcome.checks))
        }
        Command::Sweep(args) => {
            let grid = SweepGrid {
                lambda: parse_list("lambda", &args.lambda)?,
                lambda_mult: parse_list("lambda-mult", &args.lambda_mult)?,
                m: parse_list("m", &args.m)?,
                k: parse_list("k", &args.k)?,
            };
            let raw = load(&args.common, BTreeMap::new())?;
            let results = experiment::sweep(raw, &grid)?;
            log::info!("sweep finished: {} cells", results.len());
            let mut pass = true;
            for (_, outcome) in &results {
                pass &= report(&outcome.checks);
            }
            Ok(pass)
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::UnknownModel(_)
            | Error::InvalidParameter(_)
            | Error::InvalidModel(_)
            | Error::InvalidDomain(_)
            | Error::WrongDomain { .. }
            | Error::DegenerateModel
            | Error::StateSpaceTooLarge { .. }
            | Error::Json(_)
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { EXIT_CONFIG } else { 1 })
        }
    }
}
