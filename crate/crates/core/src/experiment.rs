//! Config resolution, chain execution and report writing for the runner.
//!
//! A config is a flat map from keys to JSON values. Files hold one
//! `key = <json>` pair per line (`#` starts a comment); command-line flags
//! override file keys. Outputs are a metrics CSV, a manifest echoing the
//! resolved config, and optionally a checks CSV and raw samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::auxiliary::{build_aux_tables, MinibatchConfig};
use crate::continuous::Envelope;
use crate::diagnostics::{
    aux_marginal_test, check_detailed_balance, check_gibbs_gap_bound, check_mh_gap_bound, check_stationarity,
    enumerate_states, estimate_transition_matrix, exact_distribution, joint_reference, marginal_error_against,
    symmetric_kl, ChainReport, Histogram2d,
};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, GraphStats, State};
use crate::mh::ProposalKernel;
use crate::models::ModelSpec;
use crate::rng::{chain_rng, ChainRng};
use crate::sampler::{Sampler, SamplerKind, SamplerSettings, Scan};

/// Gaussian random-walk scale used when no proposal is configured.
pub const DEFAULT_GAUSSIAN_SCALE: f64 = 0.45;
/// Bins per dimension for histogram metrics.
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    GapBound,
    Reversibility,
    Stationarity,
    AuxMarginal,
}

impl FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string())).map_err(|_| Error::Config(format!("unknown check '{s}'")))
    }
}

/// A preset name or an inline model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(String),
    Spec(ModelSpec),
}

/// Unresolved configuration; every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RawConfig {
    pub model: Option<ModelChoice>,
    pub sampler: Option<String>,
    pub scan: Option<Scan>,
    pub lambda: Option<f64>,
    pub lambda_mult: Option<f64>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub iters: Option<u64>,
    pub chains: Option<usize>,
    pub seed: Option<u64>,
    pub every: Option<u64>,
    pub out: Option<PathBuf>,
    pub check: Option<Vec<String>>,
    pub proposal: Option<ProposalKernel>,
    pub envelope: Option<Envelope>,
    pub max_trials: Option<u64>,
    pub draws_per_state: Option<usize>,
    pub dump_samples: Option<bool>,
}

/// Parses `key = <json>` lines into a map. Keys accept `-` or `_`. Values
/// that are not valid JSON are taken as bare strings.
pub fn parse_config_text(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        map.insert(key, parsed);
    }
    Ok(map)
}

/// Merges `overrides` on top of `base` and deserializes the result.
pub fn merge_config(base: Map<String, Value>, overrides: Map<String, Value>) -> Result<RawConfig> {
    let mut merged = base;
    for (k, v) in overrides {
        merged.insert(k.replace('_', "-"), v);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))
}

/// Fully resolved configuration, echoed verbatim in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model_name: String,
    pub model: ModelSpec,
    pub sampler: SamplerSettings,
    pub scan: Scan,
    /// `λ / L²`, recorded alongside the absolute value.
    pub lambda_mult: f64,
    pub iters: u64,
    pub chains: usize,
    pub seed: u64,
    pub every: u64,
    pub out: PathBuf,
    pub checks: Vec<CheckKind>,
    pub draws_per_state: usize,
    pub dump_samples: bool,
}

impl RawConfig {
    /// Fills defaults and builds the model so that `λ` can be resolved
    /// against `L`.
    pub fn resolve(self) -> Result<(RunConfig, FactorGraph)> {
        let (model_name, model) = match self.model {
            None => return Err(Error::Config("no model given".into())),
            Some(ModelChoice::Preset(name)) => {
                let spec = ModelSpec::preset(&name).map_err(|e| Error::Config(e.to_string()))?;
                (name, spec)
            }
            Some(ModelChoice::Spec(spec)) => ("custom".to_string(), spec),
        };
        let graph = model.build()?;
        let l = graph.stats().local_max_energy;
        let hints = model.hints(l);
        let kind: SamplerKind = self.sampler.as_deref().unwrap_or("gibbs").parse()?;
        let (lambda, lambda_mult) = match (self.lambda, self.lambda_mult) {
            (Some(_), Some(_)) => return Err(Error::Config("give either lambda or lambda-mult, not both".into())),
            (Some(lambda), None) => (lambda, if l > 0.0 { lambda / (l * l) } else { 0.0 }),
            (None, mult) => {
                let mult = mult.unwrap_or(hints.lambda_mult);
                (mult * l * l, mult)
            }
        };
        if kind.is_minibatched() && !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("{kind} needs lambda > 0 (L = {l})")));
        }
        let proposal = self.proposal.unwrap_or(if graph.domain().is_discrete() {
            ProposalKernel::SingleSite
        } else {
            ProposalKernel::Gaussian { scale: DEFAULT_GAUSSIAN_SCALE }
        });
        let iters = self.iters.unwrap_or(10_000);
        let chains = self.chains.unwrap_or(1);
        if chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        let every = self.every.unwrap_or((iters / 100).max(1));
        if every == 0 {
            return Err(Error::Config("every must be at least 1".into()));
        }
        let checks = self
            .check
            .unwrap_or_default()
            .iter()
            .map(|c| c.parse::<CheckKind>())
            .collect::<Result<Vec<_>>>()?;
        let scan = self.scan.unwrap_or_default();
        if scan == Scan::Systematic {
            if matches!(kind, SamplerKind::Mh | SamplerKind::PoissonMh) {
                return Err(Error::Config(format!("{kind} proposes joint moves and has no scan order")));
            }
            if !checks.is_empty() {
                return Err(Error::Config("checks assume random scan".into()));
            }
        }
        let sampler = SamplerSettings {
            kind,
            lambda,
            m: self.m.unwrap_or(hints.m),
            k: self.k.unwrap_or(hints.k),
            envelope: self.envelope.unwrap_or(Envelope::LocalBound),
            max_trials: self.max_trials.unwrap_or(1_000_000),
            proposal,
        };
        let config = RunConfig {
            model_name,
            model,
            sampler,
            scan,
            lambda_mult,
            iters,
            chains,
            seed: self.seed.unwrap_or(0),
            every,
            out: self.out.unwrap_or_else(|| PathBuf::from("runs/out")),
            checks,
            draws_per_state: self.draws_per_state.unwrap_or(200_000),
            dump_samples: self.dump_samples.unwrap_or(false),
        };
        Ok((config, graph))
    }
}

/// Convergence metric tracked along each chain.
enum Metric {
    /// Mean `‖p̂_i − target_i‖₂` (exact marginals when enumerable, else uniform).
    MarginalError(Vec<Vec<f64>>),
    /// Symmetric KL of the 2-D sample histogram against a quadrature reference.
    JointKl(Histogram2d),
    /// Running mean of the first coordinate.
    MeanFirst,
}

impl Metric {
    fn for_graph(g: &FactorGraph) -> Result<Metric> {
        let domain = g.domain();
        if let Some(d) = domain.labels() {
            let n = g.num_variables();
            if let (Ok(states), Ok(pi)) = (enumerate_states(g), exact_distribution(g)) {
                let mut target = vec![vec![0.0; d]; n];
                for (x, p) in states.iter().zip(&pi) {
                    for (i, &v) in x.0.iter().enumerate() {
                        target[i][v as usize] += p;
                    }
                }
                return Ok(Metric::MarginalError(target));
            }
            return Ok(Metric::MarginalError(vec![vec![1.0 / d as f64; d]; n]));
        }
        let (a, b) = domain.interval().expect("continuous domain has an interval");
        if g.num_variables() == 2 {
            // sub-grid fine enough for posteriors a few hundredths wide
            let sub = (((b - a) / HISTOGRAM_BINS as f64) / 0.01).ceil() as usize;
            let sub = (sub + sub % 2).max(8);
            let reference = joint_reference(
                |u, v| g.energy(&State::new(vec![u, v])).unwrap_or(f64::NEG_INFINITY),
                (a, b),
                (a, b),
                HISTOGRAM_BINS,
                sub,
                60.0,
            )?;
            return Ok(Metric::JointKl(reference));
        }
        Ok(Metric::MeanFirst)
    }

    fn name(&self) -> &'static str {
        match self {
            Metric::MarginalError(_) => "marginal_error",
            Metric::JointKl(_) => "sym_kl",
            Metric::MeanFirst => "mean_x0",
        }
    }
}

/// One chain's recorded rows and final counters.
#[derive(Clone, Debug)]
pub struct ChainOutcome {
    pub chain: usize,
    pub rows: Vec<MetricRow>,
    pub samples: Vec<(u64, Vec<f64>)>,
    pub report: ChainReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub iteration: u64,
    pub metric: f64,
    pub factor_evals: u64,
    pub acceptance_rate: f64,
    pub mean_minibatch: f64,
}

fn run_chain(g: &FactorGraph, cfg: &RunConfig, metric: &Metric, chain: usize) -> Result<ChainOutcome> {
    let mut rng = chain_rng(cfg.seed, chain as u64);
    let mut x = State::random(g, &mut rng);
    let mut sampler = Sampler::new(g, cfg.sampler)?.with_scan(cfg.scan)?;
    let labels = g.domain().labels();
    let mut report = ChainReport::new(g.num_variables(), labels, false);
    let mut hist = match metric {
        Metric::JointKl(reference) => {
            Some(Histogram2d::new((reference.x.lower, reference.x.upper), (reference.y.lower, reference.y.upper), reference.bins()))
        }
        _ => None,
    };
    let mut first_sum = 0.0;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for it in 1..=cfg.iters {
        let step = sampler.step(&mut x, &mut rng)?;
        report.record(&step, &x);
        if let Some(h) = &mut hist {
            h.add(x.0[0], x.0[1]);
        }
        first_sum += x.0[0];
        if it % cfg.every == 0 || it == cfg.iters {
            let value = match (metric, &hist) {
                (Metric::MarginalError(target), _) => marginal_error_against(&report, target)?,
                (Metric::JointKl(reference), Some(h)) => symmetric_kl(h.counts(), reference.counts())?,
                _ => first_sum / it as f64,
            };
            rows.push(MetricRow {
                iteration: it,
                metric: value,
                factor_evals: report.factor_evals,
                acceptance_rate: report.acceptance_rate(),
                mean_minibatch: report.mean_minibatch(),
            });
            if cfg.dump_samples {
                samples.push((it, x.0.clone()));
            }
        }
    }
    Ok(ChainOutcome { chain, rows, samples, report })
}

/// Result of one correctness check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub lambda: f64,
    pub value: f64,
    pub sigma: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {}: value={:.6} sigma={:.3e} bound={:.6} lambda={:.4} {}",
            if self.pass { "PASS" } else { "FAIL" },
            serde_json::to_value(self.check).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            self.value,
            self.sigma,
            self.bound,
            self.lambda,
            self.detail
        )
    }
}

fn run_check(g: &FactorGraph, cfg: &RunConfig, check: CheckKind) -> Result<CheckOutcome> {
    let lambda = cfg.sampler.lambda;
    let draws = cfg.draws_per_state;
    match check {
        CheckKind::GapBound => {
            let r = if cfg.sampler.kind == SamplerKind::PoissonMh {
                check_mh_gap_bound(g, lambda, draws, cfg.seed)?
            } else {
                check_gibbs_gap_bound(g, lambda, draws, cfg.seed)?
            };
            Ok(CheckOutcome {
                check,
                lambda,
                value: r.gamma_bar,
                sigma: r.sigma,
                bound: r.bound,
                pass: r.pass,
                detail: format!("gamma={:.6} factor={:.6}", r.gamma, r.factor),
            })
        }
        CheckKind::Reversibility | CheckKind::Stationarity => {
            let pi = exact_distribution(g)?;
            let est = estimate_transition_matrix(g, draws, cfg.seed, || {
                let mut sampler = Sampler::new(g, cfg.sampler).expect("settings were validated by the chains");
                move |x: &mut State, rng: &mut ChainRng| sampler.step(x, rng).map(|_| ())
            })?;
            let r = if check == CheckKind::Reversibility {
                check_detailed_balance(&est, &pi, 5.0)
            } else {
                check_stationarity(&est, &pi, 5.0)
            };
            Ok(CheckOutcome {
                check,
                lambda,
                value: r.value,
                sigma: r.sigma,
                bound: 5.0 * r.sigma,
                pass: r.pass,
                detail: format!("sampler={}", cfg.sampler.kind),
            })
        }
        CheckKind::AuxMarginal => {
            let tables = build_aux_tables(g, MinibatchConfig::new(lambda)?)?;
            let mut rng = chain_rng(cfg.seed, u64::MAX);
            let mut worst = f64::INFINITY;
            let mut stat = 0.0;
            for _ in 0..5 {
                let i = rng.random_range(0..g.num_variables());
                let x = State::random(g, &mut rng);
                let t = aux_marginal_test(g, &tables, i, &x.0, draws, &mut rng)?;
                if t.p_value < worst {
                    worst = t.p_value;
                    stat = t.statistic;
                }
            }
            Ok(CheckOutcome {
                check,
                lambda,
                value: worst,
                sigma: 0.0,
                bound: 0.001,
                pass: worst > 0.001,
                detail: format!("min p-value over 5 tuples, chi2={stat:.3}"),
            })
        }
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub chains: Vec<ChainOutcome>,
    pub checks: Vec<CheckOutcome>,
    pub metric_name: &'static str,
    pub stats: GraphStats,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Worker count from `POISSON_GIBBS_THREADS`, else rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("POISSON_GIBBS_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("POISSON_GIBBS_THREADS={v} is not a count")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Runs all chains and checks. Chains fan out over the pool; results are
/// ordered by chain index.
pub fn execute(g: &FactorGraph, cfg: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let metric = Metric::for_graph(g)?;
    let pool = thread_pool()?;
    let chains = pool.install(|| {
        (0..cfg.chains).into_par_iter().map(|c| run_chain(g, cfg, &metric, c)).collect::<Result<Vec<_>>>()
    })?;
    let checks = pool.install(|| cfg.checks.iter().map(|&c| run_check(g, cfg, c)).collect::<Result<Vec<_>>>())?;
    Ok(RunOutcome {
        chains,
        checks,
        metric_name: metric.name(),
        stats: g.stats().clone(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Metrics CSV. Depends only on the config and seed.
pub fn metrics_csv(outcome: &RunOutcome) -> String {
    let mut s = format!("chain,iteration,{},factor_evals,acceptance_rate,mean_minibatch\n", outcome.metric_name);
    for c in &outcome.chains {
        for r in &c.rows {
            let _ = writeln!(
                s,
                "{},{},{:.12e},{},{:.12e},{:.12e}",
                c.chain, r.iteration, r.metric, r.factor_evals, r.acceptance_rate, r.mean_minibatch
            );
        }
    }
    s
}

fn checks_csv(outcome: &RunOutcome) -> String {
    let mut s = String::from("check,lambda,value,sigma,bound,pass,detail\n");
    for c in &outcome.checks {
        let name = serde_json::to_value(c.check).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(
            s,
            "{name},{:.12e},{:.12e},{:.12e},{:.12e},{},\"{}\"",
            c.lambda,
            c.value,
            c.sigma,
            c.bound,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    s
}

fn samples_csv(outcome: &RunOutcome) -> String {
    let mut s = String::from("chain,iteration,state\n");
    for c in &outcome.chains {
        for (it, x) in &c.samples {
            let values: Vec<String> = x.iter().map(|v| format!("{v:.12e}")).collect();
            let _ = writeln!(s, "{},{},{}", c.chain, it, values.join(" "));
        }
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    git_revision: &'static str,
    config: &'a RunConfig,
    graph: GraphSummary<'a>,
    metric: &'static str,
    chains: Vec<ChainSummary>,
    checks: &'a [CheckOutcome],
    /// Informational only; not part of the determinism contract.
    wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct GraphSummary<'a> {
    num_factors: usize,
    num_variables: usize,
    local_max_energy: f64,
    max_degree: usize,
    total_max_energy: f64,
    domain: &'a crate::factor_graph::Domain,
}

#[derive(Serialize)]
struct ChainSummary {
    chain: usize,
    steps: u64,
    factor_evals: u64,
    mean_factor_evals: f64,
    mean_minibatch: f64,
    acceptance_rate: f64,
    mean_accept_prob: f64,
    mean_trials: f64,
}

/// Writes `metrics.csv`, `manifest.json`, and when present `checks.csv`
/// and `samples.csv` into `cfg.out`.
pub fn write_outputs(g: &FactorGraph, cfg: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("metrics.csv"), metrics_csv(outcome))?;
    if !outcome.checks.is_empty() {
        fs::write(cfg.out.join("checks.csv"), checks_csv(outcome))?;
    }
    if cfg.dump_samples {
        fs::write(cfg.out.join("samples.csv"), samples_csv(outcome))?;
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        git_revision: option_env!("POISSON_GIBBS_GIT_REVISION").unwrap_or("unknown"),
        config: cfg,
        graph: GraphSummary {
            num_factors: g.num_factors(),
            num_variables: g.num_variables(),
            local_max_energy: outcome.stats.local_max_energy,
            max_degree: outcome.stats.max_degree,
            total_max_energy: outcome.stats.total_max_energy,
            domain: &outcome.stats.domain,
        },
        metric: outcome.metric_name,
        chains: outcome
            .chains
            .iter()
            .map(|c| ChainSummary {
                chain: c.chain,
                steps: c.report.steps,
                factor_evals: c.report.factor_evals,
                mean_factor_evals: c.report.mean_factor_evals(),
                mean_minibatch: c.report.mean_minibatch(),
                acceptance_rate: c.report.acceptance_rate(),
                mean_accept_prob: c.report.mean_accept_prob(),
                mean_trials: c.report.trials as f64 / c.report.steps.max(1) as f64,
            })
            .collect(),
        checks: &outcome.checks,
        wall_clock_seconds: outcome.seconds,
    };
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Resolves, runs and writes one experiment.
pub fn run(raw: RawConfig) -> Result<(RunConfig, RunOutcome)> {
    let (cfg, g) = raw.resolve()?;
    let outcome = execute(&g, &cfg)?;
    write_outputs(&g, &cfg, &outcome)?;
    Ok((cfg, outcome))
}

/// Values swept over; `None` keeps the base config's value.
#[derive(Clone, Debug, Default)]
pub struct SweepGrid {
    pub lambda: Option<Vec<f64>>,
    pub lambda_mult: Option<Vec<f64>>,
    pub m: Option<Vec<usize>>,
    pub k: Option<Vec<usize>>,
}

fn axis<T: Clone>(values: &Option<Vec<T>>, name: &str) -> Result<Vec<Option<T>>> {
    match values {
        None => Ok(vec![None]),
        Some(v) if v.is_empty() => Err(Error::Config(format!("sweep axis '{name}' is empty"))),
        Some(v) => Ok(v.iter().cloned().map(Some).collect()),
    }
}

/// Runs the cartesian product of the grid, one output directory per cell
/// under `base.out`, plus `index.csv` summarising every cell.
pub fn sweep(base: RawConfig, grid: &SweepGrid) -> Result<Vec<(RunConfig, RunOutcome)>> {
    if grid.lambda.is_some() && grid.lambda_mult.is_some() {
        return Err(Error::Config("sweep either lambda or lambda-mult, not both".into()));
    }
    let root = base.out.clone().unwrap_or_else(|| PathBuf::from("runs/sweep"));
    let lambdas = axis(&grid.lambda, "lambda")?;
    let mults = axis(&grid.lambda_mult, "lambda-mult")?;
    let ms = axis(&grid.m, "m")?;
    let ks = axis(&grid.k, "k")?;
    let mut cells = Vec::new();
    for l in &lambdas {
        for lm in &mults {
            for m in &ms {
                for k in &ks {
                    let mut raw = base.clone();
                    if l.is_some() {
                        raw.lambda = *l;
                        raw.lambda_mult = None;
                    }
                    if lm.is_some() {
                        raw.lambda_mult = *lm;
                        raw.lambda = None;
                    }
                    raw.m = m.or(raw.m);
                    raw.k = k.or(raw.k);
                    raw.out = Some(root.join(format!("cell_{:03}", cells.len())));
                    cells.push(raw);
                }
            }
        }
    }
    let mut results = Vec::with_capacity(cells.len());
    let mut index = String::from("cell,dir,lambda,lambda_mult,m,k,mean_minibatch,mean_factor_evals,acceptance_rate,final_metric\n");
    for (c, raw) in cells.into_iter().enumerate() {
        let (cfg, outcome) = run(raw)?;
        let steps: u64 = outcome.chains.iter().map(|c| c.report.steps).sum::<u64>().max(1);
        let sum = |f: fn(&ChainReport) -> u64| outcome.chains.iter().map(|c| f(&c.report)).sum::<u64>() as f64;
        let final_metric =
            outcome.chains.iter().filter_map(|c| c.rows.last()).map(|r| r.metric).sum::<f64>() / outcome.chains.len() as f64;
        let _ = writeln!(
            index,
            "{c},{},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            cfg.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            cfg.sampler.lambda,
            cfg.lambda_mult,
            cfg.sampler.m,
            cfg.sampler.k,
            sum(|r| r.minibatch_total) / steps as f64,
            sum(|r| r.factor_evals) / steps as f64,
            sum(|r| r.accepted) / steps as f64,
            final_metric
        );
        results.push((cfg, outcome));
    }
    fs::create_dir_all(&root)?;
    fs::write(root.join("index.csv"), index)?;
    Ok(results)
}

/// Reads a config file into a key map.
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    parse_config_text(&fs::read_to_string(path)?)
}

/// Converts `(key, value)` pairs from flags into a key map, skipping unset ones.
pub fn flag_map(pairs: BTreeMap<&str, Option<Value>>) -> Map<String, Value> {
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> RawConfig {
        merge_config(parse_config_text(text).unwrap(), Map::new()).unwrap()
    }

    #[test]
    fn config_text_parses_json_and_bare_values() {
        let map = parse_config_text("# comment\nmodel = toy:ising2x2\nlambda_mult = 2.5\ncheck = [\"gap-bound\"]\n").unwrap();
        assert_eq!(map["model"], Value::String("toy:ising2x2".into()));
        assert_eq!(map["lambda-mult"], serde_json::json!(2.5));
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let mut flags = Map::new();
        flags.insert("seed".into(), serde_json::json!(9));
        let cfg = merge_config(parse_config_text("model = potts\nseed = 1").unwrap(), flags).unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert!(merge_config(parse_config_text("bogus = 1").unwrap(), Map::new()).is_err());
    }

    #[test]
    fn resolution_fills_every_default() {
        let (cfg, g) = raw("model = toy:ising2x2\nsampler = poisson-gibbs").resolve().unwrap();
        let l = g.stats().local_max_energy;
        assert_eq!(cfg.sampler.lambda, l * l);
        assert_eq!(cfg.lambda_mult, 1.0);
        assert_eq!(cfg.every, 100);
        assert_eq!(cfg.sampler.proposal, ProposalKernel::SingleSite);
        let (cfg, _) = raw("model = spin2\nsampler = poisson-mh\nlambda = 3").resolve().unwrap();
        assert_eq!(cfg.sampler.lambda, 3.0);
        assert_eq!(cfg.sampler.proposal, ProposalKernel::Gaussian { scale: DEFAULT_GAUSSIAN_SCALE });
        assert!(raw("model = potts\nlambda = 1\nlambda_mult = 1").resolve().is_err());
        assert!(raw("model = potts\nsampler = slice").resolve().is_err());
        assert!(raw("sampler = gibbs").resolve().is_err());
        assert!(raw("model = toy:chain8\ncheck = [\"nope\"]").resolve().is_err());
    }

    #[test]
    fn inline_model_spec_is_accepted() {
        let (cfg, g) = raw("model = {\"family\": \"toy\", \"name\": \"chain8\"}").resolve().unwrap();
        assert_eq!(cfg.model_name, "custom");
        assert_eq!(g.num_variables(), 1);
    }

    #[test]
    fn metrics_are_deterministic() {
        let (cfg, g) = raw("model = toy:chain8\nsampler = poisson-gibbs\niters = 500\nchains = 2\nseed = 4").resolve().unwrap();
        let a = metrics_csv(&execute(&g, &cfg).unwrap());
        let b = metrics_csv(&execute(&g, &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 2 * 100);
    }

    #[test]
    fn empty_sweep_axis_is_an_error() {
        let grid = SweepGrid { m: Some(vec![]), ..Default::default() };
        assert!(matches!(sweep(raw("model = spin2"), &grid), Err(Error::Config(_))));
    }
}
