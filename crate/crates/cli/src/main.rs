//! `slatelab`: simulate, ingest, train, evaluate and run experiments.

mod settings;

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slatelab::cvae::{ConditioningMode, PriorMode};
use slatelab::format::{read_dataset, write_dataset};
use slatelab::harness::experiment::{run_experiment, ExperimentSpec, Scenario};
use slatelab::harness::report::{aggregate_runs, read_report, write_report, EvalRecord, RunId};
use slatelab::harness::{evaluate_policy, load_policy, train_policy, PolicyTraining};
use slatelab::ingest::{ingest, IngestConfig, Windowing};
use slatelab::rng::stream;
use slatelab::{train_response_model, FeatureSpace, PolicyKind, ResponseConfig, ResponseModel, SimConfig, SimEnvironment};
use slatelab_autodiff::Checkpoint;

use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "slatelab", version, about = "Slate generation experiments: simulator, List-CVAE and ranking baselines")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` file; every flag has a twin key of the same name.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a slate dataset from the click simulator.
    Simulate(SimulateArgs),
    /// Build a slate dataset from YOOCHOOSE-style click and buy logs.
    Ingest(IngestArgs),
    /// Train the response model, List-CVAE or a ranking baseline.
    Train(TrainArgs),
    /// Evaluate a trained policy against a response model.
    Eval(EvalArgs),
    /// Run a scenario preset end to end and write its report.
    Experiment(ExperimentArgs),
    /// Aggregate per-run report rows into means and confidence intervals.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    mu_w: Option<f64>,
    #[arg(long)]
    sigma_w: Option<f64>,
    /// Leave out each document's interaction with itself.
    #[arg(long)]
    no_self_interaction: bool,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    clicks: Option<PathBuf>,
    #[arg(long)]
    buys: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    corpus_cap: Option<usize>,
    #[arg(long)]
    zero_fraction: Option<f64>,
    /// `non-overlapping` or `sliding`.
    #[arg(long)]
    windowing: Option<String>,
    /// Where to write `new_id original_id` lines.
    #[arg(long)]
    id_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `response-model`, `list-cvae` or a ranker name.
    model: String,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Response-model checkpoint supplying document (and user) embeddings.
    #[arg(long)]
    response_model: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// `full` or `sum`.
    #[arg(long)]
    conditioning: Option<String>,
    /// `learned` or `fixed`.
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    negative_budget: Option<usize>,
    /// Also write the response model's document embeddings here.
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    policy: Option<String>,
    /// Policy checkpoint (not needed for `random`).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    response_model: Option<PathBuf>,
    /// Training set, needed by `random`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// small, medium, large, generalization, personalization or latent-sweep.
    scenario: String,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    oracle_size: Option<usize>,
    #[arg(long)]
    oracle_steps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    corpus_factor: Option<usize>,
    #[arg(long)]
    negative_budget: Option<usize>,
    /// Comma-separated policy names.
    #[arg(long)]
    policies: Option<String>,
    /// Logged dataset to use instead of the simulator.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report CSV files to combine.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let seed = settings.pick(cli.seed, "seed", 0)?;
    let out = settings.pick_opt(cli.out.clone(), "out")?;
    let text = match cli.command {
        Command::Simulate(a) => simulate(&settings, a, seed)?,
        Command::Ingest(a) => ingest_logs(&settings, a, seed)?,
        Command::Train(a) => {
            let out = out.context("train needs --out for the checkpoint")?;
            return train(&settings, a, seed, &out);
        }
        Command::Eval(a) => eval(&settings, a, seed)?,
        Command::Experiment(a) => experiment(&settings, a, seed)?,
        Command::Report(a) => report(a)?,
    };
    emit(out.as_deref(), &text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to standard output"),
    }
}

fn simulate(s: &Settings, a: SimulateArgs, seed: u64) -> Result<String> {
    let mut cfg = SimConfig::new(s.pick(a.n, "n", 100)?, s.pick(a.k, "k", 10)?, seed);
    cfg.users = s.pick(a.users, "users", 0)?;
    cfg.mu_w = s.pick(a.mu_w, "mu-w", cfg.mu_w)?;
    cfg.sigma_w = s.pick(a.sigma_w, "sigma-w", cfg.sigma_w)?;
    cfg.self_interaction = !a.no_self_interaction && s.pick(None, "self-interaction", true)?;
    let count = s.pick(a.count, "count", 100_000)?;
    let env = SimEnvironment::new(cfg)?;
    let ds = env.sample_dataset(count, &mut stream(seed, "simulate"))?;
    Ok(write_dataset(&ds))
}

fn ingest_logs(s: &Settings, a: IngestArgs, seed: u64) -> Result<String> {
    let defaults = IngestConfig::default();
    let cfg = IngestConfig {
        k: s.pick(a.k, "k", defaults.k)?,
        corpus_cap: s.pick(a.corpus_cap, "corpus-cap", defaults.corpus_cap)?,
        zero_fraction: s.pick(a.zero_fraction, "zero-fraction", defaults.zero_fraction)?,
        windowing: Windowing::parse(&s.pick(a.windowing, "windowing", defaults.windowing.name().to_string())?)?,
        seed,
    };
    let clicks = s.pick_opt(a.clicks, "clicks")?.context("ingest needs --clicks")?;
    let buys = s.pick_opt(a.buys, "buys")?.context("ingest needs --buys")?;
    let open = |p: &Path| std::fs::File::open(p).map(BufReader::new).with_context(|| format!("opening {}", p.display()));
    let out = ingest(open(&clicks)?, open(&buys)?, &cfg).with_context(|| format!("ingesting {}", clicks.display()))?;
    eprintln!(
        "{} slates over {} documents; dropped {} with rare items and {} zero-response slates",
        out.dataset.len(),
        out.dataset.n,
        out.dropped_for_rare_items,
        out.dropped_zero_response
    );
    if let Some(path) = s.pick_opt(a.id_map, "id-map")? {
        emit(Some(&path), &out.id_map_text())?;
    }
    Ok(write_dataset(&out.dataset))
}

fn load_dataset(path: &Path) -> Result<Arc<slatelab::SlateDataset>> {
    Ok(Arc::new(read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?))
}

fn load_response(path: &Path) -> Result<ResponseModel> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Ok(ResponseModel::from_checkpoint(&ckpt)?)
}

fn features_of(model: &ResponseModel) -> Result<FeatureSpace> {
    Ok(FeatureSpace::new(Arc::new(model.document_embeddings()?), model.user_table().map(Arc::new)))
}

fn train(s: &Settings, a: TrainArgs, seed: u64, out: &Path) -> Result<()> {
    let data = load_dataset(&s.pick_opt(a.data, "data")?.context("train needs --data")?)?;
    if a.model == "response-model" {
        let defaults = ResponseConfig::default();
        let cfg = ResponseConfig {
            steps: s.pick(a.steps, "steps", defaults.steps)?,
            batch_size: s.pick(a.batch_size, "batch-size", defaults.batch_size)?,
            hidden: s.pick(a.hidden, "hidden", defaults.hidden)?,
            seed,
            ..defaults
        };
        let trained = train_response_model(&data, &cfg)?;
        trained.model.to_checkpoint().save(out)?;
        if let Some(path) = s.pick_opt(a.embeddings_out, "embeddings-out")? {
            trained.model.document_embeddings()?.save(&path)?;
        }
        eprintln!("final training loss {:?}", trained.losses.last().copied().unwrap_or(f64::NAN));
        return Ok(());
    }
    let kind = PolicyKind::parse(&a.model)?;
    let oracle = load_response(&s.pick_opt(a.response_model, "response-model")?.context("train needs --response-model for embeddings")?)?;
    let features = features_of(&oracle)?;
    let mut cfg = PolicyTraining { steps: s.pick(a.steps, "steps", 2000)?, seed, ..PolicyTraining::default() };
    if let Some(b) = s.pick_opt(a.batch_size, "batch-size")? {
        cfg.cvae.batch_size = b;
        cfg.pointwise.batch_size = b;
        cfg.sequence.batch_size = b;
    }
    if let Some(h) = s.pick_opt(a.hidden, "hidden")? {
        cfg.cvae.hidden = h;
        cfg.pointwise.hidden = h;
    }
    cfg.cvae.latent_dim = s.pick(a.latent_dim, "latent-dim", cfg.cvae.latent_dim)?;
    if let Some(c) = s.pick_opt(a.conditioning, "conditioning")? {
        cfg.cvae.conditioning = ConditioningMode::parse(&c)?;
    }
    if let Some(p) = s.pick_opt::<String>(a.prior, "prior")? {
        cfg.cvae.prior = PriorMode::parse(&p)?;
    }
    cfg.cvae.negative_budget = s.pick_opt(a.negative_budget, "negative-budget")?;
    match train_policy(kind, &features, data, &cfg)? {
        Some(ckpt) => ckpt.save(out)?,
        None => bail!("{kind} has no trainable model; evaluate it directly with --data"),
    }
    Ok(())
}

fn eval(s: &Settings, a: EvalArgs, seed: u64) -> Result<String> {
    let kind = PolicyKind::parse(&s.pick_opt(a.policy, "policy")?.context("eval needs --policy")?)?;
    let oracle = load_response(&s.pick_opt(a.response_model, "response-model")?.context("eval needs --response-model")?)?;
    let features = features_of(&oracle)?;
    let ckpt = match s.pick_opt(a.model, "model")? {
        Some(p) => Some(Checkpoint::load(&p).with_context(|| format!("reading checkpoint {}", p.display()))?),
        None => None,
    };
    let data = match s.pick_opt(a.data, "data")? {
        Some(p) => Some(load_dataset(&p)?),
        None => None,
    };
    let policy = load_policy(kind, ckpt.as_ref(), &features, data.as_deref())?;
    let samples = s.pick(a.samples, "samples", 10_000)?;
    let ev = evaluate_policy(policy.as_ref(), &oracle, samples, &mut stream(seed, kind.name()))?;
    let step = ckpt.as_ref().and_then(|c| c.meta_parse::<usize>("trained_steps").ok()).unwrap_or(0);
    let record = EvalRecord {
        scenario: "eval".into(),
        policy: kind.name().into(),
        run: RunId::Index(0),
        step,
        mean: ev.mean,
        ci: Some(ev.interval()),
        samples: ev.samples,
    };
    Ok(write_report(&[record]))
}

fn experiment(s: &Settings, a: ExperimentArgs, seed: u64) -> Result<String> {
    let scenario = Scenario::parse(&a.scenario)?;
    let mut spec = ExperimentSpec::preset(scenario);
    spec.seed = seed;
    spec.runs = s.pick(a.runs, "runs", spec.runs)?;
    spec.steps = s.pick(a.steps, "steps", spec.steps)?;
    spec.eval_samples = s.pick(a.eval_samples, "eval-samples", spec.eval_samples)?;
    spec.train_size = s.pick(a.train_size, "train-size", spec.train_size)?;
    spec.oracle_size = s.pick(a.oracle_size, "oracle-size", spec.oracle_size)?;
    spec.response.steps = s.pick(a.oracle_steps, "oracle-steps", spec.response.steps)?;
    spec.n = s.pick(a.n, "n", spec.n)?;
    spec.k = s.pick(a.k, "k", spec.k)?;
    spec.h = s.pick_opt(a.h, "h")?.or(spec.h);
    spec.users = s.pick(a.users, "users", spec.users)?;
    spec.corpus_factor = s.pick(a.corpus_factor, "corpus-factor", spec.corpus_factor)?;
    if let Some(b) = s.pick_opt(a.negative_budget, "negative-budget")? {
        spec.cvae.negative_budget = Some(b);
    }
    if let Some(list) = s.pick_opt::<String>(a.policies, "policies")? {
        spec.policies = list.split(',').map(|p| PolicyKind::parse(p.trim())).collect::<Result<_, _>>()?;
    }
    if let Some(path) = s.pick_opt(a.data, "data")? {
        spec.dataset = Some(load_dataset(&path)?);
    }
    let report = run_experiment(&spec)?;
    Ok(write_report(&report.all_records()))
}

fn report(a: ReportArgs) -> Result<String> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        rows.extend(read_report(path).with_context(|| format!("reading report {}", path.display()))?);
    }
    let per_run: Vec<EvalRecord> = rows.into_iter().filter(|r| r.run != RunId::All).collect();
    if per_run.is_empty() {
        bail!("no per-run rows to aggregate");
    }
    Ok(write_report(&aggregate_runs(&per_run)))
}
