use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use harness::{emit_action_histogram, run_experiment, run_lambda_sweep, Algorithm, Environment, RunConfig};
use linexplore::environments::{gen_standin, ingest_rank_dataset, ContextBundle, RankDatasetSpec, StandInSpec};
use linexplore::estimator::{evaluate, ridge_fit, EstimateArtifact, RidgeEstimate};
use linexplore::lab::{verify_lemmas, VerifyOptions};
use linexplore::planner::{plan, MixturePolicy};
use linexplore::sampler::{
    read_dataset_binary, read_dataset_csv, sample_stream, write_dataset_binary, write_dataset_csv,
};
use linexplore::{stream_rng, streams, Context, ExperimentConfig, InteractionDataset};

#[derive(Parser)]
#[command(
    name = "linexplore",
    version,
    about = "Reward-free exploration planner, sampler and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mixture policy from offline contexts.
    Plan(PlanArgs),
    /// Collect an online dataset with a stored policy.
    Sample(SampleArgs),
    /// Ridge fit on a dataset.
    Fit(FitArgs),
    /// Evaluate a fitted estimate on held-out contexts.
    Eval(EvalArgs),
    /// Run the multi-trial comparison against the baselines.
    RunExperiment(ExperimentArgs),
    /// Run every numerical inequality check and write a JSON report.
    VerifyLemmas(VerifyArgs),
    /// Write a synthetic file in the sparse ranking format.
    GenStandin(StandinArgs),
    /// Parse a sparse ranking file into a context bundle.
    IngestLtr(IngestArgs),
    /// Per-action frequencies of a dataset.
    Histogram(HistogramArgs),
}

#[derive(Args)]
struct EnvArgs {
    /// synthetic, hard_uniform:A, hard_goptimal:k
    #[arg(long, default_value = "synthetic")]
    env: Environment,
    /// Seed of the environment and of the context stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EnvArgs {
    fn instance(&self) -> Result<linexplore::BanditInstance> {
        self.env
            .simulated(self.seed)?
            .context("only simulated environments can be used here; run-experiment handles ranking data")
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Context bundle (JSON) to plan over; drawn from --env when absent.
    #[arg(long)]
    contexts: Option<PathBuf>,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    m: Option<usize>,
    /// Online budget the plan is sized for.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    alpha: Option<f64>,
    /// Policy artifact; `.bin` selects the binary format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    policy: PathBuf,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    n: usize,
    /// Dataset output; `.bin` selects the binary format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 1000)]
    eval_set_size: usize,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// synthetic, hard_uniform:A, hard_goptimal:k, rank_dataset:PATH, stand_in
    #[arg(long)]
    env: Option<Environment>,
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_set_size: Option<usize>,
    #[arg(long)]
    single_action_index: Option<usize>,
    /// Skip the expected max uncertainty metric.
    #[arg(long)]
    no_uncertainty: bool,
    /// Write 0 for wall times so reruns are byte-identical.
    #[arg(long)]
    no_wall_time: bool,
    /// Comma-separated regularization values; one output directory each.
    #[arg(long, value_delimiter = ',')]
    lambda_sweep: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    planner_runs: usize,
    #[arg(long, default_value_t = 10_000)]
    coverage_trials: usize,
    #[arg(long, default_value_t = 200)]
    sandwich_trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StandinArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    queries: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    subsampled_dim: usize,
    #[arg(long, default_value_t = 20)]
    max_actions: usize,
    /// Writes `<out>` with the training contexts and `<out stem>.test.json`
    /// with the held-out ones.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    data: PathBuf,
    /// CSV path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_policy(path: &Path) -> Result<MixturePolicy> {
    Ok(if is_binary(path) {
        MixturePolicy::read_binary(open(path)?)?
    } else {
        MixturePolicy::from_json(&fs::read_to_string(path)?)?
    })
}

fn read_dataset(path: &Path) -> Result<InteractionDataset> {
    Ok(if is_binary(path) {
        read_dataset_binary(open(path)?)?
    } else {
        read_dataset_csv(open(path)?)?
    })
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let contexts: Vec<Context> = match &a.contexts {
        Some(p) => ContextBundle::read_json(open(p)?)?.contexts,
        None => {
            let m = a.m.context("--m is required when contexts are drawn from --env")?;
            a.env
                .instance()?
                .draw_contexts(m, &mut stream_rng(a.env.seed, streams::OFFLINE))
        }
    };
    let mut cfg = ExperimentConfig::new(a.m.unwrap_or(contexts.len()), a.n, a.lambda);
    cfg.alpha = a.alpha;
    if cfg.m != contexts.len() {
        bail!(
            "--m {} does not match the {} contexts in the bundle",
            cfg.m,
            contexts.len()
        );
    }
    let (policy, trace) = plan(&contexts, &cfg)?;
    let mut w = create(&a.out)?;
    if is_binary(&a.out) {
        policy.write_binary(&mut w)?;
    } else {
        w.write_all(policy.to_json()?.as_bytes())?;
    }
    w.flush()?;
    log::info!(
        "planned {} snapshots over M={} (uncertainty sum {:.4})",
        policy.n_phases(),
        cfg.m,
        trace.lazy_sum()
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let policy = read_policy(&a.policy)?;
    let instance = a.env.instance()?;
    let online = instance.draw_contexts(a.n, &mut stream_rng(a.env.seed, streams::ONLINE));
    let ds = sample_stream(
        &policy,
        &instance,
        &online,
        &mut stream_rng(a.env.seed, streams::POLICY),
        &mut stream_rng(a.env.seed, streams::NOISE),
    )?;
    let mut w = create(&a.out)?;
    if is_binary(&a.out) {
        write_dataset_binary(&ds, &mut w)?;
    } else {
        write_dataset_csv(&ds, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let est = ridge_fit(&ds, a.lambda)?;
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &est.to_artifact())?;
    w.flush()?;
    Ok(())
}

fn write_or_print<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            w.flush()?;
        }
        None => {
            let text = serde_json::to_string_pretty(value)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                // a closed pipe (e.g. `| head`) is not an error
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let artifact: EstimateArtifact = serde_json::from_reader(open(&a.estimate)?)?;
    let est = RidgeEstimate::from_artifact(artifact)?;
    let instance = a.env.instance()?;
    let contexts = instance.draw_contexts(a.eval_set_size, &mut stream_rng(a.env.seed, streams::EVAL));
    let report = evaluate(&est, &instance, &contexts)?;
    write_or_print(&report, a.out.as_deref())
}

fn resolve_config(a: &ExperimentArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_reader(open(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => RunConfig::new(
            Environment::Synthetic,
            ExperimentConfig::new(10_000, 10_000, 1.0),
            20,
            PathBuf::from("results"),
        ),
    };
    if let Some(e) = &a.env {
        cfg.environment = e.clone();
    }
    if let Some(v) = &a.algorithms {
        cfg.algorithms = v.clone();
    }
    let e = &mut cfg.experiment;
    if let Some(v) = a.m {
        e.m = v;
    }
    if let Some(v) = a.n {
        e.n = v;
    }
    if let Some(v) = a.lambda {
        e.lambda_reg = v;
    }
    if a.alpha.is_some() {
        e.alpha = a.alpha;
    }
    if let Some(v) = a.delta {
        e.delta = v;
    }
    if let Some(v) = a.seed {
        e.seed = v;
    }
    if let Some(v) = a.trials {
        cfg.n_trials = v;
    }
    if let Some(v) = a.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = a.eval_set_size {
        cfg.eval_set_size = v;
    }
    if let Some(v) = a.single_action_index {
        cfg.single_action_index = v;
    }
    if a.no_uncertainty {
        cfg.track_uncertainty = false;
    }
    if a.no_wall_time {
        cfg.record_wall_time = false;
    }
    if let Some(p) = &a.out {
        cfg.output_path = p.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(a: ExperimentArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let outputs = match &a.lambda_sweep {
        Some(l) => run_lambda_sweep(&cfg, l)?,
        None => vec![run_experiment(&cfg)?],
    };
    for out in outputs {
        for s in &out.summary.algorithms {
            if let Some(p) = s.final_point() {
                println!(
                    "{:<18} n={:<6} value {:.4} ± {:.4}",
                    s.algorithm.name(),
                    p.n_samples_seen,
                    p.policy_value.mean,
                    p.policy_value.std_err
                );
            }
        }
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let report = verify_lemmas(&VerifyOptions {
        seed: a.seed,
        planner_runs: a.planner_runs,
        coverage_trials: a.coverage_trials,
        sandwich_trials: a.sandwich_trials,
    })?;
    for e in &report.entries {
        let status = match e.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        };
        eprintln!("{status} {} ({} / {} violations)", e.name, e.violations, e.trials);
    }
    write_or_print(&report, a.out.as_deref())?;
    if !report.pass() {
        bail!("at least one check failed");
    }
    Ok(())
}

fn cmd_standin(a: StandinArgs) -> Result<()> {
    let spec = StandInSpec {
        n_queries: a.queries,
        ..StandInSpec::default()
    };
    let mut w = create(&a.out)?;
    gen_standin(&mut w, &spec, a.seed)?;
    w.flush()?;
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let spec = RankDatasetSpec {
        subsampled_dim: a.subsampled_dim,
        max_actions: a.max_actions,
        ..RankDatasetSpec::default()
    };
    let data = ingest_rank_dataset(&a.input, &spec, a.seed)?;
    let test_path = a.out.with_extension("test.json");
    for (path, contexts) in [(&a.out, data.train), (&test_path, data.test)] {
        let mut w = create(path)?;
        ContextBundle::new(contexts)?.write_json(&mut w)?;
        w.flush()?;
    }
    log::info!("kept coordinates {:?}, scale {}", data.subsample_indices, data.scale);
    Ok(())
}

fn cmd_histogram(a: HistogramArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    match &a.out {
        Some(p) => {
            emit_action_histogram(&ds, create(p)?)?;
        }
        None => {
            emit_action_histogram(&ds, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Plan(a) => cmd_plan(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::RunExperiment(a) => cmd_run(a),
        Command::VerifyLemmas(a) => cmd_verify(a),
        Command::GenStandin(a) => cmd_standin(a),
        Command::IngestLtr(a) => cmd_ingest(a),
        Command::Histogram(a) => cmd_histogram(a),
    }
}
