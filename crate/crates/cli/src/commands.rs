use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ccat::eval::{self, DifficultyGen, MatrixOracle, SyntheticConfig, ThetaGen};
use ccat::io::{self, LineOracle, LoadOptions};
use ccat::ranker::{run_random_baseline, run_ranker, ConfidenceRule, ModelSpec, RankerConfig, RankingResult, ScoreOracle};
use ccat::{calibrate, Error, ItemBank, ScoreMatrix, SeMode};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::manifest::Recorder;

#[derive(Debug, Parser, Serialize)]
#[command(name = "ccat", version, about = "Adaptive ranking of models on continuous-score benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Estimate item difficulties, noise and item filters from a score file.
    Calibrate(CalibrateArgs),
    /// Rank models adaptively.
    Rank(RankArgs),
    /// Rank models with random model and item allocation.
    Baseline(RankArgs),
    /// Give every model the same number of maximum-information items.
    Fixed(FixedArgs),
    /// Compare a ranking result with full evaluation.
    Evaluate(EvaluateArgs),
    /// Check how well scores follow the model's variance structure.
    Conformance(ConformanceArgs),
    /// Generate a synthetic score file from the response model.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct LoadArgs {
    /// Average repeated (model, item) rows instead of rejecting them.
    #[arg(long)]
    pub aggregate_duplicates: bool,
    /// Clamp scores outside [0, 1] instead of rejecting them.
    #[arg(long)]
    pub clamp: bool,
    /// Rescale every item to [0, 1] by its observed minimum and maximum.
    #[arg(long)]
    pub per_item_scale: bool,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            aggregate_duplicates: self.aggregate_duplicates,
            clamp: self.clamp,
            per_item_scale: self.per_item_scale,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = ccat::calibration::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub metric: Option<String>,
    #[command(flatten)]
    pub load: LoadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    pub calib: PathBuf,
    /// Replay scores from this file.
    #[arg(long, required_unless_present = "live", conflicts_with = "live")]
    pub scores: Option<PathBuf>,
    /// Request scores over stdin/stdout, one JSON line per item.
    #[arg(long)]
    pub live: bool,
    /// Comma-separated model ids; defaults to every model in --scores.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, default_value_t = ccat::ranker::DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = ccat::ranker::DEFAULT_N_INIT)]
    pub n_init: usize,
    #[arg(long, default_value_t = ccat::ranker::DEFAULT_N_MAX)]
    pub n_max: usize,
    /// Total budget in cost units; unlimited when omitted.
    #[arg(long)]
    pub budget: Option<f64>,
    /// CSV with header model_id,cost_per_item; unlisted models cost 1.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long, default_value = "band")]
    pub confidence_rule: ConfidenceRule,
    #[arg(long, default_value = "posterior")]
    pub se_mode: SeMode,
    #[arg(long, default_value_t = ccat::session::DEFAULT_PRIOR_VARIANCE)]
    pub prior_variance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub load: LoadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FixedArgs {
    /// Items per model.
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub rank: RankArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub result: PathBuf,
    /// Complete score file used as ground truth.
    #[arg(long)]
    pub truth_scores: PathBuf,
    #[arg(long, default_value_t = eval::DEFAULT_N_BOOT)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub load: LoadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ConformanceArgs {
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = eval::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub load: LoadArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of models; defaults to the length of --theta.
    #[arg(long)]
    pub models: Option<usize>,
    #[arg(long)]
    pub items: usize,
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
    /// Comma-separated abilities; drawn from N(theta-mean, theta-sd) when
    /// omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta_sd: f64,
    /// Difficulties are uniform on [b-lo, b-hi] unless --b-sd is given.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub b_lo: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub b_hi: f64,
    /// Draw difficulties from N(0, b-sd) instead.
    #[arg(long)]
    pub b_sd: Option<f64>,
    #[arg(long, default_value = "m")]
    pub model_prefix: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score file; the generating parameters go to `<out>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Rank(a) => cmd_rank("rank", &a, Method::Adaptive),
        Command::Baseline(a) => cmd_rank("baseline", &a, Method::Random),
        Command::Fixed(a) => cmd_rank("fixed", &a.rank, Method::Fixed(a.n)),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Conformance(a) => cmd_conformance(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Attach the flag responsible for a library error. Errors that carry a
/// file path already name their location.
fn locate(e: Error, fallback: &str) -> anyhow::Error {
    let flag = match &e {
        Error::Parse { .. }
        | Error::EmptyFile { .. }
        | Error::Schema { .. }
        | Error::Version { .. }
        | Error::Io { .. } => return e.into(),
        Error::BudgetBelowWarmup { .. } => "--budget",
        Error::BankTooSmall { .. } => fallback,
        Error::UnknownModel(_) | Error::Duplicate { what: "model", .. } => "--models",
        Error::TooSmall { what: "models", .. } => "--models",
        Error::InvalidParameter { name, .. } => match *name {
            "gamma" => "--gamma",
            "n_init" => "--n-init",
            "n_max" => "--n-max",
            "budget" => "--budget",
            "cost" => "--costs",
            "n" => "--n",
            "n_boot" => "--n-boot",
            "level" => "--level",
            "bins" => "--bins",
            "epsilon" => "--epsilon",
            "noise parameter k" => "--k",
            "prior variance" => "--prior-variance",
            _ => fallback,
        },
        _ => fallback,
    };
    anyhow!("{flag}: {e}")
}

fn load_scores(path: &Path, load: &LoadArgs, rec: &mut Recorder) -> Result<ScoreMatrix> {
    rec.input(path)?;
    Ok(io::load_scores(path, load.options())?)
}

fn write_output<T: Serialize>(path: &Path, value: &T, rec: &mut Recorder) -> Result<()> {
    io::write_json(path, value)?;
    rec.output(path);
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let mut rec = Recorder::start("calibrate", a, None);
    let matrix = load_scores(&a.scores, &a.load, &mut rec)?;
    let mut artifact = calibrate(&matrix, a.epsilon).map_err(|e| locate(e, "--scores"))?;
    artifact.metadata.dataset = a.dataset.clone();
    artifact.metadata.metric = a.metric.clone();
    io::save_calibration(&a.out, &artifact)?;
    rec.output(&a.out);
    log::info!(
        "calibrated {} items ({} active), k = {}",
        artifact.items.len(),
        artifact.n_active(),
        artifact.k.get()
    );
    rec.finish()
}

#[derive(Clone, Copy)]
enum Method {
    Adaptive,
    Random,
    Fixed(usize),
}

fn execute<O: ScoreOracle>(
    method: Method,
    specs: &[ModelSpec],
    bank: &ItemBank,
    oracle: &mut O,
    config: &RankerConfig,
) -> Result<RankingResult> {
    let result = match method {
        Method::Adaptive => run_ranker(specs, bank, oracle, config),
        Method::Random => run_random_baseline(specs, bank, oracle, config),
        Method::Fixed(n) => eval::fixed_length_cat(specs, bank, oracle, n, config),
    };
    let fallback = if matches!(method, Method::Fixed(_)) { "--n" } else { "--n-init" };
    result.map_err(|e| match e {
        Error::MissingScore { .. } => anyhow!("--scores: {e}"),
        other => locate(other, fallback),
    })
}

fn cmd_rank(name: &'static str, a: &RankArgs, method: Method) -> Result<()> {
    let mut rec = Recorder::start(name, a, Some(a.seed));
    rec.input(&a.calib)?;
    let artifact = io::load_calibration(&a.calib)?;
    let bank = ItemBank::from_artifact(&artifact).map_err(|e| anyhow!("{}: {e}", a.calib.display()))?;

    let matrix = match &a.scores {
        Some(path) => Some(load_scores(path, &a.load, &mut rec)?),
        None => None,
    };
    let models: Vec<String> = match (&a.models, &matrix) {
        (Some(m), _) => m.clone(),
        (None, Some(matrix)) => matrix.models().to_vec(),
        (None, None) => bail!("--models: required with --live"),
    };
    if let Some(matrix) = &matrix {
        if let Some(missing) = models.iter().find(|m| matrix.model_index(m).is_none()) {
            bail!("--models: model `{missing}` not found in {}", a.scores.as_ref().unwrap().display());
        }
    }
    let specs = match &a.costs {
        Some(path) => {
            rec.input(path)?;
            io::load_costs(path, &models)?
        }
        None => ModelSpec::uniform(&models),
    };
    let config = RankerConfig {
        gamma: a.gamma,
        n_init: a.n_init,
        n_max: a.n_max,
        budget: a.budget.unwrap_or(f64::INFINITY),
        seed: a.seed,
        confidence_rule: a.confidence_rule,
        se_mode: a.se_mode,
        prior_variance: a.prior_variance,
    };
    if !(config.prior_variance.is_finite() && config.prior_variance > 0.0) {
        bail!("--prior-variance: must be > 0, got {}", config.prior_variance);
    }

    let result = match &matrix {
        Some(matrix) => execute(method, &specs, &bank, &mut MatrixOracle::new(matrix), &config)?,
        None => execute(method, &specs, &bank, &mut LineOracle::stdio(), &config)?,
    };
    write_output(&a.out, &result, &mut rec)?;
    log::info!(
        "{name}: {} items, stop reason {:?}, order {}",
        result.items_total,
        result.stop_reason,
        result.order.join(" > ")
    );
    rec.finish()
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut rec = Recorder::start("evaluate", a, Some(a.seed));
    rec.input(&a.result)?;
    let result: RankingResult = io::read_json(&a.result)?;
    let truth = load_scores(&a.truth_scores, &a.load, &mut rec)?;
    let report = eval::evaluate(&result, &truth, a.n_boot, a.level, a.seed).map_err(|e| match e {
        Error::UnknownModel(_) | Error::Incomplete { .. } | Error::MismatchedIds(_) => {
            anyhow!("{}: {e}", a.truth_scores.display())
        }
        other => locate(other, "--result"),
    })?;
    write_output(&a.out, &report, &mut rec)?;
    rec.finish()
}

fn cmd_conformance(a: &ConformanceArgs) -> Result<()> {
    let mut rec = Recorder::start("conformance", a, None);
    rec.input(&a.calib)?;
    let artifact = io::load_calibration(&a.calib)?;
    let matrix = load_scores(&a.scores, &a.load, &mut rec)?;
    let report = eval::conformance(&matrix, &artifact, a.bins).map_err(|e| locate(e, "--scores"))?;
    write_output(&a.out, &report, &mut rec)?;
    rec.finish()
}

#[derive(Serialize)]
struct SynthTruth<'a> {
    k: f64,
    models: Vec<(&'a str, f64)>,
    items: Vec<(&'a str, f64)>,
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut rec = Recorder::start("synth", a, Some(a.seed));
    let n_models = match (a.models, &a.theta) {
        (Some(n), Some(t)) if n != t.len() => {
            bail!("--theta: {} values given for --models {n}", t.len())
        }
        (Some(n), _) => n,
        (None, Some(t)) => t.len(),
        (None, None) => bail!("--models: required unless --theta is given"),
    };
    let theta = match &a.theta {
        Some(values) => ThetaGen::Fixed { values: values.clone() },
        None => ThetaGen::Normal {
            mean: a.theta_mean,
            sd: a.theta_sd,
        },
    };
    let b = match a.b_sd {
        Some(sd) => DifficultyGen::Normal { mean: 0.0, sd },
        None => DifficultyGen::Uniform { lo: a.b_lo, hi: a.b_hi },
    };
    let config = SyntheticConfig {
        n_models,
        n_items: a.items,
        theta,
        b,
        k_true: a.k,
        seed: a.seed,
    };
    let data = eval::generate_synthetic(&config).map_err(|e| locate(e, "--items"))?;

    let ids: Vec<String> = data
        .matrix
        .models()
        .iter()
        .map(|m| format!("{}{}", a.model_prefix, &m[1..]))
        .collect();
    let mut matrix = ScoreMatrix::new(ids.clone(), data.matrix.items().to_vec()).context("--model-prefix")?;
    for (m, i, y) in data.matrix.cells() {
        matrix.set(m, i, y)?;
    }
    io::write_scores(&a.out, &matrix)?;
    rec.output(&a.out);

    let truth = SynthTruth {
        k: data.k.get(),
        models: ids.iter().map(String::as_str).zip(data.theta.iter().copied()).collect(),
        items: matrix.items().iter().map(String::as_str).zip(data.b.iter().copied()).collect(),
    };
    let mut truth_path = a.out.clone().into_os_string();
    truth_path.push(".truth.json");
    let truth_path = PathBuf::from(truth_path);
    io::write_json(&truth_path, &truth)?;
    rec.output(&truth_path);
    rec.finish()
}
