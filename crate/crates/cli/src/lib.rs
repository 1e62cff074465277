//! Command-line front end for `certens`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 soundness
//! violations found by `check-soundness`.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use certens::io::{self, WeightsFile};
use certens::metrics::SingleModelPolicy;
use certens::toy_lab::{self, GridSpec, Scenario, ToyGrid, ToyParams};
use certens::weight_learner::{
    learn, learn_with_safety_net, Optimizer, Parameterization, WeightInit, WeightSource,
    DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, DEFAULT_TEMPERATURE,
};
use certens::{
    apply, EnsemblerKind, EvalOptions, FallbackPolicy, LearnerConfig, Norm, PermutationConfig,
    PrefixBound, RecordSet, WeightVector,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "certens",
    version,
    about = "Ensembles of certifiably robust classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Combine constituent outputs into one prediction per record.
    Ensemble(EnsembleArgs),
    /// Fit voting weights by smoothed certified-accuracy ascent.
    LearnWeights(LearnArgs),
    /// Report CRA and accuracy for every constituent and ensembler.
    Evaluate(EvaluateArgs),
    /// Generate a 2-D toy scenario on a grid.
    GenToy(GenToyArgs),
    /// Search a toy grid for certified points with a nearby label change.
    CheckSoundness(CheckArgs),
    /// Render a toy grid's constituent and ensemble predictions as SVG.
    ExportFigure(FigureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Cascade,
    Uniform,
    Weighted,
    Permutation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundArg {
    Literal,
    Relaxed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParamArg {
    Softmax,
    Projected,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Plain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SingleArg {
    Best,
    First,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Fig1,
    Agree,
    #[value(name = "thm1-minimal")]
    Thm1Minimal,
    Random,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Fig1 => Scenario::Fig1,
            ScenarioArg::Agree => Scenario::Agree,
            ScenarioArg::Thm1Minimal => Scenario::Thm1Minimal,
            ScenarioArg::Random => Scenario::Random,
        }
    }
}

fn parse_fallback(s: &str) -> Result<FallbackPolicy, String> {
    match s {
        "plurality" => Ok(FallbackPolicy::Plurality),
        _ => s
            .strip_prefix("random:")
            .and_then(|seed| seed.parse().ok())
            .map(FallbackPolicy::SeededRandom)
            .ok_or_else(|| format!("expected `plurality` or `random:SEED`, got `{s}`")),
    }
}

fn parse_norm(s: &str) -> Result<Norm, String> {
    s.parse().map_err(|e: certens::Error| e.to_string())
}

#[derive(Debug, Args)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Voting weights (JSON); learned on the input when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_parser = parse_fallback, default_value = "plurality")]
    fallback: FallbackPolicy,
    #[arg(long = "prefix-bound", value_enum, default_value = "literal")]
    prefix_bound: BoundArg,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LearnerArgs {
    /// Temperature of the smoothed step function.
    #[arg(long = "t", default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long = "param", value_enum, default_value = "softmax")]
    param: ParamArg,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value = "uniform")]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LearnerArgs {
    fn config(&self) -> LearnerConfig {
        LearnerConfig {
            temperature: self.temperature,
            learning_rate: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            parameterization: match self.param {
                ParamArg::Softmax => Parameterization::SoftmaxReparam,
                ParamArg::Projected => Parameterization::ProjectedAscent,
            },
            optimizer: match self.optimizer {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::Plain => Optimizer::Plain,
            },
            init: match self.init {
                InitArg::Uniform => WeightInit::Uniform,
                InitArg::Random => WeightInit::Random,
            },
            ..LearnerConfig::default()
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err("--t must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err("--lr must be positive".into());
        }
        if self.epochs == 0 {
            return Err("--epochs must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
    /// Return the raw learned weights even if a single constituent scores higher.
    #[arg(long = "no-safety-net")]
    no_safety_net: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long = "single-model", value_enum, default_value = "best")]
    single_model: SingleArg,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    #[arg(long = "prefix-bound", value_enum, default_value = "literal")]
    prefix_bound: BoundArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenToyArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    #[arg(long, default_value_t = 0.08)]
    epsilon: f64,
    #[arg(long, value_parser = parse_norm, default_value = "l2")]
    norm: Norm,
    #[arg(long)]
    out: PathBuf,
    /// Also write the grid as a prediction-record file.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_parser = parse_norm, default_value = "l2")]
    norm: Norm,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FigureArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the plotted data as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(certens::Error),
}

impl From<certens::Error> for Failure {
    fn from(e: certens::Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = Result<i32, Failure>;

fn bound(b: BoundArg) -> PrefixBound {
    match b {
        BoundArg::Literal => PrefixBound::Literal,
        BoundArg::Relaxed => PrefixBound::Relaxed,
    }
}

fn warn_train_eq_eval() {
    eprintln!(
        "warning: no --weights given; learning weights on the same records that are \
         being evaluated (train = eval)"
    );
}

/// Builds the ensembler, learning weights on `rs` if needed.
fn resolve_method(args: &MethodArgs, rs: &RecordSet, seed: u64) -> Result<EnsemblerKind, Failure> {
    Ok(match args.method {
        Method::Cascade => EnsemblerKind::Cascade,
        Method::Uniform => EnsemblerKind::UniformVoting,
        Method::Permutation => EnsemblerKind::PermutationCascade(PermutationConfig {
            prefix_bound: bound(args.prefix_bound),
            fallback: args.fallback,
        }),
        Method::Weighted => {
            let w = match &args.weights {
                Some(path) => io::load_weights(path)?,
                None => {
                    warn_train_eq_eval();
                    let cfg = LearnerConfig {
                        seed,
                        ..LearnerConfig::default()
                    };
                    learn_with_safety_net(rs, &cfg)?.0
                }
            };
            EnsemblerKind::WeightedVoting(w)
        }
    })
}

fn check_weights(w: Option<&WeightVector>, rs: &RecordSet) -> Result<(), Failure> {
    match w {
        Some(w) if w.len() != rs.num_models() => Err(Failure::Data(certens::Error::Dimension {
            what: "weights vs constituents",
            expected: rs.num_models(),
            got: w.len(),
        })),
        _ => Ok(()),
    }
}

fn run_ensemble(a: EnsembleArgs) -> CliResult {
    let rs = io::load_records(&a.input)?;
    let kind = resolve_method(&a.method, &rs, 0)?;
    if let EnsemblerKind::WeightedVoting(w) = &kind {
        check_weights(Some(w), &rs)?;
    }
    let preds = apply(&kind, &rs)?;
    io::save_predictions(&a.out, &rs, &preds)?;
    Ok(EXIT_OK)
}

fn run_learn(a: LearnArgs) -> CliResult {
    a.learner.validate().map_err(Failure::Usage)?;
    let rs = io::load_records(&a.input)?;
    let cfg = a.learner.config();
    let (w, trace) = if a.no_safety_net {
        learn(&rs, &cfg)?
    } else {
        learn_with_safety_net(&rs, &cfg)?
    };
    let mut file = WeightsFile::new(w.clone());
    file.exact_objective = Some(certens::weight_learner::exact_objective(&rs, &w)?);
    file.source = Some(match trace.safety_net.as_ref().map(|s| s.source) {
        Some(WeightSource::OneHot(i)) => format!("one-hot:{i}"),
        _ => "learned".into(),
    });
    io::save_weights(&a.out, &file)?;
    if let Some(path) = &a.trace {
        io::save_text(path, &io::render_trace_csv(&trace))?;
    }
    Ok(EXIT_OK)
}

fn run_evaluate(a: EvaluateArgs) -> CliResult {
    let rs = io::load_records(&a.input)?;
    let weights = a.weights.as_ref().map(io::load_weights).transpose()?;
    check_weights(weights.as_ref(), &rs)?;
    if weights.is_none() {
        warn_train_eq_eval();
    }
    let opts = EvalOptions {
        weights,
        single_model: match a.single_model {
            SingleArg::Best => SingleModelPolicy::Best,
            SingleArg::First => SingleModelPolicy::First,
        },
        learner: LearnerConfig {
            seed: a.seed,
            ..LearnerConfig::default()
        },
        permutation: PermutationConfig {
            prefix_bound: bound(a.prefix_bound),
            ..PermutationConfig::default()
        },
    };
    let report = certens::evaluate_with(&rs, &opts)?;
    match a.format {
        FormatArg::Table => print!("{}", report.render_table()),
        FormatArg::Csv => print!("{}", report.render_csv()),
    }
    Ok(EXIT_OK)
}

fn run_gen_toy(a: GenToyArgs) -> CliResult {
    if !(a.h > 0.0 && a.h.is_finite()) {
        return Err(Failure::Usage("--h must be positive".into()));
    }
    if !(a.epsilon >= 0.0 && a.epsilon.is_finite()) {
        return Err(Failure::Usage("--epsilon must be nonnegative".into()));
    }
    let params = ToyParams {
        grid: GridSpec {
            h: a.h,
            ..GridSpec::default()
        },
        epsilon: a.epsilon,
        norm: a.norm,
    };
    let toy = toy_lab::gen_toy(a.scenario.into(), a.seed, &params)?;
    io::save_grid(&a.out, &toy.grid)?;
    if let Some(path) = &a.records {
        io::save_records(path, &toy.grid.to_record_set(a.epsilon, a.norm)?)?;
    }
    Ok(EXIT_OK)
}

fn run_check(a: CheckArgs) -> CliResult {
    if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
        return Err(Failure::Usage("--epsilon must be positive".into()));
    }
    let grid = io::load_grid(&a.grid)?;
    let kind = if matches!(a.method.method, Method::Weighted) && a.method.weights.is_none() {
        resolve_method(&a.method, &grid.to_record_set(a.epsilon, a.norm)?, 0)?
    } else {
        resolve_method(&a.method, &placeholder_set(&grid, a.epsilon, a.norm)?, 0)?
    };
    let violations = toy_lab::find_violations(&grid, &kind, a.epsilon, a.norm)?;
    if let Some(path) = &a.report {
        io::save_text(path, &io::render_violations_csv(&violations))?;
    }
    println!(
        "{}: {} violation(s) on a {}x{} grid (epsilon {}, {})",
        kind.name(),
        violations.len(),
        grid.nx(),
        grid.ny(),
        a.epsilon,
        a.norm
    );
    Ok(if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    })
}

/// Weights loaded from a file need no records, but `resolve_method` takes a set.
fn placeholder_set(grid: &ToyGrid, epsilon: f64, norm: Norm) -> certens::Result<RecordSet> {
    RecordSet::new(
        grid.num_classes(),
        grid.num_models().max(1),
        epsilon,
        norm,
        Vec::new(),
    )
}

fn run_figure(a: FigureArgs) -> CliResult {
    let grid = io::load_grid(&a.grid)?;
    let panels = toy_lab::default_panels(&grid)?;
    io::save_text(&a.out, &toy_lab::render_svg(&grid, &panels)?)?;
    if let Some(path) = &a.csv {
        io::save_text(path, &io::render_figure_csv(&grid, &panels)?)?;
    }
    Ok(EXIT_OK)
}

/// Parses `argv` (including the program name), runs the subcommand, and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Ensemble(a) => run_ensemble(a),
        Command::LearnWeights(a) => run_learn(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::GenToy(a) => run_gen_toy(a),
        Command::CheckSoundness(a) => run_check(a),
        Command::ExportFigure(a) => run_figure(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

pub fn exit_code(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
