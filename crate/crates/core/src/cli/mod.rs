//! The `edac` command line: dataset generation, training, evaluation,
//! diagnostics and math validation.
//!
//! Exit codes: 0 success, 1 usage, 2 config or validation, 3 numerical failure.

mod commands;
mod config;

pub use commands::{
    analyze_run, behavior_policies, checkpoint_step, evaluate, generate_dataset, list_checkpoints,
    train_run, AnalyzeOptions, EvalReport, GeneratedDataset, TrainSummary,
};
pub use config::{DataSection, EnvSection, EvalSection, OutputSection, RunConfig};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::algorithms::{AlgoError, Algorithm, BetaSetting};
use crate::datagen::{DatagenError, Tier};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<AlgoError> for CliError {
    fn from(e: AlgoError) -> Self {
        match e {
            AlgoError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Algo(a) => a.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "edac",
    version,
    about = "Offline RL with diversified Q-ensembles at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train reference policies and write one dataset tier.
    GenData(GenDataArgs),
    /// Train an offline agent on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint's deterministic policy; prints a JSON report.
    Eval(EvalArgs),
    /// Run validator batteries.
    Check(CheckArgs),
    /// Write penalty, cosine-similarity and action-distance CSVs for a run.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// random, medium, expert, medium-expert, medium-replay or full-replay
    #[arg(long)]
    tier: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the file is named `<env>-<tier>.odrl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// A positive number or `auto`.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lr_q: Option<f64>,
    #[arg(long)]
    lr_policy: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    log_every: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "random")]
    checkpoint: Option<PathBuf>,
    /// Evaluate the uniform-random agent instead of a checkpoint.
    #[arg(long)]
    random: bool,
    /// Dataset whose metadata provides the environment and score anchors.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Math,
    Gradients,
    All,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(value_enum)]
    suite: Suite,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Explicit checkpoint series (instead of every checkpoint in the run).
    #[arg(long, num_args = 1..)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = crate::analysis::REPORT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

fn base_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| CliError::Config(e.to_string()))
}

fn gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.config)?;
    if let Some(env) = a.env {
        cfg.env.name = env;
    }
    if let Some(t) = &a.tier {
        cfg.data.tier = parse::<Tier>(t)?;
    }
    if let Some(n) = a.n {
        cfg.data.n = n;
    }
    if let Some(s) = a.seed {
        cfg.data.seed = s;
    }
    let path = match (a.out, &cfg.data.path) {
        (Some(dir), _) => dir.join(format!("{}-{}.odrl", cfg.env.name, cfg.data.tier)),
        (None, Some(p)) => p.clone(),
        (None, None) => {
            PathBuf::from("data").join(format!("{}-{}.odrl", cfg.env.name, cfg.data.tier))
        }
    };
    let g = generate_dataset(&cfg, &path)?;
    println!("{}", g.summary());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.config)?;
    let t = &mut cfg.train;
    if let Some(v) = &a.algo {
        t.algorithm = parse::<Algorithm>(v)?;
    }
    if let Some(v) = a.n {
        t.n = v;
    }
    if let Some(v) = a.eta {
        t.eta = v;
    }
    if let Some(v) = &a.beta {
        t.beta = parse::<BetaSetting>(v)?;
    }
    macro_rules! set {
        ($($field:ident <- $flag:expr),*) => { $(if let Some(v) = $flag { t.$field = v; })* };
    }
    set!(gamma <- a.gamma, rho <- a.rho, lr_q <- a.lr_q, lr_policy <- a.lr_policy, batch_size <- a.batch_size,
         total_steps <- a.steps, seed <- a.seed, hidden <- a.hidden, checkpoint_every <- a.checkpoint_every,
         log_every <- a.log_every);
    if let Some(d) = a.data {
        cfg.data.path = Some(d);
    }
    if let Some(o) = a.out {
        cfg.output.dir = Some(o);
    }
    let s = train_run(&cfg)?;
    println!("{}", s.summary());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.config)?;
    if let Some(e) = a.episodes {
        cfg.eval.episodes = e;
    }
    if let Some(s) = a.seed {
        cfg.eval.seed = s;
    }
    if let Some(d) = a.data {
        cfg.data.path = Some(d);
    }
    let ckpt = if a.random {
        None
    } else {
        a.checkpoint.as_deref()
    };
    let report = evaluate(&cfg, ckpt)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn check(a: CheckArgs) -> Result<(), CliError> {
    let mut failed = 0;
    let mut line = |name: &str, measured: f64, tol: f64, passed: bool| {
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: measured {measured:.3e}, tolerance {tol:.1e}");
        if !passed {
            failed += 1;
        }
    };
    if matches!(a.suite, Suite::Math | Suite::All) {
        for c in crate::analysis::checks::math_suite(0) {
            line(&c.name, c.measured, c.tolerance, c.passed);
        }
    }
    if matches!(a.suite, Suite::Gradients | Suite::All) {
        let mut worst: Vec<crate::algorithms::gradcheck::GradCheck> = Vec::new();
        for seed in 0..10 {
            for c in crate::algorithms::gradcheck::run_suite(seed)? {
                match worst.iter_mut().find(|w| w.name == c.name) {
                    Some(w) if w.rel_err < c.rel_err || !c.passed() => *w = c,
                    Some(_) => {}
                    None => worst.push(c),
                }
            }
        }
        for c in &worst {
            line(
                &format!("gradient {} (worst of 10 seeds)", c.name),
                c.rel_err,
                c.tol,
                c.passed(),
            );
        }
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let opts = AnalyzeOptions {
        run: a.run,
        checkpoints: a.checkpoints,
        data: a.data,
        out: a.out,
        samples: a.samples,
        seed: a.seed,
        bins: a.bins,
    };
    let written = analyze_run(&opts)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Check(a) => check(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
