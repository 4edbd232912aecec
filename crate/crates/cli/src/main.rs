use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bestarm::env::{parse_family, BanditInstance, InstanceFile};
use bestarm::harness::{
    self, csv_string, parse_kv_pairs, Algorithm, AlgorithmConfig, BudgetRule, ExperimentSpec, HarnessError,
    RunRecord,
};
use bestarm::metrics::TheoryBounds;
use bestarm::prism::Termination;

const EXIT_INVALID: u8 = 2;
const EXIT_OVERFLOW: u8 = 3;

#[derive(Parser)]
#[command(name = "bestarm", version, about = "Best-arm identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an alpha-family instance file.
    Gen(GenArgs),
    /// Run one trial on an instance file and print the result as JSON.
    Run(RunArgs),
    /// Monte Carlo trials for each n; CSV rows plus a JSON run record.
    Mc(ExperimentArgs),
    /// Like `mc`, plus a log-log fit of mean pulls against n.
    Scaling(ExperimentArgs),
    /// Analytic quantities of an instance file.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    alpha: f64,
    /// Number of suboptimal arms.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.9)]
    mu0: f64,
    #[arg(long, default_value_t = 0.5)]
    gap_scale: f64,
    #[arg(long, default_value = "gaussian")]
    family: String,
    #[arg(long)]
    sigma: Option<f64>,
    /// Permutation seed; without it arms stay in rank order.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// prism_standard, prism_conservative or uniform.
    #[arg(long, default_value = "prism_standard")]
    alg: String,
    /// Per-arm budget for `uniform`; defaults to the sufficient budget.
    #[arg(long)]
    m: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the per-phase trace.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Key-value spec file; flags given on the command line override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated list of suboptimal-arm counts.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    mu0: Option<String>,
    #[arg(long)]
    gap_scale: Option<String>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    alg: Option<String>,
    /// Integer per-arm budget or `sufficient`.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<String>,
    /// Output prefix: writes `<out>.csv` and `<out>.json`. CSV goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Also report the alpha-family non-adaptive bound.
    #[arg(long)]
    alpha: Option<f64>,
    /// Output prefix: writes `<out>.json` and `<out>.csv`. JSON goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Io(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_invalid_input() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<bestarm::env::EnvError> for Failure {
    fn from(e: bestarm::env::EnvError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<bestarm::metrics::MetricsError> for Failure {
    fn from(e: bestarm::metrics::MetricsError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

/// What a successful command observed.
enum Outcome {
    Clean,
    Overflow,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => gen(args),
        Command::Run(args) => run(args),
        Command::Mc(args) => experiment(args, false),
        Command::Scaling(args) => experiment(args, true),
        Command::Bounds(args) => bounds(args),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Overflow) => {
            eprintln!("warning: pull overflow encountered");
            ExitCode::from(EXIT_OVERFLOW)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_instance(path: &Path) -> Result<BanditInstance, Failure> {
    let file: InstanceFile = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ok(file.into_instance()?)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("records always serialize");
    text.push('\n');
    text
}

fn gen(args: GenArgs) -> Result<Outcome, Failure> {
    let family = parse_family(&args.family, args.sigma)?;
    let mut instance = BanditInstance::alpha(args.n, args.alpha, args.mu0, args.gap_scale, family)?;
    if let Some(seed) = args.seed {
        instance = instance.shuffled(seed);
    }
    emit(args.out.as_deref(), &to_json(&instance.to_file()))?;
    Ok(Outcome::Clean)
}

fn run(args: RunArgs) -> Result<Outcome, Failure> {
    let instance = load_instance(&args.instance)?;
    let mut config = AlgorithmConfig::new(Algorithm::parse(&args.alg)?, args.delta);
    if let Some(m) = args.m {
        config.budget = BudgetRule::Fixed(m);
    }
    let mut result = harness::run_trial(&instance, &config, args.seed, 0)?;
    if !args.trace {
        result.phases.clear();
    }
    emit(args.out.as_deref(), &to_json(&result))?;
    Ok(if result.termination == Termination::Overflow {
        Outcome::Overflow
    } else {
        Outcome::Clean
    })
}

fn experiment_spec(args: &ExperimentArgs) -> Result<ExperimentSpec, Failure> {
    let mut pairs = match &args.spec {
        Some(path) => parse_kv_pairs(&read(path)?)?,
        None => BTreeMap::new(),
    };
    let flags = [
        ("alpha", &args.alpha),
        ("n", &args.n),
        ("mu0", &args.mu0),
        ("gap_scale", &args.gap_scale),
        ("family", &args.family),
        ("sigma", &args.sigma),
        ("delta", &args.delta),
        ("alg", &args.alg),
        ("m", &args.m),
        ("trials", &args.trials),
        ("seed", &args.seed),
        ("jobs", &args.jobs),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            pairs.insert(key.to_string(), v.clone());
        }
    }
    Ok(ExperimentSpec::from_pairs(&pairs)?)
}

fn experiment(args: ExperimentArgs, sweep: bool) -> Result<Outcome, Failure> {
    let spec = experiment_spec(&args)?;
    let result = if sweep {
        harness::scaling_sweep(&spec)?
    } else {
        harness::run_experiment(&spec)?
    };
    let csv = csv_string(&result.rows);
    match &args.out {
        Some(prefix) => {
            write(&with_extension(prefix, "csv"), &csv)?;
            let record = RunRecord::new(&spec, &result)?;
            write(&with_extension(prefix, "json"), &to_json(&record))?;
        }
        None => print!("{csv}"),
    }
    if let Some(fit) = result.fit {
        eprintln!(
            "slope {:.4} intercept {:.4} r2 {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    Ok(if result.rows.iter().any(|r| r.overflows > 0) {
        Outcome::Overflow
    } else {
        Outcome::Clean
    })
}

fn bounds(args: BoundsArgs) -> Result<Outcome, Failure> {
    let instance = load_instance(&args.instance)?;
    let theory = TheoryBounds::compute(&instance, args.delta, 1.0, args.alpha)?;
    let json = to_json(&theory);
    match &args.out {
        Some(prefix) => {
            write(&with_extension(prefix, "json"), &json)?;
            let mut csv = String::from("s,count\n");
            for (s, count) in theory.slice_counts() {
                csv.push_str(&format!("{s},{count}\n"));
            }
            write(&with_extension(prefix, "csv"), &csv)?;
        }
        None => print!("{json}"),
    }
    Ok(Outcome::Clean)
}
