use adavr::harness::{self, ConfigFile, DataSource, ExperimentConfig};
use adavr::{verify, AlgorithmKind};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "adavr", version, about = "Adaptive accelerated variance-reduced optimizers for finite sums")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run algorithms on a dataset and write a per-epoch trace CSV.
    Run(Box<RunArgs>),
    /// Aggregate a trace CSV into per-epoch means with 95% intervals.
    Summarize {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Run the property checks on small synthetic problems.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with the same keys as these flags; flags take precedence.
    #[arg(long, value_name = "TOML")]
    config: Option<PathBuf>,
    /// LIBSVM file (optionally .gz) or `synth:n,d[,seed]`.
    #[arg(long)]
    data: Option<String>,
    /// Declared feature count (at least the largest index seen).
    #[arg(long)]
    dim: Option<usize>,
    /// logistic, squared or huber.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    huber_delta: Option<f64>,
    /// ℓ2 weight (default 1/n).
    #[arg(long)]
    lambda: Option<f64>,
    /// Radius of the ball around each initial point (default 100).
    #[arg(long)]
    radius: Option<f64>,
    /// Algorithm to run; repeat or comma-separate for several.
    #[arg(long = "algo", value_delimiter = ',')]
    algo: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; repetition r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Step size of SVRG and SVRG++.
    #[arg(long)]
    step: Option<f64>,
    /// Smoothness constant for VRAE and VRAG (default: computed bound).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

fn build_config(args: RunArgs) -> Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ConfigFile::default(),
    };
    let data = args.data.or(file.data).ok_or_else(|| anyhow!("--data is required"))?;
    let out = args.out.or(file.out).ok_or_else(|| anyhow!("--out is required"))?;
    let mut cfg = ExperimentConfig::new(DataSource::parse(&data)?, out);

    cfg.min_dim = args.dim.or(file.dim);
    let loss = args.loss.or(file.loss).unwrap_or_else(|| "logistic".into());
    cfg.loss = harness::parse_loss(&loss, args.huber_delta.or(file.huber_delta))?;
    cfg.l2_lambda = args.lambda.or(file.lambda);
    cfg.radius = args.radius.or(file.radius).unwrap_or(cfg.radius);
    let names = if args.algo.is_empty() { file.algo.unwrap_or_default() } else { args.algo };
    if !names.is_empty() {
        cfg.algorithms = names
            .iter()
            .map(|n| n.parse::<AlgorithmKind>().map_err(|e| anyhow!(e)))
            .collect::<Result<_>>()?;
    }
    cfg.epochs = args.epochs.or(file.epochs).unwrap_or(cfg.epochs);
    cfg.reps = args.reps.or(file.reps).unwrap_or(cfg.reps);
    cfg.base_seed = args.seed.or(file.seed).unwrap_or(cfg.base_seed);
    cfg.gamma0 = args.gamma0.or(file.gamma0).unwrap_or(cfg.gamma0);
    cfg.eta = args.eta.or(file.eta);
    cfg.step = args.step.or(file.step);
    cfg.beta = args.beta.or(file.beta);
    for (name, o) in file.overrides {
        let kind = name.parse::<AlgorithmKind>().map_err(|e| anyhow!("[overrides.{name}]: {e}"))?;
        cfg.overrides.insert(kind, o);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = build_config(args)?;
    let report = harness::execute(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "wrote {} rows to {} (n = {}, d = {}, lambda = {:e})",
        report.rows.len(),
        cfg.output.display(),
        report.n,
        report.d,
        report.l2_lambda
    );
    Ok(ExitCode::SUCCESS)
}

fn verify_cmd(seed: u64) -> Result<ExitCode> {
    let lines = verify::run_suite(seed)?;
    println!("status\tcheck\tdetail");
    for l in &lines {
        println!("{}\t{}\t{}", if l.passed { "PASS" } else { "FAIL" }, l.check, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", lines.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(*args),
        Command::Summarize { input, out } => {
            if input == out {
                bail!("--in and --out must differ");
            }
            let rows = harness::summarize(&input, &out).with_context(|| format!("summarizing {}", input.display()))?;
            println!("wrote {} summary rows to {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed } => verify_cmd(seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
