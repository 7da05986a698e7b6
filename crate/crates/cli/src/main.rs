use clap::{Parser, Subcommand, ValueEnum};
use onebit_mimo::config::{ExperimentConfig, OutputFormat};
use onebit_mimo::sweep::{run_antenna_sweep, run_ee, run_kappa, run_rate_sweep};
use onebit_mimo::validate::run_validation;
use onebit_mimo::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "onebit-mimo", version, about = "Multi-cell massive MIMO downlink with one-bit converters")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed (overrides mc.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (overrides output.path); stdout when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Monte-Carlo trials (overrides mc.trials).
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    parallel: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Per-user sum rate versus transmit power.
    RateSweep,
    /// Per-user sum rate versus array size, with the large-array limit.
    AntennaSweep,
    /// One-bit to conventional antenna ratio at equal sum rate.
    Kappa,
    /// Energy efficiency versus sampling frequency.
    Ee,
    /// Numerical invariant suite; exits 1 if any check fails.
    Validate,
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Runtime(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.mc.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.mc.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load(cli)?;
    // output location is not part of the experiment, so it stays out of the
    // embedded config and its hash
    let out = cli.out.as_deref().or(config.output.path.as_deref());
    let format = match cli.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => config.output.format,
    };
    eprintln!("{}: config {}", command_name(cli.command), &config.hash()[..12]);
    let result = match cli.command {
        Command::RateSweep => run_rate_sweep(&config),
        Command::AntennaSweep => run_antenna_sweep(&config),
        Command::Kappa => run_kappa(&config),
        Command::Ee => run_ee(&config),
        Command::Validate => {
            let report = run_validation(&config)?;
            for c in &report.checks {
                eprintln!("  {:<30} {:<22} {:.4e} (threshold {:.1e})", c.name, c.status.as_str(), c.statistic, c.threshold);
            }
            report.write(out, format)?;
            return if report.passed() { Ok(()) } else { Err(Failure::Checks) };
        }
    }?;
    result.write(out, format)?;
    Ok(())
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::RateSweep => "rate-sweep",
        Command::AntennaSweep => "antenna-sweep",
        Command::Kappa => "kappa",
        Command::Ee => "ee",
        Command::Validate => "validate",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.parallel {
        pool = pool.num_threads(n.max(1));
    }
    let outcome = match pool.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(Failure::Runtime(e.to_string())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
