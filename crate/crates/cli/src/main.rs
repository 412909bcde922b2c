mod config;
mod letor_cmd;
mod output;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rankagg::isotonic::PoolRule;
use rankagg::selftest::{self, SelftestOptions};

/// Exit code 2 for bad invocations and configs, 1 for everything else.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<rankagg::Error> for Failure {
    fn from(e: rankagg::Error) -> Self {
        match e {
            rankagg::Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "rankagg",
    version,
    about = "Rank aggregation with item features"
)]
struct Cli {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic instances, aggregate them and score every method
    /// against the planted ordering.
    Synth(SynthArgs),
    /// Aggregate the rank lists of a LETOR-format file query by query.
    Aggregate(AggregateArgs),
    /// Check the solvers and metrics against brute-force oracles.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Config file, or the name of a bundled config (gauss-recovery,
    /// poisson-recovery).
    #[arg(long)]
    config: String,
    /// Seed of the first replicate; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the CSV files.
    #[arg(long, default_value = "rankagg-out")]
    output: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// LETOR-format dataset.
    dataset: PathBuf,
    /// Column map: a preset (mq, mq2007, mq2008, ohsumed) or `x=1-10;r=11-15`.
    #[arg(long, default_value = "mq")]
    columns: String,
    /// Comma-separated methods: mr and any baseline.
    #[arg(long, default_value = "borda,combmnz,mr")]
    methods: String,
    /// Extra rank list: a LETOR file whose grades are used as scores, or a
    /// file with one score (optionally preceded by a query id) per line.
    #[arg(long)]
    augment: Option<PathBuf>,
    /// Config file with an [aggregation] section.
    #[arg(long)]
    config: Option<String>,
    /// Accepted for symmetry with `synth`; aggregation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the CSV files.
    #[arg(long, default_value = "rankagg-out")]
    output: PathBuf,
    /// Fill features missing from a line with 0 instead of failing.
    #[arg(long)]
    pad_missing: bool,
    /// Fail when the lines of a query are not contiguous.
    #[arg(long)]
    strict_grouping: bool,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long, hide = true)]
    pool_rule: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RANKAGG_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("rankagg: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("rankagg: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    match cli.command {
        Command::Synth(a) => {
            let sections = config::Sections::load(&a.config)?;
            let mut cfg = config::synth_config(&sections)?;
            if let Some(seed) = a.seed {
                cfg.data.seed = seed;
            }
            let report = pool.install(|| synth::run(&cfg))?;
            synth::write(&report, &a.output)?;
            print!("{}", synth::summary_table(&report));
            Ok(ExitCode::SUCCESS)
        }
        Command::Aggregate(a) => {
            let cfg = match &a.config {
                Some(path) => config::aggregate_config(&config::Sections::load(path)?)?,
                None => config::aggregate_config(&config::Sections::empty())?,
            };
            let methods = letor_cmd::parse_methods(&a.methods)?;
            let columns: rankagg::data::ColumnMap = a.columns.parse()?;
            let opts = rankagg::data::ParseOptions {
                columns,
                strict_grouping: a.strict_grouping,
                pad_missing: a.pad_missing,
            };
            let mut groups = rankagg::data::parse_letor_file(&a.dataset, &opts)?;
            if let Some(path) = &a.augment {
                groups = letor_cmd::augment(groups, path)?;
            }
            let table = pool.install(|| letor_cmd::run(&groups, &methods, &cfg))?;
            letor_cmd::write(&table, &a.output)?;
            print!("{}", letor_cmd::summary_table(&table));
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest(a) => {
            let pool_rule = match a.pool_rule.as_deref() {
                None | Some("dual-mean") => PoolRule::DualMean,
                Some("primal-mean") => PoolRule::PrimalMean,
                Some(other) => return Err(Failure::Usage(format!("unknown pool rule `{other}`"))),
            };
            let opts = SelftestOptions {
                seed: a.seed,
                pool_rule,
                ..SelftestOptions::default()
            };
            let report = pool.install(|| selftest::run(&opts));
            if a.json {
                println!("{}", output::selftest_json(&report));
            } else {
                print!("{}", output::selftest_table(&report));
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
