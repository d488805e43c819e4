use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

#[derive(Parser, Debug)]
#[command(name = "evload", version, about = "Residential EV charging profiles from charging logs")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Seed for all random draws; required by stochastic subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output time step in minutes (1 or 15).
    #[arg(long, global = true)]
    pub resolution: Option<u32>,
    /// `month,season` table overriding the default Nov-Apr winter.
    #[arg(long, global = true)]
    pub season_map: Option<PathBuf>,
    /// Directory for output files, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file supplying defaults for any option; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean a charging log and fit the PMF model.
    Fit(FitArgs),
    /// Draw daily charging profiles for a fleet.
    Generate(GenerateArgs),
    /// Stack generated EV load on a metered base load per penetration level.
    Scenario(ScenarioArgs),
    /// Profile spread versus number of vehicles sampled.
    Sensitivity(SensitivityArgs),
    /// Compare a forecast series against a reference series.
    Compare(CompareArgs),
    /// Write a synthetic event log, fleet and base load from a known model.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Event log with header `ev_id,start,end,energy_kwh`.
    #[arg(long)]
    pub events: PathBuf,
    /// Events above this power (kW) are rejected.
    #[arg(long)]
    pub max_power: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileFormat {
    /// One row per EV-day.
    Wide,
    /// One row per time step.
    Long,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Fleet table `ev_id,rated_power_kw`.
    #[arg(long, conflicts_with = "evs")]
    pub fleet: Option<PathBuf>,
    /// Synthetic fleet of this many vehicles at representative powers.
    #[arg(long)]
    pub evs: Option<usize>,
    /// Class shares small,medium,large for `--evs`.
    #[arg(long, value_delimiter = ',')]
    pub mix: Option<Vec<f64>>,
    /// First date to generate.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub days: Option<u32>,
    #[arg(long, value_enum)]
    pub format: Option<ProfileFormat>,
    /// Continue charging past midnight into the next day.
    #[arg(long)]
    pub carryover: bool,
    /// Starts on bin labels, no within-bin jitter.
    #[arg(long)]
    pub exact_bins: bool,
    /// Only write the fleet aggregate.
    #[arg(long)]
    pub aggregate_only: bool,
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Base-load table; its header sets the date and resolution.
    #[arg(long)]
    pub base: PathBuf,
    /// Penetration levels, e.g. 0,0.3,0.5,0.7.
    #[arg(long, value_delimiter = ',')]
    pub penetration: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub mix: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Day stratum: mon..fri or weekend.
    #[arg(long)]
    pub day_type: Option<String>,
    #[arg(long)]
    pub season: Option<String>,
    /// Bootstrap resamples for the convergence check; 0 skips it.
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Series `timestamp,kw`.
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Residential,
    Uniform,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub evs: Option<usize>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub days: Option<u32>,
    #[arg(long, value_enum, default_value = "residential")]
    pub shape: Shape,
    #[arg(long, value_delimiter = ',')]
    pub mix: Option<Vec<f64>>,
    /// Also write a base load for this many customers.
    #[arg(long)]
    pub customers: Option<usize>,
    /// Date of the base load; defaults to the start date.
    #[arg(long)]
    pub base_date: Option<NaiveDate>,
    /// Jittered starts in the emitted log.
    #[arg(long)]
    pub jitter: bool,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed input.
    Input(String),
    /// Input that parses but cannot be modelled.
    Data(String),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Data(_) => 3,
            Failure::Config(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl From<evload::Error> for Failure {
    fn from(e: evload::Error) -> Self {
        use evload::Error as E;
        match e {
            E::Parse(_) | E::Io(_) | E::Csv(_) => Failure::Input(e.to_string()),
            E::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("EVLOAD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("EVLOAD_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let settings = settings::Settings::resolve(&cli.common)?;
    match cli.command {
        Command::Fit(a) => commands::fit(&settings, a),
        Command::Generate(a) => commands::generate(&settings, a),
        Command::Scenario(a) => commands::scenario(&settings, a),
        Command::Sensitivity(a) => commands::sensitivity(&settings, a),
        Command::Compare(a) => commands::compare(&settings, a),
        Command::Synth(a) => commands::synth(&settings, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(4);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("evload: {f}");
            ExitCode::from(f.code())
        }
    }
}
