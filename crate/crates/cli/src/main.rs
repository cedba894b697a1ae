use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use shotcast::betting::KellyNumerator;
use shotcast::calibration::Calibrator;
use shotcast::ingest::{self, Market};
use shotcast::pipeline::{self, RunConfig};
use shotcast::report;
use shotcast::sim::{self, SimConfig};

const DATA_DIR_ENV: &str = "SHOTCAST_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "shotcast",
    version,
    about = "Backtest shot-based football forecasts"
)]
struct Cli {
    /// Log filter, e.g. `info` or `shotcast=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a data directory and print the row diagnostics as JSON.
    Ingest(DataArgs),
    /// Fit GAP parameters per league and print the resulting states as JSON.
    FitGap(FitGapArgs),
    /// Walk-forward backtest at a single half-life.
    Backtest(RunArgs),
    /// Backtest every half-life in the grid.
    Sweep(RunArgs),
    /// Summarize the evaluation.json of a finished backtest.
    Report {
        /// Directory written by `backtest`.
        dir: PathBuf,
    },
    /// Write a synthetic league in football-data CSV layout.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: PathBuf,
    /// Comma-separated league ids; all leagues when omitted.
    #[arg(long, value_delimiter = ',')]
    leagues: Option<Vec<String>>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitGapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    gap_training_seasons: usize,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    leagues: Option<Vec<String>>,
    #[arg(long)]
    half_life: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    half_life_grid: Option<Vec<f64>>,
    #[arg(long)]
    calibrator: Option<String>,
    #[arg(long)]
    include_odds_predictor: bool,
    #[arg(long)]
    burn_in_threshold: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    markets: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    kelly_numerator: Option<String>,
    #[arg(long)]
    gap_training_seasons: Option<usize>,
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "SIM")]
    league: String,
    #[arg(long, default_value_t = 20)]
    teams: usize,
    #[arg(long, default_value_t = 3)]
    seasons: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Spread of the true attack and defence ratings.
    #[arg(long)]
    rating_sd: Option<f64>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl From<shotcast::Error> for Failure {
    fn from(e: shotcast::Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.into())
        } else {
            Failure::Config(e.into())
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn load_config_file(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    } else {
        toml::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Failure> {
        let mut c = match &self.config {
            Some(path) => load_config_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.data_dir {
            c.data_dir = v;
        }
        if let Some(v) = self.leagues {
            c.leagues = Some(v);
        }
        if let Some(v) = self.half_life {
            c.half_life = v;
        }
        if let Some(v) = self.half_life_grid {
            c.half_life_grid = v;
        }
        if let Some(v) = self.calibrator {
            c.calibrator = v.parse::<Calibrator>()?;
        }
        if self.include_odds_predictor {
            c.include_odds_predictor = true;
        }
        if let Some(v) = self.burn_in_threshold {
            c.burn_in_threshold = v;
        }
        if let Some(v) = self.markets {
            c.markets = v
                .iter()
                .map(|m| m.parse::<Market>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.output_dir {
            c.output_dir = Some(v);
        }
        if let Some(v) = self.kelly_numerator {
            c.kelly_numerator = v.parse::<KellyNumerator>()?;
        }
        if let Some(v) = self.gap_training_seasons {
            c.gap_training_seasons = v;
        }
        if self.audit {
            c.audit = true;
        }
        if let Some(v) = self.cache_dir {
            c.cache_dir = Some(v);
        }
        c.validate()?;
        Ok(c)
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Data),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_dir(dir: &Path) -> Result<(), Failure> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(config_err(anyhow::anyhow!(
            "data directory {} does not exist",
            dir.display()
        )))
    }
}

fn output_dir(config: &RunConfig) -> Result<&Path, Failure> {
    config
        .output_dir
        .as_deref()
        .ok_or_else(|| config_err(anyhow::anyhow!("--output-dir is required")))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest(args) => {
            check_dir(&args.data_dir)?;
            let data = ingest::load_dir(&args.data_dir, args.leagues.as_deref())?;
            let body = serde_json::json!({
                "totals": data.diagnostics,
                "shot_matches": data.shot_matches(),
                "non_burn_in_shot_matches": data.non_burn_in_shot_matches(6),
                "leagues": data.per_league,
            });
            emit(&report::to_rounded_json(&body)?, args.output.as_deref())
        }
        Command::FitGap(args) => {
            check_dir(&args.data.data_dir)?;
            let data = ingest::load_dir(&args.data.data_dir, args.data.leagues.as_deref())?;
            let config = RunConfig {
                leagues: args.data.leagues.clone(),
                gap_training_seasons: args.gap_training_seasons,
                ..Default::default()
            };
            let states = pipeline::fit_gap_states(&data, &config)?;
            emit(
                &report::to_rounded_json(&states)?,
                args.data.output.as_deref(),
            )
        }
        Command::Backtest(args) => {
            let config = args.resolve()?;
            let dir = output_dir(&config)?.to_path_buf();
            let result = pipeline::run_backtest(&config)?;
            report::write_run_report(&result, &dir)?;
            print!("{}", report::render_summary(&result.summary));
            Ok(())
        }
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let dir = output_dir(&config)?.to_path_buf();
            let sweep = pipeline::half_life_sweep(&config)?;
            report::write_sweep_report(&sweep, &dir)?;
            for (series, h) in &sweep.best_half_life {
                println!("{series:<24} best half-life {h}");
            }
            Ok(())
        }
        Command::Report { dir } => {
            let summary = report::read_summary(&dir)?;
            print!("{}", report::render_summary(&summary));
            Ok(())
        }
        Command::Simulate(args) => {
            let defaults = SimConfig::default();
            let config = SimConfig {
                league_id: args.league,
                teams: args.teams,
                seasons: args.seasons,
                seed: args.seed,
                rating_sd: args.rating_sd.unwrap_or(defaults.rating_sd),
                ..defaults
            };
            let league =
                sim::simulate_league(&config).map_err(|e| config_err(anyhow::Error::from(e)))?;
            for path in sim::write_league(&league, &args.output)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Data(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
