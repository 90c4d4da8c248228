//! The `crossrisk` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 some scenarios
//! failed, 4 data error, 130 interrupted.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};
use crossrisk_core::engine::EngineError;
use crossrisk_core::market::Instrument;
use crossrisk_core::text::ProviderError;
use crossrisk_core::weights::WeightsError;
use crossrisk_core::{SeriesStore, Timestamp};

use crate::config::{self, ConfigError, EngineConfig};
use crate::ingest::{self, IngestError};
use crate::provider::{self, AnyProvider};
use crate::report;
use crate::runner::{self, MonitorOptions, RunError};
use crate::scenario;
use crate::synthetic::{self, Preset};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_INTERRUPTED: u8 = 130;

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Parser)]
#[command(name = "crossrisk", version, about = "Cross-asset risk monitoring, replay and backtesting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_ts(s: &str) -> Result<Timestamp, String> {
    crate::formats::parse_timestamp(s)
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::parse(s).ok_or_else(|| format!("unknown preset `{s}` (desk, planted, null)"))
}

fn parse_speed(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("speed must be a non-negative number, got `{s}`")),
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a config, then print it with every default filled in.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the ordered event stream of `[from, to)` as JSON Lines.
    IngestReplay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_ts)]
        from: Option<Timestamp>,
        #[arg(long, value_parser = parse_ts)]
        to: Option<Timestamp>,
    },
    /// Run every scenario of a scenario file and write reports.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed of scenarios that generate their own market.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay data through the live engine and stream alerts as JSON Lines.
    Monitor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_ts)]
        from: Option<Timestamp>,
        #[arg(long, value_parser = parse_ts)]
        to: Option<Timestamp>,
        /// Wall-clock seconds per day of market time; 0 is as fast as possible.
        #[arg(long, default_value = "0", value_parser = parse_speed)]
        speed: f64,
    },
    /// Rebuild and print the summary table of a backtest output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic market and a config that loads it.
    GenerateSynthetic {
        #[arg(long, default_value = "desk", value_parser = parse_preset)]
        preset: Preset,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure mapped to its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(issues) => {
                let lines: Vec<String> = issues.iter().map(|i| format!("error: {i}")).collect();
                Failure::usage(lines.join("\n"))
            }
            other => Failure::usage(format!("error: {other}")),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::MethodMismatch { .. } | IngestError::DuplicateSource(_) => Failure::usage(format!("error: {e}")),
            other => Failure::data(format!("error: {other}")),
        }
    }
}

impl From<ProviderError> for Failure {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::CredentialMissing(_) | ProviderError::InvalidSpec(_) => Failure::usage(format!("error: {e}")),
            other => Failure::data(format!("error: {other}")),
        }
    }
}

fn engine_failure(e: &EngineError) -> Failure {
    let config_side = matches!(
        e,
        EngineError::InvalidParams(_)
            | EngineError::EmptyUniverse
            | EngineError::Analytics(crossrisk_core::analytics::AnalyticsError::InvalidParams(_))
            | EngineError::Weights(WeightsError::InvalidFloor { .. } | WeightsError::DuplicateKind(_))
    );
    if config_side {
        Failure::usage(format!("error: {e}"))
    } else {
        Failure::data(format!("error: {e}"))
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match &e {
            RunError::Engine(inner) => engine_failure(inner),
            _ => Failure::data(format!("error: {e}")),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(format!("error: {e}"))
    }
}

struct Loaded {
    config: EngineConfig,
    store: SeriesStore,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let config = config::load_config(path)?;
    let report = ingest::load_sources(&config.sources, &config.instruments)?;
    if !report.rejects.is_empty() {
        eprintln!("warning: {} record(s) rejected", report.rejects.len());
        for r in &report.rejects {
            eprintln!("  {}:{}: {}", r.path.display(), r.line, r.reason);
        }
    }
    Ok(Loaded {
        config,
        store: report.store,
    })
}

fn universe(loaded: &Loaded) -> Vec<Instrument> {
    if loaded.config.instruments.is_empty() {
        loaded.store.instruments().cloned().collect()
    } else {
        loaded.config.instruments.clone()
    }
}

fn interval(store: &SeriesStore, from: Option<Timestamp>, to: Option<Timestamp>) -> Result<(Timestamp, Timestamp), Failure> {
    let bounds = store.time_bounds();
    let from = from.or(bounds.map(|b| b.0)).unwrap_or(Timestamp::MIN);
    let to = to.or(bounds.map(|b| b.1.plus_millis(1))).unwrap_or(from);
    if from > to {
        return Err(Failure::usage("error: --from must not be after --to"));
    }
    Ok((from, to))
}

fn cmd_validate_config(path: &Path, out: &mut dyn Write) -> Result<u8, Failure> {
    let cfg = config::load_config(path)?;
    if cfg.provider.kind == crossrisk_core::text::ProviderKind::RemoteCompletion && std::env::var_os(provider::CREDENTIAL_ENV).is_none() {
        eprintln!("note: {} is not set; the remote provider will refuse to start", provider::CREDENTIAL_ENV);
    }
    out.write_all(cfg.resolved_toml().as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_ingest_replay(path: &Path, from: Option<Timestamp>, to: Option<Timestamp>, out: &mut dyn Write) -> Result<u8, Failure> {
    let loaded = load(path)?;
    let (from, to) = interval(&loaded.store, from, to)?;
    let mut w = io::BufWriter::new(out);
    let mut res = Ok(());
    let n = crossrisk_core::replay::replay(&loaded.store, from, to, |ev| {
        if res.is_ok() {
            res = serde_json::to_writer(&mut w, ev)
                .map_err(io::Error::from)
                .and_then(|_| w.write_all(b"\n"));
        }
    })
    .map_err(|e| Failure::usage(format!("error: {e}")))?;
    res?;
    w.flush()?;
    eprintln!("{n} event(s)");
    Ok(EXIT_OK)
}

fn cmd_backtest(config_path: &Path, scenarios: &Path, out_dir: &Path, seed: Option<u64>, out: &mut dyn Write) -> Result<u8, Failure> {
    let specs = scenario::load_scenarios(scenarios)?;
    if specs.is_empty() {
        return Err(Failure::usage(format!(
            "error: {} defines no [[scenario]] entries\nusage: crossrisk backtest --config <path> --scenarios <path> --out <dir>",
            scenarios.display()
        )));
    }
    let loaded = load(config_path)?;
    let provider = AnyProvider::from_spec(&loaded.config.provider)?;
    let results = runner::run_suite(&specs, &loaded.config.params, &loaded.store, &provider, seed);
    let mut rows = Vec::new();
    let mut failed = 0;
    for (spec, res) in specs.iter().zip(results) {
        match res {
            Ok(rep) => {
                report::write_scenario(out_dir, &rep)?;
                rows.push(report::SummaryRow::from_report(&rep));
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: scenario `{}` failed: {e}", spec.name);
            }
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let summary = report::summary_csv(&rows);
    std::fs::write(out_dir.join("summary.csv"), &summary)?;
    out.write_all(summary.as_bytes())?;
    if failed > 0 {
        eprintln!("{failed} of {} scenario(s) failed", specs.len());
        Ok(EXIT_PARTIAL)
    } else {
        Ok(EXIT_OK)
    }
}

fn cmd_monitor(path: &Path, from: Option<Timestamp>, to: Option<Timestamp>, speed: f64, out: &mut dyn Write) -> Result<u8, Failure> {
    // a second handler is refused; that only happens when several monitors share a process
    let _ = ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst));
    let loaded = load(path)?;
    let (from, to) = interval(&loaded.store, from, to)?;
    let provider = AnyProvider::from_spec(&loaded.config.provider)?;
    let opts = MonitorOptions {
        from,
        to,
        speed,
        interrupted: &INTERRUPTED,
    };
    let mut w = io::LineWriter::new(out);
    let outcome = runner::monitor(&loaded.config.params, &universe(&loaded), &loaded.store, &provider, &opts, &mut w)?;
    w.flush()?;
    if outcome.interrupted {
        eprintln!("interrupted after {} tick(s), {} alert(s)", outcome.ticks, outcome.alerts);
        return Ok(EXIT_INTERRUPTED);
    }
    eprintln!("{} tick(s), {} alert(s)", outcome.ticks, outcome.alerts);
    Ok(EXIT_OK)
}

fn cmd_report(out_dir: &Path, out: &mut dyn Write) -> Result<u8, Failure> {
    let rows = report::read_summary(out_dir).map_err(|e| Failure::data(format!("error: {}: {e}", out_dir.display())))?;
    if rows.is_empty() {
        return Err(Failure::data(format!("error: no reports under {}", out_dir.join("reports").display())));
    }
    let summary = report::summary_csv(&rows);
    std::fs::write(out_dir.join("summary.csv"), &summary)?;
    out.write_all(summary.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_generate(preset: Preset, seed: u64, out_dir: &Path, out: &mut dyn Write) -> Result<u8, Failure> {
    let market = synthetic::generate(&preset.spec(seed)).map_err(|e| Failure::usage(format!("error: {e}")))?;
    for p in market.write_files(out_dir)? {
        writeln!(out, "{}", p.display())?;
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command, writing results to `out`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = match cli.command {
        Command::ValidateConfig { config } => cmd_validate_config(&config, out),
        Command::IngestReplay { config, from, to } => cmd_ingest_replay(&config, from, to, out),
        Command::Backtest { config, scenarios, out: dir, seed } => cmd_backtest(&config, &scenarios, &dir, seed, out),
        Command::Monitor { config, from, to, speed } => cmd_monitor(&config, from, to, speed, out),
        Command::Report { out: dir } => cmd_report(&dir, out),
        Command::GenerateSynthetic { preset, seed, out: dir } => cmd_generate(preset, seed, &dir, out),
    };
    match res {
        Ok(code) => code,
        Err(f) => {
            let _ = out.flush();
            eprintln!("{}", f.message);
            f.code
        }
    }
}

pub fn main() -> ExitCode {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    ExitCode::from(run_with(std::env::args_os(), &mut lock))
}
