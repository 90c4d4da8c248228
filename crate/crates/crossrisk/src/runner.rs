//! Scenario suites and the live monitoring loop.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crossrisk_core::backtest::{self, BacktestError};
use crossrisk_core::engine::EngineError;
use crossrisk_core::market::{Instrument, SourceId, SourceKind};
use crossrisk_core::replay::{self, ReplayError};
use crossrisk_core::text::InsightProvider;
use crossrisk_core::{BacktestReport, Engine, EngineParams, SeriesStore, Timestamp};

use crate::report;
use crate::scenario::ScenarioSpec;
use crate::synthetic::{self, SyntheticError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs one scenario against `store`, or against its own generated market when it names one.
pub fn run_scenario<P: InsightProvider>(
    spec: &ScenarioSpec,
    params: &EngineParams,
    store: &SeriesStore,
    provider: P,
    seed_override: Option<u64>,
) -> Result<BacktestReport, RunError> {
    let generated;
    let store = match spec.market {
        Some(preset) => {
            let seed = seed_override.or(spec.seed).unwrap_or_default();
            generated = synthetic::generate(&preset.spec(seed))?.to_store();
            &generated
        }
        None => store,
    };
    let mut scenario = spec.resolve(store);
    if spec.market.is_some() {
        scenario.seed = seed_override.or(spec.seed);
    }
    Ok(backtest::run_backtest(store, &scenario, params, provider)?)
}

/// Runs every scenario on its own thread; results keep the input order.
pub fn run_suite<P: InsightProvider + Sync>(
    specs: &[ScenarioSpec],
    params: &EngineParams,
    store: &SeriesStore,
    provider: &P,
    seed_override: Option<u64>,
) -> Vec<Result<BacktestReport, RunError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| scope.spawn(move || run_scenario(spec, params, store, provider, seed_override)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorOutcome {
    pub events: usize,
    pub ticks: usize,
    pub alerts: usize,
    pub interrupted: bool,
}

pub struct MonitorOptions<'a> {
    pub from: Timestamp,
    pub to: Timestamp,
    /// Wall-clock seconds per day of market time; 0 replays without delay.
    pub speed: f64,
    pub interrupted: &'a AtomicBool,
}

const DAY_MS: f64 = 86_400_000.0;
const SLEEP_SLICE: Duration = Duration::from_millis(25);

fn pause(d: Duration, stop: &AtomicBool) {
    let end = Instant::now() + d;
    while !stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= end {
            break;
        }
        std::thread::sleep((end - now).min(SLEEP_SLICE));
    }
}

/// Replays the store through the live engine and writes each alert of a tick
/// inside `[from, to)` as one JSON line. Earlier data only warms the engine up.
pub fn monitor<P: InsightProvider, W: Write>(
    params: &EngineParams,
    universe: &[Instrument],
    store: &SeriesStore,
    provider: P,
    opts: &MonitorOptions<'_>,
    out: &mut W,
) -> Result<MonitorOutcome, RunError> {
    let sources: Vec<(SourceId, SourceKind)> = store.sources().map(|(id, k)| (id.clone(), k)).collect();
    let mut engine = Engine::new(params.clone(), universe, &sources, provider)?;
    let start = store.time_bounds().map_or(opts.from, |b| b.0.min(opts.from));
    let events = replay::events(store, start, opts.to.max(start))?;
    let mut outcome = MonitorOutcome::default();
    let mut prev: Option<Timestamp> = None;
    let emit = |rec: crossrisk_core::TickRecord, outcome: &mut MonitorOutcome, out: &mut W| -> std::io::Result<()> {
        if rec.timestamp >= opts.from {
            outcome.ticks += 1;
            if let Some(a) = &rec.alert {
                outcome.alerts += 1;
                writeln!(out, "{}", report::alert_line(a))?;
            }
            out.flush()?;
        }
        Ok(())
    };
    for ev in &events {
        if opts.interrupted.load(Ordering::SeqCst) {
            outcome.interrupted = true;
            out.flush()?;
            return Ok(outcome);
        }
        if let Some(p) = prev {
            if opts.speed > 0.0 && ev.timestamp >= opts.from && ev.timestamp > p {
                let secs = opts.speed * (ev.timestamp - p) as f64 / DAY_MS;
                pause(Duration::from_secs_f64(secs), opts.interrupted);
            }
        }
        prev = Some(ev.timestamp);
        if let Some(rec) = engine.on_event(ev)? {
            emit(rec, &mut outcome, out)?;
        }
        outcome.events += 1;
    }
    if let Some(rec) = engine.finish()? {
        emit(rec, &mut outcome, out)?;
    }
    out.flush()?;
    Ok(outcome)
}
