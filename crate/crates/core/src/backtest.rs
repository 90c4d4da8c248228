//! Rolling-window backtests, risk-event labels and evaluation metrics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::analytics;
use crate::engine::{Engine, EngineError, EngineParams, TickPhase};
use crate::market::{Instrument, InstrumentId, SourceId, SourceKind};
use crate::replay::{self, ReplayError};
use crate::synthesis::{Alert, Direction};
use crate::text::InsightProvider;
use crate::time::Timestamp;
use crate::weights::IntegrationWeights;

/// Rolling standard deviations below which a next-day return counts as a risk event.
pub const DEFAULT_EVENT_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BacktestError {
    #[error("need at least {needed} bars in the interval, have {available}")]
    InsufficientWarmup { needed: usize, available: usize },
    #[error("unknown instrument `{0}`")]
    UnknownInstrument(InstrumentId),
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("{predictions} predictions but {events} event pairs")]
    LengthMismatch { predictions: usize, events: usize },
}

/// Per-scenario parameter overrides layered over the base engine parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScenarioOverrides {
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub threshold: Option<f64>,
    pub window: Option<usize>,
}

impl ScenarioOverrides {
    pub fn apply(&self, base: &EngineParams) -> EngineParams {
        let mut p = base.clone();
        if let Some(x) = self.beta1 {
            p.risk.beta1 = x;
        }
        if let Some(x) = self.beta2 {
            p.risk.beta2 = x;
        }
        if let Some(x) = self.kappa {
            p.kappa = x;
        }
        if let Some(x) = self.alpha {
            p.alpha = x;
        }
        if let Some(x) = self.threshold {
            p.threshold = x;
        }
        if let Some(x) = self.window {
            p.risk.window = x;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScenarioConfig {
    pub name: String,
    pub universe: Vec<InstrumentId>,
    pub overrides: ScenarioOverrides,
    /// Inclusive start of the replayed interval; warm-up bars come from its head.
    pub from: Timestamp,
    /// Exclusive end.
    pub to: Timestamp,
    pub seed: Option<u64>,
    pub event_sigma: f64,
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, universe: Vec<InstrumentId>, from: Timestamp, to: Timestamp) -> Self {
        ScenarioConfig {
            name: name.into(),
            universe,
            overrides: ScenarioOverrides::default(),
            from,
            to,
            seed: None,
            event_sigma: DEFAULT_EVENT_SIGMA,
        }
    }
}

/// Whether the next-period return of `instrument` after `timestamp` is a drawdown event.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RiskEventLabel {
    pub instrument: InstrumentId,
    pub timestamp: Timestamp,
    pub event: bool,
}

/// Labels every bar that has `window` prior returns and a following bar.
///
/// A bar is an event when the log return into the next bar is at most
/// `-sigma` times the sample std of the `window` returns ending at the bar.
pub fn risk_event_labels(
    bars: &[(Timestamp, f64)],
    instrument: &InstrumentId,
    window: usize,
    sigma: f64,
) -> Result<Vec<RiskEventLabel>, analytics::AnalyticsError> {
    let closes: Vec<f64> = bars.iter().map(|b| b.1).collect();
    let returns = analytics::log_returns(&closes)?;
    let mut out = Vec::new();
    // returns[j] is the return from bar j to bar j+1
    for j in window..returns.len() {
        let vol = analytics::rolling_volatility(&returns[j - window..j], window)?;
        out.push(RiskEventLabel {
            instrument: instrument.clone(),
            timestamp: bars[j].0,
            event: vol > 0.0 && returns[j] <= -sigma * vol,
        });
    }
    Ok(out)
}

/// A predicted direction and the realized next-period return it is scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionPair {
    pub predicted: Direction,
    pub realized: f64,
    /// Flat predictions are correct when `|realized| <= flat_tolerance`.
    pub flat_tolerance: f64,
}

impl DirectionPair {
    pub fn is_correct(&self) -> bool {
        match self.predicted {
            Direction::Up => self.realized > 0.0,
            Direction::Down => self.realized < 0.0,
            Direction::Flat => libm::fabs(self.realized) <= self.flat_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Metrics {
    pub evaluated: usize,
    pub direction_correct: usize,
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Direction accuracy plus alert precision, recall and F1 over `(alert, event)` pairs.
pub fn evaluate_metrics(predictions: &[DirectionPair], events: &[(bool, bool)]) -> Result<Metrics, MetricsError> {
    if predictions.is_empty() || events.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    if predictions.len() != events.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            events: events.len(),
        });
    }
    let correct = predictions.iter().filter(|p| p.is_correct()).count();
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for &(alert, event) in events {
        match (alert, event) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        evaluated: predictions.len(),
        direction_correct: correct,
        accuracy: ratio(correct, predictions.len()),
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WeightPoint {
    pub tick: usize,
    pub timestamp: Timestamp,
    pub weights: BTreeMap<SourceId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BacktestReport {
    pub scenario: String,
    pub universe: Vec<InstrumentId>,
    pub from: Timestamp,
    pub to: Timestamp,
    pub params: EngineParams,
    pub warmup_ticks: usize,
    pub calibration_ticks: usize,
    pub risk_trigger: Option<f64>,
    pub predictions: usize,
    pub risk_events: usize,
    pub metrics: Metrics,
    pub mean_reliability: f64,
    pub alerts: Vec<Alert>,
    pub weight_trajectory: Vec<WeightPoint>,
    pub final_weights: Option<IntegrationWeights>,
}

/// Replays `[from, to)` of `store` through a fresh engine and scores every live tick
/// that has a following bar inside the interval.
pub fn run_backtest<P: InsightProvider>(
    store: &crate::store::SeriesStore,
    scenario: &ScenarioConfig,
    base: &EngineParams,
    provider: P,
) -> Result<BacktestReport, BacktestError> {
    if scenario.from >= scenario.to {
        return Err(BacktestError::InvalidScenario("interval is empty"));
    }
    if scenario.universe.is_empty() {
        return Err(BacktestError::InvalidScenario("universe is empty"));
    }
    if !(scenario.event_sigma.is_finite() && scenario.event_sigma > 0.0) {
        return Err(BacktestError::InvalidScenario("event_sigma must be positive"));
    }
    let params = scenario.overrides.apply(base);
    params.validate()?;
    let window = params.risk.window;

    let mut universe: Vec<Instrument> = Vec::new();
    let ids: BTreeSet<InstrumentId> = scenario.universe.iter().cloned().collect();
    for id in &ids {
        let inst = store
            .instrument(id)
            .ok_or_else(|| BacktestError::UnknownInstrument(id.clone()))?;
        universe.push(inst.clone());
    }

    let mut bars: BTreeMap<InstrumentId, Vec<(Timestamp, f64)>> = BTreeMap::new();
    for id in &ids {
        let series: Vec<(Timestamp, f64)> = store
            .bars_in(id, scenario.from, scenario.to)
            .map_err(|_| BacktestError::UnknownInstrument(id.clone()))?
            .into_iter()
            .map(|b| (b.timestamp, b.close))
            .collect();
        let needed = window + 2;
        if series.len() < needed {
            return Err(BacktestError::InsufficientWarmup {
                needed,
                available: series.len(),
            });
        }
        bars.insert(id.clone(), series);
    }

    let mut labels: BTreeMap<Timestamp, bool> = BTreeMap::new();
    let mut next_close: BTreeMap<(InstrumentId, Timestamp), f64> = BTreeMap::new();
    for (id, series) in &bars {
        for l in risk_event_labels(series, id, window, scenario.event_sigma).map_err(EngineError::from)? {
            *labels.entry(l.timestamp).or_insert(false) |= l.event;
        }
        for pair in series.windows(2) {
            next_close.insert((id.clone(), pair[0].0), pair[1].1);
        }
    }

    let sources: Vec<(SourceId, SourceKind)> = store.sources().map(|(id, k)| (id.clone(), k)).collect();
    let mut engine = Engine::new(params.clone(), &universe, &sources, provider)?;
    let mut records = Vec::new();
    for ev in replay::events(store, scenario.from, scenario.to)? {
        records.extend(engine.on_event(&ev)?);
    }
    records.extend(engine.finish()?);

    let mut predictions = Vec::new();
    let mut pairs = Vec::new();
    let mut reliability_sum = 0.0;
    let mut alerts = Vec::new();
    let mut trajectory = Vec::new();
    let mut calibration_ticks = 0;
    for rec in &records {
        if let Some(w) = &rec.weights {
            trajectory.push(WeightPoint {
                tick: rec.index,
                timestamp: rec.timestamp,
                weights: w.iter().map(|(k, v)| (k.clone(), v)).collect(),
            });
        }
        if rec.phase == TickPhase::Calibration {
            calibration_ticks += 1;
            continue;
        }
        if let Some(a) = &rec.alert {
            alerts.push(a.clone());
        }
        let mut realized = Some(0.0);
        for (id, w) in engine.signal_weights().iter() {
            let step = series_close(&bars, id, rec.timestamp).zip(next_close.get(&(id.clone(), rec.timestamp)).copied());
            realized = match (realized, step) {
                (Some(acc), Some((close, next))) => Some(acc + w * analytics::log_return(close, next).map_err(EngineError::from)?),
                _ => None,
            };
        }
        let Some(realized) = realized else {
            continue;
        };
        predictions.push(DirectionPair {
            predicted: rec.view.direction,
            realized,
            flat_tolerance: params.flat_band * rec.norm_scale,
        });
        let event = labels.get(&rec.timestamp).copied().unwrap_or(false);
        pairs.push((rec.alert.is_some(), event));
        reliability_sum += rec.view.reliability;
    }

    let metrics = evaluate_metrics(&predictions, &pairs)?;
    Ok(BacktestReport {
        scenario: scenario.name.clone(),
        universe: ids.into_iter().collect(),
        from: scenario.from,
        to: scenario.to,
        warmup_ticks: engine.warmup_ticks(),
        calibration_ticks,
        risk_trigger: engine.risk_trigger(),
        predictions: predictions.len(),
        risk_events: pairs.iter().filter(|p| p.1).count(),
        mean_reliability: reliability_sum / predictions.len() as f64,
        metrics,
        alerts,
        weight_trajectory: trajectory,
        final_weights: engine.weights().cloned(),
        params,
    })
}

fn series_close(bars: &BTreeMap<InstrumentId, Vec<(Timestamp, f64)>>, id: &InstrumentId, ts: Timestamp) -> Option<f64> {
    let series = bars.get(id)?;
    let i = series.binary_search_by(|b| b.0.cmp(&ts)).ok()?;
    Some(series[i].1)
}
