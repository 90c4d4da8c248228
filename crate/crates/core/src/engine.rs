//! The tick loop shared by live monitoring and backtesting.
//!
//! The engine consumes replay events in order. Bars open a tick at their
//! timestamp; the tick is evaluated as soon as an event with a later
//! timestamp arrives (or on [`Engine::finish`]), so every quantity computed
//! for a tick depends only on records stamped at or before it.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::analytics::{self, AnalyticsError, RiskParams, RiskValue, SignalDerivation, SignalSet, SignalWeights};
use crate::market::{Instrument, InstrumentId, NewsDocument, SourceId, SourceKind};
use crate::replay::{EventPayload, IngestEvent};
use crate::stats;
use crate::store::{SeriesStore, StoreError};
use crate::synthesis::{self, Alert, AlertScope, MarketView, TotalRisk};
use crate::text::{self, InsightProvider, ProviderError, TextInsight};
use crate::time::Timestamp;
use crate::weights::{self, IntegrationWeights, RelevanceScore, WeightsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("event at {got} arrived after tick {tick} was evaluated")]
    OutOfOrder { got: Timestamp, tick: Timestamp },
    #[error("no bar for `{instrument}` at tick {timestamp}")]
    IncompleteTick {
        instrument: InstrumentId,
        timestamp: Timestamp,
    },
    #[error("observation from unconfigured source `{0}`")]
    UnknownSource(SourceId),
    #[error("the universe is empty")]
    EmptyUniverse,
    #[error("invalid engine parameter: {0}")]
    InvalidParams(&'static str),
}

/// Every tunable of the tick loop.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EngineParams {
    pub risk: RiskParams,
    pub derivation: SignalDerivation,
    pub kappa: f64,
    pub alpha: f64,
    pub flat_band: f64,
    pub threshold: f64,
    /// Fixed alert trigger on `r_total`; when `None` it is calibrated.
    pub risk_trigger: Option<f64>,
    /// Quantile of calibration-period `r_total` used as the trigger.
    pub trigger_quantile: f64,
    /// Evaluated ticks used for trigger calibration; defaults to the window.
    pub calibration_ticks: Option<usize>,
    pub learning_rate: f64,
    pub floor: f64,
    /// `norm_scale = norm_multiplier * recent aggregate-signal std`.
    pub norm_multiplier: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            risk: RiskParams::default(),
            derivation: SignalDerivation::LogReturn,
            kappa: text::DEFAULT_KAPPA,
            alpha: synthesis::DEFAULT_ALPHA,
            flat_band: synthesis::DEFAULT_FLAT_BAND,
            threshold: synthesis::DEFAULT_THRESHOLD,
            risk_trigger: None,
            trigger_quantile: 0.9,
            calibration_ticks: None,
            learning_rate: 0.1,
            floor: weights::DEFAULT_FLOOR,
            norm_multiplier: 3.0,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.risk.validate()?;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(EngineError::InvalidParams("kappa must be finite and >= 0"));
        }
        if !unit(self.alpha) {
            return Err(EngineError::InvalidParams("alpha must lie in [0, 1]"));
        }
        if !unit(self.flat_band) {
            return Err(EngineError::InvalidParams("flat_band must lie in [0, 1]"));
        }
        if !unit(self.threshold) {
            return Err(EngineError::InvalidParams("threshold must lie in [0, 1]"));
        }
        if !unit(self.trigger_quantile) {
            return Err(EngineError::InvalidParams("trigger_quantile must lie in [0, 1]"));
        }
        if self.risk_trigger.is_some_and(|t| !t.is_finite()) {
            return Err(EngineError::InvalidParams("risk_trigger must be finite"));
        }
        if self.risk_trigger.is_none() && self.calibration_len() == 0 {
            return Err(EngineError::InvalidParams("calibration needs at least one tick"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EngineError::InvalidParams("learning_rate must be positive"));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(EngineError::InvalidParams("floor must lie in (0, 1)"));
        }
        if !(self.norm_multiplier > 0.0 && self.norm_multiplier.is_finite()) {
            return Err(EngineError::InvalidParams("norm_multiplier must be positive"));
        }
        Ok(())
    }

    pub fn calibration_len(&self) -> usize {
        self.calibration_ticks.unwrap_or(self.risk.window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickPhase {
    /// Alerts are suppressed while the risk trigger is being calibrated.
    Calibration,
    Live,
}

impl TickPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            TickPhase::Calibration => "calibration",
            TickPhase::Live => "live",
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for TickPhase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Everything the engine computed for one evaluated tick.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TickRecord {
    pub index: usize,
    pub timestamp: Timestamp,
    pub phase: TickPhase,
    pub signals: SignalSet,
    pub vols: BTreeMap<InstrumentId, f64>,
    pub risk: RiskValue,
    pub insight: TextInsight,
    pub total: TotalRisk,
    pub view: MarketView,
    pub recent_vol: f64,
    pub norm_scale: f64,
    pub risk_trigger: Option<f64>,
    pub relevance: RelevanceScore,
    /// Fusion weights after this tick's update.
    pub weights: Option<IntegrationWeights>,
    pub alert: Option<Alert>,
}

pub struct Engine<P> {
    params: EngineParams,
    provider: P,
    universe: Vec<InstrumentId>,
    signal_weights: SignalWeights,
    store: SeriesStore,
    weights: Option<IntegrationWeights>,
    open_tick: Option<Timestamp>,
    last_tick: Option<Timestamp>,
    pending_news: Vec<NewsDocument>,
    m_history: VecDeque<f64>,
    calibration: Vec<f64>,
    trigger: Option<f64>,
    evaluated: usize,
    warmup_ticks: usize,
}

impl<P: InsightProvider> Engine<P> {
    pub fn new(
        params: EngineParams,
        universe: &[Instrument],
        sources: &[(SourceId, SourceKind)],
        provider: P,
    ) -> Result<Self, EngineError> {
        params.validate()?;
        if universe.is_empty() {
            return Err(EngineError::EmptyUniverse);
        }
        let mut store = SeriesStore::new();
        for inst in universe {
            store.register_instrument(inst.clone())?;
        }
        for (id, kind) in sources {
            store.register_source(id.clone(), *kind)?;
        }
        let weights = if sources.is_empty() {
            None
        } else {
            Some(weights::initial_weights(sources, params.floor)?)
        };
        let ids: Vec<InstrumentId> = universe.iter().map(|i| i.id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        Ok(Engine {
            trigger: params.risk_trigger,
            signal_weights: SignalWeights::uniform(ids.clone())?,
            universe: ids,
            params,
            provider,
            store,
            weights,
            open_tick: None,
            last_tick: None,
            pending_news: Vec::new(),
            m_history: VecDeque::new(),
            calibration: Vec::new(),
            evaluated: 0,
            warmup_ticks: 0,
        })
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn weights(&self) -> Option<&IntegrationWeights> {
        self.weights.as_ref()
    }

    pub fn signal_weights(&self) -> &SignalWeights {
        &self.signal_weights
    }

    pub fn universe(&self) -> &[InstrumentId] {
        &self.universe
    }

    pub fn risk_trigger(&self) -> Option<f64> {
        self.trigger
    }

    /// Ticks seen before a full window of history was available.
    pub fn warmup_ticks(&self) -> usize {
        self.warmup_ticks
    }

    pub fn evaluated_ticks(&self) -> usize {
        self.evaluated
    }

    /// Feeds one event. Returns the record of a tick closed by this event.
    pub fn on_event(&mut self, ev: &IngestEvent) -> Result<Option<TickRecord>, EngineError> {
        let mut closed = None;
        if let Some(open) = self.open_tick {
            if ev.timestamp > open {
                closed = self.close_tick(open)?;
            }
        }
        if let Some(last) = self.last_tick {
            if ev.timestamp <= last {
                return Err(EngineError::OutOfOrder {
                    got: ev.timestamp,
                    tick: last,
                });
            }
        }
        match &ev.payload {
            EventPayload::Bar(bar) => {
                if self.store.instrument(&bar.instrument_id).is_some() {
                    self.store.append_bar(bar.clone())?;
                    self.open_tick = Some(bar.timestamp);
                }
            }
            EventPayload::Observation(obs) => {
                if self.store.source_kind(&obs.source_id).is_none() {
                    return Err(EngineError::UnknownSource(obs.source_id.clone()));
                }
                if self.store.instrument(&obs.instrument_id).is_some() {
                    self.store.append_observation(obs.clone())?;
                }
            }
            EventPayload::News(doc) => self.pending_news.push(doc.clone()),
        }
        Ok(closed)
    }

    /// Evaluates the tick still open at end of stream.
    pub fn finish(&mut self) -> Result<Option<TickRecord>, EngineError> {
        match self.open_tick {
            Some(open) => self.close_tick(open),
            None => Ok(None),
        }
    }

    fn close_tick(&mut self, ts: Timestamp) -> Result<Option<TickRecord>, EngineError> {
        let prev = self.last_tick.unwrap_or(Timestamp::MIN);
        self.open_tick = None;
        self.last_tick = Some(ts);
        let batch = core::mem::take(&mut self.pending_news);
        let window = self.params.risk.window;

        let mut windows: Vec<Vec<f64>> = Vec::with_capacity(self.universe.len());
        for inst in &self.universe {
            let closes = self.store.closes_window(inst, ts, window + 1)?;
            if closes.last().map(|c| c.0) != Some(ts) {
                return Err(EngineError::IncompleteTick {
                    instrument: inst.clone(),
                    timestamp: ts,
                });
            }
            windows.push(closes.into_iter().map(|(_, c)| c).collect());
        }
        if windows.iter().any(|w| w.len() < window + 1) {
            self.warmup_ticks += 1;
            return Ok(None);
        }

        let returns: Vec<Vec<f64>> = windows
            .iter()
            .map(|w| analytics::log_returns(w))
            .collect::<Result<_, _>>()?;
        let mut vols = BTreeMap::new();
        for (inst, r) in self.universe.iter().zip(&returns) {
            vols.insert(inst.clone(), analytics::rolling_volatility(r, window)?);
        }
        let v = analytics::aggregate_v(&vols, &self.signal_weights)?;
        let cov = if returns.len() >= 2 {
            analytics::aggregate_cov(&analytics::covariance_matrix(&returns)?)?
        } else {
            0.0
        };
        let risk = analytics::risk_metric(v, cov, &self.params.risk, ts);

        // signals: fused source readings where present, else bar-derived
        let mut values = BTreeMap::new();
        for (inst, r) in self.universe.iter().zip(&returns) {
            let mut readings = Vec::new();
            if let Some(w) = &self.weights {
                for src in w.sources() {
                    if let Some((_, value)) = self.store.latest_observation(src, inst, prev, ts) {
                        readings.push((src.clone(), value));
                    }
                }
            }
            let signal = match &self.weights {
                Some(w) if !readings.is_empty() => weights::fuse(&readings, w)?,
                _ => self.params.derivation.derive(r).unwrap_or(0.0),
            };
            values.insert(inst.clone(), signal);
        }
        let signals = SignalSet {
            timestamp: ts,
            derivation: self.params.derivation,
            values,
        };
        let m_t = analytics::aggregate_signal(&signals, &self.signal_weights)?;

        let mut relevance = RelevanceScore::default();
        if let Some(w) = &self.weights {
            for src in w.sources() {
                let rel = match weights::relevance_from_history(&self.store, src, window, ts) {
                    Ok(r) => r,
                    Err(WeightsError::InsufficientHistory(_)) => 0.0,
                    Err(e) => return Err(e.into()),
                };
                relevance.scores.insert(src.clone(), rel);
            }
            self.weights = Some(weights::update_weights(w, &relevance, self.params.learning_rate)?);
        }

        let insight = self.provider.analyze(ts, &batch)?;
        let context = text::context_adjustment(&risk, &insight, self.params.kappa);
        let total = synthesis::total_risk(&risk, context);

        let hist: Vec<f64> = self.m_history.iter().copied().collect();
        let recent_vol = match stats::sample_std(&hist) {
            Some(sd) if sd > 0.0 => sd,
            _ if v > 0.0 => v,
            _ => 1.0,
        };
        let norm_scale = self.params.norm_multiplier * recent_vol;
        let flat_band = self.params.flat_band;
        let reliability = synthesis::reliability_score(m_t, recent_vol, &insight, flat_band)
            .expect("recent_vol is positive");
        let view = synthesis::synthesize_view(m_t, &insight, self.params.alpha, norm_scale, flat_band)
            .with_reliability(reliability);

        let phase = if self.trigger.is_some() {
            TickPhase::Live
        } else {
            self.calibration.push(total.r_total);
            if self.calibration.len() >= self.params.calibration_len() {
                self.trigger = stats::quantile(&self.calibration, self.params.trigger_quantile);
            }
            TickPhase::Calibration
        };
        let alert = match (phase, self.trigger) {
            (TickPhase::Live, Some(trigger)) => synthesis::gate_alert(
                &view,
                &total,
                self.params.threshold,
                trigger,
                &insight,
                scope_of(&batch),
            ),
            _ => None,
        };

        self.m_history.push_back(m_t);
        while self.m_history.len() > window {
            self.m_history.pop_front();
        }
        let index = self.evaluated;
        self.evaluated += 1;
        Ok(Some(TickRecord {
            index,
            timestamp: ts,
            phase,
            signals,
            vols,
            risk,
            insight,
            total,
            view,
            recent_vol,
            norm_scale,
            risk_trigger: self.trigger,
            relevance,
            weights: self.weights.clone(),
            alert,
        }))
    }
}

fn scope_of(batch: &[NewsDocument]) -> AlertScope {
    if batch.is_empty() || batch.iter().any(|d| d.instrument_ids.is_empty()) {
        return AlertScope::MarketWide;
    }
    let ids: BTreeSet<InstrumentId> = batch
        .iter()
        .flat_map(|d| d.instrument_ids.iter().cloned())
        .collect();
    AlertScope::Instruments(ids.into_iter().collect())
}
