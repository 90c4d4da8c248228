//! Append-only in-memory store for bars, source observations and news.
//!
//! Range queries use half-open intervals `[from, to)` and return records in
//! timestamp order. Re-appending an identical record is a no-op; appending a
//! different value under the same key is rejected.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Bound;

use crate::market::{Bar, Instrument, InstrumentId, NewsDocument, SourceId, SourceKind, SourceObservation};
use crate::market::AssetClass;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown instrument `{0}`")]
    UnknownInstrument(InstrumentId),
    #[error("instrument `{id}` already registered as {existing}, not {requested}")]
    AssetClassMismatch {
        id: InstrumentId,
        existing: AssetClass,
        requested: AssetClass,
    },
    #[error("source `{id}` already registered as {existing}, not {requested}")]
    SourceKindMismatch {
        id: SourceId,
        existing: SourceKind,
        requested: SourceKind,
    },
    #[error("conflicting duplicate for {key} at {timestamp}: stored {stored}, got {got}")]
    ConflictingDuplicate {
        key: String,
        timestamp: Timestamp,
        stored: f64,
        got: f64,
    },
    #[error("non-finite value {0}")]
    NonFiniteValue(f64),
    #[error("close must be positive, got {0}")]
    NonPositiveClose(f64),
    #[error("news headline is empty")]
    EmptyHeadline,
    #[error("window length must be at least 1")]
    ZeroLength,
}

/// Outcome of a successful append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Inserted,
    /// Identical record already present; nothing changed.
    Duplicate,
}

#[derive(Debug, Clone, Default)]
pub struct SeriesStore {
    instruments: BTreeMap<InstrumentId, Instrument>,
    sources: BTreeMap<SourceId, SourceKind>,
    bars: BTreeMap<InstrumentId, BTreeMap<Timestamp, f64>>,
    observations: BTreeMap<SourceId, BTreeMap<(InstrumentId, Timestamp), f64>>,
    news: BTreeMap<Timestamp, Vec<NewsDocument>>,
    news_count: usize,
}

impl SeriesStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an instrument. Re-registering with the same asset class is allowed.
    pub fn register_instrument(&mut self, instrument: Instrument) -> Result<Ack, StoreError> {
        if let Some(existing) = self.instruments.get(&instrument.id) {
            if existing.asset_class != instrument.asset_class {
                return Err(StoreError::AssetClassMismatch {
                    id: instrument.id,
                    existing: existing.asset_class,
                    requested: instrument.asset_class,
                });
            }
            return Ok(Ack::Duplicate);
        }
        self.bars.entry(instrument.id.clone()).or_default();
        self.instruments.insert(instrument.id.clone(), instrument);
        Ok(Ack::Inserted)
    }

    pub fn register_source(&mut self, id: SourceId, kind: SourceKind) -> Result<Ack, StoreError> {
        match self.sources.get(&id) {
            Some(&existing) if existing != kind => Err(StoreError::SourceKindMismatch {
                id,
                existing,
                requested: kind,
            }),
            Some(_) => Ok(Ack::Duplicate),
            None => {
                self.observations.entry(id.clone()).or_default();
                self.sources.insert(id, kind);
                Ok(Ack::Inserted)
            }
        }
    }

    pub fn append_bar(&mut self, bar: Bar) -> Result<Ack, StoreError> {
        if !bar.close.is_finite() {
            return Err(StoreError::NonFiniteValue(bar.close));
        }
        if bar.close <= 0.0 {
            return Err(StoreError::NonPositiveClose(bar.close));
        }
        let series = self
            .bars
            .get_mut(&bar.instrument_id)
            .ok_or_else(|| StoreError::UnknownInstrument(bar.instrument_id.clone()))?;
        insert_value(series, bar.timestamp, bar.close, || {
            String::from(bar.instrument_id.as_str())
        })
    }

    /// Appends an observation, registering its source on first sight.
    pub fn append_observation(&mut self, obs: SourceObservation) -> Result<Ack, StoreError> {
        if !obs.value.is_finite() {
            return Err(StoreError::NonFiniteValue(obs.value));
        }
        if !self.instruments.contains_key(&obs.instrument_id) {
            return Err(StoreError::UnknownInstrument(obs.instrument_id));
        }
        self.register_source(obs.source_id.clone(), obs.source_kind)?;
        let log = self
            .observations
            .get_mut(&obs.source_id)
            .expect("source registered above");
        let key = (obs.instrument_id.clone(), obs.timestamp);
        match log.get(&key) {
            Some(&stored) if stored.to_bits() == obs.value.to_bits() => Ok(Ack::Duplicate),
            Some(&stored) => Err(StoreError::ConflictingDuplicate {
                key: alloc::format!("{}/{}", obs.source_id, obs.instrument_id),
                timestamp: obs.timestamp,
                stored,
                got: obs.value,
            }),
            None => {
                log.insert(key, obs.value);
                Ok(Ack::Inserted)
            }
        }
    }

    pub fn append_news(&mut self, doc: NewsDocument) -> Result<Ack, StoreError> {
        if doc.headline.trim().is_empty() {
            return Err(StoreError::EmptyHeadline);
        }
        let slot = self.news.entry(doc.timestamp).or_default();
        if slot.contains(&doc) {
            return Ok(Ack::Duplicate);
        }
        slot.push(doc);
        self.news_count += 1;
        Ok(Ack::Inserted)
    }

    pub fn instrument(&self, id: &InstrumentId) -> Option<&Instrument> {
        self.instruments.get(id)
    }

    pub fn instruments(&self) -> impl Iterator<Item = &Instrument> {
        self.instruments.values()
    }

    /// Registered sources with their kinds, ordered by id.
    pub fn sources(&self) -> impl Iterator<Item = (&SourceId, SourceKind)> {
        self.sources.iter().map(|(id, k)| (id, *k))
    }

    pub fn source_kind(&self, id: &SourceId) -> Option<SourceKind> {
        self.sources.get(id).copied()
    }

    pub fn bar_count(&self) -> usize {
        self.bars.values().map(BTreeMap::len).sum()
    }

    pub fn observation_count(&self) -> usize {
        self.observations.values().map(BTreeMap::len).sum()
    }

    pub fn news_count(&self) -> usize {
        self.news_count
    }

    pub fn len(&self) -> usize {
        self.bar_count() + self.observation_count() + self.news_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn series(&self, id: &InstrumentId) -> Result<&BTreeMap<Timestamp, f64>, StoreError> {
        self.bars
            .get(id)
            .ok_or_else(|| StoreError::UnknownInstrument(id.clone()))
    }

    /// Bars of one instrument with `from <= timestamp < to`.
    pub fn bars_in(&self, id: &InstrumentId, from: Timestamp, to: Timestamp) -> Result<Vec<Bar>, StoreError> {
        let series = self.series(id)?;
        if from >= to {
            return Ok(Vec::new());
        }
        Ok(series
            .range(from..to)
            .map(|(&ts, &close)| Bar::new(ts, id.clone(), close))
            .collect())
    }

    /// The most recent `length` bars at or before `end`, oldest first.
    /// Short history yields fewer bars, never an error.
    pub fn query_window(&self, id: &InstrumentId, end: Timestamp, length: usize) -> Result<Vec<Bar>, StoreError> {
        Ok(self
            .closes_window(id, end, length)?
            .into_iter()
            .map(|(ts, close)| Bar::new(ts, id.clone(), close))
            .collect())
    }

    /// Like [`query_window`](Self::query_window) but returns `(timestamp, close)` pairs.
    pub fn closes_window(&self, id: &InstrumentId, end: Timestamp, length: usize) -> Result<Vec<(Timestamp, f64)>, StoreError> {
        if length == 0 {
            return Err(StoreError::ZeroLength);
        }
        let series = self.series(id)?;
        let mut out: Vec<(Timestamp, f64)> = series
            .range(..=end)
            .rev()
            .take(length)
            .map(|(&ts, &c)| (ts, c))
            .collect();
        out.reverse();
        Ok(out)
    }

    /// The first bar strictly after `after`, if any.
    pub fn next_bar(&self, id: &InstrumentId, after: Timestamp) -> Result<Option<(Timestamp, f64)>, StoreError> {
        Ok(self
            .series(id)?
            .range((Bound::Excluded(after), Bound::Unbounded))
            .next()
            .map(|(&ts, &c)| (ts, c)))
    }

    pub fn bar_at(&self, id: &InstrumentId, ts: Timestamp) -> Result<Option<f64>, StoreError> {
        Ok(self.series(id)?.get(&ts).copied())
    }

    /// Every bar timestamp across all instruments, deduplicated and ascending.
    pub fn bar_timestamps(&self) -> Vec<Timestamp> {
        let mut all: Vec<Timestamp> = self.bars.values().flat_map(|s| s.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Observations of one source with `from <= timestamp < to`, ordered by
    /// `(timestamp, instrument_id)`.
    pub fn observations_in(&self, source: &SourceId, from: Timestamp, to: Timestamp) -> Vec<SourceObservation> {
        let Some(kind) = self.sources.get(source).copied() else {
            return Vec::new();
        };
        let mut out: Vec<SourceObservation> = self.observations[source]
            .iter()
            .filter(|((_, ts), _)| *ts >= from && *ts < to)
            .map(|((inst, ts), &value)| SourceObservation {
                timestamp: *ts,
                source_id: source.clone(),
                source_kind: kind,
                instrument_id: inst.clone(),
                value,
            })
            .collect();
        out.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.instrument_id.cmp(&b.instrument_id))
        });
        out
    }

    /// Latest value of `source` for `instrument` with `after < timestamp <= upto`.
    pub fn latest_observation(&self, source: &SourceId, instrument: &InstrumentId, after: Timestamp, upto: Timestamp) -> Option<(Timestamp, f64)> {
        if after >= upto {
            return None;
        }
        let log = self.observations.get(source)?;
        log.range((
            Bound::Excluded((instrument.clone(), after)),
            Bound::Included((instrument.clone(), upto)),
        ))
        .next_back()
        .map(|((_, ts), &v)| (*ts, v))
    }

    /// Instruments on which `source` has reported at least once.
    pub fn instruments_reported_by(&self, source: &SourceId) -> Vec<InstrumentId> {
        let mut ids: Vec<InstrumentId> = self
            .observations
            .get(source)
            .map(|log| log.keys().map(|(i, _)| i.clone()).collect())
            .unwrap_or_default();
        ids.dedup();
        ids
    }

    /// News documents with `from <= timestamp < to`, in insertion order within a timestamp.
    pub fn news_in(&self, from: Timestamp, to: Timestamp) -> Vec<NewsDocument> {
        if from >= to {
            return Vec::new();
        }
        self.news
            .range(from..to)
            .flat_map(|(_, docs)| docs.iter().cloned())
            .collect()
    }

    /// Earliest and latest timestamp of any stored record.
    pub fn time_bounds(&self) -> Option<(Timestamp, Timestamp)> {
        let bar_ts = self
            .bars
            .values()
            .flat_map(|s| s.keys().next().into_iter().chain(s.keys().next_back()));
        let obs_ts = self
            .observations
            .values()
            .flat_map(|log| log.keys().map(|(_, ts)| ts));
        let news_ts = self.news.keys();
        let mut lo: Option<Timestamp> = None;
        let mut hi: Option<Timestamp> = None;
        for &ts in bar_ts.chain(obs_ts).chain(news_ts) {
            lo = Some(lo.map_or(ts, |l| l.min(ts)));
            hi = Some(hi.map_or(ts, |h| h.max(ts)));
        }
        lo.zip(hi)
    }
}

fn insert_value(
    series: &mut BTreeMap<Timestamp, f64>,
    ts: Timestamp,
    value: f64,
    key: impl FnOnce() -> String,
) -> Result<Ack, StoreError> {
    match series.get(&ts) {
        Some(&stored) if stored.to_bits() == value.to_bits() => Ok(Ack::Duplicate),
        Some(&stored) => Err(StoreError::ConflictingDuplicate {
            key: key(),
            timestamp: ts,
            stored,
            got: value,
        }),
        None => {
            series.insert(ts, value);
            Ok(Ack::Inserted)
        }
    }
}
