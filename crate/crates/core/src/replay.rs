//! Deterministic replay of a store as a single ordered event stream.
//!
//! Events are ordered by timestamp; ties go bars first, then observations,
//! then news. Within a kind, bars sort by instrument id, observations by
//! `(source_id, instrument_id)` and news by document content.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::market::{Bar, NewsDocument, SourceObservation};
use crate::store::SeriesStore;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum EventPayload {
    Bar(Bar),
    Observation(SourceObservation),
    News(NewsDocument),
}

impl EventPayload {
    fn rank(&self) -> u8 {
        match self {
            EventPayload::Bar(_) => 0,
            EventPayload::Observation(_) => 1,
            EventPayload::News(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestEvent {
    pub timestamp: Timestamp,
    pub payload: EventPayload,
}

impl IngestEvent {
    pub fn bar(bar: Bar) -> Self {
        IngestEvent {
            timestamp: bar.timestamp,
            payload: EventPayload::Bar(bar),
        }
    }

    pub fn observation(obs: SourceObservation) -> Self {
        IngestEvent {
            timestamp: obs.timestamp,
            payload: EventPayload::Observation(obs),
        }
    }

    pub fn news(doc: NewsDocument) -> Self {
        IngestEvent {
            timestamp: doc.timestamp,
            payload: EventPayload::News(doc),
        }
    }

    /// Total replay order.
    pub fn replay_cmp(&self, other: &Self) -> Ordering {
        self.timestamp
            .cmp(&other.timestamp)
            .then_with(|| self.payload.rank().cmp(&other.payload.rank()))
            .then_with(|| match (&self.payload, &other.payload) {
                (EventPayload::Bar(a), EventPayload::Bar(b)) => a.instrument_id.cmp(&b.instrument_id),
                (EventPayload::Observation(a), EventPayload::Observation(b)) => a
                    .source_id
                    .cmp(&b.source_id)
                    .then_with(|| a.instrument_id.cmp(&b.instrument_id)),
                (EventPayload::News(a), EventPayload::News(b)) => a.cmp(b),
                _ => Ordering::Equal,
            })
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for IngestEvent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // The payload already carries its own timestamp.
        self.payload.serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("replay interval is inverted: from {from} > to {to}")]
    InvertedInterval { from: Timestamp, to: Timestamp },
}

/// All events in `[from, to)`, in replay order.
pub fn events(store: &SeriesStore, from: Timestamp, to: Timestamp) -> Result<Vec<IngestEvent>, ReplayError> {
    if from > to {
        return Err(ReplayError::InvertedInterval { from, to });
    }
    let mut out = Vec::new();
    if from == to {
        return Ok(out);
    }
    for inst in store.instruments() {
        let bars = store
            .bars_in(&inst.id, from, to)
            .expect("instrument comes from the store");
        out.extend(bars.into_iter().map(IngestEvent::bar));
    }
    for (source, _) in store.sources() {
        out.extend(
            store
                .observations_in(source, from, to)
                .into_iter()
                .map(IngestEvent::observation),
        );
    }
    out.extend(store.news_in(from, to).into_iter().map(IngestEvent::news));
    out.sort_by(IngestEvent::replay_cmp);
    Ok(out)
}

/// Delivers every event in `[from, to)` to `sink`, in order, and returns the count.
pub fn replay<F>(store: &SeriesStore, from: Timestamp, to: Timestamp, mut sink: F) -> Result<usize, ReplayError>
where
    F: FnMut(&IngestEvent),
{
    let evs = events(store, from, to)?;
    for ev in &evs {
        sink(ev);
    }
    Ok(evs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AssetClass, Instrument, InstrumentId, SourceId, SourceKind};
    use alloc::format;
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    fn id(s: &str) -> InstrumentId {
        InstrumentId::new(s).unwrap()
    }

    fn t(day: i64) -> Timestamp {
        Timestamp::from_ymd(2023, 3, 1).plus_days(day)
    }

    fn fixture(days: i64) -> SeriesStore {
        let mut s = SeriesStore::new();
        for name in ["B", "A"] {
            s.register_instrument(Instrument::new(id(name), AssetClass::Equity, "price"))
                .unwrap();
        }
        for d in 0..days {
            for name in ["B", "A"] {
                s.append_bar(Bar::new(t(d), id(name), 10.0 + d as f64)).unwrap();
                s.append_observation(SourceObservation {
                    timestamp: t(d),
                    source_id: SourceId::new("hist").unwrap(),
                    source_kind: SourceKind::HistoricalData,
                    instrument_id: id(name),
                    value: d as f64 * 0.01,
                })
                .unwrap();
            }
            if d % 3 == 0 {
                s.append_news(NewsDocument {
                    timestamp: t(d),
                    source_kind: SourceKind::MarketNews,
                    headline: format!("day {d}"),
                    body: String::new(),
                    instrument_ids: vec![],
                })
                .unwrap();
            }
        }
        s
    }

    fn digest(evs: &[IngestEvent]) -> u64 {
        // FNV-1a over the debug rendering
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in format!("{evs:?}").bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    #[test]
    fn empty_interval_yields_nothing() {
        let s = fixture(5);
        assert_eq!(replay(&s, t(2), t(2), |_| panic!("no events")).unwrap(), 0);
        assert!(replay(&s, t(3), t(2), |_| ()).is_err());
    }

    #[test]
    fn bar_precedes_news_at_same_instant() {
        let s = fixture(1);
        let evs = events(&s, t(0), t(1)).unwrap();
        let kinds: Vec<u8> = evs.iter().map(|e| e.payload.rank()).collect();
        assert_eq!(kinds, [0, 0, 1, 1, 2]);
        match &evs[0].payload {
            EventPayload::Bar(b) => assert_eq!(b.instrument_id.as_str(), "A"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn count_equals_record_count() {
        let s = fixture(30);
        let n = replay(&s, Timestamp::MIN, Timestamp::MAX, |_| ()).unwrap();
        assert_eq!(n, s.len());
        assert_eq!(n, 30 * 2 + 30 * 2 + 10);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let s = fixture(20);
        let a = events(&s, t(0), t(20)).unwrap();
        let b = events(&s.clone(), t(0), t(20)).unwrap();
        assert_eq!(digest(&a), digest(&b));
    }

    proptest! {
        #[test]
        fn concatenation_of_adjacent_intervals(a in 0i64..25, b in 0i64..25, c in 0i64..25) {
            let mut cuts = [a, b, c];
            cuts.sort_unstable();
            let s = fixture(24);
            let mut left = events(&s, t(cuts[0]), t(cuts[1])).unwrap();
            left.extend(events(&s, t(cuts[1]), t(cuts[2])).unwrap());
            let whole = events(&s, t(cuts[0]), t(cuts[2])).unwrap();
            prop_assert_eq!(left, whole);
        }
    }
}
