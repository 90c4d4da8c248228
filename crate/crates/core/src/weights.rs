//! Source-fusion weights: priors, weighted integration and the online
//! multiplicative-weights learner.
//!
//! Weights live on the probability simplex with a per-source floor so that
//! no source is ever starved to zero. The learner tilts each weight by
//! `exp(rate * (relevance - mean relevance))` and projects back onto
//! `{w : w_i >= floor, sum w_i = 1}`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::market::{InstrumentId, SourceId, SourceKind};
use crate::stats;
use crate::store::SeriesStore;
use crate::time::Timestamp;

/// Default per-source weight floor.
pub const DEFAULT_FLOOR: f64 = 0.01;

/// Simplex tolerance used when checking invariants.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WeightsError {
    #[error("source set is empty")]
    EmptySourceSet,
    #[error("source kind {0} appears more than once")]
    DuplicateKind(SourceKind),
    #[error("source `{0}` appears more than once")]
    DuplicateSource(SourceId),
    #[error("weight floor {floor} must lie in (0, 1/{n}]")]
    InvalidFloor { floor: f64, n: usize },
    #[error("no observations to integrate")]
    NoObservations,
    #[error("source `{0}` has no weight")]
    UnknownSource(SourceId),
    #[error("observation value {0} is not finite")]
    NonFiniteValue(f64),
    #[error("relevance keys do not match weight keys")]
    KeyMismatch,
    #[error("relevance for `{0}` must be a finite value in [0, 1]")]
    InvalidRelevance(SourceId),
    #[error("learning rate must be positive and finite, got {0}")]
    NonPositiveLearningRate(f64),
    #[error("fewer than two overlapping points for `{0}`")]
    InsufficientHistory(SourceId),
    #[error("relevance window must be at least 2, got {0}")]
    WindowTooShort(usize),
}

/// Per-source fusion weights on the floored simplex.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IntegrationWeights {
    weights: BTreeMap<SourceId, f64>,
    floor: f64,
}

impl IntegrationWeights {
    /// Builds weights from arbitrary non-negative masses, projecting onto the
    /// floored simplex.
    pub fn from_masses(masses: BTreeMap<SourceId, f64>, floor: f64) -> Result<Self, WeightsError> {
        let n = masses.len();
        if n == 0 {
            return Err(WeightsError::EmptySourceSet);
        }
        if !(floor > 0.0 && floor <= 1.0 / n as f64) {
            return Err(WeightsError::InvalidFloor { floor, n });
        }
        let ids: Vec<SourceId> = masses.keys().cloned().collect();
        let raw: Vec<f64> = masses.values().copied().collect();
        let projected = project_floored_simplex(&raw, floor);
        Ok(IntegrationWeights {
            weights: ids.into_iter().zip(projected).collect(),
            floor,
        })
    }

    /// Equal weights over `sources`.
    pub fn uniform<I: IntoIterator<Item = SourceId>>(sources: I, floor: f64) -> Result<Self, WeightsError> {
        let mut masses = BTreeMap::new();
        for id in sources {
            if masses.insert(id.clone(), 1.0).is_some() {
                return Err(WeightsError::DuplicateSource(id));
            }
        }
        Self::from_masses(masses, floor)
    }

    pub fn get(&self, id: &SourceId) -> Option<f64> {
        self.weights.get(id).copied()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SourceId, f64)> {
        self.weights.iter().map(|(k, v)| (k, *v))
    }

    pub fn sources(&self) -> impl Iterator<Item = &SourceId> {
        self.weights.keys()
    }

    /// Source with the largest weight; ties resolve to the smallest id.
    pub fn argmax(&self) -> Option<&SourceId> {
        let mut best: Option<(&SourceId, f64)> = None;
        for (id, &w) in &self.weights {
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((id, w));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Whether the simplex and floor invariants hold (to [`SIMPLEX_TOL`]).
    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.weights.values().sum();
        (sum - 1.0).abs() <= SIMPLEX_TOL && self.weights.values().all(|&w| w >= self.floor && w.is_finite())
    }
}

/// Sources with their kinds; kinds must be distinct.
pub fn initial_weights(sources: &[(SourceId, SourceKind)], floor: f64) -> Result<IntegrationWeights, WeightsError> {
    if sources.is_empty() {
        return Err(WeightsError::EmptySourceSet);
    }
    let mut kinds = BTreeSet::new();
    let mut masses = BTreeMap::new();
    for (id, kind) in sources {
        if !kinds.insert(*kind) {
            return Err(WeightsError::DuplicateKind(*kind));
        }
        if masses.insert(id.clone(), kind.efficiency_score()).is_some() {
            return Err(WeightsError::DuplicateSource(id.clone()));
        }
    }
    IntegrationWeights::from_masses(masses, floor)
}

/// Weighted mean of the reporting sources' values, renormalized over the
/// reporters. The result is clamped to the observed `[min, max]`.
pub fn fuse(observations: &[(SourceId, f64)], w: &IntegrationWeights) -> Result<f64, WeightsError> {
    if observations.is_empty() {
        return Err(WeightsError::NoObservations);
    }
    let mut seen = BTreeSet::new();
    let mut total_w = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (id, v) in observations {
        if !v.is_finite() {
            return Err(WeightsError::NonFiniteValue(*v));
        }
        if !seen.insert(id) {
            return Err(WeightsError::DuplicateSource(id.clone()));
        }
        total_w += w.get(id).ok_or_else(|| WeightsError::UnknownSource(id.clone()))?;
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let mut acc = 0.0;
    for (id, v) in observations {
        acc += w.weights[id] / total_w * v;
    }
    Ok(acc.clamp(lo, hi))
}

/// Fused per-instrument values at one instant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IntegratedSnapshot {
    pub timestamp: Timestamp,
    pub values: BTreeMap<InstrumentId, f64>,
    pub contributing: BTreeSet<SourceId>,
}

/// Fuses each instrument's observations; instruments with no observations are omitted.
pub fn integrate(
    timestamp: Timestamp,
    observations: &BTreeMap<InstrumentId, Vec<(SourceId, f64)>>,
    w: &IntegrationWeights,
) -> Result<IntegratedSnapshot, WeightsError> {
    let mut values = BTreeMap::new();
    let mut contributing = BTreeSet::new();
    for (inst, obs) in observations {
        if obs.is_empty() {
            continue;
        }
        values.insert(inst.clone(), fuse(obs, w)?);
        contributing.extend(obs.iter().map(|(id, _)| id.clone()));
    }
    if values.is_empty() {
        return Err(WeightsError::NoObservations);
    }
    Ok(IntegratedSnapshot {
        timestamp,
        values,
        contributing,
    })
}

/// Per-source relevance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RelevanceScore {
    pub scores: BTreeMap<SourceId, f64>,
}

impl RelevanceScore {
    pub fn new(scores: BTreeMap<SourceId, f64>) -> Self {
        RelevanceScore { scores }
    }

    pub fn uniform<'a, I: IntoIterator<Item = &'a SourceId>>(sources: I, value: f64) -> Self {
        RelevanceScore {
            scores: sources.into_iter().map(|s| (s.clone(), value)).collect(),
        }
    }
}

/// One multiplicative-weights step followed by projection onto the floored simplex.
pub fn update_weights(
    w: &IntegrationWeights,
    relevance: &RelevanceScore,
    learning_rate: f64,
) -> Result<IntegrationWeights, WeightsError> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(WeightsError::NonPositiveLearningRate(learning_rate));
    }
    if relevance.scores.len() != w.weights.len() || !relevance.scores.keys().eq(w.weights.keys()) {
        return Err(WeightsError::KeyMismatch);
    }
    for (id, &r) in &relevance.scores {
        if !(0.0..=1.0).contains(&r) {
            return Err(WeightsError::InvalidRelevance(id.clone()));
        }
    }
    let mean = relevance.scores.values().sum::<f64>() / relevance.scores.len() as f64;
    let raw: Vec<f64> = w
        .weights
        .iter()
        .map(|(id, &wi)| wi * libm::exp(learning_rate * (relevance.scores[id] - mean)))
        .collect();
    let projected = project_floored_simplex(&raw, w.floor);
    Ok(IntegrationWeights {
        weights: w.weights.keys().cloned().zip(projected).collect(),
        floor: w.floor,
    })
}

/// Scales `raw` to sum 1, pinning any entry that would fall below `floor` at
/// exactly `floor` and sharing the remaining mass proportionally among the rest.
fn project_floored_simplex(raw: &[f64], floor: f64) -> Vec<f64> {
    let n = raw.len();
    let mut pinned = alloc::vec![false; n];
    loop {
        let free_mass: f64 = raw
            .iter()
            .zip(&pinned)
            .filter(|(_, p)| !**p)
            .map(|(r, _)| r.max(0.0))
            .sum();
        let n_pinned = pinned.iter().filter(|p| **p).count();
        let budget = 1.0 - n_pinned as f64 * floor;
        let n_free = n - n_pinned;
        let mut changed = false;
        let out: Vec<f64> = raw
            .iter()
            .zip(&pinned)
            .map(|(r, p)| {
                if *p {
                    floor
                } else if free_mass > 0.0 {
                    budget * r.max(0.0) / free_mass
                } else {
                    budget / n_free as f64
                }
            })
            .collect();
        for i in 0..n {
            if !pinned[i] && out[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Relevance from paired `(source value, next-period return)` samples: the
/// larger of |corr(value, return)| and |corr(value, |return|)|, so a source
/// counts as relevant when it anticipates either direction or magnitude.
pub fn relevance(values: &[f64], next_returns: &[f64]) -> Option<f64> {
    let abs: Vec<f64> = next_returns.iter().map(|r| r.abs()).collect();
    let signed = stats::pearson(values, next_returns)?;
    let magnitude = stats::pearson(values, &abs)?;
    Some(signed.abs().max(magnitude.abs()).clamp(0.0, 1.0))
}

/// Relevance of `source` over the last `window` periods ending at `as_of`.
///
/// Each sample pairs the source's latest observation within a bar period
/// with the log return into the following bar. Only bars at or before
/// `as_of` are used, so the result never depends on later data.
pub fn relevance_from_history(
    store: &SeriesStore,
    source: &SourceId,
    window: usize,
    as_of: Timestamp,
) -> Result<f64, WeightsError> {
    if window < 2 {
        return Err(WeightsError::WindowTooShort(window));
    }
    let mut values = Vec::new();
    let mut next_returns = Vec::new();
    for inst in store.instruments_reported_by(source) {
        let Ok(bars) = store.closes_window(&inst, as_of, window + 2) else {
            continue;
        };
        for j in 1..bars.len().saturating_sub(1) {
            let (prev_ts, _) = bars[j - 1];
            let (ts, close) = bars[j];
            let (_, next_close) = bars[j + 1];
            if let Some((_, v)) = store.latest_observation(source, &inst, prev_ts, ts) {
                values.push(v);
                next_returns.push(libm::log(next_close / close));
            }
        }
    }
    relevance(&values, &next_returns).ok_or_else(|| WeightsError::InsufficientHistory(source.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AssetClass, Bar, Instrument, SourceObservation};
    use alloc::vec;
    use proptest::prelude::*;

    fn sid(s: &str) -> SourceId {
        SourceId::new(s).unwrap()
    }

    #[test]
    fn single_kind_gets_full_weight() {
        let w = initial_weights(&[(sid("news"), SourceKind::MarketNews)], 0.01).unwrap();
        assert_eq!(w.get(&sid("news")), Some(1.0));
    }

    #[test]
    fn six_kind_prior() {
        let sources: Vec<(SourceId, SourceKind)> = SourceKind::ALL
            .iter()
            .map(|k| (sid(k.as_str()), *k))
            .collect();
        let w = initial_weights(&sources, 0.01).unwrap();
        // 0.85 + 0.78 + 0.82 + 0.80 + 0.77 + 0.83 = 4.85
        assert!((w.get(&sid("market_news")).unwrap() - 0.85 / 4.85).abs() < 1e-12);
        assert!((w.get(&sid("analyst_reports")).unwrap() - 0.77 / 4.85).abs() < 1e-12);
        assert!(w.is_valid());
    }

    #[test]
    fn two_kind_prior() {
        let w = initial_weights(
            &[
                (sid("n"), SourceKind::MarketNews),
                (sid("a"), SourceKind::AnalystReports),
            ],
            0.01,
        )
        .unwrap();
        assert!((w.get(&sid("n")).unwrap() - 0.85 / 1.62).abs() < 1e-12);
        assert!((w.get(&sid("a")).unwrap() - 0.77 / 1.62).abs() < 1e-12);
    }

    #[test]
    fn initial_weight_errors() {
        assert_eq!(initial_weights(&[], 0.01), Err(WeightsError::EmptySourceSet));
        assert_eq!(
            initial_weights(
                &[
                    (sid("a"), SourceKind::MarketNews),
                    (sid("b"), SourceKind::MarketNews)
                ],
                0.01
            ),
            Err(WeightsError::DuplicateKind(SourceKind::MarketNews))
        );
        assert!(matches!(
            initial_weights(&[(sid("a"), SourceKind::MarketNews), (sid("b"), SourceKind::HistoricalData)], 0.6),
            Err(WeightsError::InvalidFloor { .. })
        ));
    }

    #[test]
    fn equal_weight_mean() {
        let w = IntegrationWeights::uniform([sid("a"), sid("b")], 0.01).unwrap();
        assert_eq!(fuse(&[(sid("a"), 2.0), (sid("b"), 4.0)], &w).unwrap(), 3.0);
    }

    #[test]
    fn single_reporter_is_exact() {
        let w = initial_weights(
            &[
                (sid("a"), SourceKind::MarketNews),
                (sid("b"), SourceKind::HistoricalData),
            ],
            0.01,
        )
        .unwrap();
        assert_eq!(fuse(&[(sid("b"), -0.123_456_789)], &w).unwrap(), -0.123_456_789);
    }

    #[test]
    fn fuse_errors() {
        let w = IntegrationWeights::uniform([sid("a")], 0.01).unwrap();
        assert_eq!(fuse(&[], &w), Err(WeightsError::NoObservations));
        assert_eq!(
            fuse(&[(sid("z"), 1.0)], &w),
            Err(WeightsError::UnknownSource(sid("z")))
        );
    }

    #[test]
    fn integrate_builds_snapshot() {
        let w = IntegrationWeights::uniform([sid("a"), sid("b")], 0.01).unwrap();
        let mut obs = BTreeMap::new();
        obs.insert(InstrumentId::new("X").unwrap(), vec![(sid("a"), 1.0), (sid("b"), 3.0)]);
        obs.insert(InstrumentId::new("Y").unwrap(), vec![(sid("b"), 5.0)]);
        let snap = integrate(Timestamp::from_millis(0), &obs, &w).unwrap();
        assert_eq!(snap.values[&InstrumentId::new("X").unwrap()], 2.0);
        assert_eq!(snap.values[&InstrumentId::new("Y").unwrap()], 5.0);
        assert_eq!(snap.contributing.len(), 2);
    }

    #[test]
    fn uniform_relevance_leaves_weights() {
        let w = initial_weights(
            &[
                (sid("a"), SourceKind::MarketNews),
                (sid("b"), SourceKind::AnalystReports),
                (sid("c"), SourceKind::EconomicIndicators),
            ],
            0.01,
        )
        .unwrap();
        let r = RelevanceScore::uniform(w.sources(), 0.37);
        let next = update_weights(&w, &r, 0.5).unwrap();
        for (id, v) in w.iter() {
            assert!((next.get(id).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_source_converges() {
        let mut w = IntegrationWeights::uniform([sid("a"), sid("b")], 0.01).unwrap();
        let mut scores = BTreeMap::new();
        scores.insert(sid("a"), 1.0);
        scores.insert(sid("b"), 0.0);
        let r = RelevanceScore::new(scores);
        // independent oracle: iterate the recurrence on plain floats
        let (mut oa, mut ob) = (0.5f64, 0.5f64);
        for _ in 0..200 {
            w = update_weights(&w, &r, 0.1).unwrap();
            oa *= (0.1f64 * 0.5).exp();
            ob *= (0.1f64 * -0.5).exp();
            let s = oa + ob;
            oa /= s;
            ob /= s;
            if ob < 0.01 {
                ob = 0.01;
                oa = 0.99;
            }
        }
        assert!(w.get(&sid("a")).unwrap() >= 0.98);
        assert!((w.get(&sid("a")).unwrap() - oa).abs() < 1e-9);
        assert_eq!(w.get(&sid("b")).unwrap(), 0.01);
    }

    #[test]
    fn update_errors() {
        let w = IntegrationWeights::uniform([sid("a"), sid("b")], 0.01).unwrap();
        let r = RelevanceScore::uniform([sid("a")].iter(), 0.5);
        assert_eq!(update_weights(&w, &r, 0.1), Err(WeightsError::KeyMismatch));
        let r = RelevanceScore::uniform(w.sources(), 0.5);
        assert!(matches!(
            update_weights(&w, &r, 0.0),
            Err(WeightsError::NonPositiveLearningRate(_))
        ));
        let r = RelevanceScore::uniform(w.sources(), 1.5);
        assert!(matches!(update_weights(&w, &r, 0.1), Err(WeightsError::InvalidRelevance(_))));
    }

    fn history_store(values: impl Fn(usize, f64) -> f64, closes: &[f64]) -> (SeriesStore, SourceId) {
        let mut s = SeriesStore::new();
        let inst = InstrumentId::new("X").unwrap();
        s.register_instrument(Instrument::new(inst.clone(), AssetClass::Equity, "p"))
            .unwrap();
        let src = sid("hist");
        let t0 = Timestamp::from_ymd(2023, 1, 2);
        for (i, c) in closes.iter().enumerate() {
            s.append_bar(Bar::new(t0.plus_days(i as i64), inst.clone(), *c)).unwrap();
        }
        for i in 0..closes.len() - 1 {
            let next_ret = (closes[i + 1] / closes[i]).ln();
            s.append_observation(SourceObservation {
                timestamp: t0.plus_days(i as i64),
                source_id: src.clone(),
                source_kind: SourceKind::HistoricalData,
                instrument_id: inst.clone(),
                value: values(i, next_ret),
            })
            .unwrap();
        }
        (s, src)
    }

    fn zigzag(n: usize) -> Vec<f64> {
        let mut c = 100.0;
        (0..n)
            .map(|i| {
                c *= 1.0 + 0.01 * ((i * 7 % 5) as f64 - 2.0) + 0.001 * i as f64;
                c
            })
            .collect()
    }

    #[test]
    fn relevance_of_next_abs_return_is_one() {
        let closes = zigzag(40);
        let (s, src) = history_store(|_, r| r.abs(), &closes);
        let end = Timestamp::from_ymd(2023, 1, 2).plus_days(39);
        let rel = relevance_from_history(&s, &src, 30, end).unwrap();
        assert!((rel - 1.0).abs() < 1e-12, "{rel}");
    }

    #[test]
    fn relevance_of_constant_source_is_zero() {
        let closes = zigzag(40);
        let (s, src) = history_store(|_, _| 0.25, &closes);
        let end = Timestamp::from_ymd(2023, 1, 2).plus_days(39);
        assert_eq!(relevance_from_history(&s, &src, 30, end).unwrap(), 0.0);
    }

    #[test]
    fn relevance_needs_two_points() {
        let closes = zigzag(40);
        let (s, src) = history_store(|_, r| r, &closes);
        let start = Timestamp::from_ymd(2023, 1, 2);
        assert!(matches!(
            relevance_from_history(&s, &src, 30, start.plus_days(1)),
            Err(WeightsError::InsufficientHistory(_))
        ));
        assert!(matches!(
            relevance_from_history(&s, &src, 1, start.plus_days(30)),
            Err(WeightsError::WindowTooShort(1))
        ));
    }

    #[test]
    fn relevance_ignores_future_bars() {
        let closes = zigzag(60);
        let (s, src) = history_store(|i, r| r + 0.001 * i as f64, &closes);
        let end = Timestamp::from_ymd(2023, 1, 2).plus_days(35);
        // the truncated store holds nothing after `end`
        let (s2, _) = history_store(|i, r| r + 0.001 * i as f64, &closes[..36]);
        assert_eq!(
            relevance_from_history(&s, &src, 30, end).unwrap(),
            relevance_from_history(&s2, &src, 30, end).unwrap()
        );
    }

    fn weights_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..7).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..10.0, n),
                proptest::collection::vec(-1e3f64..1e3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn fuse_is_convex_and_scale_invariant((masses, values) in weights_strategy(), scale in 0.01f64..100.0) {
            let ids: Vec<SourceId> = (0..masses.len()).map(|i| sid(&alloc::format!("s{i}"))).collect();
            let w = IntegrationWeights::from_masses(ids.iter().cloned().zip(masses.iter().copied()).collect(), 0.01).unwrap();
            let w2 = IntegrationWeights::from_masses(ids.iter().cloned().zip(masses.iter().map(|m| m * scale)).collect(), 0.01).unwrap();
            let obs: Vec<(SourceId, f64)> = ids.iter().cloned().zip(values.iter().copied()).collect();
            let f = fuse(&obs, &w).unwrap();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(f >= lo && f <= hi);
            prop_assert!((f - fuse(&obs, &w2).unwrap()).abs() <= 1e-9 * (1.0 + hi.abs().max(lo.abs())));
        }

        #[test]
        fn update_preserves_floored_simplex(rel in proptest::collection::vec(0.0f64..=1.0, 2..7), rate in 0.001f64..5.0, steps in 1usize..20) {
            let ids: Vec<SourceId> = (0..rel.len()).map(|i| sid(&alloc::format!("s{i}"))).collect();
            let mut w = IntegrationWeights::uniform(ids.clone(), 0.01).unwrap();
            let r = RelevanceScore::new(ids.iter().cloned().zip(rel.iter().copied()).collect());
            for _ in 0..steps {
                w = update_weights(&w, &r, rate).unwrap();
                prop_assert!(w.is_valid());
            }
        }

        #[test]
        fn dominant_weight_non_decreasing(others in proptest::collection::vec(0.0f64..0.9, 1..5), rate in 0.01f64..1.0) {
            let n = others.len() + 1;
            let ids: Vec<SourceId> = (0..n).map(|i| sid(&alloc::format!("s{i}"))).collect();
            let mut scores: BTreeMap<SourceId, f64> = BTreeMap::new();
            scores.insert(ids[0].clone(), 1.0);
            for (i, o) in others.iter().enumerate() {
                scores.insert(ids[i + 1].clone(), *o);
            }
            let r = RelevanceScore::new(scores);
            let mut w = IntegrationWeights::uniform(ids.clone(), 0.01).unwrap();
            let mut prev = w.get(&ids[0]).unwrap();
            for _ in 0..100 {
                w = update_weights(&w, &r, rate).unwrap();
                let cur = w.get(&ids[0]).unwrap();
                prop_assert!(cur >= prev - 1e-12);
                prev = cur;
            }
        }
    }
}
