//! Seeded synthetic markets with planted structure.
//!
//! Returns are jointly Gaussian with a caller-chosen correlation matrix.
//! Sources report readings built from the *next* bar's return, so the
//! generator itself is the oracle for how informative each one is.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use crossrisk_core::market::{AssetClass, Bar, Instrument, InstrumentId, NewsDocument, SourceId, SourceKind, SourceObservation};
use crossrisk_core::text::{NEGATIVE_LEXICON, POSITIVE_LEXICON};
use crossrisk_core::{SeriesStore, Timestamp};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::formats;

const HOUR_MS: i64 = 3_600_000;
const BAR_HOUR: i64 = 21;
const OBSERVATION_HOUR: i64 = 20;
const NEWS_HOUR: i64 = 13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SyntheticError> {
    Err(SyntheticError::InvalidSpec(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstrument {
    pub id: InstrumentId,
    pub asset_class: AssetClass,
    pub quote_unit: String,
    pub start_price: f64,
    /// Mean log return per bar.
    pub drift: f64,
    /// Std of the log return per bar.
    pub vol: f64,
}

/// How a source's reading relates to the instrument's next return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    /// Reports the next log return exactly.
    Planted,
    /// `loading * next_return + noise * vol * z`.
    Informative { loading: f64, noise: f64 },
    /// `scale * vol * z`, independent of everything else.
    Noise { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSource {
    pub id: SourceId,
    pub kind: SourceKind,
    pub model: SourceModel,
}

/// A run of elevated volatility ending in a common drawdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressEpisode {
    /// First bar of the episode.
    pub start: usize,
    pub length: usize,
    pub vol_multiplier: f64,
    /// Size of the drawdown on the bar after the episode, in units of per-bar vol.
    pub shock_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NewsMix {
    /// Positive, negative and neutral headlines in equal proportion.
    Mixed,
    /// Headlines carrying no lexicon words.
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub bars: usize,
    /// First calendar day; weekends are skipped.
    pub start: Timestamp,
    pub instruments: Vec<SynthInstrument>,
    /// Row-major correlation matrix of per-bar returns.
    pub correlation: Vec<Vec<f64>>,
    pub sources: Vec<SynthSource>,
    /// Probability of a headline on any bar.
    pub news_rate: f64,
    pub news_mix: NewsMix,
    pub stress: Option<StressEpisode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Nine instruments, four sources (one planted), mixed news and a stress episode.
    Desk,
    /// The desk universe and sources without news or stress.
    Planted,
    /// Independent returns, no sources and neutral news only.
    Null,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Desk, Preset::Planted, Preset::Null];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Planted => "planted",
            Preset::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn spec(self, seed: u64) -> SyntheticSpec {
        match self {
            Preset::Desk => desk_spec(seed),
            Preset::Planted => SyntheticSpec {
                news_rate: 0.0,
                stress: None,
                ..desk_spec(seed)
            },
            Preset::Null => {
                let base = desk_spec(seed);
                let n = base.instruments.len();
                SyntheticSpec {
                    correlation: identity(n),
                    sources: Vec::new(),
                    news_mix: NewsMix::Neutral,
                    stress: None,
                    instruments: base.instruments.into_iter().map(|i| SynthInstrument { drift: 0.0, ..i }).collect(),
                    ..base
                }
            }
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DESK_BARS: usize = 504;

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn desk_spec(seed: u64) -> SyntheticSpec {
    let rows: [(&str, AssetClass, &str, f64, f64, f64); 9] = [
        ("EQ_US", AssetClass::Equity, "index_points", 4500.0, 0.0003, 0.012),
        ("EQ_EU", AssetClass::Equity, "index_points", 4000.0, 0.0002, 0.013),
        ("EQ_JP", AssetClass::Equity, "index_points", 27000.0, 0.0002, 0.014),
        ("FI_UST10", AssetClass::FixedIncome, "clean_price", 98.0, 0.0, 0.005),
        ("FI_BUND10", AssetClass::FixedIncome, "clean_price", 101.0, 0.0, 0.004),
        ("FI_JGB10", AssetClass::FixedIncome, "clean_price", 100.5, 0.0, 0.002),
        ("FX_EURUSD", AssetClass::Currency, "usd_per_eur", 1.10, 0.0, 0.006),
        ("FX_USDJPY", AssetClass::Currency, "jpy_per_usd", 130.0, 0.0, 0.007),
        ("FX_GBPUSD", AssetClass::Currency, "usd_per_gbp", 1.25, 0.0, 0.006),
    ];
    let instruments: Vec<SynthInstrument> = rows
        .iter()
        .map(|&(id, asset_class, unit, start_price, drift, vol)| SynthInstrument {
            id: InstrumentId::new(id).expect("preset ids are valid"),
            asset_class,
            quote_unit: unit.to_string(),
            start_price,
            drift,
            vol,
        })
        .collect();
    let class_of: Vec<AssetClass> = instruments.iter().map(|i| i.asset_class).collect();
    let correlation = (0..9)
        .map(|i| {
            (0..9)
                .map(|j| match (i == j, class_of[i] == class_of[j]) {
                    (true, _) => 1.0,
                    (false, true) => 0.6,
                    (false, false) => 0.2,
                })
                .collect()
        })
        .collect();
    let src = |id: &str, kind, model| SynthSource {
        id: SourceId::new(id).expect("preset ids are valid"),
        kind,
        model,
    };
    SyntheticSpec {
        seed,
        bars: DESK_BARS,
        start: Timestamp::from_ymd(2022, 1, 3),
        instruments,
        correlation,
        sources: vec![
            src("momentum", SourceKind::AnalystReports, SourceModel::Planted),
            src("investor_pulse", SourceKind::InvestorFeedback, SourceModel::Informative { loading: 0.3, noise: 1.0 }),
            src("macro_nowcast", SourceKind::EconomicIndicators, SourceModel::Noise { scale: 1.0 }),
            src("filings_digest", SourceKind::FinancialReports, SourceModel::Noise { scale: 1.0 }),
        ],
        news_rate: 0.25,
        news_mix: NewsMix::Mixed,
        stress: Some(StressEpisode {
            start: 400,
            length: 6,
            vol_multiplier: 2.5,
            shock_sigma: 6.0,
        }),
    }
}

/// Tone of a generated headline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub instruments: Vec<Instrument>,
    /// Sorted by timestamp, then instrument.
    pub bars: Vec<(Bar, AssetClass)>,
    pub observations: BTreeMap<SourceId, (SourceKind, Vec<SourceObservation>)>,
    pub news: Vec<NewsDocument>,
    /// The polarity each headline was generated with, aligned with `news`.
    pub news_polarity: Vec<Polarity>,
    /// Bar timestamps of the stress episode; the drawdown follows the last one.
    pub stress_bars: Vec<Timestamp>,
}

fn trading_days(start: Timestamp, n: usize) -> Vec<Timestamp> {
    let mut out = Vec::with_capacity(n);
    let mut day = start;
    while out.len() < n {
        // 1970-01-01 was a Thursday
        let weekday = (day.as_millis().div_euclid(86_400_000) + 3).rem_euclid(7);
        if weekday < 5 {
            out.push(day);
        }
        day = day.plus_days(1);
    }
    out
}

fn words(list: &'static str) -> Vec<&'static str> {
    list.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect()
}

fn validate(spec: &SyntheticSpec) -> Result<DMatrix<f64>, SyntheticError> {
    let n = spec.instruments.len();
    if n == 0 {
        return invalid("no instruments");
    }
    if spec.bars < 2 {
        return invalid("need at least 2 bars");
    }
    let ids: BTreeSet<&InstrumentId> = spec.instruments.iter().map(|i| &i.id).collect();
    if ids.len() != n {
        return invalid("duplicate instrument id");
    }
    for i in &spec.instruments {
        if !(i.start_price > 0.0 && i.start_price.is_finite()) {
            return invalid(format!("{}: start_price must be positive", i.id));
        }
        if !(i.vol >= 0.0 && i.vol.is_finite() && i.drift.is_finite()) {
            return invalid(format!("{}: vol must be >= 0 and drift finite", i.id));
        }
    }
    if spec.correlation.len() != n || spec.correlation.iter().any(|r| r.len() != n) {
        return invalid(format!("correlation must be {n}x{n}"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| spec.correlation[i][j]);
    for i in 0..n {
        if m[(i, i)] != 1.0 {
            return invalid("correlation diagonal must be 1");
        }
        for j in 0..n {
            if m[(i, j)] != m[(j, i)] || !(-1.0..=1.0).contains(&m[(i, j)]) {
                return invalid("correlation must be symmetric with entries in [-1, 1]");
            }
        }
    }
    let Some(chol) = m.cholesky() else {
        return invalid("correlation matrix is not positive definite");
    };
    let kinds: BTreeSet<SourceKind> = spec.sources.iter().map(|s| s.kind).collect();
    let sids: BTreeSet<&SourceId> = spec.sources.iter().map(|s| &s.id).collect();
    if kinds.len() != spec.sources.len() || sids.len() != spec.sources.len() {
        return invalid("source ids and kinds must be distinct");
    }
    for s in &spec.sources {
        let ok = match s.model {
            SourceModel::Planted => true,
            SourceModel::Informative { loading, noise } => loading.is_finite() && noise >= 0.0 && noise.is_finite(),
            SourceModel::Noise { scale } => scale >= 0.0 && scale.is_finite(),
        };
        if !ok {
            return invalid(format!("{}: bad source model parameters", s.id));
        }
    }
    if !(0.0..=1.0).contains(&spec.news_rate) {
        return invalid("news_rate must lie in [0, 1]");
    }
    if let Some(st) = spec.stress {
        if st.length == 0 || st.start + st.length >= spec.bars {
            return invalid("stress episode must fit before the last bar");
        }
        if !(st.vol_multiplier >= 0.0 && st.vol_multiplier.is_finite() && st.shock_sigma.is_finite()) {
            return invalid("stress parameters must be finite and non-negative");
        }
    }
    Ok(chol.l())
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticMarket, SyntheticError> {
    let l = validate(spec)?;
    let n = spec.instruments.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let days = trading_days(spec.start, spec.bars);

    // returns[t][i] is the log return from bar t-1 to bar t; returns[0] is unused
    let mut returns = vec![vec![0.0; n]; spec.bars];
    for (t, row) in returns.iter_mut().enumerate().skip(1) {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut mult = 1.0;
        let mut shock = 0.0;
        if let Some(st) = spec.stress {
            if (st.start..st.start + st.length).contains(&t) {
                mult = st.vol_multiplier;
            }
            if t == st.start + st.length {
                shock = st.shock_sigma;
            }
        }
        for i in 0..n {
            let eps: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
            let inst = &spec.instruments[i];
            row[i] = if inst.vol == 0.0 {
                0.0
            } else {
                inst.drift + inst.vol * (mult * eps - shock)
            };
        }
    }

    let mut bars = Vec::with_capacity(spec.bars * n);
    let mut closes: Vec<f64> = spec.instruments.iter().map(|i| i.start_price).collect();
    for (t, day) in days.iter().enumerate() {
        for (i, inst) in spec.instruments.iter().enumerate() {
            if t > 0 {
                closes[i] *= returns[t][i].exp();
            }
            bars.push((Bar::new(day.plus_millis(BAR_HOUR * HOUR_MS), inst.id.clone(), closes[i]), inst.asset_class));
        }
    }
    bars.sort_by(|a, b| (a.0.timestamp, &a.0.instrument_id).cmp(&(b.0.timestamp, &b.0.instrument_id)));

    let mut observations = BTreeMap::new();
    for src in &spec.sources {
        let mut obs = Vec::new();
        for (t, day) in days.iter().enumerate().take(spec.bars - 1) {
            for (i, inst) in spec.instruments.iter().enumerate() {
                let next = returns[t + 1][i];
                let value = match src.model {
                    SourceModel::Planted => next,
                    SourceModel::Informative { loading, noise } => {
                        loading * next + noise * inst.vol * rng.sample::<f64, _>(StandardNormal)
                    }
                    SourceModel::Noise { scale } => scale * inst.vol * rng.sample::<f64, _>(StandardNormal),
                };
                obs.push(SourceObservation {
                    timestamp: day.plus_millis(OBSERVATION_HOUR * HOUR_MS),
                    source_id: src.id.clone(),
                    source_kind: src.kind,
                    instrument_id: inst.id.clone(),
                    value,
                });
            }
        }
        obs.sort_by(|a, b| (a.timestamp, &a.instrument_id).cmp(&(b.timestamp, &b.instrument_id)));
        observations.insert(src.id.clone(), (src.kind, obs));
    }

    let (news, news_polarity, stress_bars) = generate_news(spec, &days, &mut rng);
    let instruments = spec
        .instruments
        .iter()
        .map(|i| Instrument::new(i.id.clone(), i.asset_class, i.quote_unit.clone()))
        .collect();
    Ok(SyntheticMarket {
        instruments,
        bars,
        observations,
        news,
        news_polarity,
        stress_bars,
    })
}

const NEUTRAL_HEADLINES: [&str; 4] = [
    "{} session summary published",
    "{} desk notes for the day",
    "Scheduled {} calendar review",
    "{} trading hours reminder",
];

const STRESS_HEADLINE: &str = "Credit markets in turmoil as liquidity freeze spreads";
const STRESS_BODY: &str = "Funding stress and volatile trading deepen the selloff with fear of defaults";

fn generate_news(spec: &SyntheticSpec, days: &[Timestamp], rng: &mut ChaCha8Rng) -> (Vec<NewsDocument>, Vec<Polarity>, Vec<Timestamp>) {
    let pos = words(POSITIVE_LEXICON);
    let neg = words(NEGATIVE_LEXICON);
    let mut docs = Vec::new();
    let mut polarity = Vec::new();
    let mut stress_bars = Vec::new();
    let stress_range = spec.stress.map(|s| s.start..s.start + s.length);
    for (t, day) in days.iter().enumerate() {
        let ts = day.plus_millis(NEWS_HOUR * HOUR_MS + 30 * 60_000);
        if stress_range.as_ref().is_some_and(|r| r.contains(&t)) {
            stress_bars.push(day.plus_millis(BAR_HOUR * HOUR_MS));
            docs.push(NewsDocument {
                timestamp: ts,
                source_kind: SourceKind::MarketNews,
                headline: STRESS_HEADLINE.to_string(),
                body: STRESS_BODY.to_string(),
                instrument_ids: Vec::new(),
            });
            polarity.push(Polarity::Negative);
            continue;
        }
        if spec.news_rate == 0.0 || !rng.random_bool(spec.news_rate) {
            continue;
        }
        let inst = &spec.instruments[rng.random_range(0..spec.instruments.len())];
        let tone = match spec.news_mix {
            NewsMix::Neutral => Polarity::Neutral,
            NewsMix::Mixed => [Polarity::Positive, Polarity::Negative, Polarity::Neutral][rng.random_range(0..3)],
        };
        let name = inst.id.as_str();
        let (headline, body) = match tone {
            Polarity::Neutral => {
                let tpl = NEUTRAL_HEADLINES[rng.random_range(0..NEUTRAL_HEADLINES.len())];
                (tpl.replace("{}", name), String::from("Routine desk bulletin"))
            }
            Polarity::Positive | Polarity::Negative => {
                let list = if tone == Polarity::Positive { &pos } else { &neg };
                let a = list[rng.random_range(0..list.len())];
                let b = list[rng.random_range(0..list.len())];
                (format!("{name} {a} on {b} outlook"), format!("Desk commentary on {name}"))
            }
        };
        docs.push(NewsDocument {
            timestamp: ts,
            source_kind: SourceKind::MarketNews,
            headline,
            body,
            instrument_ids: vec![inst.id.clone()],
        });
        polarity.push(tone);
    }
    (docs, polarity, stress_bars)
}

impl SyntheticMarket {
    /// The store `load_sources` would build from [`SyntheticMarket::write_files`].
    pub fn to_store(&self) -> SeriesStore {
        let mut store = SeriesStore::new();
        for inst in &self.instruments {
            store.register_instrument(inst.clone()).expect("fresh store");
        }
        for (bar, _) in &self.bars {
            store.append_bar(bar.clone()).expect("generated bars are valid");
        }
        for (id, (kind, obs)) in &self.observations {
            store.register_source(id.clone(), *kind).expect("distinct sources");
            for o in obs {
                store.append_observation(o.clone()).expect("generated observations are valid");
            }
        }
        for doc in &self.news {
            store.append_news(doc.clone()).expect("generated news is valid");
        }
        store
    }

    /// Writes `bars.csv`, one `obs_<source>.csv` per source, `news.jsonl`
    /// and a `config.toml` that loads them. Returns the written paths.
    pub fn write_files(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("bars.csv");
        formats::write_bars(BufWriter::new(fs::File::create(&path)?), &self.bars)?;
        written.push(path);
        for (id, (_, obs)) in &self.observations {
            let path = dir.join(format!("obs_{id}.csv"));
            formats::write_observations(BufWriter::new(fs::File::create(&path)?), obs)?;
            written.push(path);
        }
        let path = dir.join("news.jsonl");
        formats::write_news(BufWriter::new(fs::File::create(&path)?), &self.news)?;
        written.push(path);
        let path = dir.join("config.toml");
        fs::write(&path, self.config_toml())?;
        written.push(path);
        Ok(written)
    }

    pub fn config_toml(&self) -> String {
        let mut out = String::from("# generated market; paths are relative to this file\n");
        for inst in &self.instruments {
            out.push_str(&format!(
                "\n[instrument.{}]\nasset_class = \"{}\"\nquote_unit = \"{}\"\n",
                inst.id, inst.asset_class, inst.quote_unit
            ));
        }
        out.push_str("\n[source.bars]\nkind = \"historical_data\"\npath = \"bars.csv\"\n");
        for (id, (kind, _)) in &self.observations {
            out.push_str(&format!("\n[source.{id}]\nkind = \"{kind}\"\npath = \"obs_{id}.csv\"\n"));
        }
        out.push_str("\n[source.newswire]\nkind = \"market_news\"\npath = \"news.jsonl\"\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossrisk_core::stats;

    fn pair_spec(rho: f64, vol: f64) -> SyntheticSpec {
        let inst = |id: &str| SynthInstrument {
            id: InstrumentId::new(id).unwrap(),
            asset_class: AssetClass::Equity,
            quote_unit: "price".into(),
            start_price: 100.0,
            drift: 0.0,
            vol,
        };
        SyntheticSpec {
            seed: 11,
            bars: DESK_BARS,
            start: Timestamp::from_ymd(2022, 1, 3),
            instruments: vec![inst("A"), inst("B")],
            correlation: vec![vec![1.0, rho], vec![rho, 1.0]],
            sources: vec![],
            news_rate: 0.0,
            news_mix: NewsMix::Neutral,
            stress: None,
        }
    }

    fn closes(m: &SyntheticMarket, id: &str) -> Vec<f64> {
        m.bars.iter().filter(|b| b.0.instrument_id.as_str() == id).map(|b| b.0.close).collect()
    }

    fn log_returns(c: &[f64]) -> Vec<f64> {
        c.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }

    #[test]
    fn requested_correlation_is_realized() {
        let m = generate(&pair_spec(0.6, 0.01)).unwrap();
        let ra = log_returns(&closes(&m, "A"));
        let rb = log_returns(&closes(&m, "B"));
        assert_eq!(ra.len(), DESK_BARS - 1);
        let rho = stats::pearson(&ra, &rb).unwrap();
        assert!((rho - 0.6).abs() <= 0.1, "{rho}");
    }

    #[test]
    fn zero_vol_gives_constant_prices() {
        let m = generate(&pair_spec(0.6, 0.0)).unwrap();
        assert!(closes(&m, "A").iter().all(|&c| c == 100.0));
        assert!(log_returns(&closes(&m, "B")).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = generate(&Preset::Desk.spec(5)).unwrap();
        let b = generate(&Preset::Desk.spec(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&Preset::Desk.spec(6)).unwrap());
    }

    #[test]
    fn desk_shape() {
        let m = generate(&Preset::Desk.spec(1)).unwrap();
        assert_eq!(m.bars.len(), DESK_BARS * 9);
        let classes: BTreeSet<AssetClass> = m.instruments.iter().map(|i| i.asset_class).collect();
        assert_eq!(classes.len(), 3);
        assert_eq!(m.observations.len(), 4);
        assert_eq!(m.stress_bars.len(), 6);
        for (doc, pol) in m.news.iter().zip(&m.news_polarity) {
            let s = crossrisk_core::text::stub_score(&doc.text());
            match pol {
                Polarity::Positive => assert!(s > 0.0, "{}", doc.headline),
                Polarity::Negative => assert!(s < 0.0, "{}", doc.headline),
                Polarity::Neutral => assert_eq!(s, 0.0, "{}", doc.headline),
            }
        }
        let first = m.bars[0].0.timestamp;
        let last = m.bars.last().unwrap().0.timestamp;
        // 504 weekdays span close to two calendar years
        assert!((last - first) / 86_400_000 > 700);
    }

    #[test]
    fn planted_source_reports_next_return() {
        let m = generate(&Preset::Planted.spec(3)).unwrap();
        assert!(m.news.is_empty());
        let c = closes(&m, "EQ_US");
        let (_, obs) = &m.observations[&SourceId::new("momentum").unwrap()];
        let eq: Vec<&SourceObservation> = obs.iter().filter(|o| o.instrument_id.as_str() == "EQ_US").collect();
        assert_eq!(eq.len(), DESK_BARS - 1);
        for (j, o) in eq.iter().enumerate() {
            assert!((o.value - (c[j + 1] / c[j]).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = pair_spec(1.2, 0.01);
        assert!(generate(&s).is_err());
        s = pair_spec(1.0, 0.01);
        assert!(generate(&s).is_err(), "singular correlation");
        s = pair_spec(0.5, -1.0);
        assert!(generate(&s).is_err());
        s = pair_spec(0.5, 0.01);
        s.bars = 1;
        assert!(generate(&s).is_err());
        s = pair_spec(0.5, 0.01);
        s.stress = Some(StressEpisode { start: 500, length: 10, vol_multiplier: 2.0, shock_sigma: 1.0 });
        assert!(generate(&s).is_err());
    }
}
