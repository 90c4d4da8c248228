//! Flat-file formats: CSV bars and observations, JSON Lines news.

use std::io::{self, Write};

use crossrisk_core::market::{AssetClass, Bar, InstrumentId, NewsDocument, SourceId, SourceKind, SourceObservation};
use crossrisk_core::Timestamp;
use serde::{Deserialize, Serialize};

pub const BAR_HEADER: [&str; 4] = ["timestamp", "instrument_id", "asset_class", "close"];
pub const OBSERVATION_HEADER: [&str; 5] = ["timestamp", "source_id", "source_kind", "instrument_id", "value"];
pub const NEWS_KEYS: [&str; 5] = ["timestamp", "source_kind", "headline", "body", "instrument_ids"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Bars,
    Observations,
    News,
}

/// Parses an RFC 3339 instant into UTC milliseconds.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    chrono::DateTime::parse_from_rfc3339(s.trim())
        .map(|dt| Timestamp::from_millis(dt.timestamp_millis()))
        .map_err(|e| format!("bad timestamp `{s}`: {e}"))
}

/// Recognizes a file by its first line.
pub fn detect_kind(first_line: &str) -> Option<FileKind> {
    let line = first_line.trim_start_matches('\u{feff}').trim();
    if line.starts_with('{') {
        return Some(FileKind::News);
    }
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols == BAR_HEADER {
        Some(FileKind::Bars)
    } else if cols == OBSERVATION_HEADER {
        Some(FileKind::Observations)
    } else {
        None
    }
}

fn parse_finite(s: &str, what: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("bad {what} `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what} `{s}` is not finite"))
    }
}

fn fields(rec: &csv::StringRecord, n: usize) -> Result<Vec<&str>, String> {
    if rec.len() != n {
        return Err(format!("expected {n} fields, found {}", rec.len()));
    }
    Ok(rec.iter().collect())
}

pub fn parse_bar(rec: &csv::StringRecord) -> Result<(Bar, AssetClass), String> {
    let f = fields(rec, 4)?;
    let ts = parse_timestamp(f[0])?;
    let id = InstrumentId::new(f[1].trim()).map_err(|e| e.to_string())?;
    let class: AssetClass = f[2].trim().parse().map_err(|e: crossrisk_core::market::ParseEnumError| e.to_string())?;
    let close = parse_finite(f[3], "close")?;
    if close <= 0.0 {
        return Err(format!("close {close} must be positive"));
    }
    Ok((Bar::new(ts, id, close), class))
}

pub fn parse_observation(rec: &csv::StringRecord) -> Result<SourceObservation, String> {
    let f = fields(rec, 5)?;
    Ok(SourceObservation {
        timestamp: parse_timestamp(f[0])?,
        source_id: SourceId::new(f[1].trim()).map_err(|e| e.to_string())?,
        source_kind: f[2].trim().parse().map_err(|e: crossrisk_core::market::ParseEnumError| e.to_string())?,
        instrument_id: InstrumentId::new(f[3].trim()).map_err(|e| e.to_string())?,
        value: parse_finite(f[4], "value")?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewsLine {
    timestamp: String,
    source_kind: String,
    headline: String,
    body: String,
    instrument_ids: Vec<String>,
}

pub fn parse_news(line: &str) -> Result<NewsDocument, String> {
    let raw: NewsLine = serde_json::from_str(line).map_err(|e| format!("bad news record: {e}"))?;
    let source_kind: SourceKind = raw.source_kind.parse().map_err(|e: crossrisk_core::market::ParseEnumError| e.to_string())?;
    if raw.headline.trim().is_empty() {
        return Err("headline is empty".into());
    }
    let instrument_ids = raw
        .instrument_ids
        .iter()
        .map(|s| InstrumentId::new(s.as_str()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NewsDocument {
        timestamp: parse_timestamp(&raw.timestamp)?,
        source_kind,
        headline: raw.headline,
        body: raw.body,
        instrument_ids,
    })
}

pub fn write_bars<W: Write>(out: W, bars: &[(Bar, AssetClass)]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BAR_HEADER)?;
    for (b, class) in bars {
        w.write_record([
            b.timestamp.to_string(),
            b.instrument_id.to_string(),
            class.to_string(),
            b.close.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_observations<W: Write>(out: W, obs: &[SourceObservation]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OBSERVATION_HEADER)?;
    for o in obs {
        w.write_record([
            o.timestamp.to_string(),
            o.source_id.to_string(),
            o.source_kind.to_string(),
            o.instrument_id.to_string(),
            o.value.to_string(),
        ])?;
    }
    w.flush()
}

pub fn news_line(doc: &NewsDocument) -> String {
    let line = NewsLine {
        timestamp: doc.timestamp.to_string(),
        source_kind: doc.source_kind.to_string(),
        headline: doc.headline.clone(),
        body: doc.body.clone(),
        instrument_ids: doc.instrument_ids.iter().map(|i| i.to_string()).collect(),
    };
    serde_json::to_string(&line).expect("news line serializes")
}

pub fn write_news<W: Write>(mut out: W, docs: &[NewsDocument]) -> io::Result<()> {
    for d in docs {
        writeln!(out, "{}", news_line(d))?;
    }
    out.flush()
}
