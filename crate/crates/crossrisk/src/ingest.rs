//! Loading configured source files into a [`SeriesStore`].
//!
//! Files are parsed concurrently, one loader thread per file, then merged
//! into the store by a single thread in a fixed order (bar files, then
//! observation files, then news files; config order within each group).

use std::fs;
use std::path::{Path, PathBuf};

use crossrisk_core::market::{AssetClass, Bar, Instrument, IntegrationMethod, NewsDocument, SourceId, SourceKind, SourceObservation};
use crossrisk_core::SeriesStore;
use serde::Serialize;

use crate::formats::{self, FileKind};

/// Files with more than one rejected record in ten are refused outright.
pub const MAX_REJECT_FRACTION: f64 = 0.10;
const REJECT_DENOMINATOR: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {}: {source}", path.display())]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: unrecognized header `{found}`", path.display())]
    MalformedHeader { path: PathBuf, found: String },
    #[error("{}: {rejected} of {total} records rejected (limit {:.0}%)", path.display(), MAX_REJECT_FRACTION * 100.0)]
    RejectRateExceeded { path: PathBuf, rejected: usize, total: usize },
    #[error("source `{source_id}`: method {method} does not match kind {kind} (set override to allow)")]
    MethodMismatch {
        source_id: SourceId,
        kind: SourceKind,
        method: IntegrationMethod,
    },
    #[error("source `{0}` is configured more than once")]
    DuplicateSource(SourceId),
    #[error("declared instrument conflicts with the store: {0}")]
    Instrument(#[from] crossrisk_core::store::StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceAdapterConfig {
    pub source_id: SourceId,
    pub source_kind: SourceKind,
    pub integration_method: IntegrationMethod,
    pub file_path: PathBuf,
    /// Permits an integration method other than the kind's default.
    pub allow_method_override: bool,
}

impl SourceAdapterConfig {
    pub fn new(source_id: SourceId, source_kind: SourceKind, file_path: impl Into<PathBuf>) -> Self {
        SourceAdapterConfig {
            source_id,
            source_kind,
            integration_method: source_kind.default_method(),
            file_path: file_path.into(),
            allow_method_override: false,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !self.allow_method_override && self.integration_method != self.source_kind.default_method() {
            return Err(IngestError::MethodMismatch {
                source_id: self.source_id.clone(),
                kind: self.source_kind,
                method: self.integration_method,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub path: PathBuf,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileSummary {
    pub source_id: SourceId,
    pub path: PathBuf,
    pub records: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub store: SeriesStore,
    pub rejects: Vec<Reject>,
    pub files: Vec<FileSummary>,
}

enum Records {
    Bars(Vec<(u64, Bar, AssetClass)>),
    Observations(Vec<(u64, SourceObservation)>),
    News(Vec<(u64, NewsDocument)>),
}

struct Parsed {
    records: Records,
    total: usize,
    rejects: Vec<Reject>,
}

fn parse_file(cfg: &SourceAdapterConfig) -> Result<Parsed, IngestError> {
    let path = &cfg.file_path;
    let text = fs::read_to_string(path).map_err(|source| IngestError::FileUnreadable {
        path: path.clone(),
        source,
    })?;
    let first = text.lines().next().unwrap_or("");
    let kind = match formats::detect_kind(first) {
        Some(k) => k,
        None if text.trim().is_empty() && cfg.source_kind == SourceKind::MarketNews => FileKind::News,
        None => {
            return Err(IngestError::MalformedHeader {
                path: path.clone(),
                found: first.to_string(),
            })
        }
    };
    let mut rejects = Vec::new();
    let mut reject = |line: u64, reason: String| {
        rejects.push(Reject {
            path: path.clone(),
            line,
            reason,
        })
    };
    let mut total = 0;
    let records = match kind {
        FileKind::News => {
            let mut docs = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                total += 1;
                match formats::parse_news(line) {
                    Ok(doc) => docs.push((i as u64 + 1, doc)),
                    Err(e) => reject(i as u64 + 1, e),
                }
            }
            Records::News(docs)
        }
        FileKind::Bars | FileKind::Observations => {
            let mut rdr = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let mut bars = Vec::new();
            let mut obs = Vec::new();
            let mut rec = csv::StringRecord::new();
            loop {
                let line = rdr.position().line() + 1;
                match rdr.read_record(&mut rec) {
                    Ok(false) => break,
                    Ok(true) => {}
                    Err(e) => {
                        total += 1;
                        reject(line, e.to_string());
                        continue;
                    }
                }
                total += 1;
                let line = rec.position().map_or(line, |p| p.line());
                if kind == FileKind::Bars {
                    match formats::parse_bar(&rec) {
                        Ok((bar, class)) => bars.push((line, bar, class)),
                        Err(e) => reject(line, e),
                    }
                } else {
                    match formats::parse_observation(&rec) {
                        Ok(o) if o.source_id != cfg.source_id => {
                            reject(line, format!("source_id `{}` does not match configured `{}`", o.source_id, cfg.source_id))
                        }
                        Ok(o) if o.source_kind != cfg.source_kind => {
                            reject(line, format!("source_kind {} does not match configured {}", o.source_kind, cfg.source_kind))
                        }
                        Ok(o) => obs.push((line, o)),
                        Err(e) => reject(line, e),
                    }
                }
            }
            if kind == FileKind::Bars {
                Records::Bars(bars)
            } else {
                Records::Observations(obs)
            }
        }
    };
    Ok(Parsed { records, total, rejects })
}

fn rank(p: &Parsed) -> u8 {
    match p.records {
        Records::Bars(_) => 0,
        Records::Observations(_) => 1,
        Records::News(_) => 2,
    }
}

/// Loads every configured file. `instruments` are registered before any bar,
/// so declared quote units win over the defaults used for undeclared ones.
pub fn load_sources(configs: &[SourceAdapterConfig], instruments: &[Instrument]) -> Result<LoadReport, IngestError> {
    let mut seen = std::collections::BTreeSet::new();
    for cfg in configs {
        cfg.validate()?;
        if !seen.insert(&cfg.source_id) {
            return Err(IngestError::DuplicateSource(cfg.source_id.clone()));
        }
    }
    let parsed: Vec<Result<Parsed, IngestError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|cfg| scope.spawn(move || parse_file(cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("loader thread panicked")).collect()
    });
    let mut parsed: Vec<(usize, Parsed)> = parsed
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.map(|p| (i, p)))
        .collect::<Result<_, _>>()?;
    parsed.sort_by_key(|(i, p)| (rank(p), *i));

    let mut store = SeriesStore::new();
    for inst in instruments {
        store.register_instrument(inst.clone())?;
    }
    let mut all_rejects = Vec::new();
    let mut files = Vec::new();
    for (i, p) in parsed {
        let cfg = &configs[i];
        let mut rejects = p.rejects;
        let mut accepted = 0;
        let mut fail = |line: u64, reason: String| {
            rejects.push(Reject {
                path: cfg.file_path.clone(),
                line,
                reason,
            })
        };
        match p.records {
            Records::Bars(rows) => {
                for (line, bar, class) in rows {
                    let res = store
                        .register_instrument(Instrument::new(bar.instrument_id.clone(), class, "price"))
                        .and_then(|_| store.append_bar(bar));
                    match res {
                        Ok(_) => accepted += 1,
                        Err(e) => fail(line, e.to_string()),
                    }
                }
            }
            Records::Observations(rows) => {
                // the source is known even if every row is rejected
                store.register_source(cfg.source_id.clone(), cfg.source_kind)?;
                for (line, o) in rows {
                    match store.append_observation(o) {
                        Ok(_) => accepted += 1,
                        Err(e) => fail(line, e.to_string()),
                    }
                }
            }
            Records::News(rows) => {
                for (line, doc) in rows {
                    match store.append_news(doc) {
                        Ok(_) => accepted += 1,
                        Err(e) => fail(line, e.to_string()),
                    }
                }
            }
        }
        rejects.sort_by_key(|r| r.line);
        if rejects.len() * REJECT_DENOMINATOR > p.total {
            return Err(IngestError::RejectRateExceeded {
                path: cfg.file_path.clone(),
                rejected: rejects.len(),
                total: p.total,
            });
        }
        files.push(FileSummary {
            source_id: cfg.source_id.clone(),
            path: cfg.file_path.clone(),
            records: p.total,
            accepted,
            rejected: rejects.len(),
        });
        all_rejects.extend(rejects);
    }
    Ok(LoadReport {
        store,
        rejects: all_rejects,
        files,
    })
}

/// Resolves `path` against `base` unless it is already absolute.
pub fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
