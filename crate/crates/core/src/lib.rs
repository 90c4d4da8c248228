//! Allocation-only core of the crossrisk engine.
//!
//! Everything here is pure computation over in-memory data: the market
//! model and append-only series store, deterministic event replay,
//! source-fusion weights, rolling risk analytics, the text-context layer,
//! view synthesis with reliability-gated alerts, and the backtest driver.
//! File formats, the CLI and remote providers live in the `crossrisk` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analytics;
pub mod backtest;
pub mod engine;
pub mod market;
pub mod replay;
pub mod stats;
pub mod store;
pub mod synthesis;
pub mod text;
pub mod time;
pub mod weights;

pub use analytics::{RiskParams, RiskValue, SignalDerivation, SignalSet, SignalWeights};
pub use backtest::{BacktestReport, Metrics, ScenarioConfig};
pub use engine::{Engine, EngineParams, TickRecord};
pub use market::{
    AssetClass, Bar, Instrument, InstrumentId, IntegrationMethod, NewsDocument, SourceId,
    SourceKind, SourceObservation,
};
pub use replay::{EventPayload, IngestEvent};
pub use store::SeriesStore;
pub use synthesis::{Alert, AlertScope, Direction, MarketView, TotalRisk};
pub use text::{InsightProvider, LexiconStub, RiskTag, TextInsight};
pub use time::Timestamp;
pub use weights::{IntegratedSnapshot, IntegrationWeights, RelevanceScore};
