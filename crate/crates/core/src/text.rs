//! Text context: structured insights from news batches and the contextual
//! risk adjustment they drive.
//!
//! Providers implement [`InsightProvider`]. The crate ships the
//! deterministic [`LexiconStub`]; remote completion providers live in the
//! `crossrisk` crate behind the same trait.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::analytics::RiskValue;
use crate::market::NewsDocument;
use crate::time::Timestamp;

pub const POSITIVE_LEXICON: &str = include_str!("../lexicon/positive.txt");
pub const NEGATIVE_LEXICON: &str = include_str!("../lexicon/negative.txt");
pub const TAG_LEXICON: &str = include_str!("../lexicon/tags.txt");

/// Default context sensitivity.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// Closed vocabulary of risk themes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RiskTag {
    Volatility,
    Credit,
    Liquidity,
    Policy,
    Fx,
    Macro,
}

impl RiskTag {
    pub const ALL: [RiskTag; 6] = [
        RiskTag::Volatility,
        RiskTag::Credit,
        RiskTag::Liquidity,
        RiskTag::Policy,
        RiskTag::Fx,
        RiskTag::Macro,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskTag::Volatility => "volatility",
            RiskTag::Credit => "credit",
            RiskTag::Liquidity => "liquidity",
            RiskTag::Policy => "policy",
            RiskTag::Fx => "fx",
            RiskTag::Macro => "macro",
        }
    }
}

impl FromStr for RiskTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        RiskTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown risk tag `{s}`"))
    }
}

impl fmt::Display for RiskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for RiskTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Structured insight extracted from one tick's news batch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TextInsight {
    pub timestamp: Timestamp,
    /// In `[-1, 1]`; -1 is maximally negative.
    pub sentiment: f64,
    pub risk_tags: BTreeSet<RiskTag>,
    pub rationale: String,
    pub document_count: usize,
}

impl TextInsight {
    /// The defined result for an empty batch.
    pub fn empty(timestamp: Timestamp) -> Self {
        TextInsight {
            timestamp,
            sentiment: 0.0,
            risk_tags: BTreeSet::new(),
            rationale: String::from("no documents"),
            document_count: 0,
        }
    }

    /// Merges per-document insights: the sentiment is the document-count
    /// weighted mean, tags are unioned and rationales joined in input order.
    pub fn merge(timestamp: Timestamp, parts: &[TextInsight]) -> Self {
        let docs: usize = parts.iter().map(|p| p.document_count).sum();
        if docs == 0 {
            return TextInsight::empty(timestamp);
        }
        let sentiment = parts
            .iter()
            .map(|p| p.sentiment * p.document_count as f64)
            .sum::<f64>()
            / docs as f64;
        let mut risk_tags = BTreeSet::new();
        let mut rationale = String::new();
        for p in parts.iter().filter(|p| p.document_count > 0) {
            risk_tags.extend(p.risk_tags.iter().copied());
            if !rationale.is_empty() {
                rationale.push_str(" | ");
            }
            rationale.push_str(&p.rationale);
        }
        TextInsight {
            timestamp,
            sentiment: sentiment.clamp(-1.0, 1.0),
            risk_tags,
            rationale,
            document_count: docs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider response could not be parsed after {attempts} attempt(s): {reason}")]
    Unparseable { attempts: u32, reason: String },
    #[error("credential missing: set {0}")]
    CredentialMissing(&'static str),
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
}

/// Anything that turns a batch of documents into a [`TextInsight`].
pub trait InsightProvider {
    fn analyze(&self, timestamp: Timestamp, docs: &[NewsDocument]) -> Result<TextInsight, ProviderError>;
}

impl<P: InsightProvider + ?Sized> InsightProvider for &P {
    fn analyze(&self, timestamp: Timestamp, docs: &[NewsDocument]) -> Result<TextInsight, ProviderError> {
        (**self).analyze(timestamp, docs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderKind {
    #[default]
    LexiconStub,
    RemoteCompletion,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::LexiconStub => "lexicon_stub",
            ProviderKind::RemoteCompletion => "remote_completion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lexicon_stub" => Some(ProviderKind::LexiconStub),
            "remote_completion" => Some(ProviderKind::RemoteCompletion),
            _ => None,
        }
    }
}

/// Provider configuration. Named models are plain configuration values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub prompt_template_id: String,
    pub max_in_flight: usize,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec {
            kind: ProviderKind::LexiconStub,
            endpoint: None,
            model_name: String::from("lexicon-v1"),
            timeout_ms: 10_000,
            max_retries: 2,
            prompt_template_id: String::from("risk_insight_v1"),
            max_in_flight: 4,
        }
    }
}

impl ProviderSpec {
    /// Checks the static invariants; `credential_present` reports whether the
    /// remote credential is available.
    pub fn validate(&self, credential_present: bool) -> Result<(), ProviderError> {
        if self.timeout_ms == 0 {
            return Err(ProviderError::InvalidSpec("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::InvalidSpec("max_in_flight must be positive".into()));
        }
        if self.kind == ProviderKind::RemoteCompletion {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(ProviderError::InvalidSpec("remote provider requires an endpoint".into()));
            }
            if !credential_present {
                return Err(ProviderError::CredentialMissing("CROSSRISK_PROVIDER_KEY"));
            }
        }
        Ok(())
    }
}

fn lexicon_words(list: &'static str) -> impl Iterator<Item = &'static str> {
    list.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn in_lexicon(list: &'static str, token: &str) -> bool {
    lexicon_words(list).any(|w| w.eq_ignore_ascii_case(token))
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

/// Positive and negative lexicon hit counts.
pub fn lexicon_hits(text: &str) -> (usize, usize) {
    let mut p = 0;
    let mut n = 0;
    for tok in tokens(text) {
        if in_lexicon(POSITIVE_LEXICON, tok) {
            p += 1;
        }
        if in_lexicon(NEGATIVE_LEXICON, tok) {
            n += 1;
        }
    }
    (p, n)
}

/// `(p - n) / (p + n + 1)` over lexicon hits; always in `(-1, 1)`.
pub fn stub_score(text: &str) -> f64 {
    let (p, n) = lexicon_hits(text);
    (p as f64 - n as f64) / (p + n + 1) as f64
}

/// Risk tags whose keywords occur in `text`.
pub fn detect_tags(text: &str) -> BTreeSet<RiskTag> {
    let mut out = BTreeSet::new();
    let toks: Vec<&str> = tokens(text).collect();
    for line in lexicon_words(TAG_LEXICON) {
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next().and_then(|t| t.parse::<RiskTag>().ok()) else {
            continue;
        };
        if parts.any(|kw| toks.iter().any(|t| t.eq_ignore_ascii_case(kw))) {
            out.insert(tag);
        }
    }
    out
}

/// Deterministic offline provider backed by the shipped word lists.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconStub;

impl LexiconStub {
    pub fn document_insight(&self, doc: &NewsDocument) -> TextInsight {
        let text = doc.text();
        let (p, n) = lexicon_hits(&text);
        let tags = detect_tags(&text);
        let mut rationale = format!("\"{}\": {p} positive / {n} negative hits", doc.headline);
        if !tags.is_empty() {
            let names: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
            rationale.push_str("; tags ");
            rationale.push_str(&names.join(","));
        }
        TextInsight {
            timestamp: doc.timestamp,
            sentiment: (p as f64 - n as f64) / (p + n + 1) as f64,
            risk_tags: tags,
            rationale,
            document_count: 1,
        }
    }
}

impl InsightProvider for LexiconStub {
    fn analyze(&self, timestamp: Timestamp, docs: &[NewsDocument]) -> Result<TextInsight, ProviderError> {
        let parts: Vec<TextInsight> = docs.iter().map(|d| self.document_insight(d)).collect();
        Ok(TextInsight::merge(timestamp, &parts))
    }
}

/// `C(S, N) = kappa * (1 - sentiment) / 2 * max(r, 0)`. Never negative.
pub fn context_adjustment(risk: &RiskValue, insight: &TextInsight, kappa: f64) -> f64 {
    let negativity = ((1.0 - insight.sentiment.clamp(-1.0, 1.0)) / 2.0).clamp(0.0, 1.0);
    kappa.max(0.0) * negativity * risk.r.max(0.0)
}
