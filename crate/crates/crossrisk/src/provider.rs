//! Text-insight providers: the offline lexicon stub and a remote completion client.
//!
//! Wire protocol of the remote client, one HTTP POST per document:
//!
//! ```text
//! request  {"model": <string>, "prompt": <string>, "max_tokens": <u32>}
//!          Authorization: Bearer $CROSSRISK_PROVIDER_KEY
//! response {"model": <string>, "completion": <string>}
//! ```
//!
//! `completion` must itself be a JSON object with exactly the keys
//! `sentiment` (number in [-1, 1]), `risk_tags` (array of tag names) and
//! `rationale` (string). Anything else is rejected as unparseable.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crossrisk_core::market::NewsDocument;
use crossrisk_core::text::{InsightProvider, LexiconStub, ProviderError, ProviderKind, ProviderSpec, RiskTag, TextInsight};
use crossrisk_core::Timestamp;
use serde::{Deserialize, Serialize};

pub const CREDENTIAL_ENV: &str = "CROSSRISK_PROVIDER_KEY";
pub const MAX_TOKENS: u32 = 256;

const RISK_INSIGHT_V1: &str = include_str!("../fixtures/prompts/risk_insight_v1.txt");

/// Looks up a shipped prompt template by id.
pub fn prompt_template(id: &str) -> Option<&'static str> {
    match id {
        "risk_insight_v1" => Some(RISK_INSIGHT_V1),
        _ => None,
    }
}

pub fn render_prompt(template: &str, doc: &NewsDocument) -> String {
    let instruments: Vec<&str> = doc.instrument_ids.iter().map(|i| i.as_str()).collect();
    let instruments = if instruments.is_empty() {
        String::from("market-wide")
    } else {
        instruments.join(", ")
    };
    template
        .replace("{timestamp}", &doc.timestamp.to_string())
        .replace("{source_kind}", doc.source_kind.as_str())
        .replace("{instruments}", &instruments)
        .replace("{headline}", &doc.headline)
        .replace("{body}", &doc.body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub model: String,
    pub completion: String,
}

/// The structured insight carried inside `completion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsightPayload {
    pub sentiment: f64,
    pub risk_tags: Vec<String>,
    pub rationale: String,
}

impl InsightPayload {
    pub fn into_insight(self, timestamp: Timestamp) -> Result<TextInsight, String> {
        if !(self.sentiment.is_finite() && (-1.0..=1.0).contains(&self.sentiment)) {
            return Err(format!("sentiment {} outside [-1, 1]", self.sentiment));
        }
        let risk_tags = self
            .risk_tags
            .iter()
            .map(|t| t.parse::<RiskTag>().map_err(|_| format!("unknown risk tag `{t}`")))
            .collect::<Result<_, _>>()?;
        Ok(TextInsight {
            timestamp,
            sentiment: self.sentiment,
            risk_tags,
            rationale: self.rationale,
            document_count: 1,
        })
    }

    pub fn from_insight(insight: &TextInsight) -> Self {
        InsightPayload {
            sentiment: insight.sentiment,
            risk_tags: insight.risk_tags.iter().map(|t| t.as_str().to_string()).collect(),
            rationale: insight.rationale.clone(),
        }
    }
}

/// Parses a full response body down to the insight payload.
pub fn parse_response(body: &str) -> Result<InsightPayload, String> {
    let resp: CompletionResponse = serde_json::from_str(body).map_err(|e| format!("response: {e}"))?;
    serde_json::from_str(resp.completion.trim()).map_err(|e| format!("completion: {e}"))
}

enum Failure {
    Timeout,
    Unparseable(String),
    Transport(String),
}

/// Blocking HTTP client for a completion endpoint.
pub struct RemoteProvider {
    spec: ProviderSpec,
    endpoint: String,
    credential: String,
    template: &'static str,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("spec", &self.spec)
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl RemoteProvider {
    pub fn new(spec: ProviderSpec, credential: Option<String>) -> Result<Self, ProviderError> {
        let credential = credential.filter(|c| !c.is_empty());
        spec.validate(credential.is_some())?;
        let template = prompt_template(&spec.prompt_template_id)
            .ok_or_else(|| ProviderError::InvalidSpec(format!("unknown prompt template `{}`", spec.prompt_template_id)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(spec.timeout_ms)))
            .build()
            .into();
        Ok(RemoteProvider {
            endpoint: spec.endpoint.clone().unwrap_or_default(),
            credential: credential.unwrap_or_default(),
            template,
            agent,
            spec,
        })
    }

    /// Reads the credential from `CROSSRISK_PROVIDER_KEY`.
    pub fn from_env(spec: ProviderSpec) -> Result<Self, ProviderError> {
        Self::new(spec, std::env::var(CREDENTIAL_ENV).ok())
    }

    pub fn request_for(&self, doc: &NewsDocument) -> CompletionRequest {
        CompletionRequest {
            model: self.spec.model_name.clone(),
            prompt: render_prompt(self.template, doc),
            max_tokens: MAX_TOKENS,
        }
    }

    fn call_once(&self, req: &CompletionRequest) -> Result<InsightPayload, Failure> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.credential))
            .send_json(req);
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Timeout),
            Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => return Err(Failure::Timeout),
            Err(e) => return Err(Failure::Transport(e.to_string())),
        };
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => return Err(Failure::Timeout),
            Err(e) => return Err(Failure::Transport(e.to_string())),
        };
        parse_response(&body).map_err(Failure::Unparseable)
    }

    /// One document, retried up to `max_retries` extra times.
    pub fn analyze_document(&self, timestamp: Timestamp, doc: &NewsDocument) -> Result<TextInsight, ProviderError> {
        let req = self.request_for(doc);
        let attempts = self.spec.max_retries + 1;
        let mut last = Failure::Timeout;
        for _ in 0..attempts {
            match self.call_once(&req) {
                Ok(payload) => match payload.into_insight(timestamp) {
                    Ok(insight) => return Ok(insight),
                    Err(reason) => last = Failure::Unparseable(reason),
                },
                Err(f) => last = f,
            }
        }
        Err(match last {
            Failure::Timeout => ProviderError::Timeout { attempts },
            Failure::Unparseable(reason) => ProviderError::Unparseable { attempts, reason },
            Failure::Transport(msg) => ProviderError::Transport(msg),
        })
    }
}

impl InsightProvider for RemoteProvider {
    /// Documents are analyzed with at most `max_in_flight` concurrent calls and
    /// merged in input order.
    fn analyze(&self, timestamp: Timestamp, docs: &[NewsDocument]) -> Result<TextInsight, ProviderError> {
        if docs.is_empty() {
            return Ok(TextInsight::empty(timestamp));
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<TextInsight, ProviderError>>>> = Mutex::new(vec![None; docs.len()]);
        let workers = self.spec.max_in_flight.min(docs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= docs.len() {
                        break;
                    }
                    let r = self.analyze_document(timestamp, &docs[i]);
                    results.lock().expect("no poisoned workers")[i] = Some(r);
                });
            }
        });
        let parts = results
            .into_inner()
            .expect("no poisoned workers")
            .into_iter()
            .map(|r| r.expect("every index visited"))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TextInsight::merge(timestamp, &parts))
    }
}

/// The provider selected by configuration.
#[derive(Debug)]
pub enum AnyProvider {
    Stub(LexiconStub),
    Remote(Box<RemoteProvider>),
}

impl AnyProvider {
    pub fn from_spec(spec: &ProviderSpec) -> Result<Self, ProviderError> {
        match spec.kind {
            ProviderKind::LexiconStub => {
                spec.validate(false)?;
                Ok(AnyProvider::Stub(LexiconStub))
            }
            ProviderKind::RemoteCompletion => Ok(AnyProvider::Remote(Box::new(RemoteProvider::from_env(spec.clone())?))),
        }
    }
}

impl InsightProvider for AnyProvider {
    fn analyze(&self, timestamp: Timestamp, docs: &[NewsDocument]) -> Result<TextInsight, ProviderError> {
        match self {
            AnyProvider::Stub(p) => p.analyze(timestamp, docs),
            AnyProvider::Remote(p) => p.analyze(timestamp, docs),
        }
    }
}
