//! Strict TOML engine configuration.
//!
//! ```toml
//! [instrument.EQ_US]          # optional; undeclared instruments come from bar files
//! asset_class = "equity"
//! quote_unit = "index_points"
//!
//! [source.bars]               # one section per input file
//! kind = "historical_data"
//! method = "time_series_analysis"   # optional, defaults to the kind's method
//! path = "bars.csv"                 # relative to the config file
//! override = false                  # permit a non-default method
//!
//! [risk]     beta1, beta2, window, derivation
//! [context]  kappa, alpha, provider, endpoint, model, timeout_ms, max_retries,
//!            prompt_template, max_in_flight
//! [alert]    threshold, risk_trigger, flat_band, trigger_quantile,
//!            calibration_ticks, norm_multiplier
//! [learner]  learning_rate, floor
//! ```
//!
//! Unknown sections or keys are errors, and every problem is reported with
//! its dotted key path.

use std::fmt;
use std::path::{Path, PathBuf};

use crossrisk_core::analytics::SignalDerivation;
use crossrisk_core::market::{AssetClass, Instrument, InstrumentId, IntegrationMethod, SourceId, SourceKind};
use crossrisk_core::text::{ProviderKind, ProviderSpec};
use crossrisk_core::EngineParams;
use toml::{Table, Value};

use crate::ingest::SourceAdapterConfig;
use crate::provider;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{} invalid setting(s)", .0.len())]
    Invalid(Vec<ConfigIssue>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub sources: Vec<SourceAdapterConfig>,
    pub instruments: Vec<Instrument>,
    pub params: EngineParams,
    pub provider: ProviderSpec,
}

const SECTIONS: [&str; 6] = ["instrument", "source", "risk", "context", "alert", "learner"];

struct Checker {
    issues: Vec<ConfigIssue>,
}

impl Checker {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn table<'a>(&mut self, root: &'a Table, key: &str) -> Option<&'a Table> {
        match root.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.issue(key, "must be a table");
                None
            }
        }
    }

    fn known_keys(&mut self, t: &Table, prefix: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.issue(format!("{prefix}.{k}"), "unknown key");
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, prefix: &str, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> f64 {
        match self.opt_float(t, prefix, key, ok, range) {
            Some(v) => v,
            None => default,
        }
    }

    fn opt_float(&mut self, t: Option<&Table>, prefix: &str, key: &str, ok: impl Fn(f64) -> bool, range: &str) -> Option<f64> {
        let v = t?.get(key)?;
        let path = format!("{prefix}.{key}");
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            _ => {
                self.issue(path, "must be a number");
                return None;
            }
        };
        if !(x.is_finite() && ok(x)) {
            self.issue(path, format!("must be {range}, got {x}"));
            return None;
        }
        Some(x)
    }

    fn int(&mut self, t: Option<&Table>, prefix: &str, key: &str, min: i64, max: i64) -> Option<i64> {
        let v = t?.get(key)?;
        let path = format!("{prefix}.{key}");
        match v {
            Value::Integer(i) if (min..=max).contains(i) => Some(*i),
            Value::Integer(i) => {
                self.issue(path, format!("must be an integer in [{min}, {max}], got {i}"));
                None
            }
            _ => {
                self.issue(path, "must be an integer");
                None
            }
        }
    }

    fn string<'a>(&mut self, t: Option<&'a Table>, prefix: &str, key: &str) -> Option<&'a str> {
        let v = t?.get(key)?;
        match v {
            Value::String(s) => Some(s),
            _ => {
                self.issue(format!("{prefix}.{key}"), "must be a string");
                None
            }
        }
    }

    fn parsed<T>(&mut self, t: Option<&Table>, prefix: &str, key: &str, parse: impl Fn(&str) -> Option<T>, expected: &str) -> Option<T> {
        let s = self.string(t, prefix, key)?;
        let v = parse(s);
        if v.is_none() {
            self.issue(format!("{prefix}.{key}"), format!("`{s}` is not one of {expected}"));
        }
        v
    }

    fn boolean(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<bool> {
        match t?.get(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.issue(format!("{prefix}.{key}"), "must be true or false");
                None
            }
        }
    }
}

fn names<T: fmt::Display>(all: &[T]) -> String {
    all.iter().map(|x| format!("`{x}`")).collect::<Vec<_>>().join(", ")
}

const UNIT: fn(f64) -> bool = |x| (0.0..=1.0).contains(&x);
const NON_NEG: fn(f64) -> bool = |x| x >= 0.0;
const POSITIVE: fn(f64) -> bool = |x| x > 0.0;

pub fn load_config(path: &Path) -> Result<EngineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

/// Parses and validates a config document; relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<EngineConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut c = Checker { issues: Vec::new() };
    for k in root.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            c.issue(k.clone(), "unknown section");
        }
    }

    let mut instruments = Vec::new();
    if let Some(t) = c.table(&root, "instrument") {
        for (id, v) in t {
            let prefix = format!("instrument.{id}");
            let Value::Table(it) = v else {
                c.issue(prefix, "must be a table");
                continue;
            };
            c.known_keys(it, &prefix, &["asset_class", "quote_unit"]);
            let iid = InstrumentId::new(id.as_str()).map_err(|e| e.to_string());
            if let Err(e) = &iid {
                c.issue(prefix.clone(), e.clone());
            }
            let class = c.parsed(Some(it), &prefix, "asset_class", |s| s.parse::<AssetClass>().ok(), &names(AssetClass::ALL));
            if !it.contains_key("asset_class") {
                c.issue(format!("{prefix}.asset_class"), "is required");
            }
            let unit = c.string(Some(it), &prefix, "quote_unit").unwrap_or("price").to_string();
            if let (Ok(iid), Some(class)) = (iid, class) {
                instruments.push(Instrument::new(iid, class, unit));
            }
        }
    }

    let mut sources = Vec::new();
    match c.table(&root, "source") {
        Some(t) if !t.is_empty() => {
            for (id, v) in t {
                let prefix = format!("source.{id}");
                let Value::Table(st) = v else {
                    c.issue(prefix, "must be a table");
                    continue;
                };
                c.known_keys(st, &prefix, &["kind", "method", "path", "override"]);
                let sid = SourceId::new(id.as_str()).map_err(|e| e.to_string());
                if let Err(e) = &sid {
                    c.issue(prefix.clone(), e.clone());
                }
                for req in ["kind", "path"] {
                    if !st.contains_key(req) {
                        c.issue(format!("{prefix}.{req}"), "is required");
                    }
                }
                let kind = c.parsed(Some(st), &prefix, "kind", |s| s.parse::<SourceKind>().ok(), &names(SourceKind::ALL));
                let method = c.parsed(Some(st), &prefix, "method", |s| s.parse::<IntegrationMethod>().ok(), &names(IntegrationMethod::ALL));
                let path = c.string(Some(st), &prefix, "path");
                let allow = c.boolean(Some(st), &prefix, "override").unwrap_or(false);
                if let (Ok(sid), Some(kind), Some(path)) = (sid, kind, path) {
                    let mut cfg = SourceAdapterConfig::new(sid, kind, crate::ingest::resolve_path(base_dir, Path::new(path)));
                    cfg.allow_method_override = allow;
                    if let Some(m) = method {
                        cfg.integration_method = m;
                    }
                    if let Err(e) = cfg.validate() {
                        c.issue(format!("{prefix}.method"), e.to_string());
                    }
                    sources.push(cfg);
                }
            }
        }
        _ => c.issue("source", "at least one source file is required"),
    }

    let d = EngineParams::default();
    let dp = ProviderSpec::default();

    let risk = c.table(&root, "risk");
    if let Some(t) = risk {
        c.known_keys(t, "risk", &["beta1", "beta2", "window", "derivation"]);
    }
    let mut params = d.clone();
    params.risk.beta1 = c.float(risk, "risk", "beta1", d.risk.beta1, NON_NEG, ">= 0");
    params.risk.beta2 = c.float(risk, "risk", "beta2", d.risk.beta2, NON_NEG, ">= 0");
    params.risk.window = c.int(risk, "risk", "window", 2, 10_000).map_or(d.risk.window, |w| w as usize);
    params.derivation = c
        .parsed(risk, "risk", "derivation", SignalDerivation::parse, "`log_return`, `z_score`")
        .unwrap_or(d.derivation);

    let ctx = c.table(&root, "context");
    if let Some(t) = ctx {
        c.known_keys(
            t,
            "context",
            &["kappa", "alpha", "provider", "endpoint", "model", "timeout_ms", "max_retries", "prompt_template", "max_in_flight"],
        );
    }
    params.kappa = c.float(ctx, "context", "kappa", d.kappa, NON_NEG, ">= 0");
    params.alpha = c.float(ctx, "context", "alpha", d.alpha, UNIT, "in [0, 1]");
    let mut spec = dp.clone();
    spec.kind = c
        .parsed(ctx, "context", "provider", ProviderKind::parse, "`lexicon_stub`, `remote_completion`")
        .unwrap_or(dp.kind);
    spec.endpoint = c.string(ctx, "context", "endpoint").map(str::to_string);
    if let Some(m) = c.string(ctx, "context", "model") {
        spec.model_name = m.to_string();
    }
    spec.timeout_ms = c.int(ctx, "context", "timeout_ms", 1, 600_000).map_or(dp.timeout_ms, |v| v as u64);
    spec.max_retries = c.int(ctx, "context", "max_retries", 0, 10).map_or(dp.max_retries, |v| v as u32);
    spec.max_in_flight = c.int(ctx, "context", "max_in_flight", 1, 64).map_or(dp.max_in_flight, |v| v as usize);
    if let Some(tpl) = c.string(ctx, "context", "prompt_template") {
        if provider::prompt_template(tpl).is_none() {
            c.issue("context.prompt_template", format!("unknown template `{tpl}`"));
        }
        spec.prompt_template_id = tpl.to_string();
    }
    if spec.kind == ProviderKind::RemoteCompletion && spec.endpoint.as_deref().is_none_or(str::is_empty) {
        c.issue("context.endpoint", "is required for the remote_completion provider");
    }

    let alert = c.table(&root, "alert");
    if let Some(t) = alert {
        c.known_keys(
            t,
            "alert",
            &["threshold", "risk_trigger", "flat_band", "trigger_quantile", "calibration_ticks", "norm_multiplier"],
        );
    }
    params.threshold = c.float(alert, "alert", "threshold", d.threshold, UNIT, "in [0, 1]");
    params.risk_trigger = c.opt_float(alert, "alert", "risk_trigger", |_| true, "finite");
    params.flat_band = c.float(alert, "alert", "flat_band", d.flat_band, UNIT, "in [0, 1]");
    params.trigger_quantile = c.float(alert, "alert", "trigger_quantile", d.trigger_quantile, UNIT, "in [0, 1]");
    params.calibration_ticks = c.int(alert, "alert", "calibration_ticks", 1, 100_000).map(|v| v as usize);
    params.norm_multiplier = c.float(alert, "alert", "norm_multiplier", d.norm_multiplier, POSITIVE, "> 0");

    let learner = c.table(&root, "learner");
    if let Some(t) = learner {
        c.known_keys(t, "learner", &["learning_rate", "floor"]);
    }
    params.learning_rate = c.float(learner, "learner", "learning_rate", d.learning_rate, POSITIVE, "> 0");
    params.floor = c.float(learner, "learner", "floor", d.floor, |x| x > 0.0 && x < 1.0, "in (0, 1)");

    if c.issues.is_empty() {
        Ok(EngineConfig {
            sources,
            instruments,
            params,
            provider: spec,
        })
    } else {
        Err(ConfigError::Invalid(c.issues))
    }
}

impl EngineConfig {
    /// The fully resolved configuration, defaults included, as TOML.
    pub fn resolved_toml(&self) -> String {
        let mut root = Table::new();
        let mut inst = Table::new();
        for i in &self.instruments {
            let mut t = Table::new();
            t.insert("asset_class".into(), i.asset_class.as_str().into());
            t.insert("quote_unit".into(), i.quote_unit.clone().into());
            inst.insert(i.id.to_string(), t.into());
        }
        if !inst.is_empty() {
            root.insert("instrument".into(), inst.into());
        }
        let mut src = Table::new();
        for s in &self.sources {
            let mut t = Table::new();
            t.insert("kind".into(), s.source_kind.as_str().into());
            t.insert("method".into(), s.integration_method.as_str().into());
            t.insert("path".into(), s.file_path.display().to_string().into());
            t.insert("override".into(), s.allow_method_override.into());
            src.insert(s.source_id.to_string(), t.into());
        }
        root.insert("source".into(), src.into());

        let p = &self.params;
        let mut risk = Table::new();
        risk.insert("beta1".into(), p.risk.beta1.into());
        risk.insert("beta2".into(), p.risk.beta2.into());
        risk.insert("window".into(), (p.risk.window as i64).into());
        risk.insert("derivation".into(), p.derivation.as_str().into());
        root.insert("risk".into(), risk.into());

        let s = &self.provider;
        let mut ctx = Table::new();
        ctx.insert("kappa".into(), p.kappa.into());
        ctx.insert("alpha".into(), p.alpha.into());
        ctx.insert("provider".into(), s.kind.as_str().into());
        if let Some(e) = &s.endpoint {
            ctx.insert("endpoint".into(), e.clone().into());
        }
        ctx.insert("model".into(), s.model_name.clone().into());
        ctx.insert("timeout_ms".into(), (s.timeout_ms as i64).into());
        ctx.insert("max_retries".into(), i64::from(s.max_retries).into());
        ctx.insert("prompt_template".into(), s.prompt_template_id.clone().into());
        ctx.insert("max_in_flight".into(), (s.max_in_flight as i64).into());
        root.insert("context".into(), ctx.into());

        let mut alert = Table::new();
        alert.insert("threshold".into(), p.threshold.into());
        if let Some(t) = p.risk_trigger {
            alert.insert("risk_trigger".into(), t.into());
        }
        alert.insert("flat_band".into(), p.flat_band.into());
        alert.insert("trigger_quantile".into(), p.trigger_quantile.into());
        if let Some(n) = p.calibration_ticks {
            alert.insert("calibration_ticks".into(), (n as i64).into());
        }
        alert.insert("norm_multiplier".into(), p.norm_multiplier.into());
        root.insert("alert".into(), alert.into());

        let mut learner = Table::new();
        learner.insert("learning_rate".into(), p.learning_rate.into());
        learner.insert("floor".into(), p.floor.into());
        root.insert("learner".into(), learner.into());

        let mut out = toml::to_string(&root).expect("tables serialize");
        if p.calibration_ticks.is_none() {
            out.push_str(&format!("\n# alert.calibration_ticks = {} (follows risk.window)\n", p.calibration_len()));
        }
        if p.risk_trigger.is_none() {
            out.push_str(&format!(
                "# alert.risk_trigger is calibrated: quantile {} of r_total over the calibration ticks\n",
                p.trigger_quantile
            ));
        }
        out
    }
}
