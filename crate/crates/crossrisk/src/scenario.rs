//! Scenario files: a TOML array of `[[scenario]]` tables.
//!
//! ```toml
//! [[scenario]]
//! name = "baseline"                      # letters, digits, `_`, `-`, `.`
//! instruments = ["EQ_US", "FI_UST10"]    # optional, default every instrument
//! from = "2022-01-03T00:00:00Z"          # optional, default first record
//! to = "2024-01-01T00:00:00Z"            # optional, exclusive, default after last record
//! market = "planted"                     # optional synthetic preset instead of the config data
//! seed = 7                               # seed of the synthetic preset
//! event_sigma = 2.0
//!
//! [scenario.overrides]                   # beta1, beta2, kappa, alpha, threshold, window
//! alpha = 1.0
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use crossrisk_core::backtest::{ScenarioConfig, ScenarioOverrides, DEFAULT_EVENT_SIGMA};
use crossrisk_core::market::InstrumentId;
use crossrisk_core::{SeriesStore, Timestamp};
use toml::{Table, Value};

use crate::config::{ConfigError, ConfigIssue};
use crate::formats;
use crate::synthetic::Preset;

/// One entry of a scenario file before it is bound to a store.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub instruments: Option<Vec<InstrumentId>>,
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
    pub market: Option<Preset>,
    pub seed: Option<u64>,
    pub event_sigma: f64,
    pub overrides: ScenarioOverrides,
}

impl ScenarioSpec {
    /// Fills the optional universe and interval from `store`.
    pub fn resolve(&self, store: &SeriesStore) -> ScenarioConfig {
        let universe = self
            .instruments
            .clone()
            .unwrap_or_else(|| store.instruments().map(|i| i.id.clone()).collect());
        let (first, last) = store.time_bounds().unwrap_or((Timestamp::MIN, Timestamp::MIN));
        let mut cfg = ScenarioConfig::new(
            self.name.clone(),
            universe,
            self.from.unwrap_or(first),
            self.to.unwrap_or(last.plus_millis(1)),
        );
        cfg.overrides = self.overrides;
        cfg.seed = self.seed;
        cfg.event_sigma = self.event_sigma;
        cfg
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
}

pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioSpec>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text)
}

/// Parses a scenario file. An empty file yields an empty list.
pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioSpec>, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut issues = Vec::new();
    let mut issue = |path: String, message: String| issues.push(ConfigIssue { path, message });
    for k in root.keys() {
        if k != "scenario" {
            issue(k.clone(), "unknown key".into());
        }
    }
    let entries: &[Value] = match root.get("scenario") {
        None => &[],
        Some(Value::Array(a)) => a,
        Some(_) => {
            issue("scenario".into(), "must be an array of tables".into());
            &[]
        }
    };
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    for (n, entry) in entries.iter().enumerate() {
        let p = format!("scenario[{n}]");
        let Value::Table(t) = entry else {
            issue(p, "must be a table".into());
            continue;
        };
        for k in t.keys() {
            if !["name", "instruments", "from", "to", "market", "seed", "event_sigma", "overrides"].contains(&k.as_str()) {
                issue(format!("{p}.{k}"), "unknown key".into());
            }
        }
        let name = match t.get("name") {
            Some(Value::String(s)) if valid_name(s) => {
                if !names.insert(s.clone()) {
                    issue(format!("{p}.name"), format!("duplicate scenario name `{s}`"));
                }
                s.clone()
            }
            Some(_) => {
                issue(format!("{p}.name"), "must be a name of letters, digits, `_`, `-` or `.`".into());
                String::new()
            }
            None => {
                issue(format!("{p}.name"), "is required".into());
                String::new()
            }
        };
        let instruments = match t.get("instruments") {
            None => None,
            Some(Value::Array(a)) => {
                let mut ids = Vec::new();
                for (i, v) in a.iter().enumerate() {
                    match v.as_str().map(InstrumentId::new) {
                        Some(Ok(id)) => ids.push(id),
                        _ => issue(format!("{p}.instruments[{i}]"), "must be an instrument id".into()),
                    }
                }
                if ids.is_empty() {
                    issue(format!("{p}.instruments"), "must not be empty".into());
                }
                Some(ids)
            }
            Some(_) => {
                issue(format!("{p}.instruments"), "must be an array".into());
                None
            }
        };
        let mut ts = |key: &str| match t.get(key) {
            None => None,
            Some(v) => match v.as_str().map(formats::parse_timestamp) {
                Some(Ok(ts)) => Some(ts),
                Some(Err(e)) => {
                    issue(format!("{p}.{key}"), e);
                    None
                }
                None => {
                    issue(format!("{p}.{key}"), "must be an RFC 3339 string".into());
                    None
                }
            },
        };
        let from = ts("from");
        let to = ts("to");
        if let (Some(f), Some(e)) = (from, to) {
            if f >= e {
                issue(format!("{p}.to"), "interval is empty".into());
            }
        }
        let market = match t.get("market") {
            None => None,
            Some(v) => {
                let m = v.as_str().and_then(Preset::parse);
                if m.is_none() {
                    issue(format!("{p}.market"), "must be `desk`, `planted` or `null`".into());
                }
                m
            }
        };
        let seed = match t.get("seed") {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(_) => {
                issue(format!("{p}.seed"), "must be a non-negative integer".into());
                None
            }
        };
        if market.is_some() && seed.is_none() {
            issue(format!("{p}.seed"), "is required with `market`".into());
        }
        let event_sigma = match t.get("event_sigma") {
            None => DEFAULT_EVENT_SIGMA,
            Some(v) => match v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
                Some(x) if x > 0.0 && x.is_finite() => x,
                _ => {
                    issue(format!("{p}.event_sigma"), "must be a positive number".into());
                    DEFAULT_EVENT_SIGMA
                }
            },
        };
        let mut overrides = ScenarioOverrides::default();
        match t.get("overrides") {
            None => {}
            Some(Value::Table(o)) => {
                for (k, v) in o {
                    let path = format!("{p}.overrides.{k}");
                    let num = v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
                    let unit = |x: f64| (0.0..=1.0).contains(&x);
                    let non_neg = |x: f64| x >= 0.0 && x.is_finite();
                    match (k.as_str(), num) {
                        ("beta1", Some(x)) if non_neg(x) => overrides.beta1 = Some(x),
                        ("beta2", Some(x)) if non_neg(x) => overrides.beta2 = Some(x),
                        ("kappa", Some(x)) if non_neg(x) => overrides.kappa = Some(x),
                        ("alpha", Some(x)) if unit(x) => overrides.alpha = Some(x),
                        ("threshold", Some(x)) if unit(x) => overrides.threshold = Some(x),
                        ("window", _) => match v.as_integer() {
                            Some(w) if (2..=10_000).contains(&w) => overrides.window = Some(w as usize),
                            _ => issue(path, "must be an integer in [2, 10000]".into()),
                        },
                        ("beta1" | "beta2" | "kappa", _) => issue(path, "must be a number >= 0".into()),
                        ("alpha" | "threshold", _) => issue(path, "must be a number in [0, 1]".into()),
                        _ => issue(path, "unknown key".into()),
                    }
                }
            }
            Some(_) => issue(format!("{p}.overrides"), "must be a table".into()),
        }
        out.push(ScenarioSpec {
            name,
            instruments,
            from,
            to,
            market,
            seed,
            event_sigma,
            overrides,
        });
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_entry() {
        let text = r#"
[[scenario]]
name = "fx"
instruments = ["FX_EURUSD"]
from = "2022-01-03T00:00:00Z"
to = "2023-01-03T00:00:00Z"
[scenario.overrides]
alpha = 1
window = 20

[[scenario]]
name = "synthetic"
market = "null"
seed = 4
"#;
        let v = parse_scenarios(text).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].overrides.alpha, Some(1.0));
        assert_eq!(v[0].overrides.window, Some(20));
        assert_eq!(v[1].market, Some(Preset::Null));
        assert_eq!(v[1].seed, Some(4));
        assert!(parse_scenarios("").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_entries() {
        let bad = [
            ("[[scenario]]\nname = \"a b\"\n", "scenario[0].name"),
            ("[[scenario]]\nname = \"a\"\n[scenario.overrides]\nalpha = 3\n", "scenario[0].overrides.alpha"),
            ("[[scenario]]\nname = \"a\"\n[scenario.overrides]\ngamma = 3\n", "scenario[0].overrides.gamma"),
            ("[[scenario]]\nname = \"a\"\nfrom = \"2022-01-02T00:00:00Z\"\nto = \"2022-01-01T00:00:00Z\"\n", "scenario[0].to"),
            ("[[scenario]]\nname = \"a\"\nmarket = \"desk\"\n", "scenario[0].seed"),
            ("[[scenario]]\nname = \"a\"\n[[scenario]]\nname = \"a\"\n", "scenario[1].name"),
        ];
        for (text, path) in bad {
            match parse_scenarios(text) {
                Err(ConfigError::Invalid(v)) => assert_eq!(v[0].path, path, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
