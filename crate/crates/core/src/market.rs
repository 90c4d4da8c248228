//! Domain types shared by every layer of the engine.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::time::Timestamp;

/// Longest identifier accepted for instruments and sources.
pub const MAX_TOKEN_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("identifier is empty")]
    Empty,
    #[error("identifier `{0}` is longer than 64 characters")]
    TooLong(String),
    #[error("identifier `{0}` must be printable ASCII without whitespace")]
    InvalidChar(String),
}

fn validate_token(s: &str) -> Result<(), TokenError> {
    if s.is_empty() {
        return Err(TokenError::Empty);
    }
    if s.len() > MAX_TOKEN_LEN {
        return Err(TokenError::TooLong(s.into()));
    }
    if !s.bytes().all(|b| b.is_ascii_graphic()) {
        return Err(TokenError::InvalidChar(s.into()));
    }
    Ok(())
}

macro_rules! token_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize))]
        #[cfg_attr(feature = "serde", serde(transparent))]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, TokenError> {
                let s = s.into();
                validate_token(&s)?;
                Ok(Self(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = TokenError;
            fn from_str(s: &str) -> Result<Self, TokenError> {
                Self::new(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

token_type!(
    /// Instrument identifier: 1 to 64 printable ASCII characters, no whitespace.
    InstrumentId
);
token_type!(
    /// Data-source identifier, same lexical rules as [`InstrumentId`].
    SourceId
);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {what} `{value}`")]
pub struct ParseEnumError {
    pub what: &'static str,
    pub value: String,
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident, $what:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = ParseEnumError;
            fn from_str(s: &str) -> Result<Self, ParseEnumError> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(ParseEnumError { what: $what, value: s.into() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        #[cfg(feature = "serde")]
        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }
    };
}

named_enum!(
    /// The three asset classes the engine monitors.
    AssetClass, "asset class" {
        Equity => "equity",
        FixedIncome => "fixed_income",
        Currency => "currency",
    }
);

named_enum!(
    /// Kinds of data source feeding the engine.
    SourceKind, "source kind" {
        MarketNews => "market_news",
        FinancialReports => "financial_reports",
        HistoricalData => "historical_data",
        EconomicIndicators => "economic_indicators",
        AnalystReports => "analyst_reports",
        InvestorFeedback => "investor_feedback",
    }
);

named_enum!(
    /// How a source's raw material is turned into engine inputs.
    IntegrationMethod, "integration method" {
        RealTimeParsing => "real_time_parsing",
        AutomatedSummarization => "automated_summarization",
        TimeSeriesAnalysis => "time_series_analysis",
        CorrelationAnalysis => "correlation_analysis",
        SentimentAnalysis => "sentiment_analysis",
        DynamicSentimentUpdates => "dynamic_sentiment_updates",
    }
);

impl SourceKind {
    /// Efficiency score of each source kind; used as the weight prior.
    pub fn efficiency_score(self) -> f64 {
        match self {
            SourceKind::MarketNews => 0.85,
            SourceKind::FinancialReports => 0.78,
            SourceKind::HistoricalData => 0.82,
            SourceKind::EconomicIndicators => 0.80,
            SourceKind::AnalystReports => 0.77,
            SourceKind::InvestorFeedback => 0.83,
        }
    }

    /// The integration method paired with this kind by default.
    pub fn default_method(self) -> IntegrationMethod {
        match self {
            SourceKind::MarketNews => IntegrationMethod::RealTimeParsing,
            SourceKind::FinancialReports => IntegrationMethod::AutomatedSummarization,
            SourceKind::HistoricalData => IntegrationMethod::TimeSeriesAnalysis,
            SourceKind::EconomicIndicators => IntegrationMethod::CorrelationAnalysis,
            SourceKind::AnalystReports => IntegrationMethod::SentimentAnalysis,
            SourceKind::InvestorFeedback => IntegrationMethod::DynamicSentimentUpdates,
        }
    }
}

/// A tradable instrument in the monitored universe.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Instrument {
    pub id: InstrumentId,
    pub asset_class: AssetClass,
    pub quote_unit: String,
}

impl Instrument {
    pub fn new(id: InstrumentId, asset_class: AssetClass, quote_unit: impl Into<String>) -> Self {
        Instrument {
            id,
            asset_class,
            quote_unit: quote_unit.into(),
        }
    }
}

/// One reading from one source about one instrument.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SourceObservation {
    pub timestamp: Timestamp,
    pub source_id: SourceId,
    pub source_kind: SourceKind,
    pub instrument_id: InstrumentId,
    pub value: f64,
}

/// A closing price for one instrument and period.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Bar {
    pub timestamp: Timestamp,
    pub instrument_id: InstrumentId,
    pub close: f64,
}

impl Bar {
    pub fn new(timestamp: Timestamp, instrument_id: InstrumentId, close: f64) -> Self {
        Bar {
            timestamp,
            instrument_id,
            close,
        }
    }
}

/// A news item, report or article. An empty `instrument_ids` list means market-wide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NewsDocument {
    pub timestamp: Timestamp,
    pub source_kind: SourceKind,
    pub headline: String,
    pub body: String,
    pub instrument_ids: Vec<InstrumentId>,
}

impl NewsDocument {
    /// Headline and body joined for scoring.
    pub fn text(&self) -> String {
        let mut s = String::with_capacity(self.headline.len() + self.body.len() + 1);
        s.push_str(&self.headline);
        s.push(' ');
        s.push_str(&self.body);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_rules() {
        assert!(InstrumentId::new("AAPL").is_ok());
        assert_eq!(InstrumentId::new(""), Err(TokenError::Empty));
        assert!(matches!(InstrumentId::new("A B"), Err(TokenError::InvalidChar(_))));
        assert!(matches!(
            SourceId::new("x".repeat(65)),
            Err(TokenError::TooLong(_))
        ));
        assert!(SourceId::new("x".repeat(64)).is_ok());
    }

    #[test]
    fn enum_names_are_lowercase_and_round_trip() {
        assert_eq!(AssetClass::ALL.len(), 3);
        assert_eq!(SourceKind::ALL.len(), 6);
        for k in SourceKind::ALL {
            let s = k.as_str();
            assert!(s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_'));
            assert_eq!(s.parse::<SourceKind>().unwrap(), *k);
        }
        for c in AssetClass::ALL {
            assert_eq!(c.as_str().parse::<AssetClass>().unwrap(), *c);
        }
        assert!("Equity".parse::<AssetClass>().is_err());
    }

    #[test]
    fn efficiency_scores_sum() {
        let total: f64 = SourceKind::ALL.iter().map(|k| k.efficiency_score()).sum();
        assert!((total - 4.85).abs() < 1e-12);
    }
}
