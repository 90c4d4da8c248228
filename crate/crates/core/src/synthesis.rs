//! Total risk, the synthesized market view, reliability scoring and the
//! alert gate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::analytics::RiskValue;
use crate::market::InstrumentId;
use crate::text::TextInsight;
use crate::time::Timestamp;

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_FLAT_BAND: f64 = 0.05;
pub const DEFAULT_THRESHOLD: f64 = 0.75;

/// Largest double below 1; keeps reliability strictly under 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TotalRisk {
    pub timestamp: Timestamp,
    pub r: f64,
    pub context: f64,
    pub r_total: f64,
}

/// `R_total = R + C`.
pub fn total_risk(risk: &RiskValue, context: f64) -> TotalRisk {
    TotalRisk {
        timestamp: risk.timestamp,
        r: risk.r,
        context,
        r_total: risk.r + context,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Flat,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Flat => "flat",
        }
    }

    pub fn from_score(score: f64, flat_band: f64) -> Self {
        if score > flat_band {
            Direction::Up
        } else if score < -flat_band {
            Direction::Down
        } else {
            Direction::Flat
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Direction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MarketView {
    pub timestamp: Timestamp,
    pub direction: Direction,
    pub score: f64,
    pub m_t: f64,
    pub sentiment: f64,
    pub reliability: f64,
}

impl MarketView {
    pub fn with_reliability(mut self, reliability: f64) -> Self {
        self.reliability = reliability;
        self
    }
}

/// Blends the normalized aggregate signal with news sentiment:
/// `score = alpha * clamp(m_t / norm_scale, -1, 1) + (1 - alpha) * sentiment`.
///
/// The returned view carries zero reliability; see [`reliability_score`].
pub fn synthesize_view(m_t: f64, insight: &TextInsight, alpha: f64, norm_scale: f64, flat_band: f64) -> MarketView {
    let alpha = alpha.clamp(0.0, 1.0);
    let u = if norm_scale > 0.0 {
        (m_t / norm_scale).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let sentiment = insight.sentiment.clamp(-1.0, 1.0);
    let score = (alpha * u + (1.0 - alpha) * sentiment).clamp(-1.0, 1.0);
    MarketView {
        timestamp: insight.timestamp,
        direction: Direction::from_score(score, flat_band),
        score,
        m_t,
        sentiment,
        reliability: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("recent volatility must be positive, got {0}")]
    NonPositiveVolatility(f64),
}

/// Confidence in a view: `z / (1 + z)` signal strength, halved when the
/// signal and the news sentiment point in opposite directions.
///
/// `z = |m_t| / recent_vol`. A sentiment within `flat_band` of zero, or a
/// signal with `z <= flat_band`, counts as agreeing.
pub fn reliability_score(m_t: f64, recent_vol: f64, insight: &TextInsight, flat_band: f64) -> Result<f64, SynthesisError> {
    if recent_vol.is_nan() || recent_vol <= 0.0 {
        return Err(SynthesisError::NonPositiveVolatility(recent_vol));
    }
    if m_t == 0.0 {
        return Ok(0.0);
    }
    let z = libm::fabs(m_t) / recent_vol;
    let strength = (z / (1.0 + z)).min(BELOW_ONE);
    let s = insight.sentiment;
    let neutral = libm::fabs(s) <= flat_band || z <= flat_band;
    let agree = neutral || (s > 0.0) == (m_t > 0.0);
    let a = if agree { 1.0 } else { 0.0 };
    Ok(strength * (0.5 + 0.5 * a))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlertScope {
    MarketWide,
    Instruments(Vec<InstrumentId>),
}

#[cfg(feature = "serde")]
impl serde::Serialize for AlertScope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AlertScope::MarketWide => s.serialize_str("market-wide"),
            AlertScope::Instruments(ids) => serde::Serialize::serialize(ids, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Alert {
    pub timestamp: Timestamp,
    pub scope: AlertScope,
    pub r_total: f64,
    pub reliability: f64,
    pub direction: Direction,
    pub narrative: String,
}

/// Emits an alert iff `reliability >= threshold` and `r_total >= risk_trigger`.
pub fn gate_alert(
    view: &MarketView,
    total: &TotalRisk,
    threshold: f64,
    risk_trigger: f64,
    insight: &TextInsight,
    scope: AlertScope,
) -> Option<Alert> {
    if !(view.reliability >= threshold && total.r_total >= risk_trigger) {
        return None;
    }
    Some(Alert {
        timestamp: view.timestamp,
        scope,
        r_total: total.r_total,
        reliability: view.reliability,
        direction: view.direction,
        narrative: narrative(view, insight),
    })
}

fn narrative(view: &MarketView, insight: &TextInsight) -> String {
    let mut out = alloc::format!("{} view (score {:.3})", view.direction, view.score);
    if !insight.risk_tags.is_empty() {
        let tags: Vec<&str> = insight.risk_tags.iter().map(|t| t.as_str()).collect();
        out.push_str("; themes: ");
        out.push_str(&tags.join(", "));
    }
    if insight.document_count > 0 {
        out.push_str("; ");
        out.push_str(&insight.rationale);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn insight(sentiment: f64) -> TextInsight {
        let mut i = TextInsight::empty(Timestamp::from_millis(0));
        i.sentiment = sentiment;
        i
    }

    fn risk(r: f64) -> RiskValue {
        RiskValue {
            timestamp: Timestamp::from_millis(0),
            volatility_term: 0.0,
            covariance_term: 0.0,
            r,
        }
    }

    #[test]
    fn total_risk_examples() {
        assert_eq!(total_risk(&risk(0.2), 0.0).r_total, 0.2);
        assert!((total_risk(&risk(0.2), 0.1).r_total - 0.3).abs() < 1e-15);
    }

    #[test]
    fn view_examples() {
        let v = synthesize_view(0.0, &insight(0.0), 0.6, 1.0, 0.05);
        assert_eq!((v.score, v.direction), (0.0, Direction::Flat));
        let v = synthesize_view(0.5, &insight(0.0), 1.0, 1.0, 0.05);
        assert_eq!((v.score, v.direction), (0.5, Direction::Up));
        let v = synthesize_view(7.0, &insight(-1.0), 0.6, 2.0, 0.05);
        assert!((v.score - 0.2).abs() < 1e-15);
        assert_eq!(v.direction, Direction::Up);
        let v = synthesize_view(-0.2, &insight(0.0), 1.0, 1.0, 0.05);
        assert_eq!(v.direction, Direction::Down);
    }

    #[test]
    fn reliability_examples() {
        assert_eq!(reliability_score(0.0, 0.1, &insight(0.4), 0.05).unwrap(), 0.0);
        // z = 9, agreement
        assert!((reliability_score(0.9, 0.1, &insight(0.5), 0.05).unwrap() - 0.9).abs() < 1e-12);
        // z = 9, disagreement
        assert!((reliability_score(0.9, 0.1, &insight(-0.5), 0.05).unwrap() - 0.45).abs() < 1e-12);
        // neutral sentiment agrees
        assert!((reliability_score(-0.9, 0.1, &insight(0.0), 0.05).unwrap() - 0.9).abs() < 1e-12);
        assert!(reliability_score(1e300, 1e-300, &insight(0.0), 0.05).unwrap() < 1.0);
        assert!(matches!(
            reliability_score(0.1, 0.0, &insight(0.0), 0.05),
            Err(SynthesisError::NonPositiveVolatility(_))
        ));
    }

    fn gate(rel: f64, r_total: f64) -> Option<Alert> {
        let v = synthesize_view(0.1, &insight(0.0), 0.6, 1.0, 0.05).with_reliability(rel);
        let total = total_risk(&risk(r_total), 0.0);
        gate_alert(&v, &total, 0.75, 0.1, &insight(0.0), AlertScope::MarketWide)
    }

    #[test]
    fn gate_boundaries() {
        assert!(gate(0.75, 0.2).is_some());
        assert!(gate(0.749, 0.2).is_none());
        assert!(gate(0.7499999, 0.2).is_none());
        assert!(gate(0.9, 0.05).is_none());
        assert!(gate(0.9, 0.1).is_some());
    }

    proptest! {
        #[test]
        fn gate_is_monotone(rel in 0.0f64..1.0, drel in 0.0f64..0.5, r in -1.0f64..1.0, dr in 0.0f64..1.0) {
            if gate(rel, r).is_some() {
                prop_assert!(gate((rel + drel).min(1.0), r).is_some());
                prop_assert!(gate(rel, r + dr).is_some());
            }
        }

        #[test]
        fn direction_scale_invariant(m in -1.0f64..1.0, scale in 0.01f64..10.0, norm in 0.01f64..2.0, s in -1.0f64..1.0, c in 0.001f64..1000.0) {
            let a = synthesize_view(m * scale, &insight(s), 0.6, norm, 0.05);
            let b = synthesize_view(m * scale * c, &insight(s), 0.6, norm * c, 0.05);
            prop_assert_eq!(a.direction, b.direction);
        }

        #[test]
        fn reliability_bounded(m in -1e6f64..1e6, vol in 1e-9f64..1e3, s in -1.0f64..1.0) {
            let r = reliability_score(m, vol, &insight(s), 0.05).unwrap();
            prop_assert!((0.0..1.0).contains(&r));
            prop_assert_eq!(r == 0.0, m == 0.0);
        }

        #[test]
        fn total_risk_preserves_order(ra in -1.0f64..1.0, dr in 0.0f64..1.0, ca in 0.0f64..1.0, dc in 0.0f64..1.0) {
            let hi = total_risk(&risk(ra + dr), ca + dc);
            let lo = total_risk(&risk(ra), ca);
            prop_assert!(hi.r_total >= lo.r_total);
            prop_assert!(lo.r_total >= lo.r);
        }
    }
}
