//! Market signals and the quantitative risk metric.
//!
//! `R = beta1 * V(S) + beta2 * Cov(S)` where `V(S)` is the signal-weighted
//! mean of per-instrument rolling volatilities and `Cov(S)` is the mean
//! off-diagonal entry of the sample covariance matrix of returns.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::market::InstrumentId;
use crate::stats;
use crate::time::Timestamp;

/// Default rolling window, in bars.
pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("prices must be positive, got {prev} -> {close}")]
    NonPositivePrice { prev: f64, close: f64 },
    #[error("need at least 2 observations, have {0}")]
    InsufficientHistory(usize),
    #[error("return windows have different lengths")]
    MisalignedWindows,
    #[error("need at least 2 instruments, have {0}")]
    TooFewInstruments(usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("keys of values and weights differ")]
    KeyMismatch,
    #[error("signal weights must be non-negative and sum to 1, got sum {0}")]
    InvalidWeights(f64),
    #[error("invalid risk parameters: {0}")]
    InvalidParams(&'static str),
}

/// How an instrument's signal is derived from its bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SignalDerivation {
    /// Latest log return.
    #[default]
    LogReturn,
    /// Latest log return divided by the window's sample volatility.
    ZScore,
}

impl SignalDerivation {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalDerivation::LogReturn => "log_return",
            SignalDerivation::ZScore => "z_score",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log_return" => Some(SignalDerivation::LogReturn),
            "z_score" => Some(SignalDerivation::ZScore),
            _ => None,
        }
    }

    /// Applies the derivation to a window of returns (latest last).
    pub fn derive(self, returns: &[f64]) -> Option<f64> {
        let last = *returns.last()?;
        match self {
            SignalDerivation::LogReturn => Some(last),
            SignalDerivation::ZScore => {
                let sd = stats::sample_std(returns)?;
                Some(if sd > 0.0 { last / sd } else { 0.0 })
            }
        }
    }
}

/// Per-instrument signal values at one instant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SignalSet {
    pub timestamp: Timestamp,
    pub derivation: SignalDerivation,
    pub values: BTreeMap<InstrumentId, f64>,
}

/// Per-instrument signal weights summing to one.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SignalWeights {
    weights: BTreeMap<InstrumentId, f64>,
}

impl SignalWeights {
    pub fn new(weights: BTreeMap<InstrumentId, f64>) -> Result<Self, AnalyticsError> {
        let sum: f64 = weights.values().sum();
        if weights.is_empty() || weights.values().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(AnalyticsError::InvalidWeights(sum));
        }
        Ok(SignalWeights { weights })
    }

    pub fn uniform<I: IntoIterator<Item = InstrumentId>>(ids: I) -> Result<Self, AnalyticsError> {
        let ids: Vec<InstrumentId> = ids.into_iter().collect();
        let w = 1.0 / ids.len() as f64;
        Self::new(ids.into_iter().map(|id| (id, w)).collect())
    }

    pub fn get(&self, id: &InstrumentId) -> Option<f64> {
        self.weights.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InstrumentId, f64)> {
        self.weights.iter().map(|(k, v)| (k, *v))
    }

    fn weighted_sum(&self, values: &BTreeMap<InstrumentId, f64>) -> Result<f64, AnalyticsError> {
        if values.len() != self.weights.len() || !values.keys().eq(self.weights.keys()) {
            return Err(AnalyticsError::KeyMismatch);
        }
        Ok(values
            .iter()
            .zip(self.weights.values())
            .map(|((_, v), w)| w * v)
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RiskParams {
    pub beta1: f64,
    pub beta2: f64,
    pub window: usize,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            beta1: 1.0,
            beta2: 1.0,
            window: DEFAULT_WINDOW,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.beta1.is_finite() && self.beta1 >= 0.0) {
            return Err(AnalyticsError::InvalidParams("beta1 must be finite and >= 0"));
        }
        if !(self.beta2.is_finite() && self.beta2 >= 0.0) {
            return Err(AnalyticsError::InvalidParams("beta2 must be finite and >= 0"));
        }
        if self.window < 2 {
            return Err(AnalyticsError::InvalidParams("window must be >= 2"));
        }
        Ok(())
    }
}

/// Quantitative risk with its two components.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RiskValue {
    pub timestamp: Timestamp,
    pub volatility_term: f64,
    pub covariance_term: f64,
    pub r: f64,
}

pub fn log_return(prev_close: f64, close: f64) -> Result<f64, AnalyticsError> {
    if !(prev_close > 0.0 && close > 0.0) {
        return Err(AnalyticsError::NonPositivePrice {
            prev: prev_close,
            close,
        });
    }
    Ok(libm::log(close / prev_close))
}

/// Consecutive log returns of a close series.
pub fn log_returns(closes: &[f64]) -> Result<Vec<f64>, AnalyticsError> {
    closes.windows(2).map(|w| log_return(w[0], w[1])).collect()
}

/// Sample standard deviation of the last `window` returns.
pub fn rolling_volatility(returns: &[f64], window: usize) -> Result<f64, AnalyticsError> {
    let n = window.min(returns.len());
    if n < 2 {
        return Err(AnalyticsError::InsufficientHistory(n));
    }
    Ok(stats::sample_std(&returns[returns.len() - n..]).expect("n >= 2"))
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CovMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CovMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix must be square");
            data.extend_from_slice(r);
        }
        CovMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Sample covariance matrix (n - 1 denominator) of aligned return windows.
pub fn covariance_matrix(returns: &[Vec<f64>]) -> Result<CovMatrix, AnalyticsError> {
    let k = returns.len();
    if k < 2 {
        return Err(AnalyticsError::TooFewInstruments(k));
    }
    let len = returns[0].len();
    if returns.iter().any(|r| r.len() != len) {
        return Err(AnalyticsError::MisalignedWindows);
    }
    if len < 2 {
        return Err(AnalyticsError::InsufficientHistory(len));
    }
    let deviations: Vec<Vec<f64>> = returns
        .iter()
        .map(|r| {
            let m = stats::mean(r).expect("len >= 2");
            r.iter().map(|x| x - m).collect()
        })
        .collect();
    let denom = (len - 1) as f64;
    let mut data = alloc::vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let c = deviations[i]
                .iter()
                .zip(&deviations[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom;
            data[i * k + j] = c;
            data[j * k + i] = c;
        }
    }
    Ok(CovMatrix { n: k, data })
}

/// `V(S)`: signal-weighted mean of per-instrument volatilities.
pub fn aggregate_v(signal_vols: &BTreeMap<InstrumentId, f64>, w: &SignalWeights) -> Result<f64, AnalyticsError> {
    w.weighted_sum(signal_vols)
}

/// `Cov(S)`: mean of the strictly off-diagonal entries.
pub fn aggregate_cov(cov: &CovMatrix) -> Result<f64, AnalyticsError> {
    let n = cov.dim();
    if n < 2 {
        return Err(AnalyticsError::TooFewInstruments(n));
    }
    if !cov.is_symmetric() {
        return Err(AnalyticsError::NotSymmetric);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += cov.get(i, j);
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

pub fn risk_metric(v: f64, cov: f64, p: &RiskParams, timestamp: Timestamp) -> RiskValue {
    RiskValue {
        timestamp,
        volatility_term: v,
        covariance_term: cov,
        r: p.beta1 * v + p.beta2 * cov,
    }
}

/// `M(t) = sum_s w_s * Signal(s, t)`.
pub fn aggregate_signal(signals: &SignalSet, w: &SignalWeights) -> Result<f64, AnalyticsError> {
    w.weighted_sum(&signals.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<InstrumentId> {
        (0..n).map(|i| InstrumentId::new(format!("I{i}")).unwrap()).collect()
    }

    #[test]
    fn log_return_examples() {
        assert_eq!(log_return(100.0, 100.0).unwrap(), 0.0);
        assert!((log_return(100.0, 200.0).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_return(200.0, 100.0).unwrap() + core::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_return(0.0, 1.0).is_err());
        assert!(log_return(1.0, -1.0).is_err());
    }

    #[test]
    fn rolling_volatility_examples() {
        assert_eq!(rolling_volatility(&[0.02; 10], 5).unwrap(), 0.0);
        let v = rolling_volatility(&[0.01, -0.01], 2).unwrap();
        // sqrt(2 * 0.01^2 / 1)
        assert!((v - 0.014_142_135_623_730_95).abs() < 1e-15);
        assert!(matches!(
            rolling_volatility(&[0.01], 30),
            Err(AnalyticsError::InsufficientHistory(1))
        ));
        // only the tail counts
        let v = rolling_volatility(&[5.0, -5.0, 0.01, -0.01], 2).unwrap();
        assert!((v - 0.014_142_135_623_730_95).abs() < 1e-15);
    }

    #[test]
    fn covariance_identities() {
        let x = vec![0.01, -0.02, 0.03, 0.0, 0.015];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let c = covariance_matrix(&[x.clone(), x.clone(), y]).unwrap();
        let var = stats::sample_std(&x).unwrap().powi(2);
        assert!((c.get(0, 0) - var).abs() < 1e-15);
        assert!((c.get(0, 1) - var).abs() < 1e-15);
        assert!((c.get(0, 2) + var).abs() < 1e-15);
        assert!(c.is_symmetric());
        assert_eq!(
            covariance_matrix(&[vec![1.0, 2.0], vec![1.0]]),
            Err(AnalyticsError::MisalignedWindows)
        );
        assert_eq!(
            covariance_matrix(&[vec![1.0], vec![1.0]]),
            Err(AnalyticsError::InsufficientHistory(1))
        );
        assert_eq!(
            covariance_matrix(&[vec![1.0, 2.0]]),
            Err(AnalyticsError::TooFewInstruments(1))
        );
    }

    #[test]
    fn aggregate_v_examples() {
        let id = ids(2);
        let mut vols = BTreeMap::new();
        vols.insert(id[0].clone(), 0.1);
        let single = SignalWeights::uniform([id[0].clone()]).unwrap();
        assert_eq!(aggregate_v(&vols, &single).unwrap(), 0.1);
        vols.insert(id[1].clone(), 0.3);
        let w = SignalWeights::uniform(id.clone()).unwrap();
        assert!((aggregate_v(&vols, &w).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(aggregate_v(&vols, &single), Err(AnalyticsError::KeyMismatch));
    }

    #[test]
    fn aggregate_cov_examples() {
        let m = CovMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]);
        assert_eq!(aggregate_cov(&m).unwrap(), 0.3);
        let d = CovMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]]);
        assert_eq!(aggregate_cov(&d).unwrap(), 0.0);
        let a = CovMatrix::from_rows(&[vec![1.0, 0.3], vec![0.2, 2.0]]);
        assert_eq!(aggregate_cov(&a), Err(AnalyticsError::NotSymmetric));
    }

    #[test]
    fn risk_metric_examples() {
        let t = Timestamp::from_millis(0);
        let p = |b1, b2| RiskParams { beta1: b1, beta2: b2, window: 30 };
        assert_eq!(risk_metric(0.2, 0.7, &p(1.0, 0.0), t).r, 0.2);
        assert_eq!(risk_metric(0.9, -0.05, &p(0.0, 1.0), t).r, -0.05);
        assert!((risk_metric(0.2, 0.05, &p(1.0, 1.0), t).r - 0.25).abs() < 1e-15);
        assert!(RiskParams { beta1: -1.0, ..RiskParams::default() }.validate().is_err());
        assert!(RiskParams { window: 1, ..RiskParams::default() }.validate().is_err());
    }

    #[test]
    fn aggregate_signal_examples() {
        let id = ids(2);
        let t = Timestamp::from_millis(0);
        let one = SignalSet {
            timestamp: t,
            derivation: SignalDerivation::LogReturn,
            values: [(id[0].clone(), 0.42)].into_iter().collect(),
        };
        let w1 = SignalWeights::uniform([id[0].clone()]).unwrap();
        assert_eq!(aggregate_signal(&one, &w1).unwrap(), 0.42);
        let two = SignalSet {
            timestamp: t,
            derivation: SignalDerivation::LogReturn,
            values: [(id[0].clone(), 0.3), (id[1].clone(), -0.3)].into_iter().collect(),
        };
        let w2 = SignalWeights::uniform(id).unwrap();
        assert_eq!(aggregate_signal(&two, &w2).unwrap(), 0.0);
    }

    #[test]
    fn zscore_derivation() {
        let r = [0.01, -0.01, 0.02];
        let sd = stats::sample_std(&r).unwrap();
        assert_eq!(SignalDerivation::ZScore.derive(&r), Some(0.02 / sd));
        assert_eq!(SignalDerivation::ZScore.derive(&[0.0, 0.0]), Some(0.0));
        assert_eq!(SignalDerivation::LogReturn.derive(&r), Some(0.02));
    }

    // Independent oracles.
    fn naive_std(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    fn naive_cov(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut s = 0.0;
        for t in 0..a.len() {
            s += (a[t] - ma) * (b[t] - mb);
        }
        s / (n - 1.0)
    }

    #[test]
    fn volatility_matches_two_pass_oracle_on_long_series() {
        // deterministic pseudo-random returns
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let returns: Vec<f64> = (0..1000)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state as f64 / u64::MAX as f64 - 0.5) * 0.04
            })
            .collect();
        let got = rolling_volatility(&returns, 30).unwrap();
        assert!((got - naive_std(&returns[970..])).abs() < 1e-12);
    }

    #[test]
    fn covariance_matches_double_loop_on_5x30() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.05
        };
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..30).map(|_| next()).collect()).collect();
        let c = covariance_matrix(&rows).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((c.get(i, j) - naive_cov(&rows[i], &rows[j])).abs() < 1e-9);
            }
        }
        let off: f64 = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| naive_cov(&rows[i], &rows[j]))
            .sum::<f64>()
            / 20.0;
        assert!((aggregate_cov(&c).unwrap() - off).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn covariance_is_psd(rows in (2usize..6, 2usize..40).prop_flat_map(|(k, n)| proptest::collection::vec(proptest::collection::vec(-0.1f64..0.1, n), k))) {
            let c = covariance_matrix(&rows).unwrap();
            let k = c.dim();
            let m = nalgebra::DMatrix::from_fn(k, k, |i, j| c.get(i, j));
            let eig = m.symmetric_eigen();
            prop_assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-9));
        }

        #[test]
        fn risk_metric_monotone(v in 0.0f64..1.0, dv in 0.0f64..1.0, c in -1.0f64..1.0, dc in 0.0f64..1.0, b1 in 0.0f64..5.0, b2 in 0.0f64..5.0) {
            let p = RiskParams { beta1: b1, beta2: b2, window: 30 };
            let t = Timestamp::from_millis(0);
            let base = risk_metric(v, c, &p, t).r;
            prop_assert!(risk_metric(v + dv, c, &p, t).r >= base);
            prop_assert!(risk_metric(v, c + dc, &p, t).r >= base);
        }

        #[test]
        fn aggregates_are_linear(xs in proptest::collection::vec(-1.0f64..1.0, 1..8), ys in proptest::collection::vec(-1.0f64..1.0, 8), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let id = ids(xs.len());
            let w = SignalWeights::uniform(id.clone()).unwrap();
            let mk = |vals: Vec<f64>| SignalSet {
                timestamp: Timestamp::from_millis(0),
                derivation: SignalDerivation::LogReturn,
                values: id.iter().cloned().zip(vals).collect(),
            };
            let ys = &ys[..xs.len()];
            let combo: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = aggregate_signal(&mk(combo.clone()), &w).unwrap();
            let rhs = a * aggregate_signal(&mk(xs.clone()), &w).unwrap() + b * aggregate_signal(&mk(ys.to_vec()), &w).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let lv = aggregate_v(&mk(combo).values, &w).unwrap();
            let rv = a * aggregate_v(&mk(xs.clone()).values, &w).unwrap() + b * aggregate_v(&mk(ys.to_vec()).values, &w).unwrap();
            prop_assert!((lv - rv).abs() < 1e-12);
        }

        #[test]
        fn volatility_translation_and_scale(xs in proptest::collection::vec(-0.1f64..0.1, 2..60), shift in -1.0f64..1.0, scale in -10.0f64..10.0) {
            let base = rolling_volatility(&xs, 30).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
            prop_assert!((rolling_volatility(&shifted, 30).unwrap() - base).abs() < 1e-9);
            prop_assert!((rolling_volatility(&scaled, 30).unwrap() - scale.abs() * base).abs() < 1e-9 * (1.0 + scale.abs()));
        }
    }
}
