use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Indicator, MetricsError};

/// Stand-in for a zero baseline and floor for per-indicator scores.
pub const EPSILON: f64 = 1e-6;

/// Reference level for one indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Constant reference (median-of-medians or own-group median).
    Scalar(f64),
    /// Per-tick reference, e.g. the mean undisrupted trajectory.
    Series(Vec<f64>),
}

impl Baseline {
    fn at(&self, t: usize) -> f64 {
        match self {
            Baseline::Scalar(b) => *b,
            Baseline::Series(s) => s[t],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSeries {
    pub values: Vec<f64>,
    /// Ticks where a zero baseline was replaced by [`EPSILON`].
    pub epsilon_ticks: Vec<usize>,
}

/// `disrupted(t) / b(t)`. `0/0` counts as parity (1). Any other zero
/// baseline is replaced by [`EPSILON`] and the tick recorded.
pub fn ratio_series(disrupted: &[f64], baseline: &Baseline) -> Result<RatioSeries, MetricsError> {
    if let Baseline::Series(s) = baseline {
        if s.len() != disrupted.len() {
            return Err(MetricsError::LengthMismatch {
                expected: disrupted.len(),
                got: s.len(),
            });
        }
    }
    let mut epsilon_ticks = Vec::new();
    let values = disrupted
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            let b = baseline.at(t);
            if b > 0.0 {
                v / b
            } else if v == 0.0 {
                1.0
            } else {
                epsilon_ticks.push(t);
                v / EPSILON
            }
        })
        .collect();
    if !epsilon_ticks.is_empty() {
        tracing::warn!(ticks = epsilon_ticks.len(), "zero baseline replaced by epsilon");
    }
    Ok(RatioSeries { values, epsilon_ticks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub t_f: usize,
    pub t_r: usize,
    pub fp: f64,
    pub rp: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Failure and recovery profiles of a ratio series against disruption tick
/// `t_d`. `t_r` is the last tick; `t_f` the first minimiser of the ratio in
/// `[t_d, t_r]`. FP averages `[t_d, t_f]`, RP averages `[t_f+1, t_r]` and
/// falls back to `ratio(t_r)` when that window is empty.
pub fn failure_recovery_profiles(ratio: &[f64], t_d: usize) -> Result<Profile, MetricsError> {
    if t_d >= ratio.len() {
        return Err(MetricsError::DisruptionOutOfRange { t_d, len: ratio.len() });
    }
    let t_r = ratio.len() - 1;
    let mut t_f = t_d;
    for t in t_d..=t_r {
        if ratio[t] < ratio[t_f] {
            t_f = t;
        }
    }
    let fp = mean(&ratio[t_d..=t_f]);
    let rp = if t_f < t_r {
        mean(&ratio[t_f + 1..=t_r])
    } else {
        ratio[t_r]
    };
    Ok(Profile { t_f, t_r, fp, rp })
}

/// Duration-weighted score with tick-count windows:
/// `(t_d + FP·(t_f − t_d + 1) + RP·(t_r − t_f)) / (t_r + 1)`.
pub fn indicator_resilience(t_d: usize, t_f: usize, t_r: usize, fp: f64, rp: f64) -> Result<f64, MetricsError> {
    if !(t_d <= t_f && t_f <= t_r) {
        return Err(MetricsError::BadTimes { t_d, t_f, t_r });
    }
    let dt_f = (t_f - t_d + 1) as f64;
    let dt_r = (t_r - t_f) as f64;
    Ok((t_d as f64 + fp * dt_f + rp * dt_r) / (t_d as f64 + dt_f + dt_r))
}

/// Harmonic mean. Non-positive inputs are clamped to [`EPSILON`].
pub fn aggregate_resilience(rhos: &[f64]) -> Result<f64, MetricsError> {
    if rhos.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut inv = 0.0;
    for &r in rhos {
        let r = if r.is_nan() || r < EPSILON {
            tracing::warn!(value = r, "indicator score clamped to epsilon");
            EPSILON
        } else {
            r
        };
        inv += 1.0 / r;
    }
    Ok(rhos.len() as f64 / inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorBreakdown {
    pub indicator: Indicator,
    pub t_f: usize,
    pub t_r: usize,
    pub fp: f64,
    pub rp: f64,
    pub rho: f64,
    pub epsilon_substitutions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceBreakdown {
    pub t_d: usize,
    pub indicators: Vec<IndicatorBreakdown>,
    pub rho: f64,
    pub k: usize,
}

impl ResilienceBreakdown {
    pub fn rho_for(&self, k: Indicator) -> Option<f64> {
        self.indicators.iter().find(|b| b.indicator == k).map(|b| b.rho)
    }
}

/// Score every indicator in `disrupted` against its baseline and aggregate.
pub fn resilience_breakdown(
    disrupted: &BTreeMap<Indicator, Vec<f64>>,
    baselines: &BTreeMap<Indicator, Baseline>,
    t_d: usize,
) -> Result<ResilienceBreakdown, MetricsError> {
    let mut indicators = Vec::new();
    for (&k, series) in disrupted {
        let baseline = baselines.get(&k).ok_or(MetricsError::MissingBaseline(k))?;
        let ratio = ratio_series(series, baseline)?;
        let p = failure_recovery_profiles(&ratio.values, t_d)?;
        let rho = indicator_resilience(t_d, p.t_f, p.t_r, p.fp, p.rp)?;
        indicators.push(IndicatorBreakdown {
            indicator: k,
            t_f: p.t_f,
            t_r: p.t_r,
            fp: p.fp,
            rp: p.rp,
            rho,
            epsilon_substitutions: ratio.epsilon_ticks.len(),
        });
    }
    let rhos: Vec<f64> = indicators.iter().map(|b| b.rho).collect();
    Ok(ResilienceBreakdown {
        t_d,
        rho: aggregate_resilience(&rhos)?,
        k: indicators.len(),
        indicators,
    })
}
