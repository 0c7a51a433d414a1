use std::fmt;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::event::Event;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Apples,
    Trees,
    Equality,
    Satiation,
}

impl Indicator {
    pub const ALL: [Indicator; 4] = [
        Indicator::Apples,
        Indicator::Trees,
        Indicator::Equality,
        Indicator::Satiation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Apples => "apples",
            Indicator::Trees => "trees",
            Indicator::Equality => "equality",
            Indicator::Satiation => "satiation",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub indicator: Indicator,
    /// Episode id, or a tag such as `mean(E3)` for derived series.
    pub source: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorValues {
    pub apples: f64,
    pub trees: f64,
    pub equality: f64,
    pub satiation: f64,
}

impl IndicatorValues {
    pub fn get(&self, k: Indicator) -> f64 {
        match k {
            Indicator::Apples => self.apples,
            Indicator::Trees => self.trees,
            Indicator::Equality => self.equality,
            Indicator::Satiation => self.satiation,
        }
    }
}

/// Gini coefficient of a non-negative vector. All-zero input has Gini 0.
pub fn gini(x: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len();
    if n < 2 {
        return Err(MetricsError::TooFewConsumers(n));
    }
    let total: f64 = x.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Σ_i Σ_j |x_i − x_j| = 2 Σ_i (2i − n − 1) x_(i) for 1-based ranks i.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * v)
        .sum();
    Ok(weighted / (n as f64 * total))
}

/// `1 − Gini`, defined as 1 when nothing has been consumed.
pub fn equality(x: &[f64]) -> Result<f64, MetricsError> {
    Ok(1.0 - gini(x)?)
}

/// `max(0, 1 − τ/W)`.
pub fn satiation(tau: u64, window: u64) -> f64 {
    (1.0 - tau as f64 / window.max(1) as f64).max(0.0)
}

/// Folds episode events into per-tick indicator values.
#[derive(Debug, Clone)]
pub struct IndicatorTracker {
    apples: i64,
    trees: i64,
    consumption: Vec<f64>,
    last_access: Vec<u64>,
    included: Vec<bool>,
    window: u64,
}

impl IndicatorTracker {
    /// `included[i]` selects agent `i` as a consumer for equality and
    /// satiation.
    pub fn new(apples: usize, trees: usize, included: Vec<bool>, window: u64) -> Result<Self, MetricsError> {
        let consumers = included.iter().filter(|b| **b).count();
        if consumers < 2 {
            return Err(MetricsError::TooFewConsumers(consumers));
        }
        if window == 0 {
            return Err(MetricsError::BadWindow);
        }
        Ok(Self {
            apples: apples as i64,
            trees: trees as i64,
            consumption: vec![0.0; included.len()],
            last_access: vec![0; included.len()],
            included,
            window,
        })
    }

    pub fn apply(&mut self, tick: u64, event: &Event) {
        match event {
            Event::AppleEaten { agent, .. } => {
                self.apples -= 1;
                if let Some(c) = self.consumption.get_mut(agent.0 as usize) {
                    *c += 1.0;
                    self.last_access[agent.0 as usize] = tick;
                }
            }
            Event::AppleRemovedByDisruption { .. } => self.apples -= 1,
            Event::AppleRegrown { .. } => self.apples += 1,
            Event::TreeDied { .. } => self.trees -= 1,
            _ => {}
        }
    }

    /// Values after all events of `tick` have been applied.
    pub fn values_at(&self, tick: u64) -> IndicatorValues {
        let consumers: Vec<f64> = self
            .consumption
            .iter()
            .zip(&self.included)
            .filter(|(_, inc)| **inc)
            .map(|(c, _)| *c)
            .collect();
        let sat: Vec<f64> = self
            .last_access
            .iter()
            .zip(&self.included)
            .filter(|(_, inc)| **inc)
            .map(|(t, _)| satiation(tick - (*t).min(tick), self.window))
            .collect();
        IndicatorValues {
            apples: self.apples as f64,
            trees: self.trees as f64,
            equality: equality(&consumers).expect("tracker has at least two consumers"),
            satiation: sat.iter().sum::<f64>() / sat.len() as f64,
        }
    }
}

/// Four aligned series, one value per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeIndicators {
    pub source: String,
    pub ticks: Vec<IndicatorValues>,
}

impl EpisodeIndicators {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn series(&self, k: Indicator) -> IndicatorSeries {
        IndicatorSeries {
            indicator: k,
            source: self.source.clone(),
            values: self.ticks.iter().map(|v| v.get(k)).collect(),
        }
    }

    pub fn values(&self, k: Indicator) -> Vec<f64> {
        self.ticks.iter().map(|v| v.get(k)).collect()
    }
}
