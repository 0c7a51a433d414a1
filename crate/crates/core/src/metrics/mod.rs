//! Collective-welfare indicators and resilience scoring.
//!
//! Pipeline: episode log → per-tick [`EpisodeIndicators`] → group mean
//! trajectories → baselines → [`ResilienceBreakdown`] per scenario → heatmap.

mod baseline;
mod heatmap;
mod indicators;
mod resilience;

use thiserror::Error;

pub use baseline::{group_mean_trajectory, median, shared_baseline, temporal_median, BaselineProvenance, BaselineSet};
pub use heatmap::heatmap_csv;
pub use indicators::{
    equality, gini, satiation, EpisodeIndicators, Indicator, IndicatorSeries, IndicatorTracker, IndicatorValues,
};
pub use resilience::{
    aggregate_resilience, failure_recovery_profiles, indicator_resilience, ratio_series, resilience_breakdown,
    Baseline, IndicatorBreakdown, Profile, RatioSeries, ResilienceBreakdown, EPSILON,
};

use crate::agents::AgentKind;
use crate::event::Event;
use crate::harness::log::EpisodeLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("equality needs at least two consumers, got {0}")]
    TooFewConsumers(usize),
    #[error("satiation window must be at least 1")]
    BadWindow,
    #[error("series length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no input values")]
    Empty,
    #[error("disruption tick {t_d} outside series of length {len}")]
    DisruptionOutOfRange { t_d: usize, len: usize },
    #[error("need t_d <= t_f <= t_r, got {t_d}, {t_f}, {t_r}")]
    BadTimes { t_d: usize, t_f: usize, t_r: usize },
    #[error("no baseline for indicator {0}")]
    MissingBaseline(Indicator),
    #[error("episode log is invalid: {0}")]
    InvalidEpisode(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorOptions {
    pub satiation_window: u64,
    pub include_bot: bool,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        Self {
            satiation_window: 50,
            include_bot: true,
        }
    }
}

/// Consumer mask for a slot list.
pub fn consumer_mask(kinds: &[AgentKind], include_bot: bool) -> Vec<bool> {
    kinds.iter().map(|k| include_bot || *k != AgentKind::Bot).collect()
}

/// Per-tick indicators reconstructed from a complete episode log.
pub fn episode_indicators(log: &EpisodeLog, opts: &IndicatorOptions) -> Result<EpisodeIndicators, MetricsError> {
    let header = &log.header;
    match &log.summary {
        Some(s) if s.valid => {}
        Some(s) => {
            return Err(MetricsError::InvalidEpisode(
                s.abort_reason.clone().unwrap_or_else(|| "flagged invalid".into()),
            ))
        }
        None => return Err(MetricsError::InvalidEpisode("missing episode_end record".into())),
    }
    let horizon = header.scenario.horizon as usize;
    let kinds: Vec<AgentKind> = header.agents.iter().map(|a| a.kind).collect();
    let mut tracker = IndicatorTracker::new(
        header.world.capacity(),
        header.world.trees.len(),
        consumer_mask(&kinds, opts.include_bot),
        opts.satiation_window,
    )?;
    let mut ticks = Vec::with_capacity(horizon);
    for rec in &log.records {
        if matches!(rec.event, Event::EpisodeEnd(_)) {
            break;
        }
        while (ticks.len() as u64) < rec.tick {
            ticks.push(tracker.values_at(ticks.len() as u64));
        }
        tracker.apply(rec.tick, &rec.event);
    }
    let last_tick = log
        .records
        .iter()
        .filter(|r| matches!(r.event, Event::Actions { .. }))
        .map(|r| r.tick + 1)
        .max()
        .unwrap_or(0) as usize;
    if last_tick != horizon {
        return Err(MetricsError::LengthMismatch {
            expected: horizon,
            got: last_tick,
        });
    }
    while ticks.len() < horizon {
        ticks.push(tracker.values_at(ticks.len() as u64));
    }
    Ok(EpisodeIndicators {
        source: header.episode_id.clone(),
        ticks,
    })
}
