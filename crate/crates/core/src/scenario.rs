//! The nine-scenario disruption curriculum and stochastic apple removal.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{DeathCause, Event};
use crate::rng::derive_seed;
use crate::world::{Pos, TreeId, WorldState};

/// Removal probabilities, indexed by column of the curriculum grid.
pub const REMOVAL_PROBABILITIES: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected E1..E9)")]
    UnknownScenario(String),
    #[error("horizon {horizon} too short for {d} evenly spaced disruptions")]
    HorizonTooShort { horizon: u64, d: u32 },
    #[error("disruption count must be 1..=3, got {0}")]
    BadDisruptionCount(u32),
    #[error("scenario {id}: {reason}")]
    BadOverride { id: String, reason: String },
    #[error("override file: {0}")]
    Parse(String),
}

/// `E1`..`E9`; `E0` denotes an undisrupted baseline episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScenarioId(u8);

impl ScenarioId {
    pub const BASELINE: ScenarioId = ScenarioId(0);

    pub fn new(n: u8) -> Option<Self> {
        (n <= 9).then_some(Self(n))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn is_baseline(self) -> bool {
        self.0 == 0
    }

    pub fn all() -> impl Iterator<Item = ScenarioId> {
        (1..=9).map(ScenarioId)
    }

    /// `d = ceil(n/3)`.
    pub fn disruptions(self) -> u32 {
        (self.0 as u32).div_ceil(3)
    }

    /// `v_s = [0.3, 0.5, 0.7][(n-1) mod 3]`; zero for the baseline.
    pub fn removal_probability(self) -> f64 {
        if self.0 == 0 {
            0.0
        } else {
            REMOVAL_PROBABILITIES[((self.0 - 1) % 3) as usize]
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("baseline") {
            return Ok(Self::BASELINE);
        }
        t.strip_prefix(['E', 'e'])
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(ScenarioId::new)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

impl TryFrom<String> for ScenarioId {
    type Error = ScenarioError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ScenarioId> for String {
    fn from(id: ScenarioId) -> Self {
        id.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub d: u32,
    pub v_s: f64,
    pub event_ticks: Vec<u64>,
    pub horizon: u64,
    pub regrowth_rate: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn baseline(horizon: u64, regrowth_rate: f64, seed: u64) -> Self {
        Self {
            id: ScenarioId::BASELINE,
            d: 0,
            v_s: 0.0,
            event_ticks: Vec::new(),
            horizon,
            regrowth_rate,
            seed,
        }
    }

    pub fn for_id(id: ScenarioId, horizon: u64, regrowth_rate: f64, base_seed: u64) -> Result<Self, ScenarioError> {
        let seed = derive_seed(base_seed, id.index() as u64);
        if id.is_baseline() {
            return Ok(Self::baseline(horizon, regrowth_rate, seed));
        }
        let d = id.disruptions();
        Ok(Self {
            id,
            d,
            v_s: id.removal_probability(),
            event_ticks: schedule_events(d, horizon)?,
            horizon,
            regrowth_rate,
            seed,
        })
    }

    /// First disruption tick, `t_d`.
    pub fn first_event(&self) -> Option<u64> {
        self.event_ticks.first().copied()
    }

    pub fn is_event_tick(&self, tick: u64) -> bool {
        self.event_ticks.binary_search(&tick).is_ok()
    }

    /// Seed for episode `index` of this scenario.
    pub fn episode_seed(&self, index: u32) -> u64 {
        derive_seed(self.seed, 1000 + index as u64)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let bad = |reason: String| ScenarioError::BadOverride {
            id: self.id.to_string(),
            reason,
        };
        if self.event_ticks.len() != self.d as usize {
            return Err(bad(format!(
                "{} event ticks for d = {}",
                self.event_ticks.len(),
                self.d
            )));
        }
        if !(0.0..=1.0).contains(&self.v_s) {
            return Err(bad(format!("v_s = {} outside [0, 1]", self.v_s)));
        }
        let increasing = self.event_ticks.windows(2).all(|w| w[0] < w[1]);
        let inside = self.event_ticks.iter().all(|&t| t > 0 && t < self.horizon);
        if !increasing || !inside {
            return Err(bad("event ticks must be strictly increasing within (0, horizon)".into()));
        }
        Ok(())
    }
}

/// Disruption ticks evenly spaced over the episode: `round(horizon * k / (d+1))`
/// for `k = 1..=d`, rounding halves up.
pub fn schedule_events(d: u32, horizon: u64) -> Result<Vec<u64>, ScenarioError> {
    if !(1..=3).contains(&d) {
        return Err(ScenarioError::BadDisruptionCount(d));
    }
    let parts = d as u64 + 1;
    if horizon < parts {
        return Err(ScenarioError::HorizonTooShort { horizon, d });
    }
    Ok((1..=d as u64)
        .map(|k| (2 * horizon * k + parts) / (2 * parts))
        .collect())
}

/// E1..E9 in curriculum order; the removal probability varies fastest.
pub fn enumerate_curriculum(
    horizon: u64,
    regrowth_rate: f64,
    base_seed: u64,
) -> Result<Vec<ScenarioSpec>, ScenarioError> {
    ScenarioId::all()
        .map(|id| ScenarioSpec::for_id(id, horizon, regrowth_rate, base_seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedApple {
    pub tree: TreeId,
    pub cell: Pos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionOutcome {
    pub tick: u64,
    pub v_s: f64,
    pub removed: Vec<RemovedApple>,
    pub trees_emptied: Vec<TreeId>,
}

/// Remove each apple on every tree holding more than one apple with
/// probability `v_s`. Draws follow tree id, then row-major apple order; trees
/// with at most one apple consume no draws.
///
/// Emits a `disruption_event` record followed by one
/// `apple_removed_by_disruption` per apple and, when `kill_emptied` is set, a
/// `tree_died` for every tree the event emptied.
pub fn apply_disruption(
    world: &mut WorldState,
    v_s: f64,
    kill_emptied: bool,
    events: &mut Vec<Event>,
) -> DisruptionOutcome {
    let mut removed = Vec::new();
    let mut emptied = Vec::new();
    let tick = world.tick;
    for ti in 0..world.map.tree_zones.len() {
        let tree = &world.map.tree_zones[ti];
        if !tree.alive || tree.apples.len() <= 1 {
            continue;
        }
        let id = tree.id;
        let apples: Vec<Pos> = tree.apples.iter().copied().collect();
        let mut gone = Vec::new();
        for cell in apples {
            let draw: f64 = world.rng_mut().gen();
            if draw < v_s {
                gone.push(cell);
            }
        }
        let tree = &mut world.map.tree_zones[ti];
        for cell in &gone {
            tree.apples.remove(cell);
            removed.push(RemovedApple { tree: id, cell: *cell });
        }
        if tree.apples.is_empty() {
            emptied.push(id);
        }
    }
    let outcome = DisruptionOutcome {
        tick,
        v_s,
        removed,
        trees_emptied: emptied,
    };
    events.push(Event::DisruptionEvent(outcome.clone()));
    for r in &outcome.removed {
        events.push(Event::AppleRemovedByDisruption {
            tree: r.tree,
            cell: r.cell,
        });
    }
    if kill_emptied {
        for id in &outcome.trees_emptied {
            let ti = world
                .map
                .tree_zones
                .iter()
                .position(|t| t.id == *id)
                .expect("tree exists");
            world.kill_if_empty(ti, DeathCause::Disruption, events);
        }
    }
    outcome
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverride {
    pub id: ScenarioId,
    pub d: Option<u32>,
    pub v_s: Option<f64>,
    pub event_ticks: Option<Vec<u64>>,
}

/// Per-scenario replacements for `d`, `v_s` and event ticks.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioOverride>,
}

impl ScenarioOverrides {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn apply(&self, specs: &mut [ScenarioSpec]) -> Result<(), ScenarioError> {
        for o in &self.scenarios {
            let Some(spec) = specs.iter_mut().find(|s| s.id == o.id) else {
                return Err(ScenarioError::UnknownScenario(o.id.to_string()));
            };
            if let Some(d) = o.d {
                spec.d = d;
                if o.event_ticks.is_none() {
                    spec.event_ticks = schedule_events(d, spec.horizon)?;
                }
            }
            if let Some(v) = o.v_s {
                spec.v_s = v;
            }
            if let Some(ticks) = &o.event_ticks {
                spec.event_ticks = ticks.clone();
                if o.d.is_none() {
                    spec.d = ticks.len() as u32;
                }
            }
            spec.check()?;
        }
        Ok(())
    }
}
