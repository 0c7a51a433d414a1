//! Commons Harvest grid world.
//!
//! A tick resolves in a fixed phase order:
//!
//! 1. attacks (all beams traced against start-of-tick positions),
//! 2. movement, agents processed in rotating priority order,
//! 3. harvest (an agent standing on an apple eats it),
//! 4. death check for trees that lost their last apple this tick,
//! 5. regrowth.
//!
//! Frozen agents whose freeze has expired respawn after regrowth, once the
//! tick counter has advanced. Scenario disruptions run between phases 4 and 5
//! through [`WorldState::step_with`].

mod geometry;
mod map;
mod observe;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{Action, Direction, Pos};
pub use map::{GridMap, TreeConfig, TreeId, TreeZone, WorldConfig};
pub use observe::{Entity, ObservationWindow};

use crate::event::{DeathCause, Event};
use crate::rng::episode_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u8);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "agent {}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown {0}")]
    UnknownAgent(AgentId),
    #[error("{0} is frozen and cannot act")]
    FrozenAgent(AgentId),
    #[error("no action supplied for {0}")]
    MissingAction(AgentId),
    #[error("episode is over (tick {tick} of horizon {horizon})")]
    EpisodeOver { tick: u64, horizon: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBody {
    pub id: AgentId,
    pub spawn: Pos,
    pub spawn_orientation: Direction,
    pub position: Pos,
    pub orientation: Direction,
    /// Set while the agent is off the grid after being hit.
    pub frozen_until: Option<u64>,
    pub consumed_total: u32,
    pub consumption_times: Vec<u64>,
}

impl AgentBody {
    pub fn is_frozen(&self) -> bool {
        self.frozen_until.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub regrowth_rate: f64,
    pub beam_length: u32,
    pub freeze_duration: u64,
    pub view_width: u32,
    pub view_height: u32,
}

pub type ActionSet = BTreeMap<AgentId, Action>;

/// Full simulation state. Cloning yields an independent snapshot.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub map: GridMap,
    pub agents: Vec<AgentBody>,
    pub tick: u64,
    pub horizon: u64,
    pub params: WorldParams,
    rng: ChaCha8Rng,
}

impl PartialEq for WorldState {
    fn eq(&self, other: &Self) -> bool {
        self.map == other.map
            && self.agents == other.agents
            && self.tick == other.tick
            && self.horizon == other.horizon
            && self.params == other.params
            && self.rng == other.rng
    }
}

/// Serializable digest of the dynamic parts of a [`WorldState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub tick: u64,
    pub trees: Vec<TreeSnapshot>,
    pub agents: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub id: TreeId,
    pub alive: bool,
    pub apples: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub position: Pos,
    pub orientation: Direction,
    pub frozen_until: Option<u64>,
    pub consumed_total: u32,
}

fn facing_inward(p: Pos, width: i32, height: i32) -> Direction {
    let dr = (height - 1) as f64 / 2.0 - p.row as f64;
    let dc = (width - 1) as f64 / 2.0 - p.col as f64;
    if dr.abs() >= dc.abs() {
        if dr < 0.0 {
            Direction::N
        } else {
            Direction::S
        }
    } else if dc < 0.0 {
        Direction::W
    } else {
        Direction::E
    }
}

impl WorldState {
    /// Build a fully stocked world with `agent_count` agents placed on the
    /// first spawn cells, seeded from `config.seed`.
    pub fn new(config: &WorldConfig, agent_count: usize) -> Result<Self, WorldError> {
        config.validate()?;
        if agent_count > config.spawns.len() {
            return Err(WorldError::Invalid {
                field: "spawns".into(),
                reason: format!("{agent_count} agents need at least as many spawns"),
            });
        }
        if agent_count > 10 {
            return Err(WorldError::Invalid {
                field: "agents".into(),
                reason: "at most 10 agents are supported".into(),
            });
        }
        let map = GridMap::from_config(config);
        let agents = config
            .spawns
            .iter()
            .take(agent_count)
            .enumerate()
            .map(|(i, &spawn)| {
                let o = facing_inward(spawn, config.width, config.height);
                AgentBody {
                    id: AgentId(i as u8),
                    spawn,
                    spawn_orientation: o,
                    position: spawn,
                    orientation: o,
                    frozen_until: None,
                    consumed_total: 0,
                    consumption_times: Vec::new(),
                }
            })
            .collect();
        Ok(Self {
            map,
            agents,
            tick: 0,
            horizon: config.horizon,
            params: WorldParams {
                regrowth_rate: config.regrowth_rate,
                beam_length: config.beam_length,
                freeze_duration: config.freeze_duration,
                view_width: config.view_width,
                view_height: config.view_height,
            },
            rng: episode_rng(config.seed),
        })
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentBody> {
        self.agents.get(id.0 as usize).filter(|a| a.id == id)
    }

    pub fn is_over(&self) -> bool {
        self.tick >= self.horizon
    }

    /// Live (non-frozen) agent standing on `p`.
    pub fn agent_at(&self, p: Pos) -> Option<AgentId> {
        self.agents
            .iter()
            .find(|a| !a.is_frozen() && a.position == p)
            .map(|a| a.id)
    }

    /// Agent indices in this tick's priority order: the head rotates with the
    /// tick so no agent is systematically favoured.
    pub fn priority_order(&self) -> Vec<usize> {
        let n = self.agents.len();
        if n == 0 {
            return Vec::new();
        }
        let head = (self.tick % n as u64) as usize;
        (0..n).map(|i| (head + i) % n).collect()
    }

    /// First live agent hit by `attacker`'s beam, if any.
    pub fn resolve_attack(&self, attacker: AgentId) -> Option<AgentId> {
        let body = self.agent(attacker)?;
        if body.is_frozen() {
            return None;
        }
        for k in 1..=self.params.beam_length as i32 {
            let p = body.position.step(body.orientation, k);
            if !self.map.walkable(p) {
                return None;
            }
            if let Some(hit) = self.agent_at(p) {
                return Some(hit);
            }
        }
        None
    }

    pub fn step(&mut self, actions: &ActionSet) -> Result<Vec<Event>, WorldError> {
        self.step_with(actions, |_, _| {})
    }

    /// Advance one tick. `between` runs after the tree death check and
    /// before regrowth.
    pub fn step_with<F>(&mut self, actions: &ActionSet, between: F) -> Result<Vec<Event>, WorldError>
    where
        F: FnOnce(&mut WorldState, &mut Vec<Event>),
    {
        if self.is_over() {
            return Err(WorldError::EpisodeOver {
                tick: self.tick,
                horizon: self.horizon,
            });
        }
        for &id in actions.keys() {
            let body = self.agent(id).ok_or(WorldError::UnknownAgent(id))?;
            if body.is_frozen() {
                return Err(WorldError::FrozenAgent(id));
            }
        }
        if let Some(a) = self
            .agents
            .iter()
            .find(|a| !a.is_frozen() && !actions.contains_key(&a.id))
        {
            return Err(WorldError::MissingAction(a.id));
        }

        let order = self.priority_order();
        let mut events = Vec::new();
        self.attack_phase(actions, &order, &mut events);
        self.movement_phase(actions, &order, &mut events);
        let harvested = self.harvest_phase(&order, &mut events);
        for ti in harvested {
            self.kill_if_empty(ti, DeathCause::Harvest, &mut events);
        }
        between(self, &mut events);
        self.regrow(&mut events);
        self.tick += 1;
        self.respawn_due(&mut events);
        Ok(events)
    }

    fn attack_phase(&mut self, actions: &ActionSet, order: &[usize], events: &mut Vec<Event>) {
        let hits: Vec<(AgentId, AgentId)> = order
            .iter()
            .map(|&i| self.agents[i].id)
            .filter(|id| actions.get(id) == Some(&Action::Attack))
            .filter_map(|id| self.resolve_attack(id).map(|t| (id, t)))
            .collect();
        for (by, target) in hits {
            let until = self.tick + self.params.freeze_duration;
            let body = &mut self.agents[target.0 as usize];
            if body.is_frozen() {
                continue;
            }
            body.frozen_until = Some(until);
            events.push(Event::AgentFrozen {
                agent: target,
                by,
                until,
            });
        }
    }

    fn movement_phase(&mut self, actions: &ActionSet, order: &[usize], events: &mut Vec<Event>) {
        for &i in order {
            if self.agents[i].is_frozen() {
                continue;
            }
            let id = self.agents[i].id;
            let action = actions.get(&id).copied().unwrap_or_default();
            match action {
                Action::TurnLeft => self.agents[i].orientation = self.agents[i].orientation.turn_left(),
                Action::TurnRight => self.agents[i].orientation = self.agents[i].orientation.turn_right(),
                _ => {
                    let Some(heading) = action.movement(self.agents[i].orientation) else {
                        continue;
                    };
                    let from = self.agents[i].position;
                    let to = from.step(heading, 1);
                    if self.map.walkable(to) && self.agent_at(to).is_none() {
                        self.agents[i].position = to;
                        events.push(Event::AgentMoved {
                            agent: id,
                            from: Some(from),
                            to,
                        });
                    }
                }
            }
        }
    }

    /// Returns indices of trees that had an apple eaten.
    fn harvest_phase(&mut self, order: &[usize], events: &mut Vec<Event>) -> BTreeSet<usize> {
        let mut touched = BTreeSet::new();
        for &i in order {
            let body = &self.agents[i];
            if body.is_frozen() {
                continue;
            }
            let p = body.position;
            let Some(ti) = self.map.tree_index_at(p) else {
                continue;
            };
            let tree = &mut self.map.tree_zones[ti];
            if tree.apples.remove(&p) {
                let body = &mut self.agents[i];
                body.consumed_total += 1;
                body.consumption_times.push(self.tick);
                touched.insert(ti);
                events.push(Event::AppleEaten {
                    agent: body.id,
                    tree: tree.id,
                    cell: p,
                });
            }
        }
        touched
    }

    pub(crate) fn kill_if_empty(&mut self, tree_index: usize, cause: DeathCause, events: &mut Vec<Event>) {
        let tree = &mut self.map.tree_zones[tree_index];
        if tree.alive && tree.apples.is_empty() {
            tree.alive = false;
            events.push(Event::TreeDied { tree: tree.id, cause });
        }
    }

    /// Each empty cell of an alive tree gains an apple with probability
    /// `regrowth_rate * n`, `n` being the tree's apple count at the start of
    /// the phase. Draw order: tree id, then row-major cell. Cells under a live
    /// agent are skipped without drawing.
    pub fn regrow(&mut self, events: &mut Vec<Event>) {
        let rate = self.params.regrowth_rate;
        let occupied: BTreeSet<Pos> = self
            .agents
            .iter()
            .filter(|a| !a.is_frozen())
            .map(|a| a.position)
            .collect();
        for tree in self.map.tree_zones.iter_mut().filter(|t| t.alive) {
            let p = (rate * tree.apples.len() as f64).min(1.0);
            for &cell in &tree.cells {
                if tree.apples.contains(&cell) || occupied.contains(&cell) {
                    continue;
                }
                let draw: f64 = self.rng.gen();
                if draw < p {
                    tree.apples.insert(cell);
                    events.push(Event::AppleRegrown { tree: tree.id, cell });
                }
            }
        }
    }

    fn respawn_due(&mut self, events: &mut Vec<Event>) {
        for i in 0..self.agents.len() {
            let due = self.agents[i].frozen_until.is_some_and(|until| until <= self.tick);
            if !due {
                continue;
            }
            let spawn = self.agents[i].spawn;
            if self.agent_at(spawn).is_some() {
                // Spawn cell blocked; retry next tick.
                continue;
            }
            let body = &mut self.agents[i];
            body.frozen_until = None;
            body.position = spawn;
            body.orientation = body.spawn_orientation;
            events.push(Event::AgentMoved {
                agent: body.id,
                from: None,
                to: spawn,
            });
        }
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            tick: self.tick,
            trees: self
                .map
                .tree_zones
                .iter()
                .map(|t| TreeSnapshot {
                    id: t.id,
                    alive: t.alive,
                    apples: t.apples.iter().copied().collect(),
                })
                .collect(),
            agents: self
                .agents
                .iter()
                .map(|a| AgentSnapshot {
                    id: a.id,
                    position: a.position,
                    orientation: a.orientation,
                    frozen_until: a.frozen_until,
                    consumed_total: a.consumed_total,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests;
