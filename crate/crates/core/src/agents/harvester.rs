use std::collections::BTreeSet;

use super::pathfind::{distance_at, distance_field, shortest_path};
use super::{AgentKind, DecisionContext, Policy, PolicyDecision, PolicyError};
use crate::world::{Action, AgentId, Pos, WorldState};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BotState {
    pub current_target: Option<Pos>,
    /// Remaining cells to `current_target`, excluding the current position.
    pub path: Vec<Pos>,
}

/// Full-state harvester: walks a shortest path to the nearest apple, ties
/// broken by lowest tree id then row-major cell. When nothing is reachable it
/// patrols tree zones in id order.
#[derive(Debug, Clone)]
struct Harvester {
    spare_last_apple: bool,
    state: BotState,
    patrol: usize,
}

impl Harvester {
    fn new(spare_last_apple: bool) -> Self {
        Self {
            spare_last_apple,
            state: BotState::default(),
            patrol: 0,
        }
    }

    fn choose(&mut self, world: &WorldState, me: AgentId) -> Action {
        let Some(body) = world.agent(me).filter(|b| !b.is_frozen()) else {
            return Action::Noop;
        };
        let from = body.position;
        let occupied: BTreeSet<Pos> = world
            .agents
            .iter()
            .filter(|a| a.id != me && !a.is_frozen())
            .map(|a| a.position)
            .collect();
        let reserved: BTreeSet<Pos> = if self.spare_last_apple {
            world
                .map
                .tree_zones
                .iter()
                .filter(|t| t.alive && t.apples.len() == 1)
                .flat_map(|t| t.apples.iter().copied())
                .collect()
        } else {
            BTreeSet::new()
        };
        let blocked = |p: Pos| occupied.contains(&p) || reserved.contains(&p);
        let field = distance_field(&world.map, from, blocked);

        let mut best: Option<(u32, Pos)> = None;
        for tree in &world.map.tree_zones {
            for &cell in &tree.apples {
                if reserved.contains(&cell) {
                    continue;
                }
                if let Some(d) = distance_at(&world.map, &field, cell) {
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, cell));
                    }
                }
            }
        }

        let target = match best {
            Some((_, cell)) => Some(cell),
            None => self.patrol_target(world, from, &field),
        };
        self.state.current_target = target;
        self.state.path = target
            .and_then(|t| shortest_path(&world.map, from, t, blocked))
            .unwrap_or_default();
        match self.state.path.first() {
            Some(&next) => {
                let heading = crate::world::Direction::ALL
                    .into_iter()
                    .find(|d| from.step(*d, 1) == next)
                    .expect("path cells are adjacent");
                Action::toward(body.orientation, heading)
            }
            // Nothing reachable: keep scanning rather than freezing in place.
            None => Action::TurnRight,
        }
    }

    /// Nearest reachable cell of the current patrol zone, advancing the
    /// patrol once the agent stands in the zone or the zone is unreachable.
    fn patrol_target(&mut self, world: &WorldState, from: Pos, field: &[Option<u32>]) -> Option<Pos> {
        let zones = &world.map.tree_zones;
        if zones.is_empty() {
            return None;
        }
        for _ in 0..zones.len() {
            let zone = &zones[self.patrol % zones.len()];
            if zone.cells.contains(&from) {
                self.patrol += 1;
                continue;
            }
            let nearest = zone
                .cells
                .iter()
                .filter_map(|&c| distance_at(&world.map, field, c).map(|d| (d, c)))
                .min();
            match nearest {
                Some((_, c)) => return Some(c),
                None => self.patrol += 1,
            }
        }
        None
    }
}

/// The disruptive bot: eats everything, including a tree's last apple, and
/// never speaks.
#[derive(Debug, Clone)]
pub struct GreedyBot {
    inner: Harvester,
}

impl Default for GreedyBot {
    fn default() -> Self {
        Self {
            inner: Harvester::new(false),
        }
    }
}

impl GreedyBot {
    pub fn state(&self) -> &BotState {
        &self.inner.state
    }

    pub fn choose(&mut self, world: &WorldState, me: AgentId) -> Action {
        self.inner.choose(world, me)
    }
}

impl Policy for GreedyBot {
    fn kind(&self) -> AgentKind {
        AgentKind::Bot
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision::act(self.choose(ctx.world, ctx.agent)))
    }
}

/// Same search as [`GreedyBot`] but cells holding the last apple of a tree are
/// neither targeted nor walked over.
#[derive(Debug, Clone)]
pub struct SustainableHarvester {
    inner: Harvester,
}

impl Default for SustainableHarvester {
    fn default() -> Self {
        Self {
            inner: Harvester::new(true),
        }
    }
}

impl SustainableHarvester {
    pub fn state(&self) -> &BotState {
        &self.inner.state
    }

    pub fn choose(&mut self, world: &WorldState, me: AgentId) -> Action {
        self.inner.choose(world, me)
    }
}

impl Policy for SustainableHarvester {
    fn kind(&self) -> AgentKind {
        AgentKind::Sustainable
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision::act(self.choose(ctx.world, ctx.agent)))
    }
}
