use serde::{Deserialize, Serialize};

use super::{AgentId, Pos, WorldError, WorldState};

/// What occupies a cell, as seen by one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    /// Walls and everything outside the map.
    Wall,
    Empty,
    /// Cell of a living tree without an apple.
    Grass,
    Apple,
    DeadTree,
    SelfAgent,
    Agent(AgentId),
}

/// Egocentric partial view. Row 0 is farthest ahead; the observer sits at the
/// centre of the bottom row facing up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub agent_id: AgentId,
    pub tick: u64,
    pub own_score: u32,
    pub frozen: bool,
    pub window: Vec<Vec<Entity>>,
}

impl ObservationWindow {
    pub fn height(&self) -> usize {
        self.window.len()
    }

    pub fn width(&self) -> usize {
        self.window.first().map_or(0, Vec::len)
    }

    /// Window coordinates of the observer.
    pub fn self_cell(&self) -> (usize, usize) {
        (self.height().saturating_sub(1), self.width() / 2)
    }
}

impl WorldState {
    pub fn entity_at(&self, p: Pos, viewer: AgentId) -> Entity {
        if !self.map.walkable(p) {
            return Entity::Wall;
        }
        if let Some(a) = self.agent_at(p) {
            return if a == viewer {
                Entity::SelfAgent
            } else {
                Entity::Agent(a)
            };
        }
        match self.map.tree_index_at(p) {
            Some(ti) => {
                let tree = &self.map.tree_zones[ti];
                if !tree.alive {
                    Entity::DeadTree
                } else if tree.apples.contains(&p) {
                    Entity::Apple
                } else {
                    Entity::Grass
                }
            }
            None => Entity::Empty,
        }
    }

    /// World cell shown at window position `(wr, wc)` for `agent`.
    pub fn window_to_world(&self, agent: AgentId, wr: usize, wc: usize) -> Option<Pos> {
        let body = self.agent(agent)?;
        let h = self.params.view_height as i32;
        let w = self.params.view_width as i32;
        let forward = h - 1 - wr as i32;
        let right = wc as i32 - w / 2;
        Some(
            body.position
                .step(body.orientation, forward)
                .step(body.orientation.turn_right(), right),
        )
    }

    pub fn observe(&self, agent: AgentId) -> Result<ObservationWindow, WorldError> {
        let body = self.agent(agent).ok_or(WorldError::UnknownAgent(agent))?;
        let h = self.params.view_height as usize;
        let w = self.params.view_width as usize;
        if body.is_frozen() {
            return Ok(ObservationWindow {
                agent_id: agent,
                tick: self.tick,
                own_score: body.consumed_total,
                frozen: true,
                window: vec![vec![Entity::Empty; w]; h],
            });
        }
        let window = (0..h)
            .map(|wr| {
                (0..w)
                    .map(|wc| {
                        let p = self.window_to_world(agent, wr, wc).expect("agent exists");
                        self.entity_at(p, agent)
                    })
                    .collect()
            })
            .collect();
        Ok(ObservationWindow {
            agent_id: agent,
            tick: self.tick,
            own_score: body.consumed_total,
            frozen: false,
            window,
        })
    }
}
