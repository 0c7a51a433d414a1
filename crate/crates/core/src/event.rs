//! Episode event records, serialized one per line as JSON.

use serde::{Deserialize, Serialize};

use crate::comm::Message;
use crate::harness::log::{EpisodeHeader, EpisodeSummary};
use crate::scenario::DisruptionOutcome;
use crate::world::{Action, AgentId, Pos, TreeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathCause {
    Harvest,
    Disruption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    PolicyTimeout,
    LlmFallback,
    MessageRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAction {
    pub agent: AgentId,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    EpisodeStart(Box<EpisodeHeader>),
    /// Inputs applied at this tick, in agent id order. Frozen agents are absent.
    Actions {
        actions: Vec<AgentAction>,
    },
    AppleEaten {
        agent: AgentId,
        tree: TreeId,
        cell: Pos,
    },
    AppleRegrown {
        tree: TreeId,
        cell: Pos,
    },
    AppleRemovedByDisruption {
        tree: TreeId,
        cell: Pos,
    },
    TreeDied {
        tree: TreeId,
        cause: DeathCause,
    },
    AgentFrozen {
        agent: AgentId,
        by: AgentId,
        until: u64,
    },
    /// `from` is `None` when a frozen agent respawns.
    AgentMoved {
        agent: AgentId,
        from: Option<Pos>,
        to: Pos,
    },
    MessageSent(Message),
    DisruptionEvent(DisruptionOutcome),
    Incident {
        agent: AgentId,
        reason: IncidentKind,
        detail: String,
    },
    EpisodeEnd(Box<EpisodeSummary>),
}

impl Event {
    /// True for events produced by the world dynamics, which replay can
    /// regenerate from the recorded inputs.
    pub fn is_simulated(&self) -> bool {
        matches!(
            self,
            Event::AppleEaten { .. }
                | Event::AppleRegrown { .. }
                | Event::AppleRemovedByDisruption { .. }
                | Event::TreeDied { .. }
                | Event::AgentFrozen { .. }
                | Event::AgentMoved { .. }
                | Event::DisruptionEvent(_)
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Event::EpisodeStart(_) => "episode_start",
            Event::Actions { .. } => "actions",
            Event::AppleEaten { .. } => "apple_eaten",
            Event::AppleRegrown { .. } => "apple_regrown",
            Event::AppleRemovedByDisruption { .. } => "apple_removed_by_disruption",
            Event::TreeDied { .. } => "tree_died",
            Event::AgentFrozen { .. } => "agent_frozen",
            Event::AgentMoved { .. } => "agent_moved",
            Event::MessageSent(_) => "message_sent",
            Event::DisruptionEvent(_) => "disruption_event",
            Event::Incident { .. } => "incident",
            Event::EpisodeEnd(_) => "episode_end",
        }
    }
}

/// One line of an episode log. Totally ordered by `(tick, seq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub seq: u32,
    #[serde(flatten)]
    pub event: Event,
}
