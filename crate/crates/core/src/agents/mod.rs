//! Policy contract shared by scripted bots, language-model agents and human
//! input bridges, plus the simple policies.

mod harvester;
mod human;
pub mod pathfind;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use harvester::{BotState, GreedyBot, SustainableHarvester};
pub use human::{HumanInput, HumanInputHandle};

use crate::comm::{Category, Message};
use crate::llm::{LlmAgent, LlmError};
use crate::scenario::ScenarioSpec;
use crate::world::{Action, AgentId, ObservationWindow, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Greedy disruptive harvester.
    Bot,
    /// Harvester that never takes a tree's last apple.
    Sustainable,
    Llm,
    Human,
    Noop,
    Random,
    /// Replays a fixed action/message script.
    Scripted,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Bot => "bot",
            AgentKind::Sustainable => "sustainable",
            AgentKind::Llm => "llm",
            AgentKind::Human => "human",
            AgentKind::Noop => "noop",
            AgentKind::Random => "random",
            AgentKind::Scripted => "scripted",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bot" => Ok(AgentKind::Bot),
            "sustainable" => Ok(AgentKind::Sustainable),
            "llm" => Ok(AgentKind::Llm),
            "human" => Ok(AgentKind::Human),
            "noop" => Ok(AgentKind::Noop),
            "random" => Ok(AgentKind::Random),
            "scripted" => Ok(AgentKind::Scripted),
            other => Err(format!("unknown agent kind `{other}`")),
        }
    }
}

/// Everything a policy may look at when choosing its move for one tick.
pub struct DecisionContext<'a> {
    pub agent: AgentId,
    pub tick: u64,
    pub horizon: u64,
    pub scenario: &'a ScenarioSpec,
    pub observation: &'a ObservationWindow,
    /// Full state; only full-information policies (the bot) should read it.
    pub world: &'a WorldState,
    pub visible: &'a [Message],
    pub comm_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyDecision {
    pub action: Action,
    pub message: Option<(Category, String)>,
    /// Recoverable problem to record in the episode log.
    pub incident: Option<String>,
}

impl PolicyDecision {
    pub fn act(action: Action) -> Self {
        Self {
            action,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Other(String),
}

/// Out-of-band information delivered to policies by the episode loop.
#[derive(Debug, Clone, Copy)]
pub enum Notice<'a> {
    EpisodeStart {
        agent: AgentId,
        episode_id: &'a str,
        scenario: &'a ScenarioSpec,
    },
    /// An accepted broadcast message; `own` is true for the sender.
    Message {
        message: &'a Message,
        own: bool,
    },
    EpisodeEnd {
        tick: u64,
        score: u32,
    },
}

pub trait Policy: Send {
    fn kind(&self) -> AgentKind;

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError>;

    fn notify(&mut self, _notice: &Notice<'_>) {}

    /// Access to the language-model agent behind this policy, if any.
    fn as_llm(&mut self) -> Option<&mut LlmAgent> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn kind(&self) -> AgentKind {
        (**self).kind()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        (**self).decide(ctx)
    }

    fn notify(&mut self, notice: &Notice<'_>) {
        (**self).notify(notice)
    }

    fn as_llm(&mut self) -> Option<&mut LlmAgent> {
        (**self).as_llm()
    }
}

#[derive(Debug, Default, Clone)]
pub struct NoopPolicy;

impl Policy for NoopPolicy {
    fn kind(&self) -> AgentKind {
        AgentKind::Noop
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision::act(Action::Noop))
    }
}

/// Uniform over all primitives, including attack.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let a = *Action::ALL.choose(&mut self.rng).expect("non-empty");
        Ok(PolicyDecision::act(a))
    }
}

/// Plays `actions[tick]` (noop past the end) and sends scripted messages at
/// their ticks.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    pub actions: Vec<Action>,
    pub messages: BTreeMap<u64, (Category, String)>,
}

impl Policy for ScriptedPolicy {
    fn kind(&self) -> AgentKind {
        AgentKind::Scripted
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let action = self.actions.get(ctx.tick as usize).copied().unwrap_or_default();
        let message = if ctx.comm_enabled {
            self.messages.get(&ctx.tick).cloned()
        } else {
            None
        };
        Ok(PolicyDecision {
            action,
            message,
            incident: None,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn noop_is_constant() {
        let w = default_world(2);
        let mut p = NoopPolicy;
        for comm in [false, true] {
            let d = with_ctx(&w, AgentId(0), comm, |c| p.decide(c).unwrap());
            assert_eq!(d, PolicyDecision::act(Action::Noop));
        }
    }

    #[test]
    fn random_is_seeded() {
        let w = default_world(1);
        let run = |seed| {
            let mut p = RandomPolicy::new(seed);
            (0..50)
                .map(|_| with_ctx(&w, AgentId(0), false, |c| p.decide(c).unwrap().action))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn scripted_respects_channel_gate() {
        let w = default_world(1);
        let mut p = ScriptedPolicy {
            actions: vec![Action::TurnLeft],
            messages: [(0, (Category::Q, "hello".to_string()))].into(),
        };
        let on = with_ctx(&w, AgentId(0), true, |c| p.decide(c).unwrap());
        assert_eq!(on.action, Action::TurnLeft);
        assert!(on.message.is_some());
        let off = with_ctx(&w, AgentId(0), false, |c| p.decide(c).unwrap());
        assert!(off.message.is_none());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            AgentKind::Bot,
            AgentKind::Sustainable,
            AgentKind::Llm,
            AgentKind::Human,
            AgentKind::Noop,
            AgentKind::Random,
            AgentKind::Scripted,
        ] {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!("rl".parse::<AgentKind>().is_err());
    }
}
