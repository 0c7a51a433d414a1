use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use super::{AgentKind, DecisionContext, Policy, PolicyDecision, PolicyError};
use crate::comm::Category;
use crate::world::Action;

#[derive(Debug, Default)]
struct Pending {
    action: Option<Action>,
    messages: VecDeque<(Category, String)>,
}

/// Producer side of a [`HumanInput`] policy, held by the network layer.
#[derive(Debug, Clone, Default)]
pub struct HumanInputHandle {
    pending: Arc<Mutex<Pending>>,
}

impl HumanInputHandle {
    /// Queue a primitive for the next tick; a later key replaces an earlier one.
    pub fn press(&self, action: Action) {
        self.pending.lock().expect("input lock").action = Some(action);
    }

    pub fn say(&self, category: Category, text: String) {
        self.pending
            .lock()
            .expect("input lock")
            .messages
            .push_back((category, text));
    }

    pub fn clear(&self) {
        let mut p = self.pending.lock().expect("input lock");
        p.action = None;
        p.messages.clear();
    }
}

/// Per-tick sampling of asynchronous human input. No input means noop.
#[derive(Debug, Clone, Default)]
pub struct HumanInput {
    handle: HumanInputHandle,
}

impl HumanInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handle(&self) -> HumanInputHandle {
        self.handle.clone()
    }
}

impl Policy for HumanInput {
    fn kind(&self) -> AgentKind {
        AgentKind::Human
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let mut p = self.handle.pending.lock().expect("input lock");
        let action = p.action.take().unwrap_or_default();
        let message = if ctx.comm_enabled {
            p.messages.pop_front()
        } else {
            p.messages.clear();
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
    use super::*;
    use crate::agents::test_support::{default_world, with_ctx};
    use crate::world::AgentId;

    #[test]
    fn latest_key_wins_then_noop() {
        let w = default_world(1);
        let mut h = HumanInput::new();
        let handle = h.handle();
        handle.press(Action::TurnLeft);
        handle.press(Action::Attack);
        let d = with_ctx(&w, AgentId(0), true, |c| h.decide(c).unwrap());
        assert_eq!(d.action, Action::Attack);
        let d = with_ctx(&w, AgentId(0), true, |c| h.decide(c).unwrap());
        assert_eq!(d.action, Action::Noop);
    }

    #[test]
    fn one_message_per_tick() {
        let w = default_world(1);
        let mut h = HumanInput::new();
        let handle = h.handle();
        handle.say(Category::Q, "a".into());
        handle.say(Category::T, "b".into());
        let first = with_ctx(&w, AgentId(0), true, |c| h.decide(c).unwrap());
        assert_eq!(first.message, Some((Category::Q, "a".into())));
        let second = with_ctx(&w, AgentId(0), true, |c| h.decide(c).unwrap());
        assert_eq!(second.message, Some((Category::T, "b".into())));
        handle.say(Category::W, "c".into());
        let off = with_ctx(&w, AgentId(0), false, |c| h.decide(c).unwrap());
        assert!(off.message.is_none());
    }
}
