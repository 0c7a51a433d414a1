use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ascii::serialize_ascii;
use super::grammar::{parse_action, parse_message, parse_yes_no, HighLevelAction, MessageParse};
use super::memory::{MemoryBank, MemoryEntry, MemoryKind, RetrievalWeights};
use super::prompts::{render, PromptSet};
use super::reflection::{reflect, ReflectOptions, ReflectionReport};
use super::summary::{summarize_scene, SelfState};
use super::{ChatMessage, LlmClient, LlmError};
use crate::agents::pathfind::{pathfind, PathStep};
use crate::agents::{AgentKind, DecisionContext, Notice, Policy, PolicyDecision, PolicyError};
use crate::comm::{Category, Message};
use crate::harness::log::EpisodeLog;
use crate::scenario::ScenarioId;
use crate::world::{Action, AgentId, Direction, WorldState};

const ACTION_IMPORTANCE: f64 = 0.3;
const MESSAGE_IMPORTANCE: f64 = 0.5;
const OUTCOME_IMPORTANCE: f64 = 0.4;
const MAX_AGREEMENTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmAgentConfig {
    /// Ticks a high-level plan is followed before the model is asked again.
    pub replan_interval: u64,
    pub memory_top_k: usize,
    pub weights: RetrievalWeights,
    /// Visible messages quoted in prompts.
    pub message_history: usize,
    /// Events quoted in the reflection digest.
    pub digest_events: usize,
    /// Directory overriding the built-in prompt files.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for LlmAgentConfig {
    fn default() -> Self {
        Self {
            replan_interval: 10,
            memory_top_k: 5,
            weights: RetrievalWeights::default(),
            message_history: 5,
            digest_events: 15,
            prompts_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Plan {
    action: HighLevelAction,
    since: u64,
}

/// Category and text of a message the agent chose to send.
type Draft = (Category, String);

/// Generative agent: asks the model for a high-level action every few ticks
/// (or when the current one completes) and compiles it to primitives.
pub struct LlmAgent {
    slot: AgentId,
    client: LlmClient,
    prompts: PromptSet,
    config: LlmAgentConfig,
    memory: MemoryBank,
    scenario: ScenarioId,
    plan: Option<Plan>,
    agreements: Vec<String>,
    deferred: Option<LlmError>,
}

impl std::fmt::Debug for LlmAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmAgent")
            .field("slot", &self.slot)
            .field("scenario", &self.scenario)
            .field("plan", &self.plan)
            .field("memory", &self.memory.len())
            .finish()
    }
}

fn facing_action(facing: Direction, heading: Direction) -> Option<Action> {
    if heading == facing {
        None
    } else if heading == facing.turn_left() {
        Some(Action::TurnLeft)
    } else {
        Some(Action::TurnRight)
    }
}

impl LlmAgent {
    pub fn new(slot: AgentId, client: LlmClient, config: LlmAgentConfig, memory: MemoryBank) -> Result<Self, LlmError> {
        let prompts = match &config.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::builtin(),
        };
        Ok(Self {
            slot,
            client,
            prompts,
            config,
            memory,
            scenario: ScenarioId::BASELINE,
            plan: None,
            agreements: Vec::new(),
            deferred: None,
        })
    }

    pub fn slot(&self) -> AgentId {
        self.slot
    }

    pub fn memory(&self) -> &MemoryBank {
        &self.memory
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn agreements(&self) -> &[String] {
        &self.agreements
    }

    pub fn current_plan(&self) -> Option<HighLevelAction> {
        self.plan.map(|p| p.action)
    }

    fn system(&self) -> String {
        render(&self.prompts.system, &[("agent", &self.slot.0.to_string())])
    }

    fn ask(&self, prompt: String) -> Result<String, LlmError> {
        self.client
            .complete(&[ChatMessage::system(self.system()), ChatMessage::user(prompt)])
            .map(|s| s.trim().to_string())
    }

    fn remember(&mut self, tick: Option<u64>, kind: MemoryKind, text: String, importance: f64) {
        let entry = MemoryEntry {
            scenario: self.scenario,
            tick,
            kind,
            text,
            importance,
        };
        if let Err(e) = self.memory.append(entry) {
            self.deferred.get_or_insert(e);
        }
    }

    fn plan_text(&self) -> String {
        self.plan.map_or_else(|| "none".to_string(), |p| p.action.to_string())
    }

    fn agreements_text(&self) -> String {
        if self.agreements.is_empty() {
            "none".into()
        } else {
            self.agreements.join("; ")
        }
    }

    fn messages_text(&self, visible: &[Message]) -> String {
        let skip = visible.len().saturating_sub(self.config.message_history);
        let lines: Vec<String> = visible
            .iter()
            .skip(skip)
            .map(|m| format!("{} [{}]: {}", m.sender_id, m.category, m.text))
            .collect();
        if lines.is_empty() {
            "(none)".into()
        } else {
            lines.join("\n")
        }
    }

    /// Ask for a high-level action; one retry on an unparsable reply.
    /// `Ok(None)` means fall back to exploring.
    fn choose_action(&self, vars: &[(&str, &str)]) -> Result<Result<HighLevelAction, String>, LlmError> {
        let mut note = String::new();
        let mut last = String::new();
        for _ in 0..2 {
            let mut v = vars.to_vec();
            v.push(("retry_note", &note));
            let reply = match self.ask(render(&self.prompts.action, &v)) {
                Ok(r) => r,
                Err(e) if e.is_fatal() => return Err(e),
                Err(e) => return Ok(Err(e.to_string())),
            };
            if let Some(a) = parse_action(&reply) {
                return Ok(Ok(a));
            }
            last = reply.chars().take(80).collect();
            note = format!(
                "Your previous reply `{last}` did not match the format. Reply with one line only, for example: go_to (3,4)"
            );
        }
        Ok(Err(format!("unparsable action reply: {last}")))
    }

    fn choose_message(
        &self,
        summary: &str,
        action: &str,
        visible: &[Message],
    ) -> Result<(Option<Draft>, Option<String>), LlmError> {
        let plan = self.plan_text();
        let agreements = self.agreements_text();
        let messages = self.messages_text(visible);
        let base = [
            ("summary", summary),
            ("action", action),
            ("plan", plan.as_str()),
            ("agreements", agreements.as_str()),
            ("messages", messages.as_str()),
        ];
        let soft = |r: Result<String, LlmError>| match r {
            Ok(s) => Ok(Ok(s)),
            Err(e) if e.is_fatal() => Err(e),
            Err(e) => Ok(Err(e.to_string())),
        };
        let speak = match soft(self.ask(render(&self.prompts.speak, &base)))? {
            Ok(s) => s,
            Err(e) => return Ok((None, Some(e))),
        };
        if !parse_yes_no(&speak) {
            return Ok((None, None));
        }
        let mut note = String::new();
        for _ in 0..2 {
            let mut v = base.to_vec();
            v.push(("retry_note", &note));
            let reply = match soft(self.ask(render(&self.prompts.message, &v)))? {
                Ok(s) => s,
                Err(e) => return Ok((None, Some(e))),
            };
            match parse_message(&reply) {
                MessageParse::Ok(c, t) => return Ok((Some((c, t)), None)),
                MessageParse::Empty => return Ok((None, None)),
                MessageParse::InvalidCategory(code) => {
                    note = format!("`{code}` is not a category. Start with one of Q, W, E, R, T, Y and a colon.");
                }
            }
        }
        Ok((None, None))
    }

    /// Primitive for the current plan; clears the plan when it completes.
    fn compile(&mut self, world: &WorldState) -> Action {
        let Some(plan) = self.plan else { return Action::Noop };
        let Some(me) = world.agent(self.slot) else {
            return Action::Noop;
        };
        let occupied = |p| world.agent_at(p).is_some_and(|a| a != self.slot);
        match plan.action {
            HighLevelAction::Stay => Action::Noop,
            HighLevelAction::Explore => {
                let ahead = me.position.step(me.orientation, 1);
                if world.map.walkable(ahead) && !occupied(ahead) {
                    Action::MoveForward
                } else {
                    Action::TurnRight
                }
            }
            HighLevelAction::GoTo(target) => {
                match pathfind(&world.map, me.position, me.orientation, target, occupied) {
                    PathStep::Step { action, .. } => action,
                    PathStep::Arrived | PathStep::NoPath => {
                        self.plan = None;
                        Action::Noop
                    }
                }
            }
            HighLevelAction::Attack(target) => {
                let Some(victim) = world.agent(target).filter(|v| !v.is_frozen() && target != self.slot) else {
                    self.plan = None;
                    return Action::Noop;
                };
                if world.resolve_attack(self.slot) == Some(target) {
                    self.plan = None;
                    return Action::Attack;
                }
                let d = me.position.manhattan(victim.position);
                if d == 1 {
                    let heading = Direction::ALL
                        .into_iter()
                        .find(|h| me.position.step(*h, 1) == victim.position)
                        .expect("adjacent");
                    return facing_action(me.orientation, heading).unwrap_or(Action::Attack);
                }
                let others = |p| p != victim.position && occupied(p);
                match pathfind(&world.map, me.position, me.orientation, victim.position, others) {
                    PathStep::Step { action, .. } => action,
                    PathStep::Arrived | PathStep::NoPath => {
                        self.plan = None;
                        Action::Noop
                    }
                }
            }
        }
    }

    /// Post-scenario reflection over that scenario's episode logs.
    pub fn reflect(&mut self, scenario: ScenarioId, logs: &[EpisodeLog]) -> Result<ReflectionReport, LlmError> {
        if let Some(e) = self.deferred.take() {
            return Err(e);
        }
        self.scenario = scenario;
        let opts = ReflectOptions {
            agent: self.slot,
            system: self.system(),
            memory_top_k: self.config.memory_top_k,
            weights: self.config.weights,
            digest_events: self.config.digest_events,
        };
        reflect(&self.client, &self.prompts, &mut self.memory, &opts, scenario, logs)
    }
}

impl Policy for LlmAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Llm
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        if let Some(e) = self.deferred.take() {
            return Err(e.into());
        }
        let Some(me) = ctx.world.agent(self.slot) else {
            return Err(PolicyError::Other(format!("{} is not in the world", self.slot)));
        };
        let view = serialize_ascii(ctx.observation);
        let summary = summarize_scene(
            &view,
            &SelfState {
                tick: ctx.tick,
                horizon: ctx.horizon,
                score: me.consumed_total,
                position: me.position,
                facing: me.orientation,
                frozen: me.is_frozen(),
            },
        );

        let expired = self
            .plan
            .is_none_or(|p| ctx.tick.saturating_sub(p.since) >= self.config.replan_interval);
        let mut incident = None;
        let mut new_plan = false;
        if expired {
            let plan = self.plan_text();
            let agreements = self.agreements_text();
            let messages = self.messages_text(ctx.visible);
            let query = format!("{summary} {messages}");
            let memories: Vec<String> = self
                .memory
                .retrieve(&query, self.config.memory_top_k, &self.config.weights)
                .iter()
                .map(|e| format!("- [{}] {}", e.scenario, e.text))
                .collect();
            let memories = if memories.is_empty() {
                "(none)".to_string()
            } else {
                memories.join("\n")
            };
            let rendered = view.render();
            let vars = [
                ("view", rendered.as_str()),
                ("summary", summary.as_str()),
                ("plan", plan.as_str()),
                ("agreements", agreements.as_str()),
                ("messages", messages.as_str()),
                ("memories", memories.as_str()),
            ];
            let action = match self.choose_action(&vars)? {
                Ok(a) => a,
                Err(why) => {
                    incident = Some(format!("fell back to explore: {why}"));
                    HighLevelAction::Explore
                }
            };
            self.plan = Some(Plan {
                action,
                since: ctx.tick,
            });
            new_plan = true;
            self.remember(
                Some(ctx.tick),
                MemoryKind::Action,
                format!("Chose {action}. {summary}"),
                ACTION_IMPORTANCE,
            );
        }

        let action = self.compile(ctx.world);
        let mut message = None;
        if new_plan && ctx.comm_enabled {
            let chosen = self.plan.map_or_else(|| action_name(action), |p| p.action.to_string());
            let (m, problem) = self.choose_message(&summary, &chosen, ctx.visible)?;
            message = m;
            if let (None, Some(p)) = (&incident, problem) {
                incident = Some(format!("message skipped: {p}"));
            }
        }
        Ok(PolicyDecision {
            action,
            message,
            incident,
        })
    }

    fn notify(&mut self, notice: &Notice<'_>) {
        match notice {
            Notice::EpisodeStart { agent, scenario, .. } => {
                self.slot = *agent;
                self.scenario = scenario.id;
                self.plan = None;
                self.agreements.clear();
            }
            Notice::Message { message, own } => {
                let (kind, text) = if *own {
                    (
                        MemoryKind::MessageOut,
                        format!("I said [{}]: {}", message.category, message.text),
                    )
                } else {
                    (
                        MemoryKind::MessageIn,
                        format!("{} said [{}]: {}", message.sender_id, message.category, message.text),
                    )
                };
                self.remember(Some(message.round), kind, text, MESSAGE_IMPORTANCE);
                if message.category == Category::T {
                    self.agreements.push(format!("{}: {}", message.sender_id, message.text));
                    let excess = self.agreements.len().saturating_sub(MAX_AGREEMENTS);
                    self.agreements.drain(..excess);
                }
            }
            Notice::EpisodeEnd { tick, score } => {
                self.remember(
                    Some(*tick),
                    MemoryKind::Observation,
                    format!(
                        "Episode in {} ended at tick {tick}; I ate {score} apples.",
                        self.scenario
                    ),
                    OUTCOME_IMPORTANCE,
                );
            }
        }
    }

    fn as_llm(&mut self) -> Option<&mut LlmAgent> {
        Some(self)
    }
}

fn action_name(a: Action) -> String {
    serde_json::to_value(a)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::agents::test_support::{default_world, with_ctx};
    use crate::llm::{CacheMode, LlmClientConfig};
    use crate::world::Pos;

    fn agent(reply: impl Fn(&str) -> Result<String, u16> + Send + Sync + 'static) -> LlmAgent {
        let cfg = LlmClientConfig {
            max_retries: 0,
            cache_mode: CacheMode::Live,
            ..Default::default()
        };
        let client = LlmClient::with_responder(cfg, Arc::new(reply));
        LlmAgent::new(AgentId(0), client, LlmAgentConfig::default(), MemoryBank::in_memory()).unwrap()
    }

    fn decide(a: &mut LlmAgent, w: &WorldState, comm: bool) -> PolicyDecision {
        with_ctx(w, AgentId(0), comm, |c| a.decide(c).unwrap())
    }

    #[test]
    fn go_to_compiles_to_first_path_step() {
        let w = default_world(2);
        let me = w.agent(AgentId(0)).unwrap().clone();
        let target = Pos::new(me.position.row, me.position.col + 2);
        let reply = format!("go_to ({},{})", target.row, target.col);
        let mut a = agent(move |p| {
            if p.starts_with("TASK: action") {
                Ok(reply.clone())
            } else {
                Ok("no".into())
            }
        });
        let d = decide(&mut a, &w, false);
        assert_eq!(a.current_plan(), Some(HighLevelAction::GoTo(target)));
        let expected = match pathfind(&w.map, me.position, me.orientation, target, |p| {
            w.agent_at(p).is_some_and(|x| x != AgentId(0))
        }) {
            PathStep::Step { action, .. } => action,
            other => panic!("{other:?}"),
        };
        assert_eq!(d.action, expected);
        assert!(d.incident.is_none());
    }

    #[test]
    fn stay_is_noop() {
        let w = default_world(2);
        let mut a = agent(|_| Ok("ACTION: stay".into()));
        assert_eq!(decide(&mut a, &w, false).action, Action::Noop);
    }

    #[test]
    fn garbage_twice_falls_back_to_explore() {
        let w = default_world(2);
        let calls = Arc::new(Mutex::new(0));
        let c2 = calls.clone();
        let mut a = agent(move |_| {
            *c2.lock().unwrap() += 1;
            Ok("I like turtles".into())
        });
        let d = decide(&mut a, &w, false);
        assert_eq!(*calls.lock().unwrap(), 2);
        assert_eq!(a.current_plan(), Some(HighLevelAction::Explore));
        assert!(d.incident.unwrap().contains("explore"));
        assert!(matches!(d.action, Action::MoveForward | Action::TurnRight));
    }

    #[test]
    fn transport_failure_falls_back() {
        let w = default_world(2);
        let mut a = agent(|_| Err(503));
        let d = decide(&mut a, &w, false);
        assert!(d.incident.is_some());
        assert_eq!(a.current_plan(), Some(HighLevelAction::Explore));
    }

    #[test]
    fn replans_only_on_interval() {
        let mut w = default_world(2);
        let calls = Arc::new(Mutex::new(0));
        let c2 = calls.clone();
        let mut a = agent(move |_| {
            *c2.lock().unwrap() += 1;
            Ok("stay".into())
        });
        for t in 0..25 {
            w.tick = t;
            decide(&mut a, &w, false);
        }
        assert_eq!(*calls.lock().unwrap(), 3);
    }

    #[test]
    fn two_stage_messaging() {
        let w = default_world(2);
        let mut a = agent(|p| {
            Ok(if p.starts_with("TASK: action") {
                "stay".into()
            } else if p.starts_with("TASK: speak") {
                "yes".into()
            } else {
                "Q: north tree nearly empty".into()
            })
        });
        let d = decide(&mut a, &w, true);
        assert_eq!(d.message, Some((Category::Q, "north tree nearly empty".into())));

        let mut silent = agent(|p| {
            Ok(if p.starts_with("TASK: speak") {
                "no".into()
            } else {
                "stay".into()
            })
        });
        assert!(decide(&mut silent, &w, true).message.is_none());
    }

    #[test]
    fn invalid_category_reprompted_once() {
        let w = default_world(2);
        let asked = Arc::new(Mutex::new(0));
        let a2 = asked.clone();
        let mut a = agent(move |p| {
            Ok(if p.starts_with("TASK: action") {
                "stay".into()
            } else if p.starts_with("TASK: speak") {
                "yes".into()
            } else {
                *a2.lock().unwrap() += 1;
                "Z: hello".into()
            })
        });
        assert!(decide(&mut a, &w, true).message.is_none());
        assert_eq!(*asked.lock().unwrap(), 2);
    }

    #[test]
    fn messages_are_remembered_and_agreements_tracked() {
        let mut a = agent(|_| Ok("stay".into()));
        let m = Message {
            round: 4,
            seq: 0,
            sender_id: AgentId(2),
            category: Category::T,
            text: "leave one apple per tree".into(),
        };
        a.notify(&Notice::Message {
            message: &m,
            own: false,
        });
        a.notify(&Notice::Message { message: &m, own: true });
        let kinds: Vec<MemoryKind> = a.memory().entries().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![MemoryKind::MessageIn, MemoryKind::MessageOut]);
        assert_eq!(a.agreements().len(), 2);
    }

    #[test]
    fn replay_miss_is_an_error() {
        let w = default_world(2);
        let dir = tempfile::tempdir().unwrap();
        let cfg = LlmClientConfig {
            cache_mode: CacheMode::Replay,
            cache_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let mut a = LlmAgent::new(
            AgentId(0),
            LlmClient::new(cfg),
            LlmAgentConfig::default(),
            MemoryBank::in_memory(),
        )
        .unwrap();
        let r = with_ctx(&w, AgentId(0), false, |c| a.decide(c));
        assert!(matches!(r, Err(PolicyError::Llm(LlmError::CacheMiss { .. }))));
    }
}
