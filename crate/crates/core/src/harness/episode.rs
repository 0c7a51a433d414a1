use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::log::{EpisodeHeader, EpisodeSummary, LogWriter, SlotInfo, LOG_FORMAT};
use super::HarnessError;
use crate::agents::{DecisionContext, Notice, Policy, PolicyError};
use crate::comm::{Channel, Transcript};
use crate::event::{AgentAction, Event, EventRecord, IncidentKind};
use crate::metrics::{consumer_mask, IndicatorTracker};
use crate::scenario::{apply_disruption, ScenarioSpec};
use crate::world::{Action, ActionSet, AgentId, WorldConfig, WorldState};

/// Everything that determines an episode apart from the policies.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub episode_id: String,
    pub group_id: String,
    pub episode_index: u32,
    pub seed: u64,
    pub scenario: ScenarioSpec,
    /// Seed, horizon and regrowth already set for this episode.
    pub world: WorldConfig,
    pub agents: Vec<SlotInfo>,
    pub comm_enabled: bool,
    pub kill_emptied_trees: bool,
    pub satiation_window: u64,
    pub include_bot_in_indicators: bool,
    pub policy_timeout: Option<Duration>,
    pub log_path: Option<PathBuf>,
}

impl EpisodeSetup {
    pub fn header(&self) -> EpisodeHeader {
        EpisodeHeader {
            format: LOG_FORMAT,
            episode_id: self.episode_id.clone(),
            group_id: self.group_id.clone(),
            episode_index: self.episode_index,
            seed: self.seed,
            scenario: self.scenario.clone(),
            world: self.world.clone(),
            agents: self.agents.clone(),
            comm_enabled: self.comm_enabled,
            kill_emptied_trees: self.kill_emptied_trees,
            satiation_window: self.satiation_window,
            include_bot_in_indicators: self.include_bot_in_indicators,
        }
    }
}

/// Hooks into the tick loop, used by live sessions for pacing and frames.
pub trait TickObserver {
    /// Called before decisions for the current tick. An error aborts the
    /// episode with that reason.
    fn before_tick(&mut self, _world: &WorldState, _channel: &Channel) -> Result<(), String> {
        Ok(())
    }

    /// Called after the world advanced, with the records logged for the tick.
    fn after_tick(&mut self, _world: &WorldState, _channel: &Channel, _records: &[EventRecord]) {}
}

#[derive(Debug, Default)]
pub struct NullObserver;

impl TickObserver for NullObserver {}

#[derive(Debug)]
pub struct EpisodeOutcome {
    pub log_path: Option<PathBuf>,
    pub transcript_path: Option<PathBuf>,
    pub records: Vec<EventRecord>,
    pub summary: EpisodeSummary,
    pub transcript: Transcript,
    pub world: WorldState,
}

/// `<log stem>.transcript.jsonl` next to the log.
pub fn transcript_path(log: &Path) -> PathBuf {
    let stem = log
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    log.with_file_name(format!("{stem}.transcript.jsonl"))
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

enum Stop {
    Abort(String),
    Fatal(String, HarnessError),
}

/// Run one episode. `policies[i]` drives agent `i`. Each tick, non-frozen
/// agents decide in speaking order (ascending id), messages are posted as
/// they are produced, then the world steps and any scheduled disruption is
/// applied between harvest and regrowth.
///
/// A policy panic or error aborts the episode; the partial log is finished
/// with an `episode_end` flagged invalid. Fatal language-model errors (such
/// as a replay cache miss) are returned after the log is written.
pub fn run_episode(
    setup: &EpisodeSetup,
    policies: &mut [Box<dyn Policy + '_>],
    observer: &mut dyn TickObserver,
) -> Result<EpisodeOutcome, HarnessError> {
    let n = setup.agents.len();
    if policies.len() != n {
        return Err(HarnessError::Config(format!(
            "{} policies for {n} slots",
            policies.len()
        )));
    }
    let mut world = WorldState::new(&setup.world, n)?;
    let ids: Vec<AgentId> = (0..n as u8).map(AgentId).collect();
    let mut channel = Channel::new(setup.comm_enabled, ids.clone(), &setup.episode_id, &setup.group_id);
    let kinds: Vec<_> = setup.agents.iter().map(|a| a.kind).collect();
    let mut tracker = IndicatorTracker::new(
        world.map.capacity(),
        world.map.tree_zones.len(),
        consumer_mask(&kinds, setup.include_bot_in_indicators),
        setup.satiation_window,
    )?;
    let mut log = LogWriter::new(setup.log_path.as_deref())?;
    log.push(0, Event::EpisodeStart(Box::new(setup.header())))?;
    for (i, p) in policies.iter_mut().enumerate() {
        p.notify(&Notice::EpisodeStart {
            agent: ids[i],
            episode_id: &setup.episode_id,
            scenario: &setup.scenario,
        });
    }

    let mut stop = None;
    while !world.is_over() && stop.is_none() {
        let t = world.tick;
        if let Err(reason) = observer.before_tick(&world, &channel) {
            stop = Some(Stop::Abort(reason));
            break;
        }
        let first_record = log.records().len();
        let mut actions = ActionSet::new();
        for (pos, &id) in channel.speaking_order().to_vec().iter().enumerate() {
            let i = id.0 as usize;
            if world.agents[i].is_frozen() {
                continue;
            }
            let observation = world.observe(id)?;
            let visible = channel.visible_messages(pos, t);
            let ctx = DecisionContext {
                agent: id,
                tick: t,
                horizon: world.horizon,
                scenario: &setup.scenario,
                observation: &observation,
                world: &world,
                visible: &visible,
                comm_enabled: setup.comm_enabled,
            };
            let started = Instant::now();
            let decision = match catch_unwind(AssertUnwindSafe(|| policies[i].decide(&ctx))) {
                Err(p) => {
                    stop = Some(Stop::Abort(format!("{id} policy panicked: {}", panic_text(p.as_ref()))));
                    break;
                }
                Ok(Err(PolicyError::Llm(e))) if e.is_fatal() => {
                    stop = Some(Stop::Fatal(format!("{id} policy failed: {e}"), e.into()));
                    break;
                }
                Ok(Err(e)) => {
                    stop = Some(Stop::Abort(format!("{id} policy failed: {e}")));
                    break;
                }
                Ok(Ok(d)) => d,
            };
            let late = setup.policy_timeout.filter(|limit| started.elapsed() > *limit);
            if let Some(limit) = late {
                actions.insert(id, Action::Noop);
                log.push(
                    t,
                    Event::Incident {
                        agent: id,
                        reason: IncidentKind::PolicyTimeout,
                        detail: format!("decision exceeded {} ms; noop substituted", limit.as_millis()),
                    },
                )?;
                continue;
            }
            actions.insert(id, decision.action);
            if let Some(detail) = decision.incident {
                log.push(
                    t,
                    Event::Incident {
                        agent: id,
                        reason: IncidentKind::LlmFallback,
                        detail,
                    },
                )?;
            }
            if let Some((category, text)) = decision.message {
                match channel.submit(id, category, &text, t) {
                    Ok(m) => {
                        for (j, p) in policies.iter_mut().enumerate() {
                            p.notify(&Notice::Message {
                                message: &m,
                                own: j == i,
                            });
                        }
                        log.push(t, Event::MessageSent(m))?;
                    }
                    Err(e) => {
                        log.push(
                            t,
                            Event::Incident {
                                agent: id,
                                reason: IncidentKind::MessageRejected,
                                detail: e.to_string(),
                            },
                        )?;
                    }
                }
            }
        }
        if stop.is_some() {
            break;
        }
        log.push(
            t,
            Event::Actions {
                actions: actions
                    .iter()
                    .map(|(&agent, &action)| AgentAction { agent, action })
                    .collect(),
            },
        )?;
        let scenario = &setup.scenario;
        let kill = setup.kill_emptied_trees;
        let events = world.step_with(&actions, |w, ev| {
            if scenario.is_event_tick(t) {
                apply_disruption(w, scenario.v_s, kill, ev);
            }
        })?;
        for e in events {
            tracker.apply(t, &e);
            log.push(t, e)?;
        }
        observer.after_tick(&world, &channel, &log.records()[first_record..]);
    }

    let scores: Vec<u32> = world.agents.iter().map(|a| a.consumed_total).collect();
    for (i, p) in policies.iter_mut().enumerate() {
        p.notify(&Notice::EpisodeEnd {
            tick: world.tick,
            score: scores[i],
        });
    }
    let (abort_reason, fatal) = match stop {
        None => (None, None),
        Some(Stop::Abort(r)) => (Some(r), None),
        Some(Stop::Fatal(r, e)) => (Some(r), Some(e)),
    };
    if let Some(r) = &abort_reason {
        tracing::warn!(episode = %setup.episode_id, tick = world.tick, "episode aborted: {r}");
    }
    let summary = EpisodeSummary {
        valid: abort_reason.is_none(),
        abort_reason,
        ticks_completed: world.tick,
        final_state: world.snapshot(),
        scores,
        indicators: world.tick.checked_sub(1).map(|t| tracker.values_at(t)),
        messages: channel.transcript().messages.len(),
    };
    log.push(world.tick, Event::EpisodeEnd(Box::new(summary.clone())))?;
    let (log_path, records) = log.finish()?;
    let transcript = channel.into_transcript();
    let transcript_path = match &log_path {
        Some(p) => {
            let tp = transcript_path(p);
            transcript.write_jsonl(&tp)?;
            Some(tp)
        }
        None => None,
    };
    if let Some(e) = fatal {
        return Err(e);
    }
    Ok(EpisodeOutcome {
        log_path,
        transcript_path,
        records,
        summary,
        transcript,
        world,
    })
}
