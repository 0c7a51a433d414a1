//! Re-simulation of logged episodes from their recorded inputs.

use std::path::Path;

use super::log::{EpisodeHeader, EpisodeLog};
use super::HarnessError;
use crate::comm::{Channel, Message};
use crate::event::{Event, EventRecord};
use crate::metrics::{consumer_mask, IndicatorTracker};
use crate::scenario::apply_disruption;
use crate::world::{ActionSet, AgentId, WorldSnapshot, WorldState};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub header: EpisodeHeader,
    pub ticks: u64,
    pub final_state: WorldSnapshot,
    pub valid: bool,
}

fn integrity(tick: u64, detail: impl Into<String>) -> HarnessError {
    HarnessError::Integrity {
        tick,
        detail: detail.into(),
    }
}

fn short(e: &Event) -> String {
    serde_json::to_string(e).unwrap_or_else(|_| e.kind_name().to_string())
}

fn check_message(channel: &mut Channel, t: u64, m: &Message) -> Result<(), HarnessError> {
    let expected = channel
        .submit(m.sender_id, m.category, &m.text, t)
        .map_err(|e| integrity(t, format!("logged message violates channel rules: {e}")))?;
    if &expected != m {
        return Err(integrity(
            t,
            format!("message mismatch: expected {expected:?}, found {m:?}"),
        ));
    }
    Ok(())
}

/// Parse and replay a log file. See [`replay_records`].
pub fn replay_log(path: &Path, on_state: &mut dyn FnMut(&WorldState)) -> Result<ReplayOutcome, HarnessError> {
    let log = EpisodeLog::read(path)?;
    replay_records(&log.records, on_state)
}

/// Rebuild the episode from its header and `actions` records, checking every
/// simulated event, message and the closing summary against the log.
/// `on_state` sees the initial state and the state after every tick. The
/// first disagreement is reported as an integrity error at its tick.
pub fn replay_records(
    records: &[EventRecord],
    on_state: &mut dyn FnMut(&WorldState),
) -> Result<ReplayOutcome, HarnessError> {
    let header = match records.first().map(|r| &r.event) {
        Some(Event::EpisodeStart(h)) => (**h).clone(),
        _ => return Err(integrity(0, "log does not start with episode_start")),
    };
    let n = header.agents.len();
    let mut world = WorldState::new(&header.world, n)?;
    if world.horizon != header.scenario.horizon {
        return Err(integrity(0, "world and scenario horizons differ"));
    }
    let ids: Vec<AgentId> = (0..n as u8).map(AgentId).collect();
    let mut channel = Channel::new(header.comm_enabled, ids, &header.episode_id, &header.group_id);
    let mut tracker = IndicatorTracker::new(
        world.map.capacity(),
        world.map.tree_zones.len(),
        consumer_mask(&header.kinds(), header.include_bot_in_indicators),
        header.satiation_window,
    )?;

    let mut prev: Option<(u64, u32)> = None;
    for r in records {
        let ok = match prev {
            None => r.tick == 0 && r.seq == 0,
            Some((t, s)) => (r.tick == t && r.seq == s + 1) || (r.tick > t && r.seq == 0),
        };
        if !ok {
            return Err(integrity(r.tick, format!("record sequence broken at seq {}", r.seq)));
        }
        prev = Some((r.tick, r.seq));
    }

    on_state(&world);
    let mut i = 1;
    let mut summary = None;
    while i < records.len() {
        let t = records[i].tick;
        let end = records[i..]
            .iter()
            .position(|r| r.tick != t)
            .map_or(records.len(), |k| i + k);
        let group = &records[i..end];
        i = end;

        if let Some(pos) = group.iter().position(|r| matches!(r.event, Event::EpisodeEnd(_))) {
            if pos + 1 != group.len() || i != records.len() {
                return Err(integrity(t, "records follow episode_end"));
            }
            for r in &group[..pos] {
                match &r.event {
                    Event::Incident { .. } => {}
                    Event::MessageSent(m) => check_message(&mut channel, t, m)?,
                    _ => return Err(integrity(t, "unexpected records at the closing tick")),
                }
            }
            if let Event::EpisodeEnd(s) = &group[pos].event {
                summary = Some((t, (**s).clone()));
            }
            break;
        }
        if t != world.tick {
            return Err(integrity(t, format!("expected records for tick {}", world.tick)));
        }

        let mut actions = None;
        let mut logged_sim = Vec::new();
        for r in group {
            match &r.event {
                Event::MessageSent(m) => {
                    if actions.is_some() {
                        return Err(integrity(t, "message logged after the tick's actions"));
                    }
                    check_message(&mut channel, t, m)?;
                }
                Event::Incident { .. } => {}
                Event::Actions { actions: a } => {
                    if actions.is_some() {
                        return Err(integrity(t, "two actions records"));
                    }
                    if a.windows(2).any(|w| w[0].agent >= w[1].agent) {
                        return Err(integrity(t, "actions not in agent order"));
                    }
                    actions = Some(a.iter().map(|x| (x.agent, x.action)).collect::<ActionSet>());
                }
                e if e.is_simulated() => {
                    if actions.is_none() {
                        return Err(integrity(
                            t,
                            format!("{} logged before the tick's actions", e.kind_name()),
                        ));
                    }
                    logged_sim.push(e);
                }
                e => return Err(integrity(t, format!("unexpected {} record", e.kind_name()))),
            }
        }
        let Some(actions) = actions else {
            return Err(integrity(t, "tick has no actions record"));
        };
        let scenario = &header.scenario;
        let kill = header.kill_emptied_trees;
        let simulated = world
            .step_with(&actions, |w, ev| {
                if scenario.is_event_tick(t) {
                    apply_disruption(w, scenario.v_s, kill, ev);
                }
            })
            .map_err(|e| integrity(t, format!("recorded actions rejected: {e}")))?;
        for (k, sim) in simulated.iter().enumerate() {
            match logged_sim.get(k) {
                Some(logged) if *logged == sim => {}
                Some(logged) => {
                    return Err(integrity(
                        t,
                        format!("expected {}, found {}", short(sim), short(logged)),
                    ));
                }
                None => return Err(integrity(t, format!("missing {}", short(sim)))),
            }
        }
        if let Some(extra) = logged_sim.get(simulated.len()) {
            return Err(integrity(t, format!("unexpected {}", short(extra))));
        }
        for e in &simulated {
            tracker.apply(t, e);
        }
        on_state(&world);
    }

    let Some((end_tick, s)) = summary else {
        return Err(integrity(world.tick, "log has no episode_end record"));
    };
    if end_tick != world.tick || s.ticks_completed != world.tick {
        return Err(integrity(
            end_tick,
            "episode_end tick does not match the replayed length",
        ));
    }
    if s.final_state != world.snapshot() {
        return Err(integrity(end_tick, "final state differs from the episode_end snapshot"));
    }
    let scores: Vec<u32> = world.agents.iter().map(|a| a.consumed_total).collect();
    if s.scores != scores {
        return Err(integrity(end_tick, "scores differ from the episode_end summary"));
    }
    if s.messages != channel.transcript().messages.len() {
        return Err(integrity(
            end_tick,
            "message count differs from the episode_end summary",
        ));
    }
    let indicators = world.tick.checked_sub(1).map(|t| tracker.values_at(t));
    if s.indicators != indicators {
        return Err(integrity(
            end_tick,
            "indicator snapshot differs from the replayed values",
        ));
    }
    if s.valid && world.tick != world.horizon {
        return Err(integrity(
            end_tick,
            "episode marked valid but stopped before the horizon",
        ));
    }
    Ok(ReplayOutcome {
        header,
        ticks: world.tick,
        final_state: world.snapshot(),
        valid: s.valid,
    })
}
