use serde::{Deserialize, Serialize};

use super::grammar::{parse_numbered, parse_selection};
use super::memory::{MemoryBank, MemoryEntry, MemoryKind, RetrievalWeights};
use super::prompts::{render, PromptSet};
use super::{ChatMessage, LlmClient, LlmError};
use crate::event::{DeathCause, Event};
use crate::harness::log::EpisodeLog;
use crate::scenario::ScenarioId;
use crate::world::AgentId;

pub const QUESTIONS_PER_SET: usize = 10;
const INSIGHT_IMPORTANCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    /// `None` when the model call failed.
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub scenario: ScenarioId,
    pub agent: AgentId,
    pub fixed_qa: Vec<QaPair>,
    pub dynamic_qa: Vec<QaPair>,
    pub insights: Vec<MemoryEntry>,
    /// For each insight, its index into `fixed_qa ++ dynamic_qa`.
    pub insight_sources: Vec<usize>,
    pub incomplete: bool,
    pub low_content: bool,
    pub errors: Vec<String>,
}

impl ReflectionReport {
    pub fn qa(&self) -> impl Iterator<Item = &QaPair> {
        self.fixed_qa.iter().chain(&self.dynamic_qa)
    }
}

/// Reflection settings taken from the owning agent.
#[derive(Debug, Clone)]
pub struct ReflectOptions {
    pub agent: AgentId,
    pub system: String,
    pub memory_top_k: usize,
    pub weights: RetrievalWeights,
    pub digest_events: usize,
}

fn describe(agent: AgentId, tick: u64, event: &Event) -> Option<String> {
    let who = |a: AgentId| if a == agent { "you".to_string() } else { a.to_string() };
    let text = match event {
        Event::AppleEaten { agent: a, tree, .. } => format!("{} ate an apple from tree {}", who(*a), tree.0),
        Event::TreeDied { tree, cause } => match cause {
            DeathCause::Harvest => format!("tree {} died after its last apple was eaten", tree.0),
            DeathCause::Disruption => format!("tree {} died in a disruption", tree.0),
        },
        Event::AgentFrozen { agent: a, by, .. } => format!("{} froze {}", who(*by), who(*a)),
        Event::DisruptionEvent(d) => format!(
            "a disruption removed {} apples and emptied {} trees",
            d.removed.len(),
            d.trees_emptied.len()
        ),
        Event::MessageSent(m) => format!("{} said [{}] {}", who(m.sender_id), m.category, m.text),
        _ => return None,
    };
    Some(format!("t={tick}: {text}"))
}

/// Bounded, deterministic text digest of one scenario's episodes: totals
/// followed by the last `last_n` notable events of the final episode.
/// Returns the digest and whether it is low on content.
pub fn scenario_digest(agent: AgentId, scenario: ScenarioId, logs: &[EpisodeLog], last_n: usize) -> (String, bool) {
    let mut own = 0usize;
    let mut group = 0usize;
    let mut deaths = 0usize;
    let mut disruption_deaths = 0usize;
    let mut messages = 0usize;
    let mut own_messages = 0usize;
    let mut freezes = 0usize;
    for log in logs {
        for r in &log.records {
            match &r.event {
                Event::AppleEaten { agent: a, .. } => {
                    group += 1;
                    own += usize::from(*a == agent);
                }
                Event::TreeDied { cause, .. } => {
                    deaths += 1;
                    disruption_deaths += usize::from(*cause == DeathCause::Disruption);
                }
                Event::MessageSent(m) => {
                    messages += 1;
                    own_messages += usize::from(m.sender_id == agent);
                }
                Event::AgentFrozen { .. } => freezes += 1,
                _ => {}
            }
        }
    }
    let mut lines = vec![format!(
        "Scenario {scenario}: {} episodes. You are {agent}.",
        logs.len()
    )];
    if let Some(first) = logs.first() {
        let s = &first.header.scenario;
        lines.push(format!(
            "Disruptions per episode: {} at ticks {:?}, removal probability {}.",
            s.d, s.event_ticks, s.v_s
        ));
    }
    lines.push(format!(
        "Apples eaten: you {own}, whole group {group}. Trees died: {deaths} ({disruption_deaths} in disruptions). Freezes: {freezes}. Messages: {messages} ({own_messages} from you)."
    ));
    if let Some(last) = logs.last() {
        if let Some(s) = &last.summary {
            let left: usize = s.final_state.trees.iter().map(|t| t.apples.len()).sum();
            lines.push(format!(
                "Final episode ended at tick {} with {left} apples left and {} of {} trees alive.",
                s.ticks_completed,
                s.final_state.trees.iter().filter(|t| t.alive).count(),
                s.final_state.trees.len()
            ));
        }
        let recent: Vec<String> = last
            .records
            .iter()
            .filter_map(|r| describe(agent, r.tick, &r.event))
            .collect();
        let skip = recent.len().saturating_sub(last_n);
        if !recent.is_empty() {
            lines.push("Last events:".into());
            lines.extend(recent.into_iter().skip(skip));
        }
    }
    let low_content = logs.is_empty() || (group == 0 && messages == 0 && deaths == 0);
    (lines.join("\n"), low_content)
}

fn ask(client: &LlmClient, system: &str, prompt: String) -> Result<String, LlmError> {
    client
        .complete(&[ChatMessage::system(system), ChatMessage::user(prompt)])
        .map(|s| s.trim().to_string())
}

/// Exactly ten questions: parsed from the model, padded from `spares` or
/// truncated.
pub fn generate_dynamic_questions(
    client: &LlmClient,
    prompts: &PromptSet,
    system: &str,
    scenario: ScenarioId,
    digest: &str,
) -> Result<Vec<String>, LlmError> {
    let reply = ask(
        client,
        system,
        render(
            &prompts.dynamic_questions,
            &[("scenario", &scenario.to_string()), ("digest", digest)],
        ),
    )?;
    Ok(pad_questions(parse_numbered(&reply), &prompts.spare_questions))
}

fn pad_questions(mut qs: Vec<String>, spares: &[String]) -> Vec<String> {
    qs.truncate(QUESTIONS_PER_SET);
    for s in spares {
        if qs.len() == QUESTIONS_PER_SET {
            break;
        }
        if !qs.contains(s) {
            qs.push(s.clone());
        }
    }
    qs
}

fn soft<T>(r: Result<T, LlmError>, errors: &mut Vec<String>) -> Result<Option<T>, LlmError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_fatal() => Err(e),
        Err(e) => {
            errors.push(e.to_string());
            Ok(None)
        }
    }
}

/// Post-scenario reflection: answer the fixed and generated questions, let
/// the model pick the durable answers and store them as insights.
pub fn reflect(
    client: &LlmClient,
    prompts: &PromptSet,
    memory: &mut MemoryBank,
    opts: &ReflectOptions,
    scenario: ScenarioId,
    logs: &[EpisodeLog],
) -> Result<ReflectionReport, LlmError> {
    let (digest, low_content) = scenario_digest(opts.agent, scenario, logs, opts.digest_events);
    let mut errors = Vec::new();
    let sid = scenario.to_string();

    let answer = |question: &str, memory: &MemoryBank, errors: &mut Vec<String>| {
        let memories: Vec<String> = memory
            .retrieve(question, opts.memory_top_k, &opts.weights)
            .iter()
            .map(|e| format!("- {}", e.text))
            .collect();
        let memories = if memories.is_empty() {
            "(none)".to_string()
        } else {
            memories.join("\n")
        };
        let prompt = render(
            &prompts.answer,
            &[
                ("scenario", &sid),
                ("digest", &digest),
                ("memories", &memories),
                ("question", question),
            ],
        );
        soft(ask(client, &opts.system, prompt), errors)
    };

    let mut fixed_qa = Vec::with_capacity(QUESTIONS_PER_SET);
    for q in &prompts.fixed_questions {
        let a = answer(q, memory, &mut errors)?;
        fixed_qa.push(QaPair {
            question: q.clone(),
            answer: a,
        });
    }

    let questions = soft(
        generate_dynamic_questions(client, prompts, &opts.system, scenario, &digest),
        &mut errors,
    )?
    .unwrap_or_else(|| pad_questions(Vec::new(), &prompts.spare_questions));
    let mut dynamic_qa = Vec::with_capacity(QUESTIONS_PER_SET);
    for q in questions {
        let a = answer(&q, memory, &mut errors)?;
        dynamic_qa.push(QaPair { question: q, answer: a });
    }

    let all: Vec<&QaPair> = fixed_qa.iter().chain(&dynamic_qa).collect();
    let answered: Vec<usize> = (0..all.len()).filter(|&i| all[i].answer.is_some()).collect();
    let mut insights = Vec::new();
    let mut insight_sources = Vec::new();
    if !answered.is_empty() {
        let listing: Vec<String> = answered
            .iter()
            .map(|&i| {
                format!(
                    "{}. Q: {} A: {}",
                    i + 1,
                    all[i].question,
                    all[i].answer.as_deref().unwrap_or("")
                )
            })
            .collect();
        let prompt = render(
            &prompts.insight_filter,
            &[("scenario", &sid), ("answers", &listing.join("\n"))],
        );
        if let Some(reply) = soft(ask(client, &opts.system, prompt), &mut errors)? {
            for n in parse_selection(&reply, all.len()) {
                let i = n - 1;
                let Some(text) = &all[i].answer else { continue };
                let entry = MemoryEntry {
                    scenario,
                    tick: None,
                    kind: MemoryKind::Insight,
                    text: text.clone(),
                    importance: INSIGHT_IMPORTANCE,
                };
                memory.append(entry.clone())?;
                insights.push(entry);
                insight_sources.push(i);
            }
        }
    }

    Ok(ReflectionReport {
        scenario,
        agent: opts.agent,
        fixed_qa,
        dynamic_qa,
        insights,
        insight_sources,
        incomplete: !errors.is_empty(),
        low_content,
        errors,
    })
}
