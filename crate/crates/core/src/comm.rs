//! Broadcast message channel with six message categories, a word cap and
//! turn-ordered visibility.
//!
//! Agents speak in a fixed order each round (one round per tick). A speaker
//! sees every message from earlier rounds plus the current-round messages of
//! the speakers before it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::AgentId;

pub const WORD_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Q,
    W,
    E,
    R,
    T,
    Y,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Q,
        Category::W,
        Category::E,
        Category::R,
        Category::T,
        Category::Y,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Q => "Information",
            Category::W => "Question",
            Category::E => "Individual Strategy",
            Category::R => "Collective Strategy Proposal",
            Category::T => "Establish Agreement",
            Category::Y => "Evaluate/Discuss Agreement",
        }
    }

    pub fn code(self) -> char {
        match self {
            Category::Q => 'Q',
            Category::W => 'W',
            Category::E => 'E',
            Category::R => 'R',
            Category::T => 'T',
            Category::Y => 'Y',
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for Category {
    type Err = CommError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Q" | "q" => Ok(Category::Q),
            "W" | "w" => Ok(Category::W),
            "E" | "e" => Ok(Category::E),
            "R" | "r" => Ok(Category::R),
            "T" | "t" => Ok(Category::T),
            "Y" | "y" => Ok(Category::Y),
            other => Err(CommError::InvalidCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommError {
    #[error("communication is disabled for this run")]
    Disabled,
    #[error("message has {words} words; the cap is {cap}")]
    WordCap { words: usize, cap: usize },
    #[error("invalid message category `{0}` (expected one of Q W E R T Y)")]
    InvalidCategory(String),
    #[error("{0} is not a participant")]
    NotParticipant(AgentId),
    #[error("round {got} precedes current round {current}")]
    StaleRound { got: u64, current: u64 },
    #[error("no messages to summarise")]
    EmptyInput,
    #[error("transcript io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: u64,
    pub seq: u32,
    pub sender_id: AgentId,
    pub category: Category,
    pub text: String,
}

/// Words are maximal runs of non-whitespace.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// First `cap` words of `text`, single-space joined.
pub fn trim_to_words(text: &str, cap: usize) -> String {
    text.split_whitespace().take(cap).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub episode_id: String,
    pub group_id: String,
    pub messages: Vec<Message>,
}

impl Transcript {
    /// JSON Lines with `{round, seq, sender_id, category, text}` per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CommError> {
        let io = |e: std::io::Error| CommError::Io(e.to_string());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for m in &self.messages {
            serde_json::to_writer(&mut f, m).map_err(|e| CommError::Io(e.to_string()))?;
            f.write_all(b"\n").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<Message>, CommError> {
        let text = std::fs::read_to_string(path).map_err(|e| CommError::Io(e.to_string()))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| CommError::Io(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Channel {
    enabled: bool,
    /// Speaking order: position in this list is the speaker's order index.
    order: Vec<AgentId>,
    transcript: Transcript,
}

impl Channel {
    pub fn new(enabled: bool, participants: Vec<AgentId>, episode_id: &str, group_id: &str) -> Self {
        let mut order = participants;
        order.sort();
        Self {
            enabled,
            order,
            transcript: Transcript {
                episode_id: episode_id.to_string(),
                group_id: group_id.to_string(),
                messages: Vec::new(),
            },
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn speaking_order(&self) -> &[AgentId] {
        &self.order
    }

    pub fn order_index(&self, agent: AgentId) -> Option<usize> {
        self.order.iter().position(|a| *a == agent)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn validate(category: &str, text: &str) -> Result<Category, CommError> {
        let c = category.parse()?;
        let words = word_count(text);
        if words > WORD_CAP {
            return Err(CommError::WordCap { words, cap: WORD_CAP });
        }
        Ok(c)
    }

    /// Append a message for `round`, assigning the next sequence number.
    pub fn submit(
        &mut self,
        sender: AgentId,
        category: Category,
        text: &str,
        round: u64,
    ) -> Result<Message, CommError> {
        if !self.enabled {
            return Err(CommError::Disabled);
        }
        if self.order_index(sender).is_none() {
            return Err(CommError::NotParticipant(sender));
        }
        let words = word_count(text);
        if words > WORD_CAP {
            return Err(CommError::WordCap { words, cap: WORD_CAP });
        }
        let last = self.transcript.messages.last();
        let current = last.map_or(0, |m| m.round);
        if round < current {
            return Err(CommError::StaleRound { got: round, current });
        }
        let seq = match last {
            Some(m) if m.round == round => m.seq + 1,
            _ => 0,
        };
        let msg = Message {
            round,
            seq,
            sender_id: sender,
            category,
            text: text.to_string(),
        };
        self.transcript.messages.push(msg.clone());
        Ok(msg)
    }

    /// Messages visible to the speaker at `position` during `round`.
    pub fn visible_messages(&self, position: usize, round: u64) -> Vec<Message> {
        self.transcript
            .messages
            .iter()
            .filter(|m| {
                m.round < round
                    || (m.round == round
                        && self
                            .order_index(m.sender_id)
                            .is_some_and(|sender_pos| sender_pos < position))
            })
            .cloned()
            .collect()
    }
}

/// Share of each category over all messages in `transcripts`.
pub fn message_type_proportions<'a, I>(transcripts: I) -> Result<BTreeMap<Category, f64>, CommError>
where
    I: IntoIterator<Item = &'a Transcript>,
{
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    let mut total = 0usize;
    for t in transcripts {
        for m in &t.messages {
            *counts.get_mut(&m.category).expect("all categories seeded") += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(CommError::EmptyInput);
    }
    Ok(counts.into_iter().map(|(c, n)| (c, n as f64 / total as f64)).collect())
}
