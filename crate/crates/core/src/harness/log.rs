//! JSON Lines episode logs: an `episode_start` header, per-tick records and an
//! `episode_end` summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::AgentKind;
use crate::event::{Event, EventRecord};
use crate::metrics::IndicatorValues;
use crate::scenario::ScenarioSpec;
use crate::world::{AgentId, WorldConfig, WorldSnapshot};

pub const LOG_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub slot: AgentId,
    pub kind: AgentKind,
}

/// Everything needed to re-simulate the episode from its recorded inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub format: u32,
    pub episode_id: String,
    pub group_id: String,
    pub episode_index: u32,
    pub seed: u64,
    pub scenario: ScenarioSpec,
    /// World parameters with `seed` and `horizon` already applied.
    pub world: WorldConfig,
    pub agents: Vec<SlotInfo>,
    pub comm_enabled: bool,
    pub kill_emptied_trees: bool,
    pub satiation_window: u64,
    pub include_bot_in_indicators: bool,
}

impl EpisodeHeader {
    pub fn kinds(&self) -> Vec<AgentKind> {
        self.agents.iter().map(|a| a.kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub valid: bool,
    pub abort_reason: Option<String>,
    pub ticks_completed: u64,
    pub final_state: WorldSnapshot,
    pub scores: Vec<u32>,
    /// Indicator values at the last completed tick.
    pub indicators: Option<IndicatorValues>,
    pub messages: usize,
}

/// A parsed log. `records` holds every line, header and summary included.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub records: Vec<EventRecord>,
    pub summary: Option<EpisodeSummary>,
}

impl EpisodeLog {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Parse { line, message, .. } => HarnessError::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: EventRecord = serde_json::from_str(line).map_err(|e| HarnessError::Parse {
                path: PathBuf::new(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    /// Build from already parsed records; the first must be `episode_start`.
    pub fn from_records(records: Vec<EventRecord>) -> Result<Self, HarnessError> {
        let header = match records.first().map(|r| &r.event) {
            Some(Event::EpisodeStart(h)) => (**h).clone(),
            _ => {
                return Err(HarnessError::Parse {
                    path: PathBuf::new(),
                    line: 1,
                    message: "first record must be episode_start".into(),
                })
            }
        };
        let summary = records.iter().rev().find_map(|r| match &r.event {
            Event::EpisodeEnd(s) => Some((**s).clone()),
            _ => None,
        });
        Ok(Self {
            header,
            records,
            summary,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.valid)
    }
}

/// Streams records to disk (if a path is given) and keeps them in memory.
/// Sequence numbers restart at 0 on every tick.
#[derive(Debug)]
pub struct LogWriter {
    out: Option<(PathBuf, BufWriter<File>)>,
    records: Vec<EventRecord>,
    tick: u64,
    next_seq: u32,
}

impl LogWriter {
    pub fn new(path: Option<&Path>) -> Result<Self, HarnessError> {
        let out = match path {
            Some(p) => {
                if let Some(dir) = p.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
                }
                let f = File::create(p).map_err(|e| HarnessError::io(p, e))?;
                Some((p.to_path_buf(), BufWriter::new(f)))
            }
            None => None,
        };
        Ok(Self {
            out,
            records: Vec::new(),
            tick: 0,
            next_seq: 0,
        })
    }

    pub fn push(&mut self, tick: u64, event: Event) -> Result<&EventRecord, HarnessError> {
        if tick != self.tick {
            self.tick = tick;
            self.next_seq = 0;
        }
        let rec = EventRecord {
            tick,
            seq: self.next_seq,
            event,
        };
        self.next_seq += 1;
        if let Some((path, w)) = &mut self.out {
            serde_json::to_writer(&mut *w, &rec).map_err(|e| HarnessError::io(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
        }
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.out.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn finish(mut self) -> Result<(Option<PathBuf>, Vec<EventRecord>), HarnessError> {
        let path = match self.out.take() {
            Some((path, mut w)) => {
                w.flush().map_err(|e| HarnessError::io(&path, e))?;
                Some(path)
            }
            None => None,
        };
        Ok((path, self.records))
    }
}
