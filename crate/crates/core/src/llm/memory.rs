use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::scenario::ScenarioId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Observation,
    Action,
    MessageIn,
    MessageOut,
    Insight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub scenario: ScenarioId,
    pub tick: Option<u64>,
    pub kind: MemoryKind,
    pub text: String,
    pub importance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalWeights {
    pub recency: f64,
    pub importance: f64,
    pub similarity: f64,
    /// Per-entry recency decay.
    pub decay: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        Self {
            recency: 0.4,
            importance: 0.3,
            similarity: 0.3,
            decay: 0.99,
        }
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "are", "was", "were", "you", "your", "with", "that", "this", "have", "has", "had", "not",
    "but", "all", "any", "can", "from", "they", "them", "their", "there", "what", "when", "which", "who", "will",
    "would", "should", "could", "into", "onto", "than", "then", "our", "out", "its", "about", "how",
];

pub fn keywords(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 3)
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Append-only long-term memory, optionally mirrored to a JSON Lines file.
#[derive(Debug, Default)]
pub struct MemoryBank {
    entries: Vec<MemoryEntry>,
    keywords: Vec<BTreeSet<String>>,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl MemoryBank {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load `path` if it exists and append future entries to it.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
        let mut bank = Self::default();
        if path.exists() {
            let f = File::open(path).map_err(io)?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: MemoryEntry = serde_json::from_str(&line)
                    .map_err(|e| LlmError::Io(format!("{}:{}: {e}", path.display(), i + 1)))?;
                bank.push_entry(e);
            }
        } else if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        bank.file = Some((path.to_path_buf(), BufWriter::new(f)));
        Ok(bank)
    }

    /// Cut a persisted bank back to its first `len` entries (used when a run
    /// resumes from a checkpoint).
    pub fn truncate_file(path: &Path, len: usize) -> Result<(), LlmError> {
        if !path.exists() {
            return Ok(());
        }
        let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
        let text = std::fs::read_to_string(path).map_err(io)?;
        let kept: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).take(len).collect();
        let mut out = kept.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        std::fs::write(path, out).map_err(io)
    }

    fn push_entry(&mut self, e: MemoryEntry) {
        self.keywords.push(keywords(&e.text));
        self.entries.push(e);
    }

    pub fn append(&mut self, entry: MemoryEntry) -> Result<(), LlmError> {
        if let Some((path, w)) = &mut self.file {
            let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
            serde_json::to_writer(&mut *w, &entry).map_err(|e| LlmError::Io(e.to_string()))?;
            w.write_all(b"\n").map_err(io)?;
            w.flush().map_err(io)?;
        }
        self.push_entry(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insights(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter().filter(|e| e.kind == MemoryKind::Insight)
    }

    /// Top-`k` entries by `w_r·decay^age + w_i·importance + w_s·overlap`,
    /// where age counts newer entries and overlap is the Jaccard index of
    /// keyword sets. Ties keep entry order.
    pub fn retrieve(&self, query: &str, k: usize, w: &RetrievalWeights) -> Vec<&MemoryEntry> {
        let q = keywords(query);
        let n = self.entries.len();
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let age = (n - 1 - i) as i32;
                let s = w.recency * w.decay.powi(age)
                    + w.importance * e.importance
                    + w.similarity * jaccard(&q, &self.keywords[i]);
                (s, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored
            .into_iter()
            .take(k.max(1))
            .map(|(_, i)| &self.entries[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(text: &str, importance: f64) -> MemoryEntry {
        MemoryEntry {
            scenario: ScenarioId::new(1).unwrap(),
            tick: Some(0),
            kind: MemoryKind::Observation,
            text: text.into(),
            importance,
        }
    }

    #[test]
    fn singleton_and_empty() {
        let mut bank = MemoryBank::in_memory();
        assert!(bank.retrieve("anything", 3, &RetrievalWeights::default()).is_empty());
        bank.append(entry("north tree", 0.1)).unwrap();
        let got = bank.retrieve("unrelated words", 3, &RetrievalWeights::default());
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn newer_wins_without_overlap() {
        let mut bank = MemoryBank::in_memory();
        bank.append(entry("older note", 0.5)).unwrap();
        bank.append(entry("newer note", 0.5)).unwrap();
        let got = bank.retrieve("zebra", 1, &RetrievalWeights::default());
        assert_eq!(got[0].text, "newer note");
    }

    #[test]
    fn overlap_and_clamp() {
        let mut bank = MemoryBank::in_memory();
        bank.append(entry("bot keeps eating the last apple on the east tree", 0.5))
            .unwrap();
        for i in 0..5 {
            bank.append(entry(&format!("filler {i}"), 0.5)).unwrap();
        }
        let got = bank.retrieve("who is eating the last apple", 1, &RetrievalWeights::default());
        assert!(got[0].text.starts_with("bot keeps"));
        assert_eq!(bank.retrieve("x", 100, &RetrievalWeights::default()).len(), 6);
    }

    #[test]
    fn jaccard_values() {
        let a = keywords("apple tree north");
        let b = keywords("apple tree south");
        assert!((jaccard(&a, &b) - 0.5).abs() < 1e-12);
        assert_eq!(jaccard(&a, &BTreeSet::new()), 0.0);
        assert!((jaccard(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn persists_and_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem/agent_0.jsonl");
        {
            let mut bank = MemoryBank::open(&path).unwrap();
            for i in 0..4 {
                bank.append(entry(&format!("e{i}"), 0.2)).unwrap();
            }
        }
        let bank = MemoryBank::open(&path).unwrap();
        assert_eq!(bank.len(), 4);
        drop(bank);
        MemoryBank::truncate_file(&path, 2).unwrap();
        let bank = MemoryBank::open(&path).unwrap();
        assert_eq!(
            bank.entries().iter().map(|e| e.text.as_str()).collect::<Vec<_>>(),
            ["e0", "e1"]
        );
    }
}
