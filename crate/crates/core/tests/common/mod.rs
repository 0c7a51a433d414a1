#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use harvest_core::harness::RunConfig;
use harvest_core::llm::{CacheMode, LlmClient, LlmClientConfig};

fn after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    prompt.find(marker).map(|i| &prompt[i + marker.len()..])
}

fn tick(prompt: &str) -> u64 {
    after(prompt, "Tick ")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

fn scenario(prompt: &str) -> String {
    after(prompt, "finished scenario ")
        .and_then(|s| s.split(['.', '\n']).next())
        .unwrap_or("E?")
        .to_string()
}

fn nearest_apple(prompt: &str) -> Option<String> {
    let rest = after(prompt, "Nearest apples at (")?;
    let end = rest.find(')')?;
    Some(rest[..end].to_string())
}

const LESSONS: [&str; 10] = [
    "watch the whole orchard before moving",
    "guard the northern grove until it refills",
    "split the eastern trees between two harvesters",
    "wait for regrowth after each storm",
    "announce every tree that drops below three apples",
    "follow the bot and eat ahead of it",
    "rotate between groves every twenty ticks",
    "never strip the southern saplings",
    "freeze anyone who takes a last apple",
    "agree early on who harvests where",
];

/// Deterministic stand-in for a chat model, keyed on the task line.
pub fn fake_model(prompt: &str) -> Result<String, u16> {
    let task = prompt.lines().next().unwrap_or_default();
    Ok(match task {
        "TASK: action" => match nearest_apple(prompt) {
            Some(cell) if tick(prompt) % 40 != 30 => format!("go_to ({cell})"),
            _ => "explore".into(),
        },
        "TASK: speak" => if tick(prompt).is_multiple_of(30) { "yes" } else { "no" }.into(),
        "TASK: message" => match nearest_apple(prompt) {
            Some(cell) => format!("Q: apples near ({cell}), please leave the last one on each tree"),
            None => "T: we agree to keep two apples on every tree".into(),
        },
        "TASK: answer" => {
            let question = after(prompt, "Question: ")
                .and_then(|q| q.lines().next())
                .unwrap_or_default();
            let topic: Vec<&str> = question.split_whitespace().take(4).collect();
            let s = scenario(prompt);
            let n: usize = s.trim_start_matches('E').parse().unwrap_or(0);
            format!(
                "After {s} ({}): {}.",
                topic.join(" ").to_lowercase(),
                LESSONS[n % LESSONS.len()]
            )
        }
        "TASK: questions" => {
            let s = scenario(prompt);
            (1..=10)
                .map(|i| format!("{i}. In {s}, what mattered most about tree {i}?"))
                .collect::<Vec<_>>()
                .join("\n")
        }
        "TASK: insights" => "1, 14".into(),
        _ => "stay".into(),
    })
}

pub fn fake_client(cache: &Path) -> LlmClient {
    let cfg = LlmClientConfig {
        cache_mode: CacheMode::Record,
        cache_dir: Some(cache.to_path_buf()),
        max_retries: 0,
        ..Default::default()
    };
    LlmClient::with_responder(cfg, Arc::new(fake_model))
}

/// Replay-only client whose endpoint cannot be reached.
pub fn replay_client(cache: &Path) -> LlmClient {
    LlmClient::new(LlmClientConfig {
        endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
        cache_mode: CacheMode::Replay,
        cache_dir: Some(cache.to_path_buf()),
        max_retries: 0,
        ..Default::default()
    })
}

pub fn slots(kinds: &[&str]) -> String {
    kinds
        .iter()
        .enumerate()
        .map(|(i, k)| format!("[[agents]]\nslot = {i}\nkind = \"{k}\"\n"))
        .collect()
}

pub fn config(head: &str, kinds: &[&str]) -> RunConfig {
    RunConfig::from_toml_str(&format!("{head}\n{}", slots(kinds)), Path::new(".")).expect("valid config")
}
