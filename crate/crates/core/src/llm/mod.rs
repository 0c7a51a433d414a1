//! Language-model agents: observation serialization, scene summaries,
//! long-term memory, the chat-completions client and reflection.

mod agent;
pub mod ascii;
mod client;
pub mod grammar;
mod memory;
mod prompts;
mod reflection;
pub mod summary;

use thiserror::Error;

pub use agent::{LlmAgent, LlmAgentConfig};
pub use ascii::{serialize_ascii, AsciiView};
pub use client::{
    CacheMode, ChatMessage, FnTransport, HttpReply, LlmClient, LlmClientConfig, Sleeper, ThreadSleeper, Transport,
    UreqTransport,
};
pub use grammar::HighLevelAction;
pub use memory::{keywords, MemoryBank, MemoryEntry, MemoryKind, RetrievalWeights};
pub use prompts::{render, PromptSet};
pub use reflection::{generate_dynamic_questions, reflect, scenario_digest, QaPair, ReflectOptions, ReflectionReport};
pub use summary::{summarize_scene, SelfState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("replay cache has no entry for prompt {key}")]
    CacheMiss { key: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion: {0}")]
    BadResponse(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl LlmError {
    /// Errors that must stop the run rather than degrade to a fallback.
    pub fn is_fatal(&self) -> bool {
        matches!(self, LlmError::CacheMiss { .. } | LlmError::Config(_) | LlmError::Io(_))
    }
}
