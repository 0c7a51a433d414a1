//! Experiment orchestration: configuration, the episode loop, logs, replay,
//! curricula, reports and live sessions.

pub mod config;
pub mod curriculum;
pub mod episode;
pub mod log;
pub mod replay;
pub mod report;
pub mod session;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::comm::CommError;
use crate::llm::LlmError;
use crate::metrics::MetricsError;
use crate::scenario::ScenarioError;
use crate::world::WorldError;

pub use config::{AgentSlotConfig, LlmSection, RunConfig};
pub use curriculum::{run_curriculum, CurriculumOptions, CurriculumOutcome, Manifest};
pub use episode::{run_episode, EpisodeOutcome, EpisodeSetup, NullObserver, TickObserver};
pub use log::{EpisodeHeader, EpisodeLog, EpisodeSummary, LogWriter, SlotInfo, LOG_FORMAT};
pub use replay::{replay_log, replay_records, ReplayOutcome};
pub use report::{compute_report, evaluate, load_group_runs, BaselineMode, Evaluation, GroupRuns, ReportOutcome};
pub use session::{ClientFrame, FramePayload, HubOptions, Phase, ServerFrame, SessionHub};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("integrity error at tick {tick}: {detail}")]
    Integrity { tick: u64, detail: String },
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("no baseline episodes for group `{0}`; run the d=0 baseline episodes first")]
    MissingBaseline(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
}

impl HarnessError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
