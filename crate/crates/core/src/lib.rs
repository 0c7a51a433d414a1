//! Commons Harvest simulation with scripted, language-model and human agents,
//! plus cooperative-resilience measurement over disruption scenarios.
//!
//! The main entry points are [`harness::run_episode`],
//! [`harness::run_curriculum`], [`harness::compute_report`] and
//! [`harness::replay_log`].

pub mod agents;
pub mod comm;
pub mod event;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod world;

pub use agents::{AgentKind, Policy};
pub use comm::{Category, Channel, Message, Transcript};
pub use event::{Event, EventRecord};
pub use harness::{HarnessError, RunConfig};
pub use metrics::{Indicator, ResilienceBreakdown};
pub use scenario::{ScenarioId, ScenarioSpec};
pub use world::{Action, AgentId, Pos, WorldConfig, WorldState};
