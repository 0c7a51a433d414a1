use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::episode::EpisodeSetup;
use super::log::SlotInfo;
use super::HarnessError;
use crate::agents::{AgentKind, GreedyBot, NoopPolicy, Policy, RandomPolicy, ScriptedPolicy, SustainableHarvester};
use crate::comm::Category;
use crate::llm::{LlmAgent, LlmAgentConfig, LlmClient, LlmClientConfig, MemoryBank};
use crate::rng::derive_seed;
use crate::scenario::{ScenarioId, ScenarioOverrides, ScenarioSpec};
use crate::world::{Action, AgentId, WorldConfig};

pub const MAX_SLOTS: usize = 10;
pub const LONG_HORIZON: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSlotConfig {
    pub slot: u8,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub client: LlmClientConfig,
    pub agent: LlmAgentConfig,
}

/// A group's run configuration, read from TOML. Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub comm_enabled: bool,
    #[serde(default = "five")]
    pub episodes_per_scenario: u32,
    #[serde(default = "five")]
    pub baseline_episodes: u32,
    #[serde(default = "all_scenarios")]
    pub scenarios: Vec<ScenarioId>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Defaults to 0.005, or 0.0025 for horizons of 1000 ticks and more.
    #[serde(default)]
    pub regrowth_rate: Option<f64>,
    #[serde(default = "yes")]
    pub kill_emptied_trees: bool,
    #[serde(default = "default_window")]
    pub satiation_window: u64,
    #[serde(default = "yes")]
    pub include_bot_in_indicators: bool,
    #[serde(default = "default_tick_period")]
    pub tick_period_ms: u64,
    /// Decisions slower than this are replaced by noop. Off by default
    /// because it makes logs timing-dependent.
    #[serde(default)]
    pub policy_timeout_ms: Option<u64>,
    #[serde(default = "default_reconnect")]
    pub reconnect_window_ms: u64,
    #[serde(default)]
    pub map: Option<PathBuf>,
    #[serde(default)]
    pub scenario_overrides: Option<PathBuf>,
    pub agents: Vec<AgentSlotConfig>,
    #[serde(default)]
    pub llm: LlmSection,
}

fn yes() -> bool {
    true
}
fn five() -> u32 {
    5
}
fn all_scenarios() -> Vec<ScenarioId> {
    ScenarioId::all().collect()
}
fn default_horizon() -> u64 {
    250
}
fn default_window() -> u64 {
    50
}
fn default_tick_period() -> u64 {
    300
}
fn default_reconnect() -> u64 {
    30_000
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomParams {
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptedMessage {
    tick: u64,
    category: String,
    text: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScriptedParams {
    actions: Vec<Action>,
    messages: Vec<ScriptedMessage>,
}

fn params<T: for<'de> Deserialize<'de>>(slot: &AgentSlotConfig) -> Result<T, HarnessError> {
    toml::Value::Table(slot.params.clone())
        .try_into()
        .map_err(|e| HarnessError::Config(format!("slot {} ({}) params: {e}", slot.slot, slot.kind)))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parse and validate; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for p in [
            &mut cfg.map,
            &mut cfg.scenario_overrides,
            &mut cfg.llm.client.cache_dir,
            &mut cfg.llm.agent.prompts_dir,
        ]
        .into_iter()
        .flatten()
        {
            *p = resolve(base_dir, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks structural invariants; returns warnings for unusual but legal
    /// setups.
    pub fn validate(&self) -> Result<Vec<String>, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let n = self.agents.len();
        if !(2..=MAX_SLOTS).contains(&n) {
            return bad(format!("a group needs 2 to {MAX_SLOTS} agent slots, found {n}"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.slot as usize != i {
                return bad(format!(
                    "agent slots must be listed as 0..{n} in order; entry {i} has slot {}",
                    a.slot
                ));
            }
            match a.kind {
                AgentKind::Random => {
                    params::<RandomParams>(a)?;
                }
                AgentKind::Scripted => {
                    let p: ScriptedParams = params(a)?;
                    for m in &p.messages {
                        m.category
                            .parse::<Category>()
                            .map_err(|e| HarnessError::Config(format!("slot {}: {e}", a.slot)))?;
                    }
                }
                _ => {
                    params::<NoParams>(a)?;
                }
            }
        }
        if self.group_id.is_empty() || self.group_id.contains(['/', '\\']) {
            return bad(format!(
                "group_id `{}` must be a non-empty name without slashes",
                self.group_id
            ));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.satiation_window == 0 {
            return bad("satiation_window must be positive".into());
        }
        if self.episodes_per_scenario == 0 {
            return bad("episodes_per_scenario must be positive".into());
        }
        if let Some(r) = self.regrowth_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("regrowth_rate {r} is outside [0, 1]"));
            }
        }
        let consumers = self
            .agents
            .iter()
            .filter(|a| self.include_bot_in_indicators || a.kind != AgentKind::Bot)
            .count();
        if consumers < 2 {
            return bad("equality needs at least two counted consumers".into());
        }
        let mut warnings = Vec::new();
        let bots = self.agents.iter().filter(|a| a.kind == AgentKind::Bot).count();
        if bots != 1 {
            warnings.push(format!(
                "group `{}` has {bots} bot slots; the usual setup has one",
                self.group_id
            ));
        }
        for w in &warnings {
            tracing::warn!("{w}");
        }
        Ok(warnings)
    }

    pub fn regrowth(&self) -> f64 {
        self.regrowth_rate
            .unwrap_or(if self.horizon >= LONG_HORIZON { 0.0025 } else { 0.005 })
    }

    pub fn kinds(&self) -> Vec<AgentKind> {
        self.agents.iter().map(|a| a.kind).collect()
    }

    pub fn slots(&self) -> Vec<SlotInfo> {
        self.agents
            .iter()
            .map(|a| SlotInfo {
                slot: AgentId(a.slot),
                kind: a.kind,
            })
            .collect()
    }

    pub fn llm_slots(&self) -> Vec<AgentId> {
        self.agents
            .iter()
            .filter(|a| a.kind == AgentKind::Llm)
            .map(|a| AgentId(a.slot))
            .collect()
    }

    pub fn world_config(&self) -> Result<WorldConfig, HarnessError> {
        let mut w = match &self.map {
            Some(p) => WorldConfig::from_file(p)?,
            None => WorldConfig::default_map(),
        };
        w.horizon = self.horizon;
        w.regrowth_rate = self.regrowth();
        w.seed = self.seed;
        if w.spawns.len() < self.agents.len() {
            return Err(HarnessError::Config(format!(
                "map has {} spawn points for {} agents",
                w.spawns.len(),
                self.agents.len()
            )));
        }
        Ok(w)
    }

    /// Specs for the configured scenarios, overrides applied.
    pub fn scenario_specs(&self) -> Result<Vec<ScenarioSpec>, HarnessError> {
        let mut specs = self
            .scenarios
            .iter()
            .map(|&id| ScenarioSpec::for_id(id, self.horizon, self.regrowth(), self.seed))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(path) = &self.scenario_overrides {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            ScenarioOverrides::from_toml_str(&text)?.apply(&mut specs)?;
        }
        Ok(specs)
    }

    pub fn scenario_spec(&self, id: ScenarioId) -> Result<ScenarioSpec, HarnessError> {
        if id.is_baseline() {
            return Ok(ScenarioSpec::for_id(id, self.horizon, self.regrowth(), self.seed)?);
        }
        let mut specs = vec![ScenarioSpec::for_id(id, self.horizon, self.regrowth(), self.seed)?];
        if let Some(path) = &self.scenario_overrides {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let overrides = ScenarioOverrides::from_toml_str(&text)?;
            let relevant = ScenarioOverrides {
                scenarios: overrides.scenarios.into_iter().filter(|o| o.id == id).collect(),
            };
            relevant.apply(&mut specs)?;
        }
        Ok(specs.remove(0))
    }

    /// Setup for episode `index` of `scenario`, seeded from the scenario.
    pub fn episode_setup(
        &self,
        scenario: &ScenarioSpec,
        index: u32,
        log_path: Option<PathBuf>,
    ) -> Result<EpisodeSetup, HarnessError> {
        let seed = scenario.episode_seed(index);
        let mut world = self.world_config()?;
        world.seed = seed;
        world.horizon = scenario.horizon;
        world.regrowth_rate = scenario.regrowth_rate;
        Ok(EpisodeSetup {
            episode_id: format!("{}-{}-{index:03}", self.group_id, scenario.id),
            group_id: self.group_id.clone(),
            episode_index: index,
            seed,
            scenario: scenario.clone(),
            world,
            agents: self.slots(),
            comm_enabled: self.comm_enabled,
            kill_emptied_trees: self.kill_emptied_trees,
            satiation_window: self.satiation_window,
            include_bot_in_indicators: self.include_bot_in_indicators,
            policy_timeout: self.policy_timeout_ms.map(Duration::from_millis),
            log_path,
        })
    }

    /// Language-model agents for the `llm` slots, with memory banks persisted
    /// under `memory_dir` when given.
    pub fn build_llm_agents(
        &self,
        client: &LlmClient,
        memory_dir: Option<&Path>,
    ) -> Result<Vec<LlmAgent>, HarnessError> {
        self.llm_slots()
            .into_iter()
            .map(|slot| {
                let memory = match memory_dir {
                    Some(dir) => MemoryBank::open(&dir.join(format!("agent_{}.jsonl", slot.0)))?,
                    None => MemoryBank::in_memory(),
                };
                Ok(LlmAgent::new(slot, client.clone(), self.llm.agent.clone(), memory)?)
            })
            .collect()
    }

    pub fn llm_client(&self) -> LlmClient {
        LlmClient::new(self.llm.client.clone())
    }

    /// Policy for a slot that needs no external state.
    pub fn simple_policy(&self, slot: &AgentSlotConfig, episode_seed: u64) -> Result<Box<dyn Policy>, HarnessError> {
        Ok(match slot.kind {
            AgentKind::Bot => Box::new(GreedyBot::default()),
            AgentKind::Sustainable => Box::new(SustainableHarvester::default()),
            AgentKind::Noop => Box::new(NoopPolicy),
            AgentKind::Random => {
                let p: RandomParams = params(slot)?;
                let seed = p
                    .seed
                    .unwrap_or_else(|| derive_seed(episode_seed, 100 + slot.slot as u64));
                Box::new(RandomPolicy::new(seed))
            }
            AgentKind::Scripted => {
                let p: ScriptedParams = params(slot)?;
                let mut messages = BTreeMap::new();
                for m in p.messages {
                    let c = m
                        .category
                        .parse()
                        .map_err(|e| HarnessError::Config(format!("slot {}: {e}", slot.slot)))?;
                    messages.insert(m.tick, (c, m.text));
                }
                Box::new(ScriptedPolicy {
                    actions: p.actions,
                    messages,
                })
            }
            AgentKind::Llm | AgentKind::Human => {
                return Err(HarnessError::Config(format!(
                    "slot {} of kind {} needs an external driver",
                    slot.slot, slot.kind
                )))
            }
        })
    }

    /// One policy per slot. Language-model slots borrow from `llm_agents`
    /// (matched by slot); human slots are filled by `human`.
    pub fn policies<'a>(
        &self,
        episode_seed: u64,
        llm_agents: &'a mut [LlmAgent],
        mut human: impl FnMut(AgentId) -> Option<Box<dyn Policy + 'a>>,
    ) -> Result<Vec<Box<dyn Policy + 'a>>, HarnessError> {
        let mut llm: BTreeMap<AgentId, &'a mut LlmAgent> = llm_agents.iter_mut().map(|a| (a.slot(), a)).collect();
        let mut out: Vec<Box<dyn Policy + 'a>> = Vec::with_capacity(self.agents.len());
        for slot in &self.agents {
            let id = AgentId(slot.slot);
            match slot.kind {
                AgentKind::Llm => {
                    let agent = llm.remove(&id).ok_or_else(|| {
                        HarnessError::Config(format!("no language-model agent for slot {}", slot.slot))
                    })?;
                    out.push(Box::new(agent));
                }
                AgentKind::Human => {
                    let p = human(id).ok_or_else(|| {
                        HarnessError::Config(format!("slot {} is a human slot; use `sim serve`", slot.slot))
                    })?;
                    out.push(p);
                }
                _ => out.push(self.simple_policy(slot, episode_seed)?),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
group_id = "g1"
seed = 3
[[agents]]
slot = 0
kind = "sustainable"
[[agents]]
slot = 1
kind = "random"
params = { seed = 9 }
[[agents]]
slot = 2
kind = "bot"
"#;

    #[test]
    fn defaults() {
        let c = RunConfig::from_toml_str(BASIC, Path::new(".")).unwrap();
        assert_eq!(c.episodes_per_scenario, 5);
        assert_eq!(c.scenarios.len(), 9);
        assert_eq!(c.horizon, 250);
        assert_eq!(c.regrowth(), 0.005);
        assert!(c.comm_enabled);
        assert_eq!(c.tick_period_ms, 300);
        assert!(c.validate().unwrap().is_empty());
    }

    #[test]
    fn long_horizon_regrowth() {
        let text = BASIC.replace("seed = 3", "seed = 3\nhorizon = 1000");
        assert_eq!(
            RunConfig::from_toml_str(&text, Path::new(".")).unwrap().regrowth(),
            0.0025
        );
    }

    #[test]
    fn rejects_bad_slots() {
        let one = "group_id = \"g\"\n[[agents]]\nslot = 0\nkind = \"bot\"\n";
        assert!(RunConfig::from_toml_str(one, Path::new(".")).is_err());
        let gap = BASIC.replace("slot = 2", "slot = 5");
        assert!(RunConfig::from_toml_str(&gap, Path::new(".")).is_err());
        let unknown = BASIC.replace("params = { seed = 9 }", "params = { speed = 9 }");
        assert!(RunConfig::from_toml_str(&unknown, Path::new(".")).is_err());
        let field = format!("bogus = 1\n{BASIC}");
        assert!(RunConfig::from_toml_str(&field, Path::new(".")).is_err());
    }

    #[test]
    fn warns_on_bot_count() {
        let text = BASIC.replace("kind = \"bot\"", "kind = \"noop\"");
        let c = RunConfig::from_toml_str(&text, Path::new(".")).unwrap();
        assert_eq!(c.validate().unwrap().len(), 1);
    }

    #[test]
    fn human_slots_need_a_driver() {
        let text = BASIC.replace("kind = \"random\"\nparams = { seed = 9 }", "kind = \"human\"");
        let c = RunConfig::from_toml_str(&text, Path::new(".")).unwrap();
        assert!(c.policies(0, &mut [], |_| None).is_err());
        let ok = c
            .policies(0, &mut [], |_| Some(Box::new(NoopPolicy) as Box<dyn Policy>))
            .unwrap();
        assert_eq!(ok.len(), 3);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml_str(BASIC, Path::new("/")).unwrap();
        let again = RunConfig::from_toml_str(&c.to_toml_string(), Path::new("/")).unwrap();
        assert_eq!(c, again);
    }
}
