//! Sequential curriculum runs with a resumable progress manifest.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml                 resolved configuration
//! manifest.json               completed stages
//! baseline/episode_000.jsonl  undisrupted episodes
//! E1/episode_000.jsonl        one directory per scenario, in order
//! reflections/E1/agent_0.json
//! memory/agent_0.jsonl        persistent memory bank per language-model agent
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::episode::{run_episode, NullObserver};
use super::log::EpisodeLog;
use super::HarnessError;
use crate::llm::{LlmClient, MemoryBank, ReflectionReport};
use crate::scenario::{ScenarioId, ScenarioSpec};

pub const BASELINE_DIR: &str = "baseline";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct CurriculumOptions {
    /// Replace an existing run directory.
    pub force: bool,
    /// Continue an interrupted run from its manifest.
    pub resume: bool,
    /// Client for language-model slots; built from the config when absent.
    pub client: Option<LlmClient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub episodes: Vec<String>,
    pub reflections: Vec<String>,
    /// Memory bank sizes per language-model slot after the stage.
    pub memory_lengths: BTreeMap<u8, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub group_id: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&tmp, text).map_err(|e| HarnessError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
    }

    pub fn completed(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s.stage == stage)
    }
}

#[derive(Debug)]
pub struct CurriculumOutcome {
    pub out_dir: PathBuf,
    pub stages_run: Vec<String>,
    pub stages_skipped: Vec<String>,
    pub reflections: Vec<ReflectionReport>,
    pub manifest: Manifest,
    pub network_calls: u64,
}

fn stage_name(id: ScenarioId) -> String {
    if id.is_baseline() {
        BASELINE_DIR.to_string()
    } else {
        id.to_string()
    }
}

fn is_empty_dir(p: &Path) -> bool {
    std::fs::read_dir(p).map(|mut d| d.next().is_none()).unwrap_or(true)
}

fn remove_dir(p: &Path) -> Result<(), HarnessError> {
    if p.exists() {
        std::fs::remove_dir_all(p).map_err(|e| HarnessError::io(p, e))?;
    }
    Ok(())
}

/// Run the baseline episodes and then every configured scenario in order.
/// Language-model agents keep one memory bank for the whole run and reflect
/// after each scenario.
pub fn run_curriculum(
    cfg: &RunConfig,
    out: &Path,
    opts: &CurriculumOptions,
) -> Result<CurriculumOutcome, HarnessError> {
    let manifest_path = out.join(MANIFEST);
    let mut manifest = Manifest {
        group_id: cfg.group_id.clone(),
        stages: Vec::new(),
    };
    if out.exists() && !is_empty_dir(out) {
        if opts.resume {
            if manifest_path.exists() {
                manifest = Manifest::load(&manifest_path)?;
                if manifest.group_id != cfg.group_id {
                    return Err(HarnessError::Config(format!(
                        "{} belongs to group `{}`, not `{}`",
                        out.display(),
                        manifest.group_id,
                        cfg.group_id
                    )));
                }
            }
        } else if opts.force {
            remove_dir(out)?;
        } else {
            return Err(HarnessError::Exists(out.to_path_buf()));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| HarnessError::io(&cfg_path, e))?;

    let mut stages: Vec<ScenarioSpec> = Vec::new();
    if cfg.baseline_episodes > 0 {
        stages.push(cfg.scenario_spec(ScenarioId::BASELINE)?);
    }
    stages.extend(cfg.scenario_specs()?);

    let memory_dir = out.join("memory");
    let committed = manifest
        .stages
        .last()
        .map(|s| s.memory_lengths.clone())
        .unwrap_or_default();
    for slot in cfg.llm_slots() {
        let path = memory_dir.join(format!("agent_{}.jsonl", slot.0));
        MemoryBank::truncate_file(&path, committed.get(&slot.0).copied().unwrap_or(0))?;
    }
    for spec in &stages {
        let name = stage_name(spec.id);
        if !manifest.completed(&name) {
            remove_dir(&out.join(&name))?;
            remove_dir(&out.join("reflections").join(&name))?;
        }
    }

    let client = match (&opts.client, cfg.llm_slots().is_empty()) {
        (Some(c), _) => Some(c.clone()),
        (None, false) => Some(cfg.llm_client()),
        (None, true) => None,
    };
    let mut llm_agents = match &client {
        Some(c) => cfg.build_llm_agents(c, Some(&memory_dir))?,
        None => Vec::new(),
    };

    let mut outcome = CurriculumOutcome {
        out_dir: out.to_path_buf(),
        stages_run: Vec::new(),
        stages_skipped: Vec::new(),
        reflections: Vec::new(),
        manifest: Manifest::default(),
        network_calls: 0,
    };
    for spec in &stages {
        let name = stage_name(spec.id);
        if manifest.completed(&name) {
            outcome.stages_skipped.push(name);
            continue;
        }
        tracing::info!(group = %cfg.group_id, stage = %name, "running stage");
        let episodes = if spec.id.is_baseline() {
            cfg.baseline_episodes
        } else {
            cfg.episodes_per_scenario
        };
        let mut logs = Vec::with_capacity(episodes as usize);
        let mut files = Vec::new();
        for index in 0..episodes {
            let file = format!("{name}/episode_{index:03}.jsonl");
            let setup = cfg.episode_setup(spec, index, Some(out.join(&file)))?;
            let mut policies = cfg.policies(setup.seed, &mut llm_agents, |_| None)?;
            let result = run_episode(&setup, &mut policies, &mut NullObserver)?;
            drop(policies);
            logs.push(EpisodeLog::from_records(result.records)?);
            files.push(file);
        }
        let mut reflections = Vec::new();
        if !spec.id.is_baseline() {
            for agent in &mut llm_agents {
                let report = agent.reflect(spec.id, &logs)?;
                let file = format!("reflections/{name}/agent_{}.json", agent.slot().0);
                let path = out.join(&file);
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
                }
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
                reflections.push(file);
                outcome.reflections.push(report);
            }
        }
        manifest.stages.push(StageRecord {
            stage: name.clone(),
            episodes: files,
            reflections,
            memory_lengths: llm_agents.iter().map(|a| (a.slot().0, a.memory().len())).collect(),
        });
        manifest.save(&manifest_path)?;
        outcome.stages_run.push(name);
    }
    outcome.network_calls = client.map_or(0, |c| c.network_calls());
    outcome.manifest = manifest;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scenarios: &str) -> RunConfig {
        let text = format!(
            "group_id = \"g\"\nhorizon = 40\nepisodes_per_scenario = 2\nbaseline_episodes = 1\nscenarios = {scenarios}\n\
             [[agents]]\nslot = 0\nkind = \"sustainable\"\n[[agents]]\nslot = 1\nkind = \"random\"\n[[agents]]\nslot = 2\nkind = \"bot\"\n"
        );
        RunConfig::from_toml_str(&text, Path::new(".")).unwrap()
    }

    #[test]
    fn layout_and_refusal() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let c = cfg("[\"E1\", \"E2\"]");
        let o = run_curriculum(&c, &out, &CurriculumOptions::default()).unwrap();
        assert_eq!(o.stages_run, ["baseline", "E1", "E2"]);
        for f in [
            "baseline/episode_000.jsonl",
            "E1/episode_001.jsonl",
            "E2/episode_000.jsonl",
            "config.toml",
            "manifest.json",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        assert!(matches!(
            run_curriculum(&c, &out, &CurriculumOptions::default()),
            Err(HarnessError::Exists(_))
        ));
        let forced = CurriculumOptions {
            force: true,
            ..Default::default()
        };
        assert_eq!(run_curriculum(&c, &out, &forced).unwrap().stages_run.len(), 3);
    }

    #[test]
    fn resume_restarts_the_interrupted_stage() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let c = cfg("[\"E1\", \"E2\", \"E3\"]");
        run_curriculum(&c, &out, &CurriculumOptions::default()).unwrap();
        let e1 = std::fs::read(out.join("E1/episode_000.jsonl")).unwrap();
        let e1_time = std::fs::metadata(out.join("E1/episode_000.jsonl"))
            .unwrap()
            .modified()
            .unwrap();
        let e3 = std::fs::read(out.join("E3/episode_000.jsonl")).unwrap();

        // Simulate a kill during E3: drop it from the manifest and leave a partial file.
        let mut m = Manifest::load(&out.join(MANIFEST)).unwrap();
        m.stages.pop();
        m.save(&out.join(MANIFEST)).unwrap();
        std::fs::remove_file(out.join("E3/episode_001.jsonl")).unwrap();
        std::fs::write(out.join("E3/episode_000.jsonl"), "partial").unwrap();

        let resume = CurriculumOptions {
            resume: true,
            ..Default::default()
        };
        let o = run_curriculum(&c, &out, &resume).unwrap();
        assert_eq!(o.stages_skipped, ["baseline", "E1", "E2"]);
        assert_eq!(o.stages_run, ["E3"]);
        assert_eq!(std::fs::read(out.join("E1/episode_000.jsonl")).unwrap(), e1);
        assert_eq!(
            std::fs::metadata(out.join("E1/episode_000.jsonl"))
                .unwrap()
                .modified()
                .unwrap(),
            e1_time
        );
        assert_eq!(std::fs::read(out.join("E3/episode_000.jsonl")).unwrap(), e3);
        assert!(out.join("E3/episode_001.jsonl").exists());
    }
}
