//! Resilience reports over one or more curriculum run directories.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::curriculum::BASELINE_DIR;
use super::log::EpisodeLog;
use super::HarnessError;
use crate::comm::{message_type_proportions, Category, Transcript};
use crate::event::Event;
use crate::metrics::{
    episode_indicators, group_mean_trajectory, heatmap_csv, resilience_breakdown, shared_baseline, temporal_median,
    Baseline, BaselineProvenance, EpisodeIndicators, Indicator, IndicatorOptions, ResilienceBreakdown,
};
use crate::scenario::ScenarioId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Scalar per indicator: median over groups of each group's temporal
    /// median of its mean undisrupted trajectory.
    Shared,
    /// The group's own mean undisrupted trajectory, tick by tick.
    Own,
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMode::Shared => "shared",
            BaselineMode::Own => "own",
        })
    }
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" => Ok(BaselineMode::Shared),
            "own" => Ok(BaselineMode::Own),
            other => Err(format!("unknown baseline mode `{other}` (expected shared or own)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRuns {
    pub t_d: usize,
    pub episodes: Vec<EpisodeIndicators>,
}

/// Indicator series of one group's valid episodes.
#[derive(Debug, Clone, Default)]
pub struct GroupRuns {
    pub group_id: String,
    pub baseline: Vec<EpisodeIndicators>,
    pub scenarios: BTreeMap<ScenarioId, ScenarioRuns>,
    pub transcripts: Vec<Transcript>,
}

fn mean_series(episodes: &[EpisodeIndicators], k: Indicator) -> Result<Vec<f64>, HarnessError> {
    let series: Vec<Vec<f64>> = episodes.iter().map(|e| e.values(k)).collect();
    let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    Ok(group_mean_trajectory(&refs)?)
}

impl GroupRuns {
    pub fn baseline_mean(&self, k: Indicator) -> Result<Vec<f64>, HarnessError> {
        if self.baseline.is_empty() {
            return Err(HarnessError::MissingBaseline(self.group_id.clone()));
        }
        mean_series(&self.baseline, k)
    }

    pub fn scenario_mean(&self, id: ScenarioId, k: Indicator) -> Result<Option<Vec<f64>>, HarnessError> {
        match self.scenarios.get(&id) {
            Some(s) if !s.episodes.is_empty() => mean_series(&s.episodes, k).map(Some),
            _ => Ok(None),
        }
    }
}

fn episode_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && !p.to_string_lossy().ends_with(".transcript.jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every episode under the given run directories, grouped by group id.
/// Invalid episodes are skipped with a warning.
pub fn load_group_runs(dirs: &[PathBuf]) -> Result<(Vec<GroupRuns>, Vec<String>), HarnessError> {
    let mut groups: BTreeMap<String, GroupRuns> = BTreeMap::new();
    let mut warnings = Vec::new();
    for dir in dirs {
        if !dir.is_dir() {
            return Err(HarnessError::Config(format!(
                "{} is not a run directory",
                dir.display()
            )));
        }
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| HarnessError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        for sub in subdirs {
            let name = sub
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let stage = if name == BASELINE_DIR {
                None
            } else if let Ok(id) = name.parse::<ScenarioId>() {
                Some(id)
            } else {
                continue;
            };
            for file in episode_files(&sub)? {
                let log = EpisodeLog::read(&file)?;
                if !log.is_valid() {
                    let w = format!("skipping invalid episode {}", file.display());
                    tracing::warn!("{w}");
                    warnings.push(w);
                    continue;
                }
                let opts = IndicatorOptions {
                    satiation_window: log.header.satiation_window,
                    include_bot: log.header.include_bot_in_indicators,
                };
                let indicators = episode_indicators(&log, &opts)?;
                let g = groups.entry(log.header.group_id.clone()).or_insert_with(|| GroupRuns {
                    group_id: log.header.group_id.clone(),
                    ..Default::default()
                });
                let messages = log
                    .records
                    .iter()
                    .filter_map(|r| match &r.event {
                        Event::MessageSent(m) => Some(m.clone()),
                        _ => None,
                    })
                    .collect();
                g.transcripts.push(Transcript {
                    episode_id: log.header.episode_id.clone(),
                    group_id: log.header.group_id.clone(),
                    messages,
                });
                let spec = &log.header.scenario;
                match stage {
                    None if spec.id.is_baseline() => g.baseline.push(indicators),
                    Some(id) if id == spec.id => {
                        g.scenarios
                            .entry(id)
                            .or_insert_with(|| ScenarioRuns {
                                t_d: spec.first_event().unwrap_or(0) as usize,
                                episodes: Vec::new(),
                            })
                            .episodes
                            .push(indicators);
                    }
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "{} holds an episode of {}",
                            sub.display(),
                            spec.id
                        )))
                    }
                }
            }
        }
    }
    Ok((groups.into_values().collect(), warnings))
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupResult {
    pub provenance: BaselineProvenance,
    pub baselines: BTreeMap<Indicator, Baseline>,
    pub scenarios: BTreeMap<ScenarioId, ResilienceBreakdown>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub mode: BaselineMode,
    pub groups: BTreeMap<String, GroupResult>,
    pub warnings: Vec<String>,
}

/// Baselines and resilience breakdowns for every group and scenario.
pub fn evaluate(groups: &[GroupRuns], mode: BaselineMode) -> Result<Evaluation, HarnessError> {
    let mut warnings = Vec::new();
    let mut baselines: BTreeMap<String, (BaselineProvenance, BTreeMap<Indicator, Baseline>)> = BTreeMap::new();
    match mode {
        BaselineMode::Own => {
            for g in groups {
                let mut b = BTreeMap::new();
                for k in Indicator::ALL {
                    b.insert(k, Baseline::Series(g.baseline_mean(k)?));
                }
                let prov = BaselineProvenance::OwnGroup {
                    group: g.group_id.clone(),
                };
                baselines.insert(g.group_id.clone(), (prov, b));
            }
        }
        BaselineMode::Shared => {
            let mut medians = BTreeMap::new();
            for g in groups {
                if g.baseline.is_empty() {
                    let w = format!(
                        "group `{}` has no baseline episodes; left out of the shared baseline",
                        g.group_id
                    );
                    tracing::warn!("{w}");
                    warnings.push(w);
                    continue;
                }
                let mut m = BTreeMap::new();
                for k in Indicator::ALL {
                    m.insert(k, temporal_median(&g.baseline_mean(k)?)?);
                }
                medians.insert(g.group_id.clone(), m);
            }
            if medians.is_empty() {
                let names: Vec<&str> = groups.iter().map(|g| g.group_id.as_str()).collect();
                return Err(HarnessError::MissingBaseline(names.join(", ")));
            }
            let set = shared_baseline(&medians)?;
            let b: BTreeMap<Indicator, Baseline> = set.values.iter().map(|(k, v)| (*k, Baseline::Scalar(*v))).collect();
            for g in groups {
                baselines.insert(g.group_id.clone(), (set.provenance.clone(), b.clone()));
            }
        }
    }

    let mut out = BTreeMap::new();
    for g in groups {
        let (provenance, b) = baselines.remove(&g.group_id).expect("baseline per group");
        let mut scenarios = BTreeMap::new();
        for (&id, runs) in &g.scenarios {
            if runs.episodes.is_empty() {
                continue;
            }
            let mut series = BTreeMap::new();
            for k in Indicator::ALL {
                series.insert(k, mean_series(&runs.episodes, k)?);
            }
            scenarios.insert(id, resilience_breakdown(&series, &b, runs.t_d)?);
        }
        out.insert(
            g.group_id.clone(),
            GroupResult {
                provenance,
                baselines: b,
                scenarios,
            },
        );
    }
    Ok(Evaluation {
        mode,
        groups: out,
        warnings,
    })
}

#[derive(Debug)]
pub struct ReportOutcome {
    pub out_dir: PathBuf,
    pub evaluation: Evaluation,
    pub files: Vec<PathBuf>,
}

fn write(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn series_csv(columns: &[(Indicator, Vec<f64>)]) -> String {
    let mut s = String::from("tick");
    for (k, _) in columns {
        write!(s, ",{}", k.name()).expect("write to string");
    }
    s.push('\n');
    let len = columns.first().map_or(0, |c| c.1.len());
    for t in 0..len {
        write!(s, "{t}").expect("write to string");
        for (_, v) in columns {
            write!(s, ",{}", v[t]).expect("write to string");
        }
        s.push('\n');
    }
    s
}

fn proportions_row(label: &str, transcripts: &[&Transcript], warnings: &mut Vec<String>) -> String {
    let mut row = label.to_string();
    match message_type_proportions(transcripts.iter().copied()) {
        Ok(p) => {
            for c in Category::ALL {
                write!(row, ",{:.6}", p[&c]).expect("write to string");
            }
        }
        Err(_) => {
            warnings.push(format!("no messages for `{label}`; proportions left blank"));
            row.push_str(&",".repeat(Category::ALL.len()));
        }
    }
    row.push('\n');
    row
}

/// Load `runs`, evaluate them and write `summary.json`, per-group heatmaps,
/// breakdowns and series, and `message_proportions.csv` under `out`.
pub fn compute_report(
    runs: &[PathBuf],
    mode: BaselineMode,
    out: &Path,
    force: bool,
) -> Result<ReportOutcome, HarnessError> {
    if out.exists() && std::fs::read_dir(out).map(|mut d| d.next().is_some()).unwrap_or(false) {
        if !force {
            return Err(HarnessError::Exists(out.to_path_buf()));
        }
        std::fs::remove_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    }
    let (groups, load_warnings) = load_group_runs(runs)?;
    if groups.is_empty() {
        return Err(HarnessError::Config("no valid episodes found".into()));
    }
    let mut evaluation = evaluate(&groups, mode)?;
    evaluation.warnings.splice(0..0, load_warnings);
    let mut files = Vec::new();

    for g in &groups {
        let result = &evaluation.groups[&g.group_id];
        let dir = out.join(&g.group_id);
        let rhos: BTreeMap<ScenarioId, f64> = result.scenarios.iter().map(|(id, b)| (*id, b.rho)).collect();
        let (csv, heat_warnings) = heatmap_csv(&rhos);
        evaluation
            .warnings
            .extend(heat_warnings.into_iter().map(|w| format!("{}: {w}", g.group_id)));
        write(&dir.join("heatmap.csv"), &csv, &mut files)?;
        for (id, b) in &result.scenarios {
            let text = serde_json::to_string_pretty(b).expect("breakdown serializes");
            write(&dir.join(format!("{id}.json")), &text, &mut files)?;
            let mut cols = Vec::new();
            for k in Indicator::ALL {
                cols.push((k, g.scenario_mean(*id, k)?.unwrap_or_default()));
            }
            write(
                &dir.join("series").join(format!("{id}.csv")),
                &series_csv(&cols),
                &mut files,
            )?;
        }
        if !g.baseline.is_empty() {
            let mut cols = Vec::new();
            for k in Indicator::ALL {
                cols.push((k, g.baseline_mean(k)?));
            }
            write(&dir.join("series").join("baseline.csv"), &series_csv(&cols), &mut files)?;
        }
    }

    let mut props = String::from("group");
    for c in Category::ALL {
        write!(props, ",{}", c.code()).expect("write to string");
    }
    props.push('\n');
    let mut warnings = Vec::new();
    for g in &groups {
        let refs: Vec<&Transcript> = g.transcripts.iter().collect();
        props.push_str(&proportions_row(&g.group_id, &refs, &mut warnings));
    }
    let all: Vec<&Transcript> = groups.iter().flat_map(|g| &g.transcripts).collect();
    props.push_str(&proportions_row("all", &all, &mut warnings));
    evaluation.warnings.extend(warnings);
    write(&out.join("message_proportions.csv"), &props, &mut files)?;

    let summary = serde_json::to_string_pretty(&evaluation).expect("summary serializes");
    write(&out.join("summary.json"), &summary, &mut files)?;
    Ok(ReportOutcome {
        out_dir: out.to_path_buf(),
        evaluation,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::IndicatorValues;

    fn episode(vals: &[f64]) -> EpisodeIndicators {
        EpisodeIndicators {
            source: "x".into(),
            ticks: vals
                .iter()
                .map(|&v| IndicatorValues {
                    apples: v,
                    trees: v,
                    equality: v,
                    satiation: v,
                })
                .collect(),
        }
    }

    fn group(name: &str, base: &[&[f64]], e1: &[&[f64]]) -> GroupRuns {
        GroupRuns {
            group_id: name.into(),
            baseline: base.iter().map(|v| episode(v)).collect(),
            scenarios: BTreeMap::from([(
                ScenarioId::new(1).unwrap(),
                ScenarioRuns {
                    t_d: 1,
                    episodes: e1.iter().map(|v| episode(v)).collect(),
                },
            )]),
            transcripts: Vec::new(),
        }
    }

    #[test]
    fn identical_runs_score_one() {
        let g = group("g", &[&[4.0, 4.0, 4.0]], &[&[4.0, 4.0, 4.0]]);
        for mode in [BaselineMode::Shared, BaselineMode::Own] {
            let e = evaluate(std::slice::from_ref(&g), mode).unwrap();
            assert_eq!(e.groups["g"].scenarios[&ScenarioId::new(1).unwrap()].rho, 1.0);
        }
    }

    #[test]
    fn own_mode_needs_baseline() {
        let g = group("g", &[], &[&[1.0, 1.0]]);
        assert!(matches!(
            evaluate(&[g], BaselineMode::Own),
            Err(HarnessError::MissingBaseline(_))
        ));
    }

    #[test]
    fn shared_median_of_group_medians() {
        let groups = [
            group("a", &[&[2.0, 2.0, 2.0]], &[&[2.0; 3]]),
            group("b", &[&[4.0, 4.0, 4.0]], &[&[2.0; 3]]),
            group("c", &[&[6.0, 6.0, 6.0]], &[&[2.0; 3]]),
        ];
        let e = evaluate(&groups, BaselineMode::Shared).unwrap();
        assert_eq!(e.groups["a"].baselines[&Indicator::Apples], Baseline::Scalar(4.0));
        assert!(matches!(e.groups["a"].provenance, BaselineProvenance::Shared { ref groups } if groups.len() == 3));
    }

    #[test]
    fn mode_names() {
        assert_eq!("own".parse::<BaselineMode>().unwrap(), BaselineMode::Own);
        assert!("mine".parse::<BaselineMode>().is_err());
    }
}
