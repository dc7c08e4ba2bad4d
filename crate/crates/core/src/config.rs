//! Experiment configuration (TOML). Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deictic::DeicticConfig;
use crate::env::{GridSpec, Rules, Stage, Task};
use crate::homomorphism::HomCheckOptions;
use crate::learner::{CurriculumOptions, LearnerConfig, StagePlan};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Deictic,
    Baseline,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub task: Task,
    pub width: usize,
    pub height: usize,
    #[serde(default = "one")]
    pub orientations: usize,
    #[serde(default = "two")]
    pub objects: usize,
    /// Switch the value-function hierarchy on or off from this stage on.
    #[serde(default)]
    pub hierarchy: Option<bool>,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl StageConfig {
    pub fn stage(&self) -> Stage {
        Stage {
            task: self.task,
            grid: GridSpec {
                width: self.width,
                height: self.height,
                num_orientations: self.orientations,
                cell_size: 1.0,
            },
            num_objects: self.objects,
        }
    }

    pub fn plan(&self) -> StagePlan {
        StagePlan {
            stage: self.stage(),
            hierarchy: self.hierarchy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomcheckSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_bound")]
    pub state_bound: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_bound() -> usize {
    1_000_000
}

fn default_iterations() -> usize {
    100_000
}

impl Default for HomcheckSettings {
    fn default() -> Self {
        HomcheckSettings {
            tol: default_tol(),
            state_bound: default_bound(),
            max_iterations: default_iterations(),
        }
    }
}

fn default_deictic() -> DeicticConfig {
    DeicticConfig::new(2, 3)
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub agent: AgentKind,
    #[serde(default)]
    pub precision: Precision,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rules: Rules,
    #[serde(default = "default_deictic")]
    pub deictic: DeicticConfig,
    pub learner: LearnerConfig,
    pub curriculum: CurriculumOptions,
    pub stages: Vec<StageConfig>,
    #[serde(default)]
    pub homcheck: HomcheckSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.stages.is_empty() {
            return Err(invalid("stages", "at least one stage is required"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.stage()
                .grid
                .validate()
                .map_err(|e| invalid(&format!("stages[{i}]"), e))?;
            if s.objects == 0 {
                return Err(invalid(&format!("stages[{i}].objects"), "must be positive"));
            }
        }
        self.deictic.validate().map_err(|e| invalid("deictic", e))?;
        self.learner.validate().map_err(|e| invalid("learner", e))?;
        if self.curriculum.window == 0 {
            return Err(invalid("curriculum.window", "must be positive"));
        }
        if self.curriculum.episodes_per_stage == 0 {
            return Err(invalid("curriculum.episodes_per_stage", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.curriculum.threshold) {
            return Err(invalid("curriculum.threshold", "must lie in [0, 1]"));
        }
        if !(self.homcheck.tol > 0.0) {
            return Err(invalid("homcheck.tol", "must be positive"));
        }
        if self.rules.horizon == 0 {
            return Err(invalid("rules.horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn plans(&self) -> Vec<StagePlan> {
        self.stages.iter().map(StageConfig::plan).collect()
    }

    pub fn homcheck_options(&self) -> HomCheckOptions {
        HomCheckOptions {
            k: self.deictic.k,
            crop: self.deictic.crop,
            gamma: self.learner.gamma,
            tol: self.homcheck.tol,
            state_bound: self.homcheck.state_bound,
            max_iterations: self.homcheck.max_iterations,
        }
    }

    /// Keep only the listed stages (1-based, in the given order).
    pub fn select_stages(&mut self, picks: &[usize]) -> Result<(), ConfigError> {
        let mut out = Vec::with_capacity(picks.len());
        for &p in picks {
            if p == 0 || p > self.stages.len() {
                return Err(invalid(
                    "stages",
                    format!("stage {p} out of range 1..={}", self.stages.len()),
                ));
            }
            out.push(self.stages[p - 1]);
        }
        if out.is_empty() {
            return Err(invalid("stages", "empty stage selection"));
        }
        self.stages = out;
        Ok(())
    }
}

/// Parse a stage list such as `4,5` or `1-3`.
pub fn parse_stage_list(s: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || invalid("--stages", format!("cannot parse `{part}`"));
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
agent = "deictic"
seed = 3

[learner.epsilon]
start = 1.0
end = 0.1
decay_episodes = 100

[curriculum]
episodes_per_stage = 50

[[stages]]
task = "grid-disk"
width = 3
height = 3
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.learner.buffer_capacity, 10_000);
        assert_eq!(c.learner.batch_size, 10);
        assert_eq!(c.learner.learning_rate, 3e-4);
        assert_eq!(c.learner.gamma, 0.9);
        assert_eq!(c.curriculum.window, 100);
        assert_eq!(c.curriculum.threshold, 0.8);
        assert_eq!(c.rules.horizon, 10);
        assert_eq!(c.deictic.k, 2);
        assert_eq!(c.stages[0].stage(), Stage::grid_disk(3));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\nsed = 4");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("sed"), "{err}");
        let text = MINIMAL.replace("decay_episodes = 100", "decay_episodes = 100\nfloor = 0.2");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("floor"), "{err}");
    }

    #[test]
    fn invalid_value_names_key() {
        let text = MINIMAL.replace("episodes_per_stage = 50", "episodes_per_stage = 0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("curriculum.episodes_per_stage"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn stage_lists() {
        assert_eq!(parse_stage_list("1-3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_stage_list("4, 5").unwrap(), vec![4, 5]);
        assert!(parse_stage_list("3-1").is_err());
        assert!(parse_stage_list("x").is_err());
    }
}
