//! Q-learning over the deictic abstraction, plus the flat DQN baseline.

mod baseline;
mod curriculum;
mod deictic_agent;
pub mod replay;
pub mod schedule;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deictic::DeicticError;
use crate::env::{Action, EnvError, Observation, Rules, Stage, Theta};
use crate::geometry::Image;
use crate::nn::{ConvSpec, NnError};
use crate::scalar::Scalar;

pub use baseline::DqnAgent;
pub use curriculum::{run_curriculum, CurriculumOptions, CurveRow, LearningCurve, StageSummary};
pub use deictic_agent::DeicticAgent;
pub use replay::{ReplayBuffer, ReplayMode};
pub use schedule::EpsilonSchedule;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Deictic(#[from] DeicticError),
    #[error("no candidate actions")]
    EmptyCandidates,
    #[error("invalid learner config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    pub enabled: bool,
    /// Fraction of top-scoring positions expanded to full poses.
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    0.2
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            enabled: false,
            eta: default_eta(),
        }
    }
}

/// Convolutional tower and fully connected widths shared by every network
/// an agent builds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub conv: Vec<ConvSpec>,
    pub fc: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv: vec![
                ConvSpec {
                    channels: 16,
                    kernel: 3,
                    stride: 1,
                    pool: true,
                },
                ConvSpec {
                    channels: 32,
                    kernel: 3,
                    stride: 1,
                    pool: true,
                },
            ],
            fc: vec![48],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_replay")]
    pub replay: ReplayMode,
    #[serde(default)]
    pub hierarchy: HierarchyConfig,
    #[serde(default)]
    pub pruning: bool,
    #[serde(default)]
    pub use_value_net: bool,
    #[serde(default = "default_sync")]
    pub target_sync: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub network: Architecture,
}

fn default_gamma() -> f64 {
    0.9
}

fn default_capacity() -> usize {
    10_000
}

fn default_batch() -> usize {
    10
}

fn default_replay() -> ReplayMode {
    ReplayMode::Uniform
}

fn default_sync() -> usize {
    100
}

fn default_lr() -> f64 {
    3e-4
}

impl LearnerConfig {
    pub fn new(epsilon: EpsilonSchedule) -> Self {
        LearnerConfig {
            gamma: default_gamma(),
            epsilon,
            buffer_capacity: default_capacity(),
            batch_size: default_batch(),
            replay: default_replay(),
            hierarchy: HierarchyConfig::default(),
            pruning: false,
            use_value_net: false,
            target_sync: default_sync(),
            learning_rate: default_lr(),
            network: Architecture::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        self.epsilon.validate().map_err(LearnError::Config)?;
        if self.buffer_capacity == 0
            || self.batch_size == 0
            || self.batch_size > self.buffer_capacity
        {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if !(self.hierarchy.eta > 0.0 && self.hierarchy.eta <= 1.0) {
            return bad("hierarchy eta must lie in (0, 1]");
        }
        if let ReplayMode::Prioritized {
            alpha,
            beta,
            epsilon,
        } = self.replay
        {
            if alpha < 0.0 || !(0.0..=1.0).contains(&beta) || epsilon <= 0.0 {
                return bad("prioritized replay needs alpha >= 0, beta in [0, 1], epsilon > 0");
            }
        }
        if self.target_sync == 0 {
            return bad("target_sync must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Underlying state as the agent sees it: the last `k - 1` (image, action)
/// pairs, oldest first, plus the current image and effector bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Context<T> {
    pub history: Vec<(Image<T>, Action)>,
    pub image: Image<T>,
    pub theta: Theta,
}

impl<T: Scalar> Context<T> {
    /// The context after taking `action` here and observing `next`, keeping
    /// at most `keep` history entries.
    pub fn advance(&self, action: Action, next: Observation<T>, keep: usize) -> Self {
        let mut history = Vec::with_capacity(keep);
        if keep > 0 {
            let skip = (self.history.len() + 1).saturating_sub(keep);
            history.extend(self.history.iter().skip(skip).cloned());
            history.push((self.image.clone(), action));
        }
        Context {
            history,
            image: next.image,
            theta: next.theta,
        }
    }
}

/// Transitions are stored in ground form; abstract views are recomputed
/// whenever a minibatch is drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Context<T>,
    pub action: Action,
    pub reward: f64,
    pub next: Context<T>,
    /// Goal reached; time-limit truncation is not terminal.
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub loss: f64,
    pub max_abs_td: f64,
}

/// A curriculum stage plus per-stage learner switches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StagePlan {
    pub stage: Stage,
    /// Overrides the configured hierarchy flag from this stage on.
    pub hierarchy: Option<bool>,
}

impl From<Stage> for StagePlan {
    fn from(stage: Stage) -> Self {
        StagePlan {
            stage,
            hierarchy: None,
        }
    }
}

pub trait Agent<T: Scalar> {
    /// Number of past (image, action) pairs the agent conditions on.
    fn history_len(&self) -> usize;
    /// Switch to a (possibly new) action discretization.
    fn begin_stage(
        &mut self,
        plan: &StagePlan,
        rules: &Rules,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), LearnError>;
    fn act(
        &mut self,
        ctx: &Context<T>,
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action, LearnError>;
    /// Greedy choice with no learning side effects.
    fn greedy_action(&self, ctx: &Context<T>, rng: &mut ChaCha8Rng) -> Result<Action, LearnError>;
    fn remember(&mut self, t: Transition<T>);
    fn train_step(&mut self, rng: &mut ChaCha8Rng) -> Result<Option<TrainStats>, LearnError>;
    fn clear_replay(&mut self);
}

/// Indices attaining the maximum (exact comparison).
pub(crate) fn argmax_set<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut best = Vec::new();
    let mut max = T::neg_infinity();
    for (i, v) in values.iter().enumerate() {
        if *v > max {
            max = *v;
            best.clear();
            best.push(i);
        } else if *v == max {
            best.push(i);
        }
    }
    best
}

pub(crate) fn pick_tie<R: rand::Rng>(ties: &[usize], rng: &mut R) -> usize {
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_collects_ties() {
        assert_eq!(argmax_set(&[1.0f64, 3.0, 2.0, 3.0]), vec![1, 3]);
        assert_eq!(argmax_set(&[0.5f32]), vec![0]);
    }

    #[test]
    fn config_validation() {
        let mut c = LearnerConfig::new(EpsilonSchedule::new(1.0, 0.1, 100));
        assert!(c.validate().is_ok());
        c.gamma = 1.0;
        assert!(c.validate().is_err());
        c.gamma = 0.9;
        c.hierarchy.eta = 0.0;
        assert!(c.validate().is_err());
    }
}
