use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, Context, EpsilonSchedule, LearnError, StagePlan, Transition};
use crate::env::{MoveEffectEnv, Rules};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumOptions {
    /// Rolling window (episodes) for the solved test.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Move to the next stage (or stop, after the last) once solved.
    #[serde(default = "yes")]
    pub advance_on_solve: bool,
    /// Maximum episodes per stage.
    pub episodes_per_stage: usize,
    /// Optional cap on environment steps over the whole run.
    #[serde(default)]
    pub step_budget: Option<u64>,
}

fn default_window() -> usize {
    100
}

fn default_threshold() -> f64 {
    0.8
}

fn yes() -> bool {
    true
}

impl CurriculumOptions {
    pub fn new(episodes_per_stage: usize) -> Self {
        CurriculumOptions {
            window: default_window(),
            threshold: default_threshold(),
            advance_on_solve: true,
            episodes_per_stage,
            step_budget: None,
        }
    }
}

/// One learning-curve record.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub stage: usize,
    /// Episode number over the whole run, from 1.
    pub episode: usize,
    /// Cumulative environment steps over the whole run.
    pub steps: u64,
    pub reward: f64,
    pub epsilon: f64,
    pub mean_loss: Option<f64>,
}

impl CurveRow {
    pub const HEADER: &'static str = "stage,episode,steps,reward,epsilon,mean_loss";

    pub fn to_csv(&self) -> String {
        let loss = self
            .mean_loss
            .map(|l| format!("{l:.9e}"))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{:.6},{}",
            self.stage, self.episode, self.steps, self.reward, self.epsilon, loss
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub episodes: usize,
    /// Stage-local episode count at which the rolling mean first reached the
    /// threshold.
    pub solved_at: Option<usize>,
    /// Best full-window rolling mean reward seen in the stage.
    pub best_rolling: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
    pub stages: Vec<StageSummary>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CurveRow::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn total_steps(&self) -> u64 {
        self.rows.last().map(|r| r.steps).unwrap_or(0)
    }
}

/// Train `agent` through `stages` in order. Parameters carry over between
/// stages; the replay buffer is cleared and epsilon restarts at each switch.
///
/// Random draws per episode: the reset seed, then whatever the agent draws
/// while acting and training.
pub fn run_curriculum<T: Scalar, A: Agent<T>>(
    agent: &mut A,
    stages: &[StagePlan],
    rules: &Rules,
    epsilon: &EpsilonSchedule,
    opts: &CurriculumOptions,
    rng: &mut ChaCha8Rng,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<LearningCurve, LearnError> {
    let mut curve = LearningCurve::default();
    let mut steps: u64 = 0;
    let mut episode = 0;
    let keep = agent.history_len();
    'stages: for (si, plan) in stages.iter().enumerate() {
        agent.begin_stage(plan, rules, rng)?;
        agent.clear_replay();
        let mut env = MoveEffectEnv::new(plan.stage, rules.clone())?;
        let mut recent: VecDeque<f64> = VecDeque::with_capacity(opts.window + 1);
        let mut summary = StageSummary {
            stage: si + 1,
            episodes: 0,
            solved_at: None,
            best_rolling: 0.0,
            steps: 0,
        };
        for local in 0..opts.episodes_per_stage {
            if opts.step_budget.is_some_and(|b| steps >= b) {
                curve.stages.push(summary);
                break 'stages;
            }
            let eps = epsilon.value(local);
            let obs = env.reset::<T>(rng.gen())?;
            let mut ctx = Context {
                history: Vec::new(),
                image: obs.image,
                theta: obs.theta,
            };
            let mut reward = 0.0;
            let mut losses = 0.0;
            let mut trained = 0usize;
            while !env.is_done() {
                let action = agent.act(&ctx, eps, rng)?;
                let res = env.step::<T>(&action)?;
                steps += 1;
                summary.steps += 1;
                reward += res.reward;
                let next = ctx.advance(action, res.observation, keep);
                let terminal = res.done && res.reward > 0.0;
                agent.remember(Transition {
                    state: ctx,
                    action,
                    reward: res.reward,
                    next: next.clone(),
                    terminal,
                });
                if let Some(stats) = agent.train_step(rng)? {
                    losses += stats.loss;
                    trained += 1;
                }
                ctx = next;
            }
            episode += 1;
            summary.episodes += 1;
            let row = CurveRow {
                stage: si + 1,
                episode,
                steps,
                reward,
                epsilon: eps,
                mean_loss: (trained > 0).then(|| losses / trained as f64),
            };
            on_row(&row);
            curve.rows.push(row);
            recent.push_back(reward);
            if recent.len() > opts.window {
                recent.pop_front();
            }
            if recent.len() == opts.window {
                let mean = recent.iter().sum::<f64>() / opts.window as f64;
                summary.best_rolling = summary.best_rolling.max(mean);
                if mean >= opts.threshold && summary.solved_at.is_none() {
                    summary.solved_at = Some(local + 1);
                    if opts.advance_on_solve {
                        break;
                    }
                }
            }
        }
        curve.stages.push(summary);
    }
    Ok(curve)
}
