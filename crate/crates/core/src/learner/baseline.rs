use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    argmax_set, pick_tie, Agent, Context, LearnError, LearnerConfig, StagePlan, TrainStats,
    Transition,
};
use crate::env::{action_space, Action, Rules, Stage};
use crate::learner::replay::ReplayBuffer;
use crate::nn::{Adam, Batch, Network, NetworkSpec, Parameters};
use crate::scalar::Scalar;

/// Flat DQN: the raw image plus θ in, one dueling output per ground action.
#[derive(Clone, Debug)]
pub struct DqnAgent<T: Scalar> {
    cfg: LearnerConfig,
    stage: Stage,
    actions: Vec<Action>,
    net: Network,
    q: Parameters<T>,
    q_target: Parameters<T>,
    opt: Adam<T>,
    buffer: ReplayBuffer<Transition<T>>,
    train_steps: u64,
}

impl<T: Scalar> DqnAgent<T> {
    pub fn new(cfg: LearnerConfig, stage: Stage, rng: &mut ChaCha8Rng) -> Result<Self, LearnError> {
        cfg.validate()?;
        stage.grid.validate()?;
        let net = Self::network_for(&cfg, &stage)?;
        let q: Parameters<T> = net.init(rng.gen());
        Ok(DqnAgent {
            actions: action_space(&stage),
            q_target: q.clone(),
            opt: Adam::new(q.len(), cfg.learning_rate),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, cfg.replay),
            train_steps: 0,
            cfg,
            stage,
            net,
            q,
        })
    }

    fn network_for(cfg: &LearnerConfig, stage: &Stage) -> Result<Network, LearnError> {
        let out = stage.num_actions();
        Ok(Network::new(NetworkSpec {
            input_channels: 1,
            input_height: stage.grid.height,
            input_width: stage.grid.width,
            aux_width: 1,
            conv: cfg.network.conv.clone(),
            fc: cfg.network.fc.clone(),
            output: out,
            dueling: out > 1,
        })?)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.q
    }

    pub fn set_params(&mut self, p: Parameters<T>) {
        assert_eq!(p.len(), self.q.len(), "parameter shape");
        self.q_target = p.clone();
        self.q = p;
    }

    pub fn action_space(&self) -> &[Action] {
        &self.actions
    }

    fn push(batch: &mut Batch<T>, ctx: &Context<T>) {
        batch.push(ctx.image.as_slice(), &[T::lit(ctx.theta.bit() as f64)]);
    }

    pub fn q_values(&self, ctx: &Context<T>) -> Result<Vec<T>, LearnError> {
        let mut b = Batch::new();
        Self::push(&mut b, ctx);
        Ok(self.net.forward(&self.q, &b)?)
    }

    fn index_of(&self, a: &Action) -> usize {
        let g = &self.stage.grid;
        let m = &a.motion;
        ((m.y * g.width + m.x) * g.num_orientations + m.orientation) * 2 + a.effector as usize
    }
}

impl<T: Scalar> Agent<T> for DqnAgent<T> {
    fn history_len(&self) -> usize {
        0
    }

    /// Keeps parameters when the output layout is unchanged, otherwise
    /// starts a fresh network.
    fn begin_stage(
        &mut self,
        plan: &StagePlan,
        _rules: &Rules,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), LearnError> {
        let stage = &plan.stage;
        let net = Self::network_for(&self.cfg, stage)?;
        if net.spec() != self.net.spec() {
            self.q = net.init(rng.gen());
            self.q_target = self.q.clone();
            self.opt = Adam::new(self.q.len(), self.cfg.learning_rate);
            self.net = net;
        }
        self.stage = *stage;
        self.actions = action_space(stage);
        Ok(())
    }

    fn act(
        &mut self,
        ctx: &Context<T>,
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action, LearnError> {
        if rng.gen::<f64>() < epsilon {
            return Ok(self.actions[rng.gen_range(0..self.actions.len())]);
        }
        self.greedy_action(ctx, rng)
    }

    fn greedy_action(&self, ctx: &Context<T>, rng: &mut ChaCha8Rng) -> Result<Action, LearnError> {
        let values = self.q_values(ctx)?;
        Ok(self.actions[pick_tie(&argmax_set(&values), rng)])
    }

    fn remember(&mut self, t: Transition<T>) {
        self.buffer.push(t);
    }

    fn train_step(&mut self, rng: &mut ChaCha8Rng) -> Result<Option<TrainStats>, LearnError> {
        let n = self.cfg.batch_size;
        if self.buffer.len() < n {
            return Ok(None);
        }
        let sample = self.buffer.sample(n, rng);
        let width = self.actions.len();
        let gamma = T::lit(self.cfg.gamma);
        let mut states = Batch::new();
        let mut nexts = Batch::new();
        for &i in &sample.indices {
            let t = self.buffer.get(i);
            Self::push(&mut states, &t.state);
            Self::push(&mut nexts, &t.next);
        }
        let next_q = self.net.forward(&self.q_target, &nexts)?;
        let (out, cache) = self.net.forward_cached(&self.q, &states)?;
        let mut d = vec![T::zero(); out.len()];
        let mut td = Vec::with_capacity(n);
        let nn = T::lit(n as f64);
        for (row, &i) in sample.indices.iter().enumerate() {
            let t = self.buffer.get(i);
            let mut y = T::lit(t.reward);
            if !t.terminal {
                let max = next_q[row * width..(row + 1) * width]
                    .iter()
                    .copied()
                    .fold(T::neg_infinity(), T::max);
                y = y + gamma * max;
            }
            let col = row * width + self.index_of(&t.action);
            let e = out[col] - y;
            d[col] = T::lit(2.0 * sample.weights[row]) * e / nn;
            td.push(e.as_f64());
        }
        let g = self.net.backward(&self.q, &cache, &d)?;
        self.opt.step(&mut self.q, &g);
        self.buffer.update_priorities(&sample.indices, &td);
        self.train_steps += 1;
        if self.train_steps % self.cfg.target_sync as u64 == 0 {
            self.q_target = self.q.clone();
        }
        let loss = td
            .iter()
            .zip(&sample.weights)
            .map(|(e, w)| w * e * e)
            .sum::<f64>()
            / n as f64;
        Ok(Some(TrainStats {
            loss,
            max_abs_td: td.iter().fold(0.0f64, |m, e| m.max(e.abs())),
        }))
    }

    fn clear_replay(&mut self) {
        self.buffer.clear();
    }
}
