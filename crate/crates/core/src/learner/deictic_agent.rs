use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    argmax_set, pick_tie, Agent, Context, LearnError, LearnerConfig, StagePlan, TrainStats,
    Transition,
};
use crate::deictic::{fix, AbstractAction, CropTable, DeicticConfig, EffectorTag};
use crate::env::{action_space, Action, Rules, Stage};
use crate::geometry::Image;
use crate::learner::replay::ReplayBuffer;
use crate::nn::{Adam, Batch, Network, NetworkSpec, Parameters};
use crate::scalar::Scalar;

/// Abstract-state encoding shared by Q′, Q1′ and V′ inputs: history patches
/// stacked as channels, plus θ and one-hot history tags as aux features.
#[derive(Clone, Debug, PartialEq)]
pub struct StateFeatures<T> {
    pub history: Vec<T>,
    pub aux: Vec<T>,
}

/// DQN in the deictic abstract space. Q′ (also the fine level Q2′ of the
/// hierarchy) scores `(f(s), g_s(a))`; Q1′ scores fix-projected actions; V′
/// scores `f(s)` alone.
#[derive(Clone, Debug)]
pub struct DeicticAgent<T: Scalar> {
    cfg: LearnerConfig,
    deictic: DeicticConfig,
    stage: Stage,
    table: CropTable,
    actions: Vec<Action>,
    q_net: Network,
    v_net: Network,
    q: Parameters<T>,
    q_target: Parameters<T>,
    q_opt: Adam<T>,
    q1: Parameters<T>,
    q1_opt: Adam<T>,
    v: Parameters<T>,
    v_opt: Adam<T>,
    buffer: ReplayBuffer<Transition<T>>,
    train_steps: u64,
}

fn one_hot<T: Scalar>(tag: EffectorTag, out: &mut Vec<T>) {
    for i in 0..3 {
        out.push(if tag.index() == i {
            T::one()
        } else {
            T::zero()
        });
    }
}

impl<T: Scalar> DeicticAgent<T> {
    pub fn new(
        cfg: LearnerConfig,
        deictic: DeicticConfig,
        stage: Stage,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, LearnError> {
        cfg.validate()?;
        deictic.validate()?;
        stage.grid.validate()?;
        let w = deictic.crop.window;
        let k = deictic.k;
        let state_aux = 1 + 3 * (k - 1);
        let q_net = Network::new(NetworkSpec {
            input_channels: k,
            input_height: w,
            input_width: w,
            aux_width: state_aux + 3,
            conv: cfg.network.conv.clone(),
            fc: cfg.network.fc.clone(),
            output: 1,
            dueling: false,
        })?;
        let v_net = Network::new(NetworkSpec {
            input_channels: k - 1,
            input_height: if k > 1 { w } else { 0 },
            input_width: if k > 1 { w } else { 0 },
            aux_width: state_aux,
            conv: if k > 1 {
                cfg.network.conv.clone()
            } else {
                Vec::new()
            },
            fc: cfg.network.fc.clone(),
            output: 1,
            dueling: false,
        })?;
        let q: Parameters<T> = q_net.init(rng.gen());
        let q1: Parameters<T> = q_net.init(rng.gen());
        let v: Parameters<T> = v_net.init(rng.gen());
        let lr = cfg.learning_rate;
        Ok(DeicticAgent {
            table: CropTable::new(deictic.crop, stage.grid.num_orientations),
            actions: action_space(&stage),
            q_target: q.clone(),
            q_opt: Adam::new(q.len(), lr),
            q1_opt: Adam::new(q1.len(), lr),
            v_opt: Adam::new(v.len(), lr),
            buffer: ReplayBuffer::new(cfg.buffer_capacity, cfg.replay),
            train_steps: 0,
            cfg,
            deictic,
            stage,
            q_net,
            v_net,
            q,
            q1,
            v,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn deictic_config(&self) -> &DeicticConfig {
        &self.deictic
    }

    pub fn stage(&self) -> &Stage {
        &self.stage
    }

    pub fn q_network(&self) -> &Network {
        &self.q_net
    }

    pub fn v_network(&self) -> &Network {
        &self.v_net
    }

    pub fn q_params(&self) -> &Parameters<T> {
        &self.q
    }

    pub fn q1_params(&self) -> &Parameters<T> {
        &self.q1
    }

    pub fn v_params(&self) -> &Parameters<T> {
        &self.v
    }

    pub fn set_q_params(&mut self, p: Parameters<T>) {
        assert_eq!(p.len(), self.q.len(), "Q parameter shape");
        self.q_target = p.clone();
        self.q = p;
    }

    pub fn set_q1_params(&mut self, p: Parameters<T>) {
        assert_eq!(p.len(), self.q1.len(), "Q1 parameter shape");
        self.q1 = p;
    }

    pub fn set_v_params(&mut self, p: Parameters<T>) {
        assert_eq!(p.len(), self.v.len(), "V parameter shape");
        self.v = p;
    }

    pub fn set_hierarchy(&mut self, enabled: bool) {
        self.cfg.hierarchy.enabled = enabled;
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition<T>> {
        &self.buffer
    }

    pub fn action_space(&self) -> &[Action] {
        &self.actions
    }

    /// Candidate set for `image`: the pruned action space when pruning is on,
    /// falling back to the full space if pruning leaves nothing.
    pub fn candidates(&self, image: &Image<T>) -> Vec<Action> {
        if self.cfg.pruning {
            let kept = self.table.prune(&self.actions, image);
            if !kept.is_empty() {
                return kept;
            }
        }
        self.actions.clone()
    }

    pub fn abstract_action(&self, image: &Image<T>, a: &Action) -> AbstractAction<T> {
        self.table.action_map(image, a)
    }

    pub fn state_features(&self, ctx: &Context<T>) -> StateFeatures<T> {
        let keep = self.deictic.k - 1;
        let w = self.deictic.crop.window;
        let used = ctx.history.len().min(keep);
        let mut history = Vec::with_capacity(keep * w * w);
        let mut aux = Vec::with_capacity(1 + 3 * keep);
        aux.push(T::lit(ctx.theta.bit() as f64));
        for _ in used..keep {
            history.extend(std::iter::repeat(T::zero()).take(w * w));
            one_hot(EffectorTag::None, &mut aux);
        }
        for (img, a) in &ctx.history[ctx.history.len() - used..] {
            let aa = self.table.action_map(img, a);
            history.extend_from_slice(aa.patch.values());
            one_hot(aa.effector, &mut aux);
        }
        StateFeatures { history, aux }
    }

    fn push_q(batch: &mut Batch<T>, sf: &StateFeatures<T>, aa: &AbstractAction<T>) {
        batch.images.extend_from_slice(aa.patch.values());
        batch.images.extend_from_slice(&sf.history);
        batch.aux.extend_from_slice(&sf.aux);
        one_hot(aa.effector, &mut batch.aux);
        batch.len += 1;
    }

    fn push_v(batch: &mut Batch<T>, sf: &StateFeatures<T>) {
        batch.images.extend_from_slice(&sf.history);
        batch.aux.extend_from_slice(&sf.aux);
        batch.len += 1;
    }

    /// One batched forward pass over the distinct abstract actions among
    /// `actions`; returns a value per action.
    fn evaluate(
        &self,
        params: &Parameters<T>,
        sf: &StateFeatures<T>,
        image: &Image<T>,
        actions: &[Action],
        fixed: bool,
    ) -> Result<Vec<T>, LearnError> {
        let mut slot_of: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut batch = Batch::new();
        let mut slots = Vec::with_capacity(actions.len());
        for a in actions {
            let a = if fixed {
                Action {
                    motion: fix(&a.motion),
                    effector: a.effector,
                }
            } else {
                *a
            };
            let aa = self.table.action_map(image, &a);
            let next = batch.len;
            let slot = *slot_of.entry(aa.key()).or_insert_with(|| {
                Self::push_q(&mut batch, sf, &aa);
                next
            });
            slots.push(slot);
        }
        let out = self.q_net.forward(params, &batch)?;
        Ok(slots.into_iter().map(|s| out[s]).collect())
    }

    /// Q′ values of `actions` in `ctx`.
    pub fn q_values(&self, ctx: &Context<T>, actions: &[Action]) -> Result<Vec<T>, LearnError> {
        self.evaluate(
            &self.q,
            &self.state_features(ctx),
            &ctx.image,
            actions,
            false,
        )
    }

    /// Q1′ values of the fix-projected `actions`.
    pub fn q1_values(&self, ctx: &Context<T>, actions: &[Action]) -> Result<Vec<T>, LearnError> {
        self.evaluate(
            &self.q1,
            &self.state_features(ctx),
            &ctx.image,
            actions,
            true,
        )
    }

    pub fn value(&self, ctx: &Context<T>) -> Result<T, LearnError> {
        let mut b = Batch::new();
        Self::push_v(&mut b, &self.state_features(ctx));
        Ok(self.v_net.forward(&self.v, &b)?[0])
    }

    /// Exhaustive greedy choice over `candidates`, uniform tie-break.
    pub fn greedy(
        &self,
        ctx: &Context<T>,
        candidates: &[Action],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Action, T), LearnError> {
        if candidates.is_empty() {
            return Err(LearnError::EmptyCandidates);
        }
        let values = self.q_values(ctx, candidates)?;
        let i = pick_tie(&argmax_set(&values), rng);
        Ok((candidates[i], values[i]))
    }

    /// Two-level search: rank positions by Q1′ at the fixed orientation,
    /// keep the top `ceil(eta * positions)`, then maximize Q′ over every
    /// candidate pose at the kept positions.
    pub fn hierarchical_argmax(
        &self,
        ctx: &Context<T>,
        candidates: &[Action],
        eta: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Action, T), LearnError> {
        if candidates.is_empty() {
            return Err(LearnError::EmptyCandidates);
        }
        let sf = self.state_features(ctx);
        let mut position_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pos_index = Vec::with_capacity(candidates.len());
        for a in candidates {
            let n = position_of.len();
            pos_index.push(*position_of.entry((a.motion.x, a.motion.y)).or_insert(n));
        }
        let npos = position_of.len();
        let coarse = self.evaluate(&self.q1, &sf, &ctx.image, candidates, true)?;
        let mut score = vec![T::neg_infinity(); npos];
        for (p, v) in pos_index.iter().zip(&coarse) {
            if *v > score[*p] {
                score[*p] = *v;
            }
        }
        let keep = ((eta * npos as f64).ceil() as usize).clamp(1, npos);
        let mut order: Vec<usize> = (0..npos).collect();
        order.sort_by(|a, b| {
            score[*b]
                .partial_cmp(&score[*a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut kept = vec![false; npos];
        for &p in &order[..keep] {
            kept[p] = true;
        }
        let expanded: Vec<Action> = candidates
            .iter()
            .zip(&pos_index)
            .filter(|(_, p)| kept[**p])
            .map(|(a, _)| *a)
            .collect();
        let values = self.evaluate(&self.q, &sf, &ctx.image, &expanded, false)?;
        let i = pick_tie(&argmax_set(&values), rng);
        Ok((expanded[i], values[i]))
    }

    fn choose(
        &self,
        ctx: &Context<T>,
        cands: &[Action],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Action, T), LearnError> {
        if self.cfg.hierarchy.enabled {
            self.hierarchical_argmax(ctx, cands, self.cfg.hierarchy.eta, rng)
        } else {
            self.greedy(ctx, cands, rng)
        }
    }

    /// One regression step of V′(f(s)) toward `target`; returns the squared error.
    pub fn update_value(&mut self, ctx: &Context<T>, target: T) -> Result<f64, LearnError> {
        let mut b = Batch::new();
        Self::push_v(&mut b, &self.state_features(ctx));
        let (out, cache) = self.v_net.forward_cached(&self.v, &b)?;
        let d = out[0] - target;
        let g = self.v_net.backward(&self.v, &cache, &[d + d])?;
        self.v_opt.step(&mut self.v, &g);
        Ok((d * d).as_f64())
    }

    /// Bootstrapped targets: `r` at the goal, otherwise `r + γ V′(f(s'))`
    /// or `r + γ max_a Q′_target(f(s'), g_{s'}(a))`.
    pub fn compute_targets(&self, batch: &[&Transition<T>]) -> Result<Vec<T>, LearnError> {
        let gamma = T::lit(self.cfg.gamma);
        let mut targets: Vec<T> = batch.iter().map(|t| T::lit(t.reward)).collect();
        if self.cfg.use_value_net {
            let mut b = Batch::new();
            let mut rows = Vec::new();
            for (i, t) in batch.iter().enumerate() {
                if !t.terminal {
                    Self::push_v(&mut b, &self.state_features(&t.next));
                    rows.push(i);
                }
            }
            if !rows.is_empty() {
                let v = self.v_net.forward(&self.v, &b)?;
                for (r, i) in rows.into_iter().enumerate() {
                    targets[i] = targets[i] + gamma * v[r];
                }
            }
        } else {
            for (i, t) in batch.iter().enumerate() {
                if t.terminal {
                    continue;
                }
                let cands = self.candidates(&t.next.image);
                let sf = self.state_features(&t.next);
                let values = self.evaluate(&self.q_target, &sf, &t.next.image, &cands, false)?;
                let max = values.iter().copied().fold(T::neg_infinity(), T::max);
                targets[i] = targets[i] + gamma * max;
            }
        }
        Ok(targets)
    }

    /// One gradient step on `params` toward `targets` for the given inputs.
    fn regress(
        net: &Network,
        params: &mut Parameters<T>,
        opt: &mut Adam<T>,
        batch: &Batch<T>,
        targets: &[T],
        weights: &[f64],
    ) -> Result<Vec<T>, LearnError> {
        let (out, cache) = net.forward_cached(params, batch)?;
        let n = T::lit(targets.len() as f64);
        let td: Vec<T> = out.iter().zip(targets).map(|(q, y)| *q - *y).collect();
        let d: Vec<T> = td
            .iter()
            .zip(weights)
            .map(|(e, w)| T::lit(2.0 * w) * *e / n)
            .collect();
        let g = net.backward(params, &cache, &d)?;
        opt.step(params, &g);
        Ok(td)
    }
}

impl<T: Scalar> Agent<T> for DeicticAgent<T> {
    fn history_len(&self) -> usize {
        self.deictic.k - 1
    }

    fn begin_stage(
        &mut self,
        plan: &StagePlan,
        _rules: &Rules,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(), LearnError> {
        let stage = &plan.stage;
        stage.grid.validate()?;
        if let Some(h) = plan.hierarchy {
            self.cfg.hierarchy.enabled = h;
        }
        self.stage = *stage;
        self.table = CropTable::new(self.deictic.crop, stage.grid.num_orientations);
        self.actions = action_space(stage);
        Ok(())
    }

    /// Draw order: one uniform for the ε test, then either the random index
    /// or (only when several actions tie) the tie-break index.
    fn act(
        &mut self,
        ctx: &Context<T>,
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Action, LearnError> {
        let cands = self.candidates(&ctx.image);
        if cands.is_empty() {
            return Err(LearnError::EmptyCandidates);
        }
        if rng.gen::<f64>() < epsilon {
            return Ok(cands[rng.gen_range(0..cands.len())]);
        }
        let (a, max) = self.choose(ctx, &cands, rng)?;
        if self.cfg.use_value_net {
            self.update_value(ctx, max)?;
        }
        Ok(a)
    }

    fn greedy_action(&self, ctx: &Context<T>, rng: &mut ChaCha8Rng) -> Result<Action, LearnError> {
        Ok(self.choose(ctx, &self.candidates(&ctx.image), rng)?.0)
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
        let batch: Vec<&Transition<T>> =
            sample.indices.iter().map(|&i| self.buffer.get(i)).collect();
        let targets = self.compute_targets(&batch)?;
        let mut inputs = Batch::new();
        let mut coarse = Batch::new();
        for t in &batch {
            let sf = self.state_features(&t.state);
            Self::push_q(
                &mut inputs,
                &sf,
                &self.table.action_map(&t.state.image, &t.action),
            );
            if self.cfg.hierarchy.enabled {
                let fixed = Action {
                    motion: fix(&t.action.motion),
                    effector: t.action.effector,
                };
                Self::push_q(
                    &mut coarse,
                    &sf,
                    &self.table.action_map(&t.state.image, &fixed),
                );
            }
        }
        let td = Self::regress(
            &self.q_net,
            &mut self.q,
            &mut self.q_opt,
            &inputs,
            &targets,
            &sample.weights,
        )?;
        if self.cfg.hierarchy.enabled {
            Self::regress(
                &self.q_net,
                &mut self.q1,
                &mut self.q1_opt,
                &coarse,
                &targets,
                &sample.weights,
            )?;
        }
        let td64: Vec<f64> = td.iter().map(|v| v.as_f64()).collect();
        self.buffer.update_priorities(&sample.indices, &td64);
        self.train_steps += 1;
        if self.train_steps % self.cfg.target_sync as u64 == 0 {
            self.q_target = self.q.clone();
        }
        let loss = td64
            .iter()
            .zip(&sample.weights)
            .map(|(e, w)| w * e * e)
            .sum::<f64>()
            / n as f64;
        let max_abs_td = td64.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        Ok(Some(TrainStats { loss, max_abs_td }))
    }

    fn clear_replay(&mut self) {
        self.buffer.clear();
    }
}
