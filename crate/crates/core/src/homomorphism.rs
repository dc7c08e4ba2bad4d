//! Brute-force verification that a deictic mapping is an MDP homomorphism.
//!
//! The ground MDP is enumerated exactly (history-`k` states over the
//! simulator's configurations), the abstract MDP is induced by block
//! aggregation under a state/action mapping, and optimal values of the two
//! are compared through value iteration.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deictic::{CropSpec, CropTable, DeicticError};
use crate::env::{
    action_space, apply_action, initial_states, Action, EnvError, EnvState, Rules, Stage, Theta,
};
use crate::geometry::Image;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum HomError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Deictic(#[from] DeicticError),
    #[error("ground model exceeds the bound of {bound} states")]
    StateBoundExceeded { bound: usize },
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Explicit finite MDP with sparse transition rows.
#[derive(Clone, Debug)]
pub struct TabularMdp<T> {
    transitions: Vec<Vec<Vec<(usize, T)>>>,
    rewards: Vec<Vec<T>>,
    gamma: T,
}

impl<T: Scalar> TabularMdp<T> {
    /// `transitions[s][a]` lists `(s', p)`; every row must sum to one.
    pub fn new(
        transitions: Vec<Vec<Vec<(usize, T)>>>,
        rewards: Vec<Vec<T>>,
        gamma: T,
    ) -> Result<Self, HomError> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(HomError::InvalidMdp(format!("gamma {gamma} not in (0, 1)")));
        }
        if transitions.len() != rewards.len() {
            return Err(HomError::InvalidMdp(
                "transition/reward state counts differ".into(),
            ));
        }
        let n = transitions.len();
        for (s, (rows, rs)) in transitions.iter().zip(&rewards).enumerate() {
            if rows.len() != rs.len() {
                return Err(HomError::InvalidMdp(format!(
                    "state {s}: action counts differ"
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                let mut total = 0.0;
                for &(next, p) in row {
                    if next >= n || p < T::zero() {
                        return Err(HomError::InvalidMdp(format!("bad entry at ({s}, {a})")));
                    }
                    total += p.as_f64();
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(HomError::InvalidMdp(format!(
                        "row ({s}, {a}) sums to {total}"
                    )));
                }
                if !rs[a].is_finite() {
                    return Err(HomError::InvalidMdp(format!(
                        "reward at ({s}, {a}) not finite"
                    )));
                }
            }
        }
        Ok(TabularMdp {
            transitions,
            rewards,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn num_actions(&self, s: usize) -> usize {
        self.transitions[s].len()
    }

    pub fn total_state_actions(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    pub fn transition(&self, s: usize, a: usize) -> &[(usize, T)] {
        &self.transitions[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> T {
        self.rewards[s][a]
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn is_deterministic(&self) -> bool {
        self.transitions
            .iter()
            .flatten()
            .all(|row| row.len() == 1 && row[0].1 == T::one())
    }
}

#[derive(Clone, Debug)]
pub struct QTable<T> {
    pub values: Vec<Vec<T>>,
    pub iterations: usize,
    /// Sup-norm Bellman residual of `values`.
    pub residual: T,
}

impl<T: Scalar> QTable<T> {
    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s][a]
    }

    /// `max_a Q(s, a)`, zero for action-less states.
    pub fn state_value(&self, s: usize) -> T {
        max_or_zero(&self.values[s])
    }
}

fn max_or_zero<T: Scalar>(row: &[T]) -> T {
    if row.is_empty() {
        T::zero()
    } else {
        row.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

fn backup<T: Scalar>(mdp: &TabularMdp<T>, q: &[Vec<T>]) -> Vec<Vec<T>> {
    let v: Vec<T> = q.iter().map(|row| max_or_zero(row)).collect();
    mdp.transitions
        .iter()
        .zip(&mdp.rewards)
        .map(|(rows, rs)| {
            rows.iter()
                .zip(rs)
                .map(|(row, &r)| r + mdp.gamma * row.iter().map(|&(n, p)| p * v[n]).sum::<T>())
                .collect()
        })
        .collect()
}

fn sup_diff<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (*x - *y).abs())
        .fold(T::zero(), T::max)
}

/// Bellman optimality backups until the sup-norm residual is at most `tol`.
pub fn value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    tol: T,
    max_iterations: usize,
) -> Result<QTable<T>, HomError> {
    let mut q: Vec<Vec<T>> = mdp
        .rewards
        .iter()
        .map(|r| vec![T::zero(); r.len()])
        .collect();
    for it in 1..=max_iterations {
        let next = backup(mdp, &q);
        let delta = sup_diff(&next, &q);
        q = next;
        if delta <= tol {
            // residual of the returned table contracts by gamma
            let residual = sup_diff(&backup(mdp, &q), &q);
            return Ok(QTable {
                values: q,
                iterations: it,
                residual,
            });
        }
        if it == max_iterations {
            return Err(HomError::NotConverged {
                iterations: it,
                residual: delta.as_f64(),
            });
        }
    }
    Err(HomError::NotConverged {
        iterations: 0,
        residual: f64::INFINITY,
    })
}

/// One past step of the ground history.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub image: Image<f64>,
    pub theta: Theta,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroundState {
    /// Zero-reward sink entered when the goal is reached.
    Absorbing,
    Live {
        /// `k - 1` entries, oldest first; `None` before the episode start.
        history: Vec<Option<HistoryEntry>>,
        env: EnvState,
    },
}

/// Exact tabular model of a move-effect task with history-`k` states.
#[derive(Clone, Debug)]
pub struct GroundModel {
    pub stage: Stage,
    pub rules: Rules,
    pub k: usize,
    pub actions: Vec<Action>,
    pub states: Vec<GroundState>,
    pub mdp: TabularMdp<f64>,
    /// Distribution of the next gripper bit for every live `(s, a)`.
    pub theta_next: Vec<Vec<Vec<(Theta, f64)>>>,
    images: Vec<Option<Image<f64>>>,
}

impl GroundModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Current image of a live state.
    pub fn image(&self, s: usize) -> Option<&Image<f64>> {
        self.images[s].as_ref()
    }

    pub fn theta(&self, s: usize) -> Option<Theta> {
        match &self.states[s] {
            GroundState::Absorbing => None,
            GroundState::Live { env, .. } => Some(env.theta()),
        }
    }
}

fn ground_key(history: &[Option<HistoryEntry>], env: &EnvState) -> Vec<u8> {
    let mut k = Vec::new();
    for h in history {
        match h {
            None => k.push(0),
            Some(e) => {
                k.push(1);
                e.image.key_bytes(&mut k);
                k.push(e.theta.bit());
                k.extend_from_slice(&(e.action.motion.x as u32).to_le_bytes());
                k.extend_from_slice(&(e.action.motion.y as u32).to_le_bytes());
                k.extend_from_slice(&(e.action.motion.orientation as u32).to_le_bytes());
                k.push(e.action.effector as u8);
            }
        }
    }
    k.extend(env.config_key());
    k
}

/// Enumerate the ground MDP reachable from every initial configuration.
/// Reaching the goal moves to an absorbing zero-reward state, so rows stay
/// stochastic and the horizon is replaced by discounting.
pub fn enumerate_ground(
    stage: &Stage,
    rules: &Rules,
    k: usize,
    gamma: f64,
    bound: usize,
) -> Result<GroundModel, HomError> {
    if k == 0 {
        return Err(DeicticError::InvalidHistory.into());
    }
    stage.grid.validate()?;
    let actions = action_space(stage);
    let na = actions.len();
    let mut states = vec![GroundState::Absorbing];
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for env in initial_states(stage, rules) {
        let history = vec![None; k - 1];
        let key = ground_key(&history, &env);
        if !index.contains_key(&key) {
            if states.len() >= bound {
                return Err(HomError::StateBoundExceeded { bound });
            }
            index.insert(key, states.len());
            queue.push_back(states.len());
            states.push(GroundState::Live { history, env });
        }
    }

    let mut transitions = vec![vec![vec![(0usize, 1.0f64)]; na]];
    let mut rewards = vec![vec![0.0; na]];
    let mut theta_next = vec![Vec::new()];
    let mut images: Vec<Option<Image<f64>>> = vec![None];

    // BFS; states are appended in discovery order so row s is filled when s is popped
    while let Some(s) = queue.pop_front() {
        let GroundState::Live { history, env } = states[s].clone() else {
            unreachable!()
        };
        let image: Image<f64> = env.image(&stage.grid, rules);
        let mut rows = Vec::with_capacity(na);
        let mut rs = Vec::with_capacity(na);
        let mut thetas = Vec::with_capacity(na);
        for a in &actions {
            let out = apply_action(stage, rules, &env, a);
            thetas.push(vec![(out.next.theta(), 1.0)]);
            rs.push(out.reward);
            if out.goal {
                rows.push(vec![(0, 1.0)]);
                continue;
            }
            let mut h = history.clone();
            if !h.is_empty() {
                h.remove(0);
                h.push(Some(HistoryEntry {
                    image: image.clone(),
                    theta: env.theta(),
                    action: *a,
                }));
            }
            let mut next_env = out.next;
            next_env.step_count = 0;
            let key = ground_key(&h, &next_env);
            let id = match index.get(&key) {
                Some(&id) => id,
                None => {
                    if states.len() >= bound {
                        return Err(HomError::StateBoundExceeded { bound });
                    }
                    let id = states.len();
                    index.insert(key, id);
                    states.push(GroundState::Live {
                        history: h,
                        env: next_env,
                    });
                    queue.push_back(id);
                    id
                }
            };
            rows.push(vec![(id, 1.0)]);
        }
        debug_assert_eq!(transitions.len(), s);
        transitions.push(rows);
        rewards.push(rs);
        theta_next.push(thetas);
        images.push(Some(image));
    }

    let mdp = TabularMdp::new(transitions, rewards, gamma)?;
    Ok(GroundModel {
        stage: *stage,
        rules: *rules,
        k,
        actions,
        states,
        mdp,
        theta_next,
        images,
    })
}

/// State mapping `f` and state-dependent action mappings `g_s` over a
/// ground model, expressed as canonical byte keys.
pub trait Abstraction {
    fn state_key(&self, model: &GroundModel, s: usize) -> Vec<u8>;
    fn action_key(&self, model: &GroundModel, s: usize, a: usize) -> Vec<u8>;
}

const ABSORBING_KEY: [u8; 2] = [0xab, 0xab];

/// The deictic mapping: history crops plus gripper bit, and crop-at-target
/// plus effector tag.
#[derive(Clone, Debug)]
pub struct DeicticAbstraction {
    table: CropTable,
    k: usize,
}

impl DeicticAbstraction {
    pub fn new(k: usize, crop: CropSpec, num_orientations: usize) -> Result<Self, HomError> {
        if k == 0 {
            return Err(DeicticError::InvalidHistory.into());
        }
        crop.validate()?;
        Ok(DeicticAbstraction {
            table: CropTable::new(crop, num_orientations),
            k,
        })
    }
}

impl Abstraction for DeicticAbstraction {
    fn state_key(&self, model: &GroundModel, s: usize) -> Vec<u8> {
        match &model.states[s] {
            GroundState::Absorbing => ABSORBING_KEY.to_vec(),
            GroundState::Live { history, env } => {
                let mut key = vec![env.theta().bit()];
                let keep = self.k - 1;
                let skip = history.len().saturating_sub(keep);
                for _ in history.len()..keep {
                    crate::deictic::AbstractAction::<f64>::blank(self.table.spec().window)
                        .key_bytes(&mut key);
                }
                for h in &history[skip..] {
                    match h {
                        None => {
                            crate::deictic::AbstractAction::<f64>::blank(self.table.spec().window)
                                .key_bytes(&mut key)
                        }
                        Some(e) => self
                            .table
                            .action_map(&e.image, &e.action)
                            .key_bytes(&mut key),
                    }
                }
                key
            }
        }
    }

    fn action_key(&self, model: &GroundModel, s: usize, a: usize) -> Vec<u8> {
        match model.image(s) {
            None => ABSORBING_KEY.to_vec(),
            Some(img) => self.table.action_map(img, &model.actions[a]).key(),
        }
    }
}

/// Every ground state and state-action pair is its own class.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityAbstraction;

impl Abstraction for IdentityAbstraction {
    fn state_key(&self, _model: &GroundModel, s: usize) -> Vec<u8> {
        (s as u64).to_le_bytes().to_vec()
    }

    fn action_key(&self, _model: &GroundModel, s: usize, a: usize) -> Vec<u8> {
        let mut k = (s as u64).to_le_bytes().to_vec();
        k.extend_from_slice(&(a as u64).to_le_bytes());
        k
    }
}

/// Findings of a homomorphism check. Gaps are sup-norms over ground pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionReport {
    pub well_defined: bool,
    pub max_transition_discrepancy: f64,
    pub max_reward_discrepancy: f64,
    pub theta_independence_holds: bool,
    pub value_equivalence_gap: f64,
    pub ground_states: usize,
    pub ground_state_actions: usize,
    pub abstract_states: usize,
    pub abstract_actions: usize,
}

/// The abstract MDP induced by a mapping, plus the class bookkeeping needed
/// to lift values back to ground pairs.
#[derive(Clone, Debug)]
pub struct InducedAbstraction {
    pub mdp: TabularMdp<f64>,
    /// Abstract state of each ground state.
    pub state_of: Vec<usize>,
    /// Abstract action (index within the abstract state) of each ground pair.
    pub class_of: Vec<Vec<usize>>,
    pub max_transition_discrepancy: f64,
    pub max_reward_discrepancy: f64,
}

impl InducedAbstraction {
    pub fn well_defined(&self) -> bool {
        self.max_transition_discrepancy == 0.0 && self.max_reward_discrepancy == 0.0
    }
}

/// Block-aggregate the ground model. The first ground pair of each class
/// (in state, then action order) defines `T'` and `R'`; every other member
/// is compared against it.
pub fn induce_abstract(
    model: &GroundModel,
    abs: &impl Abstraction,
) -> Result<InducedAbstraction, HomError> {
    let ground = &model.mdp;
    let n = ground.num_states();
    let mut state_ids: HashMap<Vec<u8>, usize> = HashMap::new();
    let state_of: Vec<usize> = (0..n)
        .map(|s| {
            let key = abs.state_key(model, s);
            let next = state_ids.len();
            *state_ids.entry(key).or_insert(next)
        })
        .collect();
    let num_abstract = state_ids.len();

    let mut class_ids: Vec<HashMap<Vec<u8>, usize>> = vec![HashMap::new(); num_abstract];
    let mut reps: Vec<Vec<(BTreeMap<usize, f64>, f64)>> = vec![Vec::new(); num_abstract];
    let mut class_of = Vec::with_capacity(n);
    let mut max_t = 0.0f64;
    let mut max_r = 0.0f64;

    for s in 0..n {
        let sa = state_of[s];
        let mut row = Vec::with_capacity(ground.num_actions(s));
        for a in 0..ground.num_actions(s) {
            let mut dist: BTreeMap<usize, f64> = BTreeMap::new();
            for &(next, p) in ground.transition(s, a) {
                *dist.entry(state_of[next]).or_insert(0.0) += p;
            }
            let r = ground.reward(s, a);
            let key = abs.action_key(model, s, a);
            let fresh = class_ids[sa].len();
            let c = *class_ids[sa].entry(key).or_insert(fresh);
            if c == fresh {
                reps[sa].push((dist, r));
            } else {
                let (rep_dist, rep_r) = &reps[sa][c];
                for (k, p) in rep_dist.iter() {
                    max_t = max_t.max((p - dist.get(k).copied().unwrap_or(0.0)).abs());
                }
                for (k, p) in dist.iter() {
                    if !rep_dist.contains_key(k) {
                        max_t = max_t.max(p.abs());
                    }
                }
                max_r = max_r.max((r - rep_r).abs());
            }
            row.push(c);
        }
        class_of.push(row);
    }

    let transitions = reps
        .iter()
        .map(|classes| {
            classes
                .iter()
                .map(|(d, _)| d.iter().map(|(k, p)| (*k, *p)).collect())
                .collect()
        })
        .collect();
    let rewards = reps
        .iter()
        .map(|classes| classes.iter().map(|(_, r)| *r).collect())
        .collect();
    let mdp = TabularMdp::new(transitions, rewards, ground.gamma())?;
    Ok(InducedAbstraction {
        mdp,
        state_of,
        class_of,
        max_transition_discrepancy: max_t,
        max_reward_discrepancy: max_r,
    })
}

/// True iff ground pairs that share the current gripper bit and the same
/// abstract action induce the same distribution over the next gripper bit.
pub fn check_theta_independence(model: &GroundModel, abs: &impl Abstraction) -> bool {
    let mut seen: HashMap<(u8, Vec<u8>), Vec<(Theta, f64)>> = HashMap::new();
    for s in 0..model.num_states() {
        let Some(theta) = model.theta(s) else {
            continue;
        };
        for a in 0..model.mdp.num_actions(s) {
            let mut dist = model.theta_next[s][a].clone();
            dist.sort_by(|x, y| x.0.cmp(&y.0));
            let key = (theta.bit(), abs.action_key(model, s, a));
            match seen.get(&key) {
                Some(prev) if *prev != dist => return false,
                Some(_) => {}
                None => {
                    seen.insert(key, dist);
                }
            }
        }
    }
    true
}

/// `max |Q*(s, a) - Q'*(f(s), g_s(a))|` over all ground pairs.
pub fn check_theorem1(
    ground_q: &QTable<f64>,
    abstract_q: &QTable<f64>,
    induced: &InducedAbstraction,
) -> f64 {
    let mut gap = 0.0f64;
    for (s, row) in ground_q.values.iter().enumerate() {
        let sa = induced.state_of[s];
        for (a, q) in row.iter().enumerate() {
            let qa = abstract_q.get(sa, induced.class_of[s][a]);
            gap = gap.max((q - qa).abs());
        }
    }
    gap
}

/// Options for an end-to-end check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomCheckOptions {
    pub k: usize,
    pub crop: CropSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_bound")]
    pub state_bound: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_gamma() -> f64 {
    0.9
}
fn default_tol() -> f64 {
    1e-9
}
fn default_bound() -> usize {
    1_000_000
}
fn default_max_iterations() -> usize {
    100_000
}

impl HomCheckOptions {
    pub fn new(k: usize, crop: CropSpec) -> Self {
        HomCheckOptions {
            k,
            crop,
            gamma: default_gamma(),
            tol: default_tol(),
            state_bound: default_bound(),
            max_iterations: default_max_iterations(),
        }
    }

    /// Tolerance on the value gap implied by two `tol`-converged solutions.
    pub fn gap_tolerance(&self) -> f64 {
        2.0 * self.tol / (1.0 - self.gamma)
    }
}

/// Enumerate, abstract, and compare optimal values.
pub fn run_homcheck(
    stage: &Stage,
    rules: &Rules,
    opts: &HomCheckOptions,
) -> Result<AbstractionReport, HomError> {
    let model = enumerate_ground(stage, rules, opts.k, opts.gamma, opts.state_bound)?;
    let abs = DeicticAbstraction::new(opts.k, opts.crop, stage.grid.num_orientations)?;
    report_for(&model, &abs, opts.tol, opts.max_iterations)
}

pub fn report_for(
    model: &GroundModel,
    abs: &impl Abstraction,
    tol: f64,
    max_iterations: usize,
) -> Result<AbstractionReport, HomError> {
    let induced = induce_abstract(model, abs)?;
    let theta_ok = check_theta_independence(model, abs);
    let gq = value_iteration(&model.mdp, tol, max_iterations)?;
    let aq = value_iteration(&induced.mdp, tol, max_iterations)?;
    let gap = check_theorem1(&gq, &aq, &induced);
    Ok(AbstractionReport {
        well_defined: induced.well_defined(),
        max_transition_discrepancy: induced.max_transition_discrepancy,
        max_reward_discrepancy: induced.max_reward_discrepancy,
        theta_independence_holds: theta_ok,
        value_equivalence_gap: gap,
        ground_states: model.mdp.num_states(),
        ground_state_actions: model.mdp.total_state_actions(),
        abstract_states: induced.mdp.num_states(),
        abstract_actions: induced.mdp.total_state_actions(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Task;

    fn chain(gamma: f64) -> TabularMdp<f64> {
        // 0 -> 1 -> 2 (goal action from 2 pays 1 and enters sink 3)
        let t = vec![
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            vec![vec![(2, 1.0)], vec![(1, 1.0)]],
            vec![vec![(3, 1.0)], vec![(2, 1.0)]],
            vec![vec![(3, 1.0)]],
        ];
        let r = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0]];
        TabularMdp::new(t, r, gamma).unwrap()
    }

    #[test]
    fn value_iteration_hand_backup() {
        let q = value_iteration(&chain(0.9), 1e-12, 10_000).unwrap();
        assert!((q.get(2, 0) - 1.0).abs() < 1e-9);
        assert!((q.get(1, 0) - 0.9).abs() < 1e-9);
        assert!((q.get(0, 0) - 0.81).abs() < 1e-9);
        assert!(q.residual <= 1e-12);
    }

    #[test]
    fn zero_reward_gives_zero_q() {
        let t = vec![vec![vec![(1, 1.0)]], vec![vec![(0, 0.5), (1, 0.5)]]];
        let m = TabularMdp::new(t, vec![vec![0.0], vec![0.0]], 0.9).unwrap();
        let q = value_iteration(&m, 1e-9, 100).unwrap();
        assert!(q.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_rows_rejected() {
        let t = vec![vec![vec![(0, 0.5)]]];
        assert!(TabularMdp::new(t, vec![vec![0.0]], 0.9).is_err());
        let t = vec![vec![vec![(0, 1.0)]]];
        assert!(TabularMdp::new(t.clone(), vec![vec![0.0]], 1.0).is_err());
        assert!(TabularMdp::new(t, vec![vec![f64::NAN]], 0.5).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let err = value_iteration(&chain(0.99), 1e-15, 3).unwrap_err();
        assert!(matches!(err, HomError::NotConverged { iterations: 3, .. }));
    }

    #[test]
    fn ground_model_is_deterministic_and_sparse_reward() {
        let stage = Stage::grid_disk(3);
        let rules = Rules::default();
        let m = enumerate_ground(&stage, &rules, 1, 0.9, 1_000_000).unwrap();
        assert!(m.mdp.is_deterministic());
        // k=1: one state per configuration plus the sink
        assert_eq!(m.num_states(), 82);
        for s in 1..m.num_states() {
            let GroundState::Live { env, .. } = &m.states[s] else {
                panic!()
            };
            for (a, act) in m.actions.iter().enumerate() {
                let o = apply_action(&stage, &rules, env, act);
                assert_eq!(m.mdp.reward(s, a), if o.goal { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn identity_abstraction_is_exact() {
        let m =
            enumerate_ground(&Stage::grid_disk(3), &Rules::default(), 1, 0.9, 1_000_000).unwrap();
        let r = report_for(&m, &IdentityAbstraction, 1e-9, 10_000).unwrap();
        assert!(r.well_defined);
        assert_eq!(r.max_transition_discrepancy, 0.0);
        assert!(r.value_equivalence_gap <= 2e-9 / 0.1);
    }

    #[test]
    fn single_action_mdp_theta_independent() {
        let mut stage = Stage::new(Task::GridDisk, 1, 1, 1);
        stage.num_objects = 0;
        let m = enumerate_ground(&stage, &Rules::default(), 1, 0.9, 100).unwrap();
        let abs = DeicticAbstraction::new(1, CropSpec::new(1), 1).unwrap();
        assert!(check_theta_independence(&m, &abs));
    }

    #[test]
    fn bound_is_enforced() {
        let err =
            enumerate_ground(&Stage::grid_disk(3), &Rules::default(), 2, 0.9, 100).unwrap_err();
        assert!(matches!(err, HomError::StateBoundExceeded { bound: 100 }));
    }
}
