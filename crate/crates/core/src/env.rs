//! Deterministic grid simulators of move-effect systems.
//!
//! Two tasks share one simulator: `GridDisk` (pick a disk, place it next to
//! the other) and `BlockAlign` (pick an oriented block, place it parallel to
//! and near the other). Every step is a base motion to a discrete pose
//! followed by a pick or a place.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{orientation_angle, rotate_round, Image, Pose};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("could not place objects without overlap after {attempts} attempts")]
    PlacementInfeasible { attempts: u32 },
    #[error("episode is over (horizon {horizon} reached or goal achieved)")]
    EpisodeOver { horizon: u32 },
    #[error("action {0:?} is outside the stage discretization")]
    ActionOutOfRange(Action),
    #[error("state enumeration exceeded the bound of {bound} states")]
    StateBoundExceeded { bound: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Orientations spanning 180°.
    pub num_orientations: usize,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
}

fn default_cell_size() -> f64 {
    1.0
}

impl GridSpec {
    pub fn new(width: usize, height: usize, num_orientations: usize) -> Result<Self, EnvError> {
        let g = GridSpec {
            width,
            height,
            num_orientations,
            cell_size: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.width == 0 || self.height == 0 {
            return Err(EnvError::InvalidGrid(format!(
                "dimensions {}x{} must be positive",
                self.width, self.height
            )));
        }
        if self.num_orientations == 0 {
            return Err(EnvError::InvalidGrid(
                "num_orientations must be at least 1".into(),
            ));
        }
        if !(self.cell_size > 0.0) {
            return Err(EnvError::InvalidGrid("cell_size must be positive".into()));
        }
        Ok(())
    }

    pub fn num_positions(&self) -> usize {
        self.width * self.height
    }

    pub fn orientation_step_degrees(&self) -> f64 {
        180.0 / self.num_orientations as f64
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn contains_pose(&self, p: &Pose) -> bool {
        p.x < self.width && p.y < self.height && p.orientation < self.num_orientations
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GridDisk,
    BlockAlign,
}

/// One curriculum stage: object type plus the discretization of base motions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub task: Task,
    pub grid: GridSpec,
    #[serde(default = "default_num_objects")]
    pub num_objects: usize,
}

fn default_num_objects() -> usize {
    2
}

impl Stage {
    pub fn new(task: Task, width: usize, height: usize, num_orientations: usize) -> Self {
        Stage {
            task,
            grid: GridSpec {
                width,
                height,
                num_orientations,
                cell_size: 1.0,
            },
            num_objects: 2,
        }
    }

    pub fn grid_disk(side: usize) -> Self {
        Stage::new(Task::GridDisk, side, side, 1)
    }

    pub fn object_kind(&self) -> ObjectKind {
        match self.task {
            Task::GridDisk => ObjectKind::Disk,
            Task::BlockAlign => ObjectKind::Block,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.grid.num_positions() * self.grid.num_orientations * 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjacency {
    /// Horizontally or vertically adjacent.
    FourNeighbor,
    HorizontalOnly,
}

/// Task rules shared by all stages of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rules {
    pub adjacency: Adjacency,
    pub block_length: usize,
    /// Maximum center-to-center distance (cells) for two parallel blocks to
    /// count as aligned.
    pub align_max_distance: f64,
    /// Largest center offset along the block axis for a side-by-side pair.
    pub align_axial_tolerance: f64,
    /// Orientation steps a block grasp may deviate from the block axis.
    pub grasp_tolerance_steps: usize,
    pub horizon: u32,
    pub max_placement_attempts: u32,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            adjacency: Adjacency::FourNeighbor,
            block_length: 3,
            align_max_distance: 4.0,
            align_axial_tolerance: 1.0,
            grasp_tolerance_steps: 1,
            horizon: 10,
            max_placement_attempts: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    /// 1x1 footprint.
    Disk,
    /// 1 x `block_length` footprint along the orientation axis.
    Block,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effector {
    Pick,
    Place,
}

/// Agent-visible gripper bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Theta {
    Open,
    Closed,
}

impl Theta {
    pub fn bit(self) -> u8 {
        match self {
            Theta::Open => 0,
            Theta::Closed => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub motion: Pose,
    pub effector: Effector,
}

impl Action {
    pub const fn new(motion: Pose, effector: Effector) -> Self {
        Action { motion, effector }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    pub kind: ObjectKind,
    pub x: i64,
    pub y: i64,
    pub orientation: usize,
    pub on_table: bool,
}

/// Relative cell offsets of a footprint.
pub fn footprint_offsets(
    kind: ObjectKind,
    orientation: usize,
    num_orientations: usize,
    block_length: usize,
) -> Vec<(i64, i64)> {
    match kind {
        ObjectKind::Disk => vec![(0, 0)],
        ObjectKind::Block => {
            let half = (block_length as i64 - 1) / 2;
            let start = -half;
            let end = block_length as i64 - 1 - half;
            let a = orientation_angle(orientation, num_orientations);
            (start..=end)
                .map(|j| rotate_round(j as f64, 0.0, a))
                .collect()
        }
    }
}

impl WorldObject {
    pub fn footprint(&self, grid: &GridSpec, rules: &Rules) -> Vec<(i64, i64)> {
        footprint_offsets(
            self.kind,
            self.orientation,
            grid.num_orientations,
            rules.block_length,
        )
        .into_iter()
        .map(|(dx, dy)| (self.x + dx, self.y + dy))
        .collect()
    }
}

/// An object in the gripper, with its pose expressed in the gripper frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldObject {
    pub object: WorldObject,
    pub orientation_offset: i64,
    pub local_offset: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EffectorState {
    Open,
    Holding(HeldObject),
}

impl EffectorState {
    pub fn theta(&self) -> Theta {
        match self {
            EffectorState::Open => Theta::Open,
            EffectorState::Holding(_) => Theta::Closed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub objects: Vec<WorldObject>,
    pub effector: EffectorState,
    pub step_count: u32,
}

impl EnvState {
    /// Bytes identifying the configuration (object ids and step counter are
    /// not part of it).
    pub fn config_key(&self) -> Vec<u8> {
        let mut k = Vec::with_capacity(16 * (self.objects.len() + 1));
        for o in &self.objects {
            k.push(o.kind as u8);
            k.extend_from_slice(&o.x.to_le_bytes());
            k.extend_from_slice(&o.y.to_le_bytes());
            k.extend_from_slice(&(o.orientation as u32).to_le_bytes());
        }
        match &self.effector {
            EffectorState::Open => k.push(0xff),
            EffectorState::Holding(h) => {
                k.push(0xfe);
                k.push(h.object.kind as u8);
                k.extend_from_slice(&h.orientation_offset.to_le_bytes());
                // offsets are integer-valued up to rotation noise
                k.extend_from_slice(&((h.local_offset.0 * 1e6).round() as i64).to_le_bytes());
                k.extend_from_slice(&((h.local_offset.1 * 1e6).round() as i64).to_le_bytes());
            }
        }
        k
    }

    pub fn theta(&self) -> Theta {
        self.effector.theta()
    }

    /// Heightmap observation: 1.0 on every occupied cell.
    pub fn image<T: Scalar>(&self, grid: &GridSpec, rules: &Rules) -> Image<T> {
        let mut img = Image::zeros(grid.width, grid.height);
        for o in self.objects.iter().filter(|o| o.on_table) {
            for (x, y) in o.footprint(grid, rules) {
                if grid.contains(x, y) {
                    img.set(x as usize, y as usize, T::one());
                }
            }
        }
        img
    }

    pub fn observe<T: Scalar>(&self, grid: &GridSpec, rules: &Rules) -> Observation<T> {
        Observation {
            image: self.image(grid, rules),
            theta: self.theta(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub image: Image<T>,
    pub theta: Theta,
}

/// Result of applying one action to a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub next: EnvState,
    pub succeeded: bool,
    pub reward: f64,
    pub goal: bool,
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = (a as i64 - b as i64).rem_euclid(n as i64) as usize;
    d.min(n - d)
}

fn can_grasp(obj: &WorldObject, pose: &Pose, grid: &GridSpec, rules: &Rules) -> bool {
    let (px, py) = (pose.x as i64, pose.y as i64);
    match obj.kind {
        ObjectKind::Disk => obj.x == px && obj.y == py,
        ObjectKind::Block => {
            if !obj.footprint(grid, rules).contains(&(px, py)) {
                return false;
            }
            let n = grid.num_orientations;
            let d = circular_distance(obj.orientation, pose.orientation, n);
            // perpendicular grasps of elongated objects never hold
            d <= rules.grasp_tolerance_steps && 2 * d < n
        }
    }
}

fn footprint_free(
    cells: &[(i64, i64)],
    others: &[WorldObject],
    grid: &GridSpec,
    rules: &Rules,
) -> bool {
    if !cells.iter().all(|&(x, y)| grid.contains(x, y)) {
        return false;
    }
    let occupied: Vec<(i64, i64)> = others
        .iter()
        .filter(|o| o.on_table)
        .flat_map(|o| o.footprint(grid, rules))
        .collect();
    cells.iter().all(|c| !occupied.contains(c))
}

/// Goal predicate evaluated after every successful place.
pub fn goal_satisfied(stage: &Stage, rules: &Rules, objects: &[WorldObject]) -> bool {
    let on: Vec<&WorldObject> = objects.iter().filter(|o| o.on_table).collect();
    for i in 0..on.len() {
        for j in i + 1..on.len() {
            let (a, b) = (on[i], on[j]);
            let ok = match stage.task {
                Task::GridDisk => {
                    let (dx, dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
                    match rules.adjacency {
                        Adjacency::FourNeighbor => dx + dy == 1,
                        Adjacency::HorizontalOnly => dy == 0 && dx == 1,
                    }
                }
                Task::BlockAlign => blocks_aligned(a, b, &stage.grid, rules),
            };
            if ok {
                return true;
            }
        }
    }
    false
}

/// Parallel as rasterized on the grid, side by side (small offset along the
/// block axis), and centers close enough.
pub fn blocks_aligned(a: &WorldObject, b: &WorldObject, grid: &GridSpec, rules: &Rules) -> bool {
    let n = grid.num_orientations;
    let fa = footprint_offsets(a.kind, a.orientation, n, rules.block_length);
    let mut fb = footprint_offsets(b.kind, b.orientation, n, rules.block_length);
    let mut fa_sorted = fa.clone();
    fa_sorted.sort_unstable();
    fb.sort_unstable();
    if fa_sorted != fb {
        return false;
    }
    let (dx, dy) = ((b.x - a.x) as f64, (b.y - a.y) as f64);
    let (s, c) = orientation_angle(a.orientation, n).sin_cos();
    let axial = (dx * c + dy * s).abs();
    axial <= rules.align_axial_tolerance + 1e-9
        && (dx * dx + dy * dy).sqrt() <= rules.align_max_distance
}

/// Pure transition function (does not touch the step counter).
pub fn apply_action(stage: &Stage, rules: &Rules, state: &EnvState, action: &Action) -> Outcome {
    let grid = &stage.grid;
    let pose = &action.motion;
    let unchanged = || Outcome {
        next: state.clone(),
        succeeded: false,
        reward: 0.0,
        goal: false,
    };
    match (action.effector, &state.effector) {
        (Effector::Pick, EffectorState::Open) => {
            let Some(idx) = state
                .objects
                .iter()
                .position(|o| o.on_table && can_grasp(o, pose, grid, rules))
            else {
                return unchanged();
            };
            let mut next = state.clone();
            let mut obj = next.objects.remove(idx);
            obj.on_table = false;
            let phi = pose.angle(grid.num_orientations);
            let (dx, dy) = (
                (obj.x - pose.x as i64) as f64,
                (obj.y - pose.y as i64) as f64,
            );
            let (s, c) = (-phi).sin_cos();
            let local = (c * dx - s * dy, s * dx + c * dy);
            let held = HeldObject {
                object: obj,
                orientation_offset: obj.orientation as i64 - pose.orientation as i64,
                local_offset: local,
            };
            next.effector = EffectorState::Holding(held);
            Outcome {
                next,
                succeeded: true,
                reward: 0.0,
                goal: false,
            }
        }
        (Effector::Place, EffectorState::Holding(held)) => {
            let n = grid.num_orientations as i64;
            let phi = pose.angle(grid.num_orientations);
            let (ox, oy) = rotate_round(held.local_offset.0, held.local_offset.1, phi);
            let mut obj = held.object;
            obj.orientation =
                (pose.orientation as i64 + held.orientation_offset).rem_euclid(n) as usize;
            obj.x = pose.x as i64 + ox;
            obj.y = pose.y as i64 + oy;
            obj.on_table = true;
            let cells = obj.footprint(grid, rules);
            if !footprint_free(&cells, &state.objects, grid, rules) {
                return unchanged();
            }
            let mut next = state.clone();
            next.objects.push(obj);
            next.effector = EffectorState::Open;
            let goal = goal_satisfied(stage, rules, &next.objects);
            Outcome {
                next,
                succeeded: true,
                reward: if goal { 1.0 } else { 0.0 },
                goal,
            }
        }
        _ => unchanged(),
    }
}

/// All actions of a stage: positions row-major, then orientations, then
/// `[Pick, Place]`.
pub fn action_space(stage: &Stage) -> Vec<Action> {
    let g = &stage.grid;
    let mut out = Vec::with_capacity(stage.num_actions());
    for y in 0..g.height {
        for x in 0..g.width {
            for o in 0..g.num_orientations {
                for e in [Effector::Pick, Effector::Place] {
                    out.push(Action::new(Pose::new(x, y, o), e));
                }
            }
        }
    }
    out
}

/// Every ordered placement of the stage's objects with disjoint in-grid
/// footprints, hand open.
pub fn initial_states(stage: &Stage, rules: &Rules) -> Vec<EnvState> {
    fn rec(stage: &Stage, rules: &Rules, placed: &mut Vec<WorldObject>, out: &mut Vec<EnvState>) {
        if placed.len() == stage.num_objects {
            out.push(EnvState {
                objects: placed.clone(),
                effector: EffectorState::Open,
                step_count: 0,
            });
            return;
        }
        let g = &stage.grid;
        for y in 0..g.height {
            for x in 0..g.width {
                for o in 0..g.num_orientations {
                    let obj = WorldObject {
                        id: placed.len() as u32,
                        kind: stage.object_kind(),
                        x: x as i64,
                        y: y as i64,
                        orientation: o,
                        on_table: true,
                    };
                    if footprint_free(&obj.footprint(g, rules), placed, g, rules) {
                        placed.push(obj);
                        rec(stage, rules, placed, out);
                        placed.pop();
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    rec(stage, rules, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive, duplicate-free list of reachable configurations in BFS order.
pub fn enumerate_states(
    stage: &Stage,
    rules: &Rules,
    bound: usize,
) -> Result<Vec<EnvState>, EnvError> {
    stage.grid.validate()?;
    let actions = action_space(stage);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for s in initial_states(stage, rules) {
        if seen.insert(s.config_key()) {
            if out.len() >= bound {
                return Err(EnvError::StateBoundExceeded { bound });
            }
            out.push(s.clone());
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        for a in &actions {
            let o = apply_action(stage, rules, &s, a);
            if o.succeeded && seen.insert(o.next.config_key()) {
                if out.len() >= bound {
                    return Err(EnvError::StateBoundExceeded { bound });
                }
                out.push(o.next.clone());
                queue.push_back(o.next);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub observation: Observation<T>,
    pub reward: f64,
    pub done: bool,
    pub succeeded: bool,
}

/// Single simulator instance. Not shared across threads; independent
/// instances may run in parallel.
#[derive(Clone, Debug)]
pub struct MoveEffectEnv {
    stage: Stage,
    rules: Rules,
    state: EnvState,
    done: bool,
}

impl MoveEffectEnv {
    pub fn new(stage: Stage, rules: Rules) -> Result<Self, EnvError> {
        stage.grid.validate()?;
        Ok(MoveEffectEnv {
            stage,
            rules,
            state: EnvState {
                objects: Vec::new(),
                effector: EffectorState::Open,
                step_count: 0,
            },
            done: true,
        })
    }

    pub fn stage(&self) -> &Stage {
        &self.stage
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Install an arbitrary configuration (used by enumeration-driven tests).
    pub fn set_state(&mut self, state: EnvState) {
        self.done = state.step_count >= self.rules.horizon;
        self.state = state;
    }

    pub fn observe<T: Scalar>(&self) -> Observation<T> {
        self.state.observe(&self.stage.grid, &self.rules)
    }

    pub fn reset<T: Scalar>(&mut self, seed: u64) -> Result<Observation<T>, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.stage.grid;
        let kind = self.stage.object_kind();
        let attempts = self.rules.max_placement_attempts.max(1);
        for _ in 0..attempts {
            let mut objects: Vec<WorldObject> = Vec::with_capacity(self.stage.num_objects);
            let mut ok = true;
            for id in 0..self.stage.num_objects {
                let obj = WorldObject {
                    id: id as u32,
                    kind,
                    x: rng.gen_range(0..g.width) as i64,
                    y: rng.gen_range(0..g.height) as i64,
                    orientation: rng.gen_range(0..g.num_orientations),
                    on_table: true,
                };
                if !footprint_free(&obj.footprint(&g, &self.rules), &objects, &g, &self.rules) {
                    ok = false;
                    break;
                }
                objects.push(obj);
            }
            if ok {
                self.state = EnvState {
                    objects,
                    effector: EffectorState::Open,
                    step_count: 0,
                };
                self.done = false;
                return Ok(self.observe());
            }
        }
        Err(EnvError::PlacementInfeasible { attempts })
    }

    pub fn step<T: Scalar>(&mut self, action: &Action) -> Result<StepResult<T>, EnvError> {
        if self.done || self.state.step_count >= self.rules.horizon {
            return Err(EnvError::EpisodeOver {
                horizon: self.rules.horizon,
            });
        }
        if !self.stage.grid.contains_pose(&action.motion) {
            return Err(EnvError::ActionOutOfRange(*action));
        }
        let outcome = apply_action(&self.stage, &self.rules, &self.state, action);
        let step_count = self.state.step_count + 1;
        self.state = outcome.next;
        self.state.step_count = step_count;
        self.done = outcome.goal || step_count >= self.rules.horizon;
        Ok(StepResult {
            observation: self.observe(),
            reward: outcome.reward,
            done: self.done,
            succeeded: outcome.succeeded,
        })
    }

    pub fn render(&self) -> String {
        let img: Image<f64> = self.state.image(&self.stage.grid, &self.rules);
        let hand = match self.state.theta() {
            Theta::Open => "open",
            Theta::Closed => "closed",
        };
        format!("{}hand: {hand}\n", img.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(id: u32, x: i64, y: i64) -> WorldObject {
        WorldObject {
            id,
            kind: ObjectKind::Disk,
            x,
            y,
            orientation: 0,
            on_table: true,
        }
    }

    fn env_with(stage: Stage, objects: Vec<WorldObject>) -> MoveEffectEnv {
        let mut env = MoveEffectEnv::new(stage, Rules::default()).unwrap();
        env.set_state(EnvState {
            objects,
            effector: EffectorState::Open,
            step_count: 0,
        });
        env
    }

    fn pick(x: usize, y: usize) -> Action {
        Action::new(Pose::new(x, y, 0), Effector::Pick)
    }

    fn place(x: usize, y: usize) -> Action {
        Action::new(Pose::new(x, y, 0), Effector::Place)
    }

    #[test]
    fn reset_places_two_disks_hand_open() {
        let mut env = MoveEffectEnv::new(Stage::grid_disk(3), Rules::default()).unwrap();
        let obs: Observation<f64> = env.reset(7).unwrap();
        assert_eq!(obs.theta, Theta::Open);
        assert_eq!(obs.image.as_slice().iter().filter(|v| **v > 0.0).count(), 2);
        assert_eq!(env.state().step_count, 0);
        let again: Observation<f64> = env.reset(7).unwrap();
        assert_eq!(obs, again);
    }

    #[test]
    fn reset_orientations_within_stage() {
        let stage = Stage::new(Task::BlockAlign, 5, 5, 2);
        let mut env = MoveEffectEnv::new(stage, Rules::default()).unwrap();
        for seed in 0..200 {
            let _: Observation<f32> = env.reset(seed).unwrap();
            assert!(env.state().objects.iter().all(|o| o.orientation < 2));
        }
    }

    #[test]
    fn reset_infeasible_is_reported() {
        let mut stage = Stage::new(Task::BlockAlign, 2, 2, 1);
        stage.num_objects = 2;
        let mut env = MoveEffectEnv::new(stage, Rules::default()).unwrap();
        let err = env.reset::<f64>(0).unwrap_err();
        assert!(matches!(err, EnvError::PlacementInfeasible { .. }));
    }

    #[test]
    fn pick_occupied_then_place_adjacent_rewards() {
        let mut env = env_with(Stage::grid_disk(3), vec![disk(0, 0, 0), disk(1, 2, 2)]);
        let r = env.step::<f64>(&pick(0, 0)).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
        assert_eq!(r.observation.theta, Theta::Closed);
        assert_eq!(r.observation.image.get(0, 0), Some(0.0));
        let r = env.step::<f64>(&place(1, 2)).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.done);
    }

    #[test]
    fn failed_actions_are_identity() {
        let mut env = env_with(Stage::grid_disk(3), vec![disk(0, 0, 0), disk(1, 2, 2)]);
        let before = env.state().clone();
        let r = env.step::<f64>(&pick(1, 1)).unwrap();
        assert!(!r.succeeded);
        assert_eq!(r.reward, 0.0);
        let mut after = env.state().clone();
        after.step_count = 0;
        assert_eq!(after, before);
        // place with empty hand
        env.step::<f64>(&place(1, 1)).unwrap();
        assert_eq!(env.state().objects, before.objects);
        // place onto an occupied cell
        env.step::<f64>(&pick(0, 0)).unwrap();
        let held = env.state().clone();
        let r = env.step::<f64>(&place(2, 2)).unwrap();
        assert!(!r.succeeded);
        assert_eq!(env.state().objects, held.objects);
        assert_eq!(env.state().effector, held.effector);
    }

    #[test]
    fn horizon_ends_episode_after_ten_steps() {
        let mut env = env_with(Stage::grid_disk(3), vec![disk(0, 0, 0), disk(1, 2, 2)]);
        for i in 0..10 {
            let r = env.step::<f64>(&pick(1, 1)).unwrap();
            assert_eq!(r.done, i == 9);
        }
        assert_eq!(
            env.step::<f64>(&pick(1, 1)).unwrap_err(),
            EnvError::EpisodeOver { horizon: 10 }
        );
    }

    #[test]
    fn horizontal_only_adjacency() {
        let rules = Rules {
            adjacency: Adjacency::HorizontalOnly,
            ..Rules::default()
        };
        let stage = Stage::grid_disk(3);
        assert!(!goal_satisfied(
            &stage,
            &rules,
            &[disk(0, 1, 1), disk(1, 1, 2)]
        ));
        assert!(goal_satisfied(
            &stage,
            &rules,
            &[disk(0, 1, 1), disk(1, 2, 1)]
        ));
        assert!(goal_satisfied(
            &stage,
            &Rules::default(),
            &[disk(0, 1, 1), disk(1, 1, 2)]
        ));
    }

    #[test]
    fn action_space_sizes() {
        assert_eq!(
            action_space(&Stage::new(Task::GridDisk, 5, 5, 2)).len(),
            100
        );
        assert_eq!(
            Stage::new(Task::BlockAlign, 29, 29, 16).num_actions(),
            26_912
        );
        assert_eq!(action_space(&Stage::new(Task::GridDisk, 1, 1, 1)).len(), 2);
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let mut env = env_with(Stage::grid_disk(3), vec![disk(0, 0, 0), disk(1, 2, 2)]);
        let bad = Action::new(Pose::new(3, 0, 0), Effector::Pick);
        assert!(matches!(
            env.step::<f64>(&bad),
            Err(EnvError::ActionOutOfRange(_))
        ));
        let bad = Action::new(Pose::new(0, 0, 1), Effector::Pick);
        assert!(matches!(
            env.step::<f64>(&bad),
            Err(EnvError::ActionOutOfRange(_))
        ));
    }

    #[test]
    fn enumeration_counts() {
        let rules = Rules::default();
        assert_eq!(
            enumerate_states(&Stage::grid_disk(3), &rules, 1_000_000)
                .unwrap()
                .len(),
            81
        );
        let s12 = Stage::new(Task::GridDisk, 1, 2, 1);
        assert_eq!(enumerate_states(&s12, &rules, 1000).unwrap().len(), 4);
        let mut empty = Stage::grid_disk(2);
        empty.num_objects = 0;
        assert_eq!(enumerate_states(&empty, &rules, 10).unwrap().len(), 1);
        assert_eq!(
            enumerate_states(&Stage::grid_disk(3), &rules, 50).unwrap_err(),
            EnvError::StateBoundExceeded { bound: 50 }
        );
    }

    #[test]
    fn block_grasp_tolerance() {
        let stage = Stage::new(Task::BlockAlign, 5, 5, 4);
        let rules = Rules::default();
        let block = WorldObject {
            id: 0,
            kind: ObjectKind::Block,
            x: 2,
            y: 2,
            orientation: 0,
            on_table: true,
        };
        let s = EnvState {
            objects: vec![block],
            effector: EffectorState::Open,
            step_count: 0,
        };
        let ok = |x, y, o| {
            apply_action(
                &stage,
                &rules,
                &s,
                &Action::new(Pose::new(x, y, o), Effector::Pick),
            )
            .succeeded
        };
        assert!(ok(2, 2, 0));
        assert!(ok(3, 2, 0)); // anywhere on the footprint
        assert!(ok(2, 2, 1)); // one step off axis
        assert!(ok(2, 2, 3));
        assert!(!ok(2, 2, 2)); // perpendicular
        assert!(!ok(2, 3, 0));
    }

    #[test]
    fn block_round_trip_keeps_relative_pose() {
        let stage = Stage::new(Task::BlockAlign, 7, 7, 4);
        let rules = Rules::default();
        let block = WorldObject {
            id: 0,
            kind: ObjectKind::Block,
            x: 2,
            y: 2,
            orientation: 0,
            on_table: true,
        };
        let s = EnvState {
            objects: vec![block],
            effector: EffectorState::Open,
            step_count: 0,
        };
        // grasp off-center at (3,2), then place with a quarter turn at (4,4)
        let o = apply_action(
            &stage,
            &rules,
            &s,
            &Action::new(Pose::new(3, 2, 0), Effector::Pick),
        );
        assert!(o.succeeded);
        let o2 = apply_action(
            &stage,
            &rules,
            &o.next,
            &Action::new(Pose::new(4, 4, 2), Effector::Place),
        );
        assert!(o2.succeeded);
        let placed = o2.next.objects[0];
        assert_eq!(placed.orientation, 2);
        assert_eq!((placed.x, placed.y), (4, 3));
    }

    #[test]
    fn aligned_blocks_reward() {
        let stage = Stage::new(Task::BlockAlign, 7, 7, 2);
        let rules = Rules::default();
        let b = |x, y, o| WorldObject {
            id: 0,
            kind: ObjectKind::Block,
            x,
            y,
            orientation: o,
            on_table: true,
        };
        assert!(goal_satisfied(&stage, &rules, &[b(2, 2, 0), b(2, 3, 0)]));
        assert!(goal_satisfied(&stage, &rules, &[b(1, 2, 0), b(2, 4, 0)]));
        // end to end along the axis is not side by side
        assert!(!goal_satisfied(&stage, &rules, &[b(1, 2, 0), b(4, 2, 0)]));
        assert!(!goal_satisfied(&stage, &rules, &[b(1, 2, 0), b(3, 4, 0)]));
        assert!(!goal_satisfied(&stage, &rules, &[b(2, 2, 0), b(2, 4, 1)]));
        assert!(!goal_satisfied(&stage, &rules, &[b(1, 1, 0), b(1, 6, 0)]));
    }

    #[test]
    fn render_shows_hand() {
        let env = env_with(Stage::grid_disk(2), vec![disk(0, 1, 0)]);
        assert_eq!(env.render(), ".1\n..\nhand: open\n");
    }
}
