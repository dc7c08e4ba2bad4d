//! Deictic image mapping.
//!
//! A motion target is encoded by the image patch around it, cropped in the
//! frame of the target pose. The action mapping pairs that patch with the
//! effector action; the state mapping keeps the last `k - 1` abstract
//! actions plus the gripper bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Effector, Theta};
use crate::geometry::{orientation_angle, Image, Pose};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DeicticError {
    #[error("crop window must be odd and at least 1, got {0}")]
    InvalidWindow(usize),
    #[error("history length k must be at least 1")]
    InvalidHistory,
    #[error("fix_inverse expects a fixed pose (orientation 0), got orientation {0}")]
    NotFixed(usize),
    #[error("patch expects {expected} values, got {got}")]
    PatchSize { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    Nearest,
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSpec {
    /// Cells per side; odd.
    pub window: usize,
    #[serde(default)]
    pub padding: f64,
    #[serde(default = "default_resampling")]
    pub resampling: Resampling,
    /// Identify a patch with its half-turn rotation in the action mapping.
    /// Poses at `phi` and `phi + 180°` are the same physical grasp.
    #[serde(default = "default_true")]
    pub gripper_symmetric: bool,
}

fn default_resampling() -> Resampling {
    Resampling::Nearest
}

fn default_true() -> bool {
    true
}

impl CropSpec {
    pub fn new(window: usize) -> Self {
        CropSpec {
            window,
            padding: 0.0,
            resampling: Resampling::Nearest,
            gripper_symmetric: true,
        }
    }

    pub fn validate(&self) -> Result<(), DeicticError> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(DeicticError::InvalidWindow(self.window));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.window * self.window
    }
}

/// `window x window` snapshot of an image, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch<T> {
    window: usize,
    values: Vec<T>,
}

impl<T: Scalar> Patch<T> {
    pub fn zeros(window: usize) -> Self {
        Patch {
            window,
            values: vec![T::zero(); window * window],
        }
    }

    /// Rebuild from flat row-major values.
    pub fn from_flat(window: usize, values: Vec<T>) -> Result<Self, DeicticError> {
        if values.len() != window * window {
            return Err(DeicticError::PatchSize {
                expected: window * window,
                got: values.len(),
            });
        }
        Ok(Patch { window, values })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.values.clone()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.window + col]
    }

    pub fn has_positive(&self) -> bool {
        self.values.iter().any(|v| *v > T::zero())
    }

    pub fn rotated_quarter(&self) -> Self {
        // counter-clockwise in (col, row) coordinates, matching GridTransform
        let w = self.window;
        let mut out = vec![T::zero(); w * w];
        for r in 0..w {
            for c in 0..w {
                out[c * w + (w - 1 - r)] = self.values[r * w + c];
            }
        }
        Patch {
            window: w,
            values: out,
        }
    }

    pub fn rotated_half(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Patch {
            window: self.window,
            values,
        }
    }

    /// Smaller of the patch and its half-turn under lexicographic order.
    pub fn canonical_half_turn(self) -> Self {
        let n = self.values.len();
        for i in 0..n {
            let (a, b) = (self.values[i], self.values[n - 1 - i]);
            if a < b {
                return self;
            }
            if b < a {
                return self.rotated_half();
            }
        }
        self
    }

    pub fn key_bytes(&self, out: &mut Vec<u8>) {
        out.push(self.window as u8);
        for v in &self.values {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
}

/// Effector tag of an abstract action; `None` marks padding history entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EffectorTag {
    None,
    Pick,
    Place,
}

impl From<Effector> for EffectorTag {
    fn from(e: Effector) -> Self {
        match e {
            Effector::Pick => EffectorTag::Pick,
            Effector::Place => EffectorTag::Place,
        }
    }
}

impl EffectorTag {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractAction<T> {
    pub patch: Patch<T>,
    pub effector: EffectorTag,
}

impl<T: Scalar> AbstractAction<T> {
    pub fn blank(window: usize) -> Self {
        AbstractAction {
            patch: Patch::zeros(window),
            effector: EffectorTag::None,
        }
    }

    pub fn key_bytes(&self, out: &mut Vec<u8>) {
        out.push(self.effector as u8);
        self.patch.key_bytes(out);
    }

    pub fn key(&self) -> Vec<u8> {
        let mut k = Vec::with_capacity(2 + 8 * self.patch.values.len());
        self.key_bytes(&mut k);
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractState<T> {
    /// Oldest first; always `k - 1` entries.
    pub history: Vec<AbstractAction<T>>,
    pub theta: Theta,
}

impl<T: Scalar> AbstractState<T> {
    /// Episode-start state: blank history.
    pub fn initial(cfg: &DeicticConfig, theta: Theta) -> Self {
        AbstractState {
            history: vec![AbstractAction::blank(cfg.crop.window); cfg.k - 1],
            theta,
        }
    }

    /// Shift-append: drop the oldest entry, append `latest`, set the new bit.
    pub fn advance(&self, latest: AbstractAction<T>, theta: Theta) -> Self {
        let mut history = self.history.clone();
        if !history.is_empty() {
            history.remove(0);
            history.push(latest);
        }
        AbstractState { history, theta }
    }

    pub fn key(&self) -> Vec<u8> {
        let mut k = vec![self.theta.bit()];
        for h in &self.history {
            h.key_bytes(&mut k);
        }
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeicticConfig {
    pub k: usize,
    pub crop: CropSpec,
}

impl DeicticConfig {
    pub fn new(k: usize, window: usize) -> Self {
        DeicticConfig {
            k,
            crop: CropSpec::new(window),
        }
    }

    pub fn validate(&self) -> Result<(), DeicticError> {
        if self.k == 0 {
            return Err(DeicticError::InvalidHistory);
        }
        self.crop.validate()
    }
}

/// Precomputed sampling offsets for every orientation of a discretization.
#[derive(Clone, Debug)]
pub struct CropTable {
    spec: CropSpec,
    num_orientations: usize,
    nearest: Vec<Vec<(i64, i64)>>,
    exact: Vec<Vec<(f64, f64)>>,
}

impl CropTable {
    pub fn new(spec: CropSpec, num_orientations: usize) -> Self {
        let w = spec.window as i64;
        let r = w / 2;
        let mut nearest = Vec::with_capacity(num_orientations);
        let mut exact = Vec::with_capacity(num_orientations);
        for o in 0..num_orientations {
            let (s, c) = orientation_angle(o, num_orientations).sin_cos();
            let mut nv = Vec::with_capacity((w * w) as usize);
            let mut ev = Vec::with_capacity((w * w) as usize);
            for row in 0..w {
                for col in 0..w {
                    let (u, v) = ((col - r) as f64, (row - r) as f64);
                    let (x, y) = (c * u - s * v, s * u + c * v);
                    nv.push((x.round() as i64, y.round() as i64));
                    ev.push((x, y));
                }
            }
            nearest.push(nv);
            exact.push(ev);
        }
        CropTable {
            spec,
            num_orientations,
            nearest,
            exact,
        }
    }

    pub fn spec(&self) -> &CropSpec {
        &self.spec
    }

    pub fn num_orientations(&self) -> usize {
        self.num_orientations
    }

    pub fn crop<T: Scalar>(&self, image: &Image<T>, pose: &Pose) -> Patch<T> {
        let pad = T::lit(self.spec.padding);
        let (cx, cy) = (pose.x as i64, pose.y as i64);
        let values = match self.spec.resampling {
            Resampling::Nearest => self.nearest[pose.orientation]
                .iter()
                .map(|&(dx, dy)| image.get(cx + dx, cy + dy).unwrap_or(pad))
                .collect(),
            Resampling::Bilinear => self.exact[pose.orientation]
                .iter()
                .map(|&(dx, dy)| bilinear(image, cx as f64 + dx, cy as f64 + dy, pad))
                .collect(),
        };
        Patch {
            window: self.spec.window,
            values,
        }
    }

    /// True iff the crop at `pose` contains a strictly positive cell.
    pub fn crop_has_positive<T: Scalar>(&self, image: &Image<T>, pose: &Pose) -> bool {
        match self.spec.resampling {
            Resampling::Nearest => {
                let pad_positive = self.spec.padding > 0.0;
                let (cx, cy) = (pose.x as i64, pose.y as i64);
                self.nearest[pose.orientation].iter().any(|&(dx, dy)| {
                    match image.get(cx + dx, cy + dy) {
                        Some(v) => v > T::zero(),
                        None => pad_positive,
                    }
                })
            }
            Resampling::Bilinear => self.crop(image, pose).has_positive(),
        }
    }

    pub fn action_map<T: Scalar>(&self, image: &Image<T>, action: &Action) -> AbstractAction<T> {
        let patch = self.crop(image, &action.motion);
        let patch = if self.spec.gripper_symmetric {
            patch.canonical_half_turn()
        } else {
            patch
        };
        AbstractAction {
            patch,
            effector: action.effector.into(),
        }
    }

    pub fn prune(&self, actions: &[Action], image: &Image<impl Scalar>) -> Vec<Action> {
        actions
            .iter()
            .filter(|a| self.crop_has_positive(image, &a.motion))
            .copied()
            .collect()
    }
}

fn bilinear<T: Scalar>(image: &Image<T>, x: f64, y: f64, pad: T) -> T {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |xx: i64, yy: i64| image.get(xx, yy).unwrap_or(pad).as_f64();
    let v = at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x0 + 1, y0) * fx * (1.0 - fy)
        + at(x0, y0 + 1) * (1.0 - fx) * fy
        + at(x0 + 1, y0 + 1) * fx * fy;
    T::lit(v)
}

/// Crop of `image` centered on `pose` and aligned with its axes; cells that
/// fall outside the image take the padding value.
pub fn crop<T: Scalar>(
    image: &Image<T>,
    pose: &Pose,
    num_orientations: usize,
    spec: &CropSpec,
) -> Patch<T> {
    CropTable::new(*spec, num_orientations).crop(image, pose)
}

/// Action mapping: `(crop(I, a_m), a_e)`.
pub fn action_map<T: Scalar>(
    image: &Image<T>,
    action: &Action,
    num_orientations: usize,
    spec: &CropSpec,
) -> AbstractAction<T> {
    CropTable::new(*spec, num_orientations).action_map(image, action)
}

/// State mapping over a history of `(image, action)` pairs (oldest first).
/// Only the last `k - 1` pairs are used; missing ones become blank entries.
pub fn state_map<T: Scalar>(
    history: &[(Image<T>, Action)],
    theta: Theta,
    num_orientations: usize,
    cfg: &DeicticConfig,
) -> AbstractState<T> {
    let table = CropTable::new(cfg.crop, num_orientations);
    state_map_with(&table, history, theta, cfg.k)
}

pub fn state_map_with<T: Scalar>(
    table: &CropTable,
    history: &[(Image<T>, Action)],
    theta: Theta,
    k: usize,
) -> AbstractState<T> {
    let keep = k - 1;
    let used = history.len().min(keep);
    let mut entries = vec![AbstractAction::blank(table.spec.window); keep - used];
    entries.extend(
        history[history.len() - used..]
            .iter()
            .map(|(img, a)| table.action_map(img, a)),
    );
    AbstractState {
        history: entries,
        theta,
    }
}

/// Same position, orientation fixed to the base frame.
pub fn fix(p: &Pose) -> Pose {
    Pose::new(p.x, p.y, 0)
}

/// All fully specified poses sharing the position of a fixed pose.
pub fn fix_inverse(p: &Pose, num_orientations: usize) -> Result<Vec<Pose>, DeicticError> {
    if p.orientation != 0 {
        return Err(DeicticError::NotFixed(p.orientation));
    }
    Ok((0..num_orientations)
        .map(|o| Pose::new(p.x, p.y, o))
        .collect())
}

/// Keep the actions whose crop shows some positive height; order preserved.
pub fn prune<T: Scalar>(
    actions: &[Action],
    image: &Image<T>,
    num_orientations: usize,
    spec: &CropSpec,
) -> Vec<Action> {
    CropTable::new(*spec, num_orientations).prune(actions, image)
}
