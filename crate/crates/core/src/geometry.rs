//! Grid images, discrete SE(2) poses and the rigid grid transforms used to
//! state pose invariance.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Discretized SE(2) element: cell indices plus an orientation index.
///
/// Orientation `o` of a grid with `n` orientations denotes the angle
/// `o * 180° / n`; the gripper is symmetric under a half turn, so the
/// indices only need to span 180°.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub orientation: usize,
}

impl Pose {
    pub const fn new(x: usize, y: usize, orientation: usize) -> Self {
        Pose { x, y, orientation }
    }

    /// Angle in radians for a discretization with `num_orientations` steps.
    pub fn angle(&self, num_orientations: usize) -> f64 {
        orientation_angle(self.orientation, num_orientations)
    }
}

pub fn orientation_angle(index: usize, num_orientations: usize) -> f64 {
    index as f64 * std::f64::consts::PI / num_orientations as f64
}

/// Rotate an integer offset by `angle` and round to the nearest cell.
///
/// Rounding is half-away-from-zero, so `rotate_round(-v) == -rotate_round(v)`.
pub fn rotate_round(dx: f64, dy: f64, angle: f64) -> (i64, i64) {
    let (s, c) = angle.sin_cos();
    let rx = c * dx - s * dy;
    let ry = s * dx + c * dy;
    (rx.round() as i64, ry.round() as i64)
}

/// Rectangular row-major grid of cell values (occupancy or height).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Image {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major values, `y * width + x`.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn get(&self, x: i64, y: i64) -> Option<T> {
        self.contains(x, y)
            .then(|| self.data[y as usize * self.width + x as usize])
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn has_positive(&self) -> bool {
        self.data.iter().any(|v| *v > T::zero())
    }

    /// Convert element type.
    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Canonical bytes for exact equality grouping.
    pub fn key_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }

    /// ASCII heightmap: `.` for empty cells, a digit (clamped to 9) otherwise.
    pub fn render(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.data[y * self.width + x].as_f64();
                if v <= 0.0 {
                    s.push('.');
                } else {
                    let d = v.ceil().min(9.0) as u32;
                    s.push(char::from_digit(d, 10).unwrap_or('#'));
                }
            }
            s.push('\n');
        }
        s
    }

    /// Apply a grid symmetry; returns `None` if a nonzero cell leaves the grid.
    pub fn transformed(&self, t: &GridTransform) -> Option<Self> {
        let (w, h) = t.output_dims(self.width, self.height);
        let mut out = Image::zeros(w, h);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.data[y * self.width + x];
                let (nx, ny) = t.apply_cell(x as i64, y as i64, self.width, self.height);
                if out.contains(nx, ny) {
                    out.set(nx as usize, ny as usize, v);
                } else if v != T::zero() {
                    return None;
                }
            }
        }
        Some(out)
    }
}

/// Rigid grid symmetry: `quarter_turns` counter-clockwise rotations (in
/// cell coordinates) followed by a translation.
///
/// A rotation of a `w x h` grid maps cell `(x, y)` to `(h - 1 - y, x)` on an
/// `h x w` grid, i.e. a +90° rotation followed by a re-origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridTransform {
    pub quarter_turns: u8,
    pub dx: i64,
    pub dy: i64,
}

impl GridTransform {
    pub fn translation(dx: i64, dy: i64) -> Self {
        GridTransform {
            quarter_turns: 0,
            dx,
            dy,
        }
    }

    pub fn rotation(quarter_turns: u8) -> Self {
        GridTransform {
            quarter_turns: quarter_turns % 4,
            dx: 0,
            dy: 0,
        }
    }

    pub fn output_dims(&self, width: usize, height: usize) -> (usize, usize) {
        if self.quarter_turns % 2 == 0 {
            (width, height)
        } else {
            (height, width)
        }
    }

    pub fn apply_cell(&self, x: i64, y: i64, width: usize, height: usize) -> (i64, i64) {
        let (mut x, mut y) = (x, y);
        let (mut w, mut h) = (width as i64, height as i64);
        for _ in 0..self.quarter_turns % 4 {
            let nx = h - 1 - y;
            let ny = x;
            x = nx;
            y = ny;
            std::mem::swap(&mut w, &mut h);
        }
        (x + self.dx, y + self.dy)
    }

    /// Map a pose. The orientation index advances by `n/2` per quarter turn;
    /// returns `None` when the result leaves `[0, n)` (a half-turn wrap is not
    /// the same crop) or when `n` is odd and the turn count is odd.
    pub fn apply_pose(
        &self,
        pose: &Pose,
        width: usize,
        height: usize,
        num_orientations: usize,
    ) -> Option<Pose> {
        let (x, y) = self.apply_cell(pose.x as i64, pose.y as i64, width, height);
        let (w, h) = self.output_dims(width, height);
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            return None;
        }
        let turns = (self.quarter_turns % 4) as usize;
        if turns % 2 == 1 && num_orientations % 2 == 1 {
            return None;
        }
        let o = pose.orientation + turns * num_orientations / 2;
        (o < num_orientations).then_some(Pose::new(x as usize, y as usize, o))
    }
}
