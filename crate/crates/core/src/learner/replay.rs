//! Experience replay: a ring buffer with uniform or proportional
//! prioritized sampling backed by a sum tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReplayMode {
    Uniform,
    Prioritized {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_priority_epsilon")]
        epsilon: f64,
    },
}

fn default_alpha() -> f64 {
    0.6
}

fn default_beta() -> f64 {
    0.4
}

fn default_priority_epsilon() -> f64 {
    1e-6
}

impl ReplayMode {
    pub fn prioritized() -> Self {
        ReplayMode::Prioritized {
            alpha: default_alpha(),
            beta: default_beta(),
            epsilon: default_priority_epsilon(),
        }
    }
}

/// Binary tree of partial sums over leaf weights.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let mut n = self.leaves + i;
        self.nodes[n] = w;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range contains `mass` (clamped to a nonzero leaf).
    pub fn find(&self, mut mass: f64) -> usize {
        let mut n = 1;
        while n < self.leaves {
            let left = self.nodes[2 * n];
            if mass < left || self.nodes[2 * n + 1] <= 0.0 {
                n *= 2;
            } else {
                mass -= left;
                n = 2 * n + 1;
            }
        }
        n - self.leaves
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    /// Importance weights normalized by the batch maximum (all ones when uniform).
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer<X> {
    capacity: usize,
    items: Vec<X>,
    next: usize,
    mode: ReplayMode,
    priorities: Vec<f64>,
    tree: SumTree,
    max_priority: f64,
}

impl<X> ReplayBuffer<X> {
    pub fn new(capacity: usize, mode: ReplayMode) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            mode,
            priorities: Vec::new(),
            tree: SumTree::new(if matches!(mode, ReplayMode::Uniform) {
                1
            } else {
                capacity
            }),
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    pub fn get(&self, i: usize) -> &X {
        &self.items[i]
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.priorities.clear();
        self.next = 0;
        self.max_priority = 1.0;
        self.tree = SumTree::new(self.tree.leaves);
    }

    /// Insert, overwriting the oldest entry when full. New entries get the
    /// largest priority seen so far.
    pub fn push(&mut self, x: X) {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(x);
            self.priorities.push(0.0);
        } else {
            self.items[slot] = x;
        }
        self.next = (slot + 1) % self.capacity;
        if let ReplayMode::Prioritized { .. } = self.mode {
            self.set_priority(slot, self.max_priority);
        }
    }

    /// Raw priority `|delta| + epsilon` (not raised to alpha).
    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    fn set_priority(&mut self, i: usize, p: f64) {
        if let ReplayMode::Prioritized { alpha, .. } = self.mode {
            self.priorities[i] = p;
            self.tree.set(i, p.powf(alpha));
            self.max_priority = self.max_priority.max(p);
        }
    }

    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        if let ReplayMode::Prioritized { epsilon, .. } = self.mode {
            for (&i, d) in indices.iter().zip(td_errors) {
                self.set_priority(i, d.abs() + epsilon);
            }
        }
    }

    /// Sampling probability of each stored entry.
    pub fn probabilities(&self) -> Vec<f64> {
        match self.mode {
            ReplayMode::Uniform => vec![1.0 / self.len() as f64; self.len()],
            ReplayMode::Prioritized { .. } => {
                let total = self.tree.total();
                (0..self.len()).map(|i| self.tree.get(i) / total).collect()
            }
        }
    }

    /// Draw `n` indices. Uniform mode samples without replacement; prioritized
    /// mode draws one index per equal-mass stratum.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Sample {
        assert!(n <= self.len(), "not enough transitions to sample");
        match self.mode {
            ReplayMode::Uniform => Sample {
                indices: rand::seq::index::sample(rng, self.len(), n).into_vec(),
                weights: vec![1.0; n],
            },
            ReplayMode::Prioritized { beta, .. } => {
                let total = self.tree.total();
                let seg = total / n as f64;
                let mut indices = Vec::with_capacity(n);
                for s in 0..n {
                    let mass = (s as f64 + rng.gen::<f64>()) * seg;
                    indices.push(
                        self.tree
                            .find(mass.min(total * (1.0 - f64::EPSILON)))
                            .min(self.len() - 1),
                    );
                }
                let len = self.len() as f64;
                let raw: Vec<f64> = indices
                    .iter()
                    .map(|&i| (len * self.tree.get(i) / total).powf(-beta))
                    .collect();
                let max = raw.iter().copied().fold(0.0, f64::max);
                Sample {
                    indices,
                    weights: raw.iter().map(|w| w / max).collect(),
                }
            }
        }
    }
}
