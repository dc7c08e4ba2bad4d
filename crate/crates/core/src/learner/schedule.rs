use serde::{Deserialize, Serialize};

/// Linear exploration schedule over episodes, clamped at `end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Episodes over which epsilon falls from `start` to `end`.
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_episodes: usize) -> Self {
        EpsilonSchedule {
            start,
            end,
            decay_episodes,
        }
    }

    pub fn value(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.end;
        }
        let f = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * f
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(self.start) || !ok(self.end) {
            return Err("epsilon values must lie in [0, 1]".into());
        }
        Ok(())
    }
}
