use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Stored directions within this angle are merged by EMA instead of appended.
pub const BIAS_MERGE_ANGLE_DEG: f64 = 15.0;
pub const BIAS_EMA_DECAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEntry {
    pub direction: Vec3,
    pub weight: f64,
}

/// Directions that earned good scores, used to steer target sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionBias {
    entries: Vec<BiasEntry>,
    capacity: usize,
    /// Probability that a sample is drawn around a stored direction.
    mix_prob: f64,
}

impl DirectionBias {
    pub fn new(capacity: usize, mix_prob: f64) -> Self {
        Self {
            entries: Vec::new(),
            capacity: capacity.max(1),
            mix_prob: mix_prob.clamp(0.0, 1.0),
        }
    }

    pub fn entries(&self) -> &[BiasEntry] {
        &self.entries
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mix_prob(&self) -> f64 {
        self.mix_prob
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Records a direction that was executed and scored.
    ///
    /// Negative scores are stored as zero weight. Zero-length directions are
    /// ignored.
    pub fn update(&mut self, executed_direction: Vec3, score: f64) {
        let Some(dir) = executed_direction.normalized() else {
            return;
        };
        if !score.is_finite() {
            return;
        }
        let score = score.max(0.0);
        let merge = BIAS_MERGE_ANGLE_DEG.to_radians();
        let nearest = self
            .entries
            .iter_mut()
            .map(|e| (e.direction.angle_to(dir), e))
            .filter(|(angle, _)| *angle <= merge)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, entry)) = nearest {
            entry.weight = BIAS_EMA_DECAY * entry.weight + (1.0 - BIAS_EMA_DECAY) * score;
            return;
        }
        self.entries.push(BiasEntry {
            direction: dir,
            weight: score,
        });
        while self.entries.len() > self.capacity {
            // Earliest entry wins ties so eviction is deterministic.
            let lowest = self
                .entries
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("non-empty");
            self.entries.remove(lowest);
        }
    }

    /// Picks an entry with probability proportional to weight (uniform if all
    /// weights are zero). `u` is a uniform draw in `[0, 1)`.
    pub(crate) fn pick(&self, u: f64) -> Option<&BiasEntry> {
        if self.entries.is_empty() {
            return None;
        }
        let total: f64 = self.entries.iter().map(|e| e.weight).sum();
        if total <= 0.0 {
            let i = ((u * self.entries.len() as f64) as usize).min(self.entries.len() - 1);
            return self.entries.get(i);
        }
        let mut acc = 0.0;
        let goal = u * total;
        for e in &self.entries {
            acc += e.weight;
            if goal < acc {
                return Some(e);
            }
        }
        self.entries.last()
    }
}

pub fn update_bias(bias: &mut DirectionBias, executed_direction: Vec3, score: f64) {
    bias.update(executed_direction, score);
}
