//! Annealed, direction-biased candidate generation and feasibility filtering.

mod anneal;
mod bias;
mod filter;
mod generate;
mod targets;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Scene;
use crate::trajectory::CandidateSet;

pub use anneal::{schedule, schedule_at, AnnealParams, AnnealState};
pub use bias::{update_bias, BiasEntry, DirectionBias, BIAS_EMA_DECAY, BIAS_MERGE_ANGLE_DEG};
pub use filter::{filter_constraints, filter_with_verdicts, FilterVerdict};
pub use generate::{
    approach_axis, generate_trajectory, goal_orientation, required_horizon, OrientationLimits,
};
pub use targets::{cone_direction, sample_targets, TARGET_RETRY_CAP};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown target object `{0}`")]
    UnknownTarget(String),
}

/// Sampling and filtering knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    /// Candidates per step.
    pub n_candidates: usize,
    /// Minimum waypoints per trajectory; longer paths are densified.
    pub horizon: usize,
    /// Collision safety margin (m).
    pub epsilon: f64,
    pub bias_mix_prob: f64,
    pub bias_capacity: usize,
    pub max_tilt_deg: f64,
    pub anneal: AnnealParams,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            n_candidates: 8,
            horizon: 12,
            epsilon: 0.01,
            bias_mix_prob: 0.6,
            bias_capacity: 8,
            max_tilt_deg: 60.0,
            anneal: AnnealParams::default(),
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_candidates == 0 {
            return Err(SamplerError::InvalidArgument(
                "n_candidates must be >= 1".into(),
            ));
        }
        if self.horizon < 2 {
            return Err(SamplerError::InvalidArgument("horizon must be >= 2".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SamplerError::InvalidArgument(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.bias_mix_prob) {
            return Err(SamplerError::InvalidArgument(format!(
                "bias_mix_prob {} outside [0, 1]",
                self.bias_mix_prob
            )));
        }
        if self.bias_capacity == 0 {
            return Err(SamplerError::InvalidArgument(
                "bias_capacity must be >= 1".into(),
            ));
        }
        self.anneal.validate()
    }

    pub fn new_bias(&self) -> DirectionBias {
        DirectionBias::new(self.bias_capacity, self.bias_mix_prob)
    }

    pub fn orientation_limits(&self) -> OrientationLimits {
        OrientationLimits {
            max_tilt_deg: self.max_tilt_deg,
            ..OrientationLimits::default()
        }
    }
}

/// Restarts annealing and forgets the direction bias.
pub fn reset_subtask(anneal: &mut AnnealState, bias: &mut DirectionBias) {
    anneal.subtask_step = 0;
    bias.clear();
}

/// Samples targets at the current schedule and turns each into a trajectory.
///
/// Ids run from 1 to `n_candidates`. The rotation cap is the schedule's θ.
pub fn sample_candidates<R: Rng + ?Sized>(
    scene: &Scene,
    anneal: &AnnealState,
    bias: &DirectionBias,
    params: &SamplerParams,
    step: u32,
    rng: &mut R,
) -> Result<CandidateSet, SamplerError> {
    let (radius, theta) = anneal.schedule();
    let current = scene.ee_pose();
    let targets = sample_targets(
        &current,
        radius,
        theta,
        bias,
        params.n_candidates,
        scene.workspace(),
        rng,
    );
    let limits = OrientationLimits {
        max_tilt_deg: params.max_tilt_deg,
        max_rotation_deg: theta,
    };
    let trajectories = targets
        .into_iter()
        .enumerate()
        .map(|(i, target)| {
            let h = required_horizon(
                current.position.distance(target),
                params.horizon,
                params.epsilon,
            );
            generate_trajectory(&current, scene.gripper(), target, h, i as u32 + 1, &limits)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CandidateSet { step, trajectories })
}
