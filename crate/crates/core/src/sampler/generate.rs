use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::geometry::{Pose, UnitQuaternion, Vec3};
use crate::scene::GripperState;
use crate::trajectory::{Trajectory, Waypoint};

/// Limits on the heuristic goal orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationLimits {
    /// Maximum angle between the tool approach axis and world −z (degrees).
    pub max_tilt_deg: f64,
    /// Maximum rotation from the start orientation to the goal (degrees).
    pub max_rotation_deg: f64,
}

impl Default for OrientationLimits {
    fn default() -> Self {
        Self {
            max_tilt_deg: 60.0,
            max_rotation_deg: 180.0,
        }
    }
}

/// Tool approach axis for a path heading along `dir`: `dir` itself, tilted
/// back toward world −z when it leans more than `max_tilt_deg` away from it.
pub fn approach_axis(dir: Vec3, max_tilt_deg: f64) -> Vec3 {
    let down = -Vec3::Z;
    let Some(dir) = dir.normalized() else {
        return down;
    };
    let max_tilt = max_tilt_deg.to_radians();
    if dir.angle_to(down) <= max_tilt {
        return dir;
    }
    let lateral = (dir - down * dir.dot(down)).normalized().unwrap_or(Vec3::X);
    down * max_tilt.cos() + lateral * max_tilt.sin()
}

/// Goal orientation whose local +z matches [`approach_axis`], reached by the
/// smallest rotation from `start` and capped at `max_rotation_deg`.
pub fn goal_orientation(
    start: &UnitQuaternion,
    dir: Vec3,
    limits: &OrientationLimits,
) -> UnitQuaternion {
    let axis = approach_axis(dir, limits.max_tilt_deg);
    let current_axis = start.rotate(Vec3::Z);
    let align =
        UnitQuaternion::rotation_between(current_axis, axis).unwrap_or(UnitQuaternion::IDENTITY);
    let goal = align * *start;
    let angle = start.angle_to(&goal);
    let cap = limits.max_rotation_deg.to_radians();
    if angle > cap && angle > 0.0 {
        start.slerp(&goal, cap / angle).unwrap_or(goal)
    } else {
        goal
    }
}

/// Straight-line trajectory with Slerped orientations and constant gripper.
///
/// A target within 1e-9 m of the start yields `horizon` copies of the start
/// pose.
pub fn generate_trajectory(
    current: &Pose,
    gripper: GripperState,
    target: Vec3,
    horizon: usize,
    id: u32,
    limits: &OrientationLimits,
) -> Result<Trajectory, SamplerError> {
    if horizon < 2 {
        return Err(SamplerError::InvalidArgument(format!(
            "horizon {horizon} < 2"
        )));
    }
    if !target.is_finite() {
        return Err(SamplerError::InvalidArgument(format!(
            "non-finite target {target}"
        )));
    }
    let start = current.position;
    let delta = target - start;
    if delta.norm() <= 1e-9 {
        let wp = Waypoint {
            pose: *current,
            gripper,
        };
        return Ok(Trajectory {
            id,
            waypoints: vec![wp; horizon],
            target_position: target,
        });
    }
    let q_start = current.orientation;
    let q_goal = goal_orientation(&q_start, delta, limits);
    let last = horizon - 1;
    let waypoints = (0..horizon)
        .map(|i| {
            let pose = if i == 0 {
                *current
            } else if i == last {
                Pose::new(target, q_goal)
            } else {
                let s = i as f64 / last as f64;
                Pose::new(start.lerp(target, s), q_start.slerp(&q_goal, s)?)
            };
            Ok(Waypoint { pose, gripper })
        })
        .collect::<Result<Vec<_>, crate::geometry::GeometryError>>()
        .map_err(|e| SamplerError::InvalidArgument(e.to_string()))?;
    Ok(Trajectory {
        id,
        waypoints,
        target_position: target,
    })
}

/// Waypoint count for a path of `length` m: at least `base`, and enough that
/// consecutive waypoints are at most `epsilon / 2` apart.
pub fn required_horizon(length: f64, base: usize, epsilon: f64) -> usize {
    let base = base.max(2);
    if epsilon <= 0.0 || !length.is_finite() {
        return base;
    }
    let segments = (length / (epsilon / 2.0)).ceil() as usize;
    base.max(segments + 1)
}
