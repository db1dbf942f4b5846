use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::scene::{min_clearance, penetration, Role, Scene};
use crate::trajectory::{CandidateSet, FeasibleSet, TrajectoryId};

/// Why a candidate was kept or dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FilterVerdict {
    Kept {
        id: TrajectoryId,
        /// Original waypoint count when the target cut the path short.
        truncated_from: Option<usize>,
    },
    /// Environment collision: waypoint `waypoint` is `clearance` from `object_id`.
    Collision {
        id: TrajectoryId,
        waypoint: usize,
        object_id: String,
        clearance: f64,
    },
    /// Target penetration left fewer than two waypoints.
    TargetPrefixTooShort { id: TrajectoryId },
}

/// Applies the target-penetration truncation and the environment-collision
/// check, returning the feasible set and one verdict per candidate.
pub fn filter_with_verdicts(
    cands: &CandidateSet,
    scene: &Scene,
    epsilon: f64,
    target_id: Option<&str>,
) -> Result<(FeasibleSet, Vec<FilterVerdict>), SamplerError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(SamplerError::InvalidArgument(format!(
            "epsilon {epsilon} must be >= 0"
        )));
    }
    let target = match target_id.filter(|id| !id.is_empty()) {
        Some(id) => Some(
            scene
                .object(id)
                .ok_or_else(|| SamplerError::UnknownTarget(id.to_string()))?,
        ),
        None => None,
    };
    // Only an object that execution also ignores may be skipped here.
    let mut exempt: HashSet<&str> = scene.attached_object_id().into_iter().collect();
    if let Some(t) = target.filter(|t| t.role == Role::Target) {
        exempt.insert(t.id.as_str());
    }

    let mut kept = Vec::new();
    let mut verdicts = Vec::with_capacity(cands.trajectories.len());
    'cands: for traj in &cands.trajectories {
        let mut traj = traj.clone();
        let mut truncated_from = None;
        if let Some(t) = target {
            let cut = traj.positions().position(|p| penetration(p, t));
            if let Some(cut) = cut {
                if cut < 2 {
                    verdicts.push(FilterVerdict::TargetPrefixTooShort { id: traj.id });
                    continue;
                }
                truncated_from = Some(traj.waypoints.len());
                traj.waypoints.truncate(cut);
            }
        }
        for (i, p) in traj.positions().enumerate() {
            let (clearance, who) = min_clearance(p, scene, &exempt);
            if clearance < epsilon {
                verdicts.push(FilterVerdict::Collision {
                    id: traj.id,
                    waypoint: i,
                    object_id: who.unwrap_or_default().to_string(),
                    clearance,
                });
                continue 'cands;
            }
        }
        verdicts.push(FilterVerdict::Kept {
            id: traj.id,
            truncated_from,
        });
        kept.push(traj);
    }
    Ok((
        FeasibleSet {
            step: cands.step,
            trajectories: kept,
        },
        verdicts,
    ))
}

pub fn filter_constraints(
    cands: &CandidateSet,
    scene: &Scene,
    epsilon: f64,
    target_id: Option<&str>,
) -> Result<FeasibleSet, SamplerError> {
    filter_with_verdicts(cands, scene, epsilon, target_id).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use crate::scene::{GripperState, SceneObject, ShapePrimitive, WorkspaceBounds};
    use crate::trajectory::{Trajectory, Waypoint};

    fn scene() -> Scene {
        let ws =
            WorkspaceBounds::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        Scene::new(ws, Pose::from_position(Vec3::new(0.0, 0.0, 0.5))).unwrap()
    }

    fn line(id: u32, from: Vec3, to: Vec3, n: usize) -> Trajectory {
        Trajectory {
            id,
            waypoints: (0..n)
                .map(|i| Waypoint {
                    pose: Pose::from_position(from.lerp(to, i as f64 / (n - 1) as f64)),
                    gripper: GripperState::OPEN,
                })
                .collect(),
            target_position: to,
        }
    }

    fn cands(trajs: Vec<Trajectory>) -> CandidateSet {
        CandidateSet {
            step: 0,
            trajectories: trajs,
        }
    }

    #[test]
    fn empty_scene_keeps_everything() {
        let c = cands(vec![
            line(1, Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.1, 0.0, 0.5), 21),
            line(2, Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.0, 0.1, 0.5), 21),
        ]);
        let f = filter_constraints(&c, &scene(), 0.01, None).unwrap();
        assert_eq!(f.trajectories, c.trajectories);
    }

    #[test]
    fn path_through_obstacle_discarded() {
        let mut s = scene();
        s.add_object(SceneObject::new(
            "rock",
            ShapePrimitive::Sphere { radius: 0.03 },
            Pose::from_position(Vec3::new(0.1, 0.0, 0.5)),
            Role::Obstacle,
        ))
        .unwrap();
        let c = cands(vec![line(
            1,
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(0.2, 0.0, 0.5),
            41,
        )]);
        let (f, v) = filter_with_verdicts(&c, &s, 0.01, None).unwrap();
        assert!(f.is_empty());
        match &v[0] {
            FilterVerdict::Collision {
                waypoint,
                object_id,
                clearance,
                ..
            } => {
                assert_eq!(object_id, "rock");
                assert!(*clearance < 0.01);
                // First waypoint within eps of the surface: x > 0.1 - 0.04.
                let x = 0.2 * *waypoint as f64 / 40.0;
                assert!(x > 0.06 - 1e-12 && x - 0.2 / 40.0 <= 0.06 + 1e-12);
            }
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn target_penetration_truncates() {
        let mut s = scene();
        s.add_object(SceneObject::new(
            "cup",
            ShapePrimitive::Sphere { radius: 0.05 },
            Pose::from_position(Vec3::new(0.2, 0.0, 0.5)),
            Role::Target,
        ))
        .unwrap();
        // 0.01 spacing; waypoints at x = 0.16 and 0.17 lie inside the sphere.
        let traj = line(4, Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.17, 0.0, 0.5), 18);
        let inside = traj
            .positions()
            .filter(|p| (p.x - 0.2).abs() < 0.05)
            .count();
        assert_eq!(inside, 2);
        let f = filter_constraints(&cands(vec![traj.clone()]), &s, 0.01, Some("cup")).unwrap();
        assert_eq!(f.ids(), vec![4]);
        assert_eq!(f.trajectories[0].waypoints, traj.waypoints[..16].to_vec());
    }

    #[test]
    fn target_right_at_start_discards() {
        let mut s = scene();
        s.add_object(SceneObject::new(
            "cup",
            ShapePrimitive::Sphere { radius: 0.05 },
            Pose::from_position(Vec3::new(0.03, 0.0, 0.5)),
            Role::Target,
        ))
        .unwrap();
        let c = cands(vec![line(
            1,
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(0.1, 0.0, 0.5),
            11,
        )]);
        let (f, v) = filter_with_verdicts(&c, &s, 0.01, Some("cup")).unwrap();
        assert!(f.is_empty());
        assert_eq!(v, vec![FilterVerdict::TargetPrefixTooShort { id: 1 }]);
    }

    #[test]
    fn invalid_arguments() {
        let c = cands(vec![]);
        assert!(filter_constraints(&c, &scene(), -0.1, None).is_err());
        assert!(matches!(
            filter_constraints(&c, &scene(), 0.01, Some("ghost")),
            Err(SamplerError::UnknownTarget(_))
        ));
    }
}
