//! Kinematic, waypoint-sampled trajectory execution.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{signed_distance, Scene, SceneError};
use crate::geometry::{Pose, Vec3};
use crate::trajectory::Trajectory;

/// Spacing comparisons allow this much floating-point slack (m).
const SPACING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintViolation {
    /// Execution stopped before this waypoint.
    OutOfBounds { waypoint: usize, position: Vec3 },
    /// Consecutive waypoints further apart than half the safety margin.
    Spacing { waypoint: usize, spacing: f64 },
    /// Gripper close with no graspable target in range.
    GraspMiss { waypoint: usize },
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintViolation::OutOfBounds { waypoint, position } => {
                write!(f, "out_of_bounds: waypoint {waypoint} at {position}")
            }
            ConstraintViolation::Spacing { waypoint, spacing } => {
                write!(f, "spacing: {spacing:.4} m before waypoint {waypoint}")
            }
            ConstraintViolation::GraspMiss { waypoint } => {
                write!(f, "grasp_miss: nothing in range at waypoint {waypoint}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub reached_target_pose: bool,
    pub collision_occurred: bool,
    pub collided_ids: Vec<String>,
    /// Filled in by the task loop, which owns the subtask goals.
    pub subtask_objective_met: bool,
    pub constraint_violations: Vec<ConstraintViolation>,
    pub final_ee_pose: Pose,
}

impl Scene {
    /// Runs `traj` waypoint by waypoint, mutating the scene to its final state.
    ///
    /// At every waypoint any non-target, non-attached object closer than
    /// `epsilon` counts as a collision. Gripper changes between waypoints
    /// attach or release objects. A waypoint outside the workspace aborts the
    /// run, leaving the end-effector at the last valid waypoint.
    pub fn execute(
        &mut self,
        traj: &Trajectory,
        epsilon: f64,
    ) -> Result<ExecutionOutcome, SceneError> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(SceneError::InvalidArgument(format!(
                "epsilon {epsilon} must be >= 0"
            )));
        }
        if !traj.is_finite() {
            return Err(SceneError::InvalidArgument(format!(
                "trajectory {} has non-finite waypoints",
                traj.id
            )));
        }
        let mut collided = BTreeSet::new();
        let mut violations = Vec::new();
        let mut completed = true;
        let mut previous: Option<Vec3> = None;
        // A missed grasp is reported once per close command, not per waypoint.
        let mut commanded = self.gripper.closed;

        for (i, wp) in traj.waypoints.iter().enumerate() {
            let p = wp.pose.position;
            if !self.workspace.contains(p) {
                violations.push(ConstraintViolation::OutOfBounds {
                    waypoint: i,
                    position: p,
                });
                completed = false;
                break;
            }
            if let Some(prev) = previous {
                let spacing = prev.distance(p);
                if spacing > epsilon / 2.0 + SPACING_SLACK {
                    violations.push(ConstraintViolation::Spacing {
                        waypoint: i,
                        spacing,
                    });
                }
            }
            previous = Some(p);

            self.set_ee_pose(wp.pose);
            if wp.gripper.closed != commanded {
                if wp.gripper.closed {
                    if self.close_gripper().is_none() {
                        violations.push(ConstraintViolation::GraspMiss { waypoint: i });
                    }
                } else {
                    self.open_gripper();
                }
                commanded = wp.gripper.closed;
            }

            let exempt = self.collision_exempt_ids();
            for obj in &self.objects {
                if !exempt.contains(obj.id.as_str()) && signed_distance(p, obj) < epsilon {
                    collided.insert(obj.id.clone());
                }
            }
        }

        let collided_ids: Vec<String> = collided.into_iter().collect();
        Ok(ExecutionOutcome {
            reached_target_pose: completed,
            collision_occurred: !collided_ids.is_empty(),
            collided_ids,
            subtask_objective_met: false,
            constraint_violations: violations,
            final_ee_pose: self.ee_pose,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;
    use crate::scene::{GripperState, Role, SceneObject, ShapePrimitive, WorkspaceBounds};
    use crate::trajectory::Waypoint;

    fn scene() -> Scene {
        let ws =
            WorkspaceBounds::new(Vec3::new(-0.5, -0.5, 0.0), Vec3::new(0.5, 0.5, 0.6)).unwrap();
        Scene::new(ws, Pose::from_position(Vec3::new(0.0, 0.0, 0.3))).unwrap()
    }

    fn line(from: Vec3, to: Vec3, n: usize, gripper: &[bool]) -> Trajectory {
        let waypoints = (0..n)
            .map(|i| Waypoint {
                pose: Pose::from_position(from.lerp(to, i as f64 / (n - 1) as f64)),
                gripper: GripperState {
                    closed: gripper[i.min(gripper.len() - 1)],
                },
            })
            .collect();
        Trajectory {
            id: 1,
            waypoints,
            target_position: to,
        }
    }

    #[test]
    fn straight_path_in_empty_scene() {
        let mut s = scene();
        let t = line(
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.02, 0.0, 0.3),
            5,
            &[false],
        );
        let out = s.execute(&t, 0.01).unwrap();
        assert!(out.reached_target_pose);
        assert!(!out.collision_occurred);
        assert!(out.constraint_violations.is_empty());
        assert_eq!(out.final_ee_pose.position, Vec3::new(0.02, 0.0, 0.3));
        assert_eq!(s.ee_pose().position, Vec3::new(0.02, 0.0, 0.3));
    }

    #[test]
    fn path_through_obstacle_collides() {
        let mut s = scene();
        s.add_object(SceneObject::new(
            "wall",
            ShapePrimitive::Box {
                half_extents: Vec3::new(0.01, 0.2, 0.2),
            },
            Pose::from_position(Vec3::new(0.05, 0.0, 0.3)),
            Role::Obstacle,
        ))
        .unwrap();
        let t = line(
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.1, 0.0, 0.3),
            41,
            &[false],
        );
        // Per-waypoint clearance oracle: any waypoint with |x-0.05| - 0.01 < eps.
        let expect = t.positions().any(|p| (p.x - 0.05).abs() - 0.01 < 0.01);
        assert!(expect);
        let out = s.execute(&t, 0.01).unwrap();
        assert!(out.collision_occurred);
        assert_eq!(out.collided_ids, vec!["wall".to_string()]);
    }

    #[test]
    fn targets_and_boundary_are_not_collisions() {
        let mut s = scene();
        s.add_object(SceneObject::new(
            "goal",
            ShapePrimitive::Sphere { radius: 0.02 },
            Pose::from_position(Vec3::new(0.05, 0.0, 0.3)),
            Role::Target,
        ))
        .unwrap();
        s.add_object(SceneObject::new(
            "post",
            ShapePrimitive::Sphere { radius: 0.02 },
            Pose::from_position(Vec3::new(0.0, 0.05, 0.3)),
            Role::Obstacle,
        ))
        .unwrap();
        // Ends exactly eps away from "post" surface: clearance == eps is allowed.
        let t = line(
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.0, 0.02, 0.3),
            5,
            &[false],
        );
        let out = s.execute(&t, 0.01).unwrap();
        assert!(!out.collision_occurred, "{:?}", out.collided_ids);
    }

    #[test]
    fn out_of_bounds_aborts() {
        let mut s = scene();
        let t = line(
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.0, 0.0, 0.62),
            9,
            &[false],
        );
        let out = s.execute(&t, 0.1).unwrap();
        assert!(!out.reached_target_pose);
        assert!(matches!(
            out.constraint_violations[0],
            ConstraintViolation::OutOfBounds { waypoint: 8, .. }
        ));
        assert!((s.ee_pose().position.z - 0.58).abs() < 1e-12);
    }

    #[test]
    fn grasp_then_carry_follows_rigid_offset() {
        let mut s = scene();
        s.add_object(
            SceneObject::new(
                "cube",
                ShapePrimitive::Sphere { radius: 0.02 },
                Pose::from_position(Vec3::new(0.0, 0.0, 0.27)),
                Role::Target,
            )
            .graspable(true),
        )
        .unwrap();
        let start = Vec3::new(0.0, 0.0, 0.3);
        let end = Vec3::new(0.03, 0.02, 0.32);
        let mut t = line(start, end, 11, &[false, true]);
        // Rotate along the path too.
        for (i, wp) in t.waypoints.iter_mut().enumerate() {
            wp.pose.orientation =
                UnitQuaternion::from_axis_angle(Vec3::Z, 0.05 * i as f64).unwrap();
        }
        let out = s.execute(&t, 0.01).unwrap();
        assert!(
            out.constraint_violations.is_empty(),
            "{:?}",
            out.constraint_violations
        );
        assert_eq!(s.attached_object_id(), Some("cube"));
        // Rigid-transform oracle: offset captured at waypoint 1.
        let attach_pose = t.waypoints[1].pose;
        let offset = attach_pose
            .inverse()
            .compose(&Pose::from_position(Vec3::new(0.0, 0.0, 0.27)));
        let want = t.end_pose().compose(&offset);
        let cube = s.object("cube").unwrap();
        assert!(cube.pose.position.distance(want.position) < 1e-12);
        assert!(cube
            .pose
            .orientation
            .approx_eq_rotation(&want.orientation, 1e-12));
    }

    #[test]
    fn grasp_miss_recorded() {
        let mut s = scene();
        let t = line(
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.0, 0.0, 0.31),
            3,
            &[false, true],
        );
        let out = s.execute(&t, 0.01).unwrap();
        assert_eq!(
            out.constraint_violations,
            vec![ConstraintViolation::GraspMiss { waypoint: 1 }]
        );
        assert!(!s.gripper().closed);
    }

    #[test]
    fn negative_epsilon_rejected() {
        let mut s = scene();
        let t = line(
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.0, 0.0, 0.31),
            3,
            &[false],
        );
        assert!(s.execute(&t, -1.0).is_err());
    }
}
