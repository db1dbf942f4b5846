//! Candidate end-effector trajectories.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::scene::GripperState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub pose: Pose,
    pub gripper: GripperState,
}

/// Ordered waypoints; the first one is the end-effector pose at generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u32,
    pub waypoints: Vec<Waypoint>,
    pub target_position: Vec3,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.waypoints.len()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.waypoints.iter().map(|w| w.pose.position)
    }

    pub fn start(&self) -> Vec3 {
        self.waypoints[0].pose.position
    }

    pub fn end(&self) -> Vec3 {
        self.waypoints[self.waypoints.len() - 1].pose.position
    }

    pub fn end_pose(&self) -> Pose {
        self.waypoints[self.waypoints.len() - 1].pose
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].pose.position.distance(w[1].pose.position))
            .sum()
    }

    /// Largest distance between consecutive waypoint positions.
    pub fn max_spacing(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].pose.position.distance(w[1].pose.position))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.waypoints.iter().all(|w| {
            w.pose.position.is_finite() && w.pose.orientation.wxyz().iter().all(|c| c.is_finite())
        })
    }
}

/// Identifies a candidate within one planning step.
pub type TrajectoryId = u32;

/// Trajectories proposed at step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub step: u32,
    pub trajectories: Vec<Trajectory>,
}

/// Candidates surviving constraint filtering (possibly truncated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub step: u32,
    pub trajectories: Vec<Trajectory>,
}

impl FeasibleSet {
    pub fn ids(&self) -> Vec<TrajectoryId> {
        self.trajectories.iter().map(|t| t.id).collect()
    }

    pub fn get(&self, id: TrajectoryId) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }
}
