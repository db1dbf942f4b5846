//! Declarative kinematic scene: primitive objects, clearance queries, grasp
//! attachment and waypoint-sampled trajectory execution.

mod execute;
mod file;
mod sdf;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

pub use execute::{ConstraintViolation, ExecutionOutcome};
pub use file::{load_scene, parse_scene, SCENE_SCHEMA_VERSION};
pub use sdf::{min_clearance, penetration, signed_distance};

/// A gripper close attaches the nearest graspable target whose surface lies
/// within this distance (m) of the tool center point.
pub const GRASP_RANGE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("unsupported scene schema version {0}")]
    Version(u32),
    #[error("invalid object `{id}`: {reason}")]
    InvalidObject { id: String, reason: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown object id `{0}`")]
    UnknownObject(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ShapePrimitive {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: Vec3,
    },
    /// Axis is the local z axis; `height` is the full length.
    Cylinder {
        radius: f64,
        height: f64,
    },
}

impl ShapePrimitive {
    pub fn validate(&self) -> Result<(), String> {
        let dims: Vec<f64> = match *self {
            ShapePrimitive::Sphere { radius } => vec![radius],
            ShapePrimitive::Box { half_extents } => half_extents.to_array().to_vec(),
            ShapePrimitive::Cylinder { radius, height } => vec![radius, height],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(format!(
                "shape dimensions must be strictly positive, got {self:?}"
            ))
        }
    }

    /// Radius of a sphere centered on the local origin that encloses the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            ShapePrimitive::Sphere { radius } => radius,
            ShapePrimitive::Box { half_extents } => half_extents.norm(),
            ShapePrimitive::Cylinder { radius, height } => radius.hypot(height / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Obstacle,
    Target,
    Fixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub shape: ShapePrimitive,
    pub pose: Pose,
    pub role: Role,
    pub graspable: bool,
}

impl SceneObject {
    pub fn new(id: impl Into<String>, shape: ShapePrimitive, pose: Pose, role: Role) -> Self {
        Self {
            id: id.into(),
            shape,
            pose,
            role,
            graspable: false,
        }
    }

    pub fn graspable(mut self, graspable: bool) -> Self {
        self.graspable = graspable;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GripperState {
    pub closed: bool,
}

impl GripperState {
    pub const OPEN: GripperState = GripperState { closed: false };
    pub const CLOSED: GripperState = GripperState { closed: true };
}

/// Axis-aligned workspace box (m), bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl WorkspaceBounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, SceneError> {
        let ok =
            min.is_finite() && max.is_finite() && min.x < max.x && min.y < max.y && min.z < max.z;
        if !ok {
            return Err(SceneError::Invalid(format!(
                "workspace min {min} must be strictly below max {max}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        p.component_max(self.min).component_min(self.max)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_diagonal(&self) -> f64 {
        (self.max - self.min).norm() / 2.0
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }
}

/// Grasped object plus its pose in the end-effector frame, fixed at attach time.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub object_id: String,
    pub relative: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    objects: Vec<SceneObject>,
    workspace: WorkspaceBounds,
    ee_pose: Pose,
    gripper: GripperState,
    attached: Option<Attachment>,
}

impl Scene {
    pub fn new(workspace: WorkspaceBounds, ee_pose: Pose) -> Result<Self, SceneError> {
        if !workspace.contains(ee_pose.position) {
            return Err(SceneError::Invalid(format!(
                "end-effector start {} outside workspace",
                ee_pose.position
            )));
        }
        Ok(Self {
            objects: Vec::new(),
            workspace,
            ee_pose,
            gripper: GripperState::OPEN,
            attached: None,
        })
    }

    pub fn with_objects(
        mut self,
        objects: impl IntoIterator<Item = SceneObject>,
    ) -> Result<Self, SceneError> {
        for obj in objects {
            self.add_object(obj)?;
        }
        Ok(self)
    }

    pub fn add_object(&mut self, obj: SceneObject) -> Result<(), SceneError> {
        if obj.id.is_empty() {
            return Err(SceneError::InvalidObject {
                id: obj.id,
                reason: "empty id".into(),
            });
        }
        if self.object(&obj.id).is_some() {
            return Err(SceneError::InvalidObject {
                id: obj.id,
                reason: "duplicate id".into(),
            });
        }
        obj.shape
            .validate()
            .map_err(|reason| SceneError::InvalidObject {
                id: obj.id.clone(),
                reason,
            })?;
        if !obj.pose.position.is_finite() {
            return Err(SceneError::InvalidObject {
                id: obj.id,
                reason: "non-finite position".into(),
            });
        }
        self.objects.push(obj);
        Ok(())
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn workspace(&self) -> &WorkspaceBounds {
        &self.workspace
    }

    pub fn ee_pose(&self) -> Pose {
        self.ee_pose
    }

    pub fn gripper(&self) -> GripperState {
        self.gripper
    }

    pub fn attachment(&self) -> Option<&Attachment> {
        self.attached.as_ref()
    }

    pub fn attached_object_id(&self) -> Option<&str> {
        self.attached.as_ref().map(|a| a.object_id.as_str())
    }

    /// Ids excluded from environment-collision checks: targets and the
    /// object travelling with the gripper.
    pub fn collision_exempt_ids(&self) -> HashSet<&str> {
        self.objects
            .iter()
            .filter(|o| o.role == Role::Target)
            .map(|o| o.id.as_str())
            .chain(self.attached_object_id())
            .collect()
    }

    /// Makes `target` the only object with role target; previous targets
    /// become obstacles.
    pub fn set_active_target(&mut self, target: Option<&str>) -> Result<(), SceneError> {
        if let Some(id) = target {
            if self.object(id).is_none() {
                return Err(SceneError::UnknownObject(id.to_string()));
            }
        }
        for obj in &mut self.objects {
            if Some(obj.id.as_str()) == target {
                obj.role = Role::Target;
            } else if obj.role == Role::Target {
                obj.role = Role::Obstacle;
            }
        }
        Ok(())
    }

    /// Moves the end-effector; an attached object follows rigidly.
    pub fn set_ee_pose(&mut self, pose: Pose) {
        self.ee_pose = pose;
        if let Some(att) = &self.attached {
            let obj_pose = pose.compose(&att.relative);
            let id = att.object_id.clone();
            if let Some(obj) = self.objects.iter_mut().find(|o| o.id == id) {
                obj.pose = obj_pose;
            }
        }
    }

    /// Closes the gripper. Attaches the nearest graspable target within
    /// [`GRASP_RANGE`]; returns `None` (and leaves the scene untouched) on a miss.
    pub fn close_gripper(&mut self) -> Option<String> {
        if self.gripper.closed {
            return self.attached_object_id().map(str::to_string);
        }
        let tcp = self.ee_pose.position;
        let nearest = self
            .objects
            .iter()
            .filter(|o| o.graspable && o.role == Role::Target)
            .map(|o| (signed_distance(tcp, o), o))
            .filter(|(d, _)| *d <= GRASP_RANGE)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, o)| (o.id.clone(), o.pose));
        let (id, obj_pose) = nearest?;
        self.attached = Some(Attachment {
            object_id: id.clone(),
            relative: self.ee_pose.inverse().compose(&obj_pose),
        });
        self.gripper = GripperState::CLOSED;
        Some(id)
    }

    /// Opens the gripper; a held object stays where it is.
    pub fn open_gripper(&mut self) -> Option<String> {
        self.gripper = GripperState::OPEN;
        self.attached.take().map(|a| a.object_id)
    }
}
