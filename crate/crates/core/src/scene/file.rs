//! JSON scene files (`version: 1`). Units are meters; orientations are
//! quaternions in `w, x, y, z` order.

use std::path::Path;

use serde::Deserialize;

use super::{Role, Scene, SceneError, SceneObject, ShapePrimitive, WorkspaceBounds};
use crate::geometry::{Pose, UnitQuaternion, Vec3};

pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Authored quaternions may be rounded; anything this close to unit norm is
/// renormalized, anything further off is rejected.
const AUTHORED_QUAT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: u32,
    workspace: WorkspaceSpec,
    ee_start: PoseSpec,
    #[serde(default)]
    objects: Vec<ObjectSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkspaceSpec {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseSpec {
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation_wxyz: [f64; 4],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectSpec {
    id: String,
    shape: ShapePrimitive,
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation_wxyz: [f64; 4],
    role: Role,
    #[serde(default)]
    graspable: bool,
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn authored_quaternion(q: [f64; 4]) -> Result<UnitQuaternion, String> {
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !n.is_finite() || (n - 1.0).abs() > AUTHORED_QUAT_TOLERANCE {
        return Err(format!("orientation_wxyz {q:?} has norm {n}, expected 1"));
    }
    UnitQuaternion::normalize(q[0], q[1], q[2], q[3]).map_err(|e| e.to_string())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene(&text)
}

pub fn parse_scene(text: &str) -> Result<Scene, SceneError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SceneFile = serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        SceneError::Parse {
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })?;
    if file.version != SCENE_SCHEMA_VERSION {
        return Err(SceneError::Version(file.version));
    }
    let workspace = WorkspaceBounds::new(file.workspace.min.into(), file.workspace.max.into())?;
    let ee_orientation = authored_quaternion(file.ee_start.orientation_wxyz)
        .map_err(|e| SceneError::Invalid(format!("ee_start: {e}")))?;
    let mut scene = Scene::new(
        workspace,
        Pose::new(Vec3::from(file.ee_start.position), ee_orientation),
    )?;
    for entry in file.objects {
        let orientation = authored_quaternion(entry.orientation_wxyz).map_err(|reason| {
            SceneError::InvalidObject {
                id: entry.id.clone(),
                reason,
            }
        })?;
        let obj = SceneObject {
            id: entry.id,
            shape: entry.shape,
            pose: Pose::new(Vec3::from(entry.position), orientation),
            role: entry.role,
            graspable: entry.graspable,
        };
        scene.add_object(obj)?;
    }
    Ok(scene)
}
