use serde::{Deserialize, Serialize};

use super::ViewsError;
use crate::geometry::{Pose, RotationMatrix, Vec3};
use crate::scene::WorkspaceBounds;

/// Points at or closer than this depth are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;
pub const RING_SIZE: usize = 8;
pub const RING_RADIUS_FACTOR: f64 = 1.5;
pub const RING_ELEVATION_DEG: f64 = 30.0;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

/// A pinhole camera. `pose` maps camera coordinates to world coordinates;
/// the camera looks along its local +z with +x right and +y down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

/// A projected point: pixel coordinates and depth along the optical axis (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Camera {
    pub fn new(
        id: impl Into<String>,
        pose: Pose,
        intrinsics: Intrinsics,
    ) -> Result<Self, ViewsError> {
        let cam = Self {
            id: id.into(),
            pose,
            intrinsics,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` aimed at `target`, with image "up" toward world +z.
    pub fn look_at(
        id: impl Into<String>,
        eye: Vec3,
        target: Vec3,
        intrinsics: Intrinsics,
    ) -> Result<Self, ViewsError> {
        let id = id.into();
        let forward = (target - eye)
            .normalized()
            .ok_or_else(|| ViewsError::InvalidCamera(format!("{id}: eye coincides with target")))?;
        let right = forward.cross(Vec3::Z).normalized().ok_or_else(|| {
            ViewsError::InvalidCamera(format!("{id}: looking straight up or down"))
        })?;
        let down = forward.cross(right);
        let r = RotationMatrix::from_columns(right, down, forward)
            .map_err(|e| ViewsError::InvalidCamera(format!("{id}: {e}")))?;
        Self::new(id, Pose::new(eye, r.to_quaternion()), intrinsics)
    }

    pub fn validate(&self) -> Result<(), ViewsError> {
        let k = &self.intrinsics;
        let ok = k.fx > 0.0
            && k.fy > 0.0
            && k.fx.is_finite()
            && k.fy.is_finite()
            && k.width > 0
            && k.height > 0
            && (0.0..f64::from(k.width)).contains(&k.cx)
            && (0.0..f64::from(k.height)).contains(&k.cy);
        if !ok || !self.pose.position.is_finite() {
            return Err(ViewsError::InvalidCamera(format!("{}: {k:?}", self.id)));
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3 {
        self.pose.position
    }

    pub fn optical_axis(&self) -> Vec3 {
        self.pose.orientation.rotate(Vec3::Z)
    }

    pub fn to_camera_frame(&self, p: Vec3) -> Vec3 {
        self.pose.inverse_transform_point(p)
    }

    /// Projects a world point, or `None` when it is not in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<Projection> {
        let c = self.to_camera_frame(p);
        if c.z <= MIN_DEPTH {
            return None;
        }
        let k = &self.intrinsics;
        Some(Projection {
            u: k.fx * c.x / c.z + k.cx,
            v: k.fy * c.y / c.z + k.cy,
            depth: c.z,
        })
    }

    pub fn in_frame(&self, proj: &Projection) -> bool {
        let k = &self.intrinsics;
        proj.u >= 0.0
            && proj.v >= 0.0
            && proj.u < f64::from(k.width)
            && proj.v < f64::from(k.height)
    }

    /// Unit ray direction (world frame) through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        let local = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        self.pose
            .orientation
            .rotate(local)
            .normalized()
            .expect("non-zero ray")
    }
}

pub fn project(p: Vec3, cam: &Camera) -> Option<Projection> {
    cam.project(p)
}

/// Eight cameras on a horizontal circle around the workspace, 45° apart,
/// looking down at the workspace center from 30° elevation.
///
/// The circle's radius is 1.5× the workspace half-diagonal and its height is
/// set so that the line of sight to the center dips by the elevation angle.
pub fn default_camera_ring(
    bounds: &WorkspaceBounds,
    intrinsics: Intrinsics,
) -> Result<Vec<Camera>, ViewsError> {
    let center = bounds.center();
    let radius = RING_RADIUS_FACTOR * bounds.half_diagonal();
    let lift = radius * RING_ELEVATION_DEG.to_radians().tan();
    (0..RING_SIZE)
        .map(|i| {
            let az = (i as f64 * 45.0).to_radians();
            let eye = center + Vec3::new(radius * az.cos(), radius * az.sin(), lift);
            Camera::look_at(format!("view{}", i + 1), eye, center, intrinsics)
        })
        .collect()
}
