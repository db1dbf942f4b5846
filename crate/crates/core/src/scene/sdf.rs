//! Exact signed distances for the primitive shapes.

use std::collections::HashSet;

use super::{Scene, SceneObject, ShapePrimitive};
use crate::geometry::Vec3;

impl ShapePrimitive {
    /// Signed distance from a point given in the shape's local frame.
    pub fn local_signed_distance(&self, p: Vec3) -> f64 {
        match *self {
            ShapePrimitive::Sphere { radius } => p.norm() - radius,
            ShapePrimitive::Box { half_extents } => {
                let q = p.abs() - half_extents;
                let outside = q.component_max(Vec3::ZERO).norm();
                let inside = q.max_element().min(0.0);
                outside + inside
            }
            ShapePrimitive::Cylinder { radius, height } => {
                let radial = p.x.hypot(p.y) - radius;
                let axial = p.z.abs() - height / 2.0;
                let outside = radial.max(0.0).hypot(axial.max(0.0));
                let inside = radial.max(axial).min(0.0);
                outside + inside
            }
        }
    }
}

/// Positive outside, negative inside, zero on the surface.
pub fn signed_distance(p: Vec3, obj: &SceneObject) -> f64 {
    obj.shape
        .local_signed_distance(obj.pose.inverse_transform_point(p))
}

/// Strictly inside; surface points do not penetrate.
pub fn penetration(p: Vec3, obj: &SceneObject) -> bool {
    signed_distance(p, obj) < 0.0
}

/// Minimum signed distance over objects not in `exclude`, with the argmin id.
/// Returns `(+inf, None)` when nothing is left to check.
pub fn min_clearance<'a>(
    p: Vec3,
    scene: &'a Scene,
    exclude: &HashSet<&str>,
) -> (f64, Option<&'a str>) {
    scene
        .objects()
        .iter()
        .filter(|o| !exclude.contains(o.id.as_str()))
        .map(|o| (signed_distance(p, o), Some(o.id.as_str())))
        .fold((f64::INFINITY, None), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        })
}
