use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::camera::{Camera, Projection};
use super::raster::{convex_hull, hull_contains, palette_color, Canvas, Rgb, BACKGROUND};
use crate::geometry::Vec3;
use crate::scene::{signed_distance, Role, Scene, SceneObject, ShapePrimitive};
use crate::trajectory::{FeasibleSet, TrajectoryId};

const SPHERE_RINGS: usize = 12;
const CIRCLE_SEGMENTS: usize = 32;
const MARCH_ITERATIONS: usize = 256;
const MARCH_HIT: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub id: TrajectoryId,
    pub color: Rgb,
}

/// A rendered view with its trajectory color legend.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    pub camera_id: String,
    pub canvas: Canvas,
    pub legend: Vec<LegendEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub id: TrajectoryId,
    /// Pixel positions of the waypoints in front of the camera, in order.
    pub polyline: Vec<[f64; 2]>,
    pub label_position: Option<[f64; 2]>,
    pub fraction_of_waypoints_visible: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: String,
    /// `[u_min, v_min, u_max, v_max]` of the projected silhouette.
    pub bbox: Option<[f64; 4]>,
    pub mean_depth: Option<f64>,
}

/// Machine-readable description of what a view shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDescriptor {
    pub camera_id: String,
    pub trajectories: Vec<TrajectoryView>,
    pub objects: Vec<ObjectView>,
}

impl ViewDescriptor {
    pub fn mean_visibility(&self) -> Option<f64> {
        if self.trajectories.is_empty() {
            return None;
        }
        let sum: f64 = self
            .trajectories
            .iter()
            .map(|t| t.fraction_of_waypoints_visible)
            .sum();
        Some(sum / self.trajectories.len() as f64)
    }
}

fn role_color(role: Role) -> Rgb {
    match role {
        Role::Obstacle => [118, 122, 132],
        Role::Target => [216, 168, 64],
        Role::Fixture => [152, 114, 84],
    }
}

fn darken(c: Rgb) -> Rgb {
    [c[0] / 2, c[1] / 2, c[2] / 2]
}

/// Surface points in the object's local frame whose hull bounds the silhouette.
fn outline_points(shape: &ShapePrimitive) -> Vec<Vec3> {
    match *shape {
        ShapePrimitive::Box { half_extents: h } => {
            let mut pts = Vec::with_capacity(8);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        pts.push(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                    }
                }
            }
            pts
        }
        ShapePrimitive::Sphere { radius } => {
            let mut pts = vec![Vec3::new(0.0, 0.0, radius), Vec3::new(0.0, 0.0, -radius)];
            for i in 1..SPHERE_RINGS {
                let polar = std::f64::consts::PI * i as f64 / SPHERE_RINGS as f64;
                for j in 0..CIRCLE_SEGMENTS {
                    let az = TAU * j as f64 / CIRCLE_SEGMENTS as f64;
                    pts.push(
                        Vec3::new(polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos())
                            * radius,
                    );
                }
            }
            pts
        }
        ShapePrimitive::Cylinder { radius, height } => {
            let mut pts = Vec::with_capacity(2 * CIRCLE_SEGMENTS);
            for z in [-height / 2.0, height / 2.0] {
                for j in 0..CIRCLE_SEGMENTS {
                    let az = TAU * j as f64 / CIRCLE_SEGMENTS as f64;
                    pts.push(Vec3::new(radius * az.cos(), radius * az.sin(), z));
                }
            }
            pts
        }
    }
}

struct Silhouette<'a> {
    object: &'a SceneObject,
    hull: Vec<[f64; 2]>,
    bbox: Option<[f64; 4]>,
    mean_depth: Option<f64>,
    min_depth: f64,
}

fn silhouette<'a>(obj: &'a SceneObject, cam: &Camera) -> Silhouette<'a> {
    let projected: Vec<Option<Projection>> = outline_points(&obj.shape)
        .into_iter()
        .map(|p| cam.project(obj.pose.transform_point(p)))
        .collect();
    let front: Vec<Projection> = projected.iter().flatten().copied().collect();
    let all_front = front.len() == projected.len();
    let bbox = (!front.is_empty()).then(|| {
        front.iter().fold(
            [
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ],
            |b, p| [b[0].min(p.u), b[1].min(p.v), b[2].max(p.u), b[3].max(p.v)],
        )
    });
    let mean_depth = (!front.is_empty())
        .then(|| front.iter().map(|p| p.depth).sum::<f64>() / front.len() as f64);
    let min_depth = front.iter().map(|p| p.depth).fold(f64::INFINITY, f64::min);
    // A shape straddling the image plane has no well-defined silhouette; it is
    // still used for occlusion via ray marching.
    let hull = if all_front {
        convex_hull(&front.iter().map(|p| [p.u, p.v]).collect::<Vec<_>>())
    } else {
        Vec::new()
    };
    Silhouette {
        object: obj,
        hull,
        bbox,
        mean_depth,
        min_depth: if all_front { min_depth } else { 0.0 },
    }
}

/// Whether the segment from the camera to `p` passes through `obj` before
/// reaching `p` (sphere tracing on the signed distance).
fn ray_blocked(eye: Vec3, p: Vec3, obj: &SceneObject) -> bool {
    let Some(dir) = (p - eye).normalized() else {
        return false;
    };
    let dist = eye.distance(p);
    let mut t = 0.0;
    for _ in 0..MARCH_ITERATIONS {
        if t >= dist {
            return false;
        }
        let d = signed_distance(eye + dir * t, obj);
        if d < MARCH_HIT {
            return true;
        }
        t += d;
    }
    false
}

fn waypoint_visible(
    cam: &Camera,
    p: Vec3,
    proj: &Projection,
    silhouettes: &[Silhouette<'_>],
) -> bool {
    if !cam.in_frame(proj) {
        return false;
    }
    silhouettes.iter().all(|s| {
        let may_cover = s.hull.is_empty()
            || (s.min_depth < proj.depth && hull_contains(&s.hull, [proj.u, proj.v]));
        !(may_cover && ray_blocked(cam.position(), p, s.object))
    })
}

/// Draws the scene and annotated trajectories as seen from `cam`.
///
/// Objects are flat silhouettes drawn far to near. Each trajectory is a
/// polyline in its palette color with its id printed at the final waypoint.
pub fn render_view(scene: &Scene, feas: &FeasibleSet, cam: &Camera) -> (ViewImage, ViewDescriptor) {
    let k = &cam.intrinsics;
    let mut canvas = Canvas::new(k.width, k.height, BACKGROUND);

    let mut silhouettes: Vec<Silhouette<'_>> =
        scene.objects().iter().map(|o| silhouette(o, cam)).collect();
    let mut order: Vec<usize> = (0..silhouettes.len()).collect();
    order.sort_by(|&a, &b| {
        let da = silhouettes[a].mean_depth.unwrap_or(f64::INFINITY);
        let db = silhouettes[b].mean_depth.unwrap_or(f64::INFINITY);
        db.total_cmp(&da)
            .then(silhouettes[a].object.id.cmp(&silhouettes[b].object.id))
    });
    for &i in &order {
        let s = &silhouettes[i];
        let color = role_color(s.object.role);
        canvas.fill_convex(&s.hull, color);
        for j in 0..s.hull.len() {
            canvas.draw_line(s.hull[j], s.hull[(j + 1) % s.hull.len()], darken(color), 1);
        }
    }
    let objects = silhouettes
        .iter()
        .map(|s| ObjectView {
            id: s.object.id.clone(),
            bbox: s.bbox,
            mean_depth: s.mean_depth,
        })
        .collect();

    let mut legend = Vec::with_capacity(feas.len());
    let mut trajectories = Vec::with_capacity(feas.len());
    for traj in &feas.trajectories {
        let color = palette_color(traj.id);
        legend.push(LegendEntry { id: traj.id, color });
        let projections: Vec<Option<Projection>> =
            traj.positions().map(|p| cam.project(p)).collect();
        let visible = traj
            .positions()
            .zip(&projections)
            .filter(|(p, proj)| proj.is_some_and(|pr| waypoint_visible(cam, *p, &pr, &silhouettes)))
            .count();
        for pair in projections.windows(2) {
            if let [Some(a), Some(b)] = pair {
                canvas.draw_line([a.u, a.v], [b.u, b.v], color, 2);
            }
        }
        let label_position = projections.last().copied().flatten().map(|p| [p.u, p.v]);
        if let Some([u, v]) = label_position {
            canvas.fill_rect(u.floor() as i64 - 2, v.floor() as i64 - 2, 5, 5, color);
            canvas.draw_number(
                u.floor() as i64 + 5,
                v.floor() as i64 - 12,
                traj.id,
                color,
                2,
            );
        }
        trajectories.push(TrajectoryView {
            id: traj.id,
            polyline: projections.iter().flatten().map(|p| [p.u, p.v]).collect(),
            label_position,
            fraction_of_waypoints_visible: if projections.is_empty() {
                0.0
            } else {
                visible as f64 / projections.len() as f64
            },
        });
    }

    if let Some(p) = cam.project(scene.ee_pose().position) {
        let (u, v) = (p.u.floor() as i64, p.v.floor() as i64);
        canvas.fill_rect(u - 4, v, 9, 1, [0, 0, 0]);
        canvas.fill_rect(u, v - 4, 1, 9, [0, 0, 0]);
    }

    silhouettes.clear();
    (
        ViewImage {
            camera_id: cam.id.clone(),
            canvas,
            legend,
        },
        ViewDescriptor {
            camera_id: cam.id.clone(),
            trajectories,
            objects,
        },
    )
}
