//! Pinhole cameras and a small software renderer for annotated views.

mod camera;
mod raster;
mod render;

use thiserror::Error;

pub use camera::{
    default_camera_ring, project, Camera, Intrinsics, Projection, MIN_DEPTH, RING_ELEVATION_DEG,
    RING_RADIUS_FACTOR, RING_SIZE,
};
pub use raster::{
    clip_segment, convex_hull, hull_contains, palette_color, Canvas, Rgb, BACKGROUND, PALETTE,
};
pub use render::{render_view, LegendEntry, ObjectView, TrajectoryView, ViewDescriptor, ViewImage};

#[derive(Debug, Error)]
pub enum ViewsError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("unknown camera `{0}`")]
    UnknownCamera(String),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

/// Picks cameras by id from `all`, keeping the requested order.
pub fn select_cameras<'a>(
    all: &'a [Camera],
    ids: &[String],
) -> Result<Vec<&'a Camera>, ViewsError> {
    ids.iter()
        .map(|id| {
            all.iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| ViewsError::UnknownCamera(id.clone()))
        })
        .collect()
}
