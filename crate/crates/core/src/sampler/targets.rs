use std::f64::consts::TAU;

use rand::Rng;

use super::DirectionBias;
use crate::geometry::{Pose, Vec3};
use crate::scene::WorkspaceBounds;

/// Out-of-workspace draws are retried this many times before clamping.
pub const TARGET_RETRY_CAP: usize = 32;

fn uniform_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen::<f64>() * TAU;
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Uniform direction on the spherical cap of half-angle `half_angle` (rad)
/// around the unit vector `axis`.
pub fn cone_direction<R: Rng + ?Sized>(rng: &mut R, axis: Vec3, half_angle: f64) -> Vec3 {
    let cos_min = half_angle.cos();
    let cos_a = 1.0 - rng.gen::<f64>() * (1.0 - cos_min);
    let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
    let phi = rng.gen::<f64>() * TAU;
    let u = axis.any_orthogonal();
    let v = axis.cross(u);
    axis * cos_a + (u * phi.cos() + v * phi.sin()) * sin_a
}

fn draw<R: Rng + ?Sized>(
    center: Vec3,
    radius: f64,
    theta_deg: f64,
    bias: &DirectionBias,
    rng: &mut R,
) -> Vec3 {
    let use_bias = !bias.is_empty() && rng.gen::<f64>() < bias.mix_prob();
    let dir = if use_bias {
        let axis = bias.pick(rng.gen()).expect("non-empty bias").direction;
        cone_direction(rng, axis, theta_deg.to_radians())
    } else {
        uniform_direction(rng)
    };
    // Cube-root radius makes the unbiased case uniform in the ball.
    let r = radius * rng.gen::<f64>().cbrt();
    center + dir * r
}

/// Draws `n` target positions within `radius` of `current.position`.
///
/// With probability `bias.mix_prob()` a draw's direction comes from a cone of
/// half-angle `theta_deg` around a stored direction (picked by weight);
/// otherwise it is uniform in the ball. Draws outside `bounds` are retried up
/// to [`TARGET_RETRY_CAP`] times and then clamped into the workspace, which
/// never moves them further from `current` when `current` is inside.
pub fn sample_targets<R: Rng + ?Sized>(
    current: &Pose,
    radius: f64,
    theta_deg: f64,
    bias: &DirectionBias,
    n: usize,
    bounds: &WorkspaceBounds,
    rng: &mut R,
) -> Vec<Vec3> {
    let center = current.position;
    (0..n)
        .map(|_| {
            let mut p = draw(center, radius, theta_deg, bias, rng);
            for _ in 0..TARGET_RETRY_CAP {
                if bounds.contains(p) {
                    break;
                }
                p = draw(center, radius, theta_deg, bias, rng);
            }
            bounds.clamp(p)
        })
        .collect()
}
