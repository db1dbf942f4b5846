//! Rigid-body math: vectors, unit quaternions, rotation matrices, poses.
//!
//! Quaternions are stored `w, x, y, z` (scalar first). Rotation matrices are
//! row-major and act on column vectors. Every constructor of
//! [`UnitQuaternion`] and [`RotationMatrix`] enforces the type invariant, so
//! downstream operations can assume unit norm / orthonormality.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for every unit-norm and orthonormality check.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Below this arc angle (radians) Slerp falls back to normalized lerp.
pub const SLERP_NLERP_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-12 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn lerp(self, other: Vec3, t: f64) -> Vec3 {
        self + (other - self) * t
    }

    pub fn component_min(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.x.min(other.x),
            self.y.min(other.y),
            self.z.min(other.z),
        )
    }

    pub fn component_max(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.x.max(other.x),
            self.y.max(other.y),
            self.z.max(other.z),
        )
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_element(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unsigned angle between two vectors, radians.
    pub fn angle_to(self, other: Vec3) -> f64 {
        self.cross(other).norm().atan2(self.dot(other))
    }

    /// Any unit vector orthogonal to `self` (which must be non-zero).
    pub fn any_orthogonal(self) -> Vec3 {
        let helper = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        self.cross(helper).normalized().unwrap_or(Vec3::Z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

/// Rotation quaternion with norm 1 (within [`UNIT_TOLERANCE`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Accepts components that already have unit norm.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::InvalidArgument(format!(
                "quaternion norm {n} is not 1"
            )));
        }
        Ok(Self { w, x, y, z }.renormalized())
    }

    /// Normalizes arbitrary non-zero components.
    pub fn normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::InvalidArgument(format!(
                "cannot normalize quaternion with norm {n}"
            )));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        let axis = axis.normalized().ok_or_else(|| {
            GeometryError::InvalidArgument("rotation axis has zero length".into())
        })?;
        let (s, c) = (angle / 2.0).sin_cos();
        Self::normalize(c, axis.x * s, axis.y * s, axis.z * s)
    }

    /// Shortest rotation taking unit direction `from` onto unit direction `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Result<Self, GeometryError> {
        let a = from
            .normalized()
            .ok_or_else(|| GeometryError::InvalidArgument("zero-length direction".into()))?;
        let b = to
            .normalized()
            .ok_or_else(|| GeometryError::InvalidArgument("zero-length direction".into()))?;
        let d = a.dot(b);
        if d < -1.0 + 1e-12 {
            return Self::from_axis_angle(a.any_orthogonal(), std::f64::consts::PI);
        }
        let c = a.cross(b);
        Self::normalize(1.0 + d, c.x, c.y, c.z)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// The same rotation with all components negated.
    pub fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    /// Rotates a vector: `q v q*`.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = self.vector_part();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle (radians, in `[0, π]`) of `self⁻¹ · other`.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        let rel = self.inverse() * *other;
        2.0 * rel.vector_part().norm().atan2(rel.w.abs())
    }

    /// Whether both represent the same rotation, ignoring the double-cover sign.
    pub fn approx_eq_rotation(&self, other: &UnitQuaternion, tol: f64) -> bool {
        let same = self
            .wxyz()
            .iter()
            .zip(other.wxyz())
            .all(|(a, b)| (a - b).abs() <= tol);
        let flipped = self
            .wxyz()
            .iter()
            .zip(other.negated().wxyz())
            .all(|(a, b)| (a - b).abs() <= tol);
        same || flipped
    }

    /// Spherical linear interpolation along the shortest arc.
    ///
    /// `t` must lie in `[0, 1]`. When the quaternions are on opposite
    /// hemispheres `other` is negated first; below
    /// [`SLERP_NLERP_THRESHOLD`] the result is a normalized lerp.
    pub fn slerp(&self, other: &UnitQuaternion, t: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(GeometryError::InvalidArgument(format!(
                "slerp parameter {t} outside [0, 1]"
            )));
        }
        let mut end = *other;
        let mut cos_arc = self.dot(&end);
        if cos_arc < 0.0 {
            end = end.negated();
            cos_arc = -cos_arc;
        }
        let a = self.wxyz();
        let b = end.wxyz();
        // |b - cos·a| is sin of the arc; atan2 stays accurate near 0 and π/2.
        let sin_arc = b
            .iter()
            .zip(a.iter())
            .map(|(bi, ai)| (bi - cos_arc * ai).powi(2))
            .sum::<f64>()
            .sqrt();
        let arc = sin_arc.atan2(cos_arc);
        let (ca, cb) = if arc < SLERP_NLERP_THRESHOLD {
            (1.0 - t, t)
        } else {
            let s = arc.sin();
            (((1.0 - t) * arc).sin() / s, (t * arc).sin() / s)
        };
        Self::normalize(
            ca * a[0] + cb * b[0],
            ca * a[1] + cb * b[1],
            ca * a[2] + cb * b[2],
            ca * a[3] + cb * b[3],
        )
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        RotationMatrix {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    fn renormalized(self) -> Self {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
        .renormalized()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = GeometryError;
    fn try_from(a: [f64; 4]) -> Result<Self, GeometryError> {
        let n = a.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(GeometryError::InvalidArgument(format!(
                "quaternion norm {n} is not 1"
            )));
        }
        Self::normalize(a[0], a[1], a[2], a[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.wxyz()
    }
}

/// Proper rotation matrix (orthonormal, det = +1), row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Validates orthonormality and determinant within [`UNIT_TOLERANCE`].
    pub fn try_from_rows(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidArgument(
                "rotation matrix has non-finite entries".into(),
            ));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > UNIT_TOLERANCE {
                    return Err(GeometryError::InvalidArgument(format!(
                        "matrix is not orthonormal: (RᵀR)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        let r = Self { m };
        let det = r.determinant();
        if (det - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::InvalidArgument(format!(
                "matrix determinant {det} is not +1"
            )));
        }
        Ok(r)
    }

    /// Builds a rotation from its three column axes (the rotated x, y, z).
    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Result<Self, GeometryError> {
        Self::try_from_rows([[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]])
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        Ok(UnitQuaternion::from_axis_angle(axis, angle)?.to_matrix())
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    /// Column `i` of the matrix: the world-frame direction of local axis `i`.
    pub fn axis(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[0][i], self.m[1][i], self.m[2][i])
    }

    pub fn transpose(&self) -> Self {
        let m = self.m;
        Self {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn determinant(&self) -> f64 {
        let m = self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn max_abs_diff(&self, other: &RotationMatrix) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Shepperd's method; picks the numerically largest pivot.
    pub fn to_quaternion(&self) -> UnitQuaternion {
        let m = self.m;
        let trace = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z) = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            (
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            (
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            (
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            (
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        UnitQuaternion::normalize(w, x, y, z).expect("rotation matrix yields a non-zero quaternion")
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, o: RotationMatrix) -> RotationMatrix {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        RotationMatrix { m }
    }
}

impl TryFrom<[[f64; 3]; 3]> for RotationMatrix {
    type Error = GeometryError;
    fn try_from(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::try_from_rows(m)
    }
}

/// Position in meters plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::IDENTITY)
    }

    /// `self ∘ other`: expresses a pose given in `self`'s frame in the parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation.rotate(other.position),
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: inv.rotate(-self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.position + self.orientation.rotate(p)
    }

    /// Maps a world point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        self.orientation.inverse().rotate(p - self.position)
    }
}

pub fn slerp(
    q0: &UnitQuaternion,
    q1: &UnitQuaternion,
    t: f64,
) -> Result<UnitQuaternion, GeometryError> {
    q0.slerp(q1, t)
}

pub fn quat_to_matrix(q: &UnitQuaternion) -> RotationMatrix {
    q.to_matrix()
}

pub fn matrix_to_quat(r: &RotationMatrix) -> UnitQuaternion {
    r.to_quaternion()
}

/// End-effector goal rotation under a rigid grasp.
///
/// The world-frame delta that carries the object from `obj_now` to
/// `obj_goal` is applied to the end-effector:
/// `ee_goal = (obj_goal · obj_nowᵀ) · ee_now`.
pub fn rigid_coupling_target(
    obj_now: &RotationMatrix,
    obj_goal: &RotationMatrix,
    ee_now: &RotationMatrix,
) -> RotationMatrix {
    (*obj_goal * obj_now.transpose()) * *ee_now
}
