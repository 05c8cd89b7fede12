//! Rigid-body pose math: vectors, unit quaternions and transforms.
//!
//! Quaternions are stored `(x, y, z, w)` like the ROS messages they come from.
//! Angles are radians throughout.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{de::DeserializeOwned, Deserialize, Deserializer, Serialize};

use crate::scalar::Scalar;

/// Cosine above which slerp falls back to a normalized linear blend.
const SLERP_PARALLEL_COS: f64 = 1.0 - 1e-9;

/// Minimum ground-plane distance between arrow tail and tip.
pub const MIN_HEADING_DISTANCE: f64 = 1e-6;

/// Deviation from unit norm still accepted (and corrected) when reading quaternions from the wire.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("tail and tip project to the same ground point")]
    DegenerateDirection,
    #[error("quaternion norm {0} is too far from 1")]
    NotUnit(f64),
    #[error("non-finite component")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(&self, other: &Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a zero or non-finite vector.
    pub fn normalize(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(*self * (T::one() / n))
        } else {
            None
        }
    }

    pub fn distance(&self, other: &Self) -> T {
        (*self - *other).norm()
    }

    pub fn lerp(&self, other: &Self, u: T) -> Self {
        *self + (*other - *self) * u
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    pub fn cast<U: Scalar>(&self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Scalar> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Rotation stored as a unit quaternion.
///
/// Construction always normalizes, so `|q| = 1` holds to within [`Scalar::UNIT_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitQuat<T> {
    x: T,
    y: T,
    z: T,
    w: T,
}

impl<T: Scalar> Default for UnitQuat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> UnitQuat<T> {
    #[inline]
    pub fn identity() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
            w: T::one(),
        }
    }

    /// Normalizes `(x, y, z, w)`. Fails for zero-length or non-finite input.
    ///
    /// Input already unit to within a few ulps is kept bit-for-bit, so decoding an encoded
    /// quaternion reproduces it exactly.
    pub fn from_xyzw(x: T, y: T, z: T, w: T) -> Result<Self, GeomError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite() && w.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let n = (x * x + y * y + z * z + w * w).sqrt();
        if n <= T::epsilon() {
            return Err(GeomError::NotUnit(n.to_f64_lossy()));
        }
        if (n - T::one()).abs() <= T::lit(4.0) * T::epsilon() {
            return Ok(Self { x, y, z, w });
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
            w: w / n,
        })
    }

    /// Accepts `(x, y, z, w)` only if its norm is within `tolerance` of one, then renormalizes.
    pub fn from_xyzw_checked(x: T, y: T, z: T, w: T, tolerance: f64) -> Result<Self, GeomError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite() && w.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let n = (x * x + y * y + z * z + w * w).sqrt();
        if (n - T::one()).abs().to_f64_lossy() >= tolerance {
            return Err(GeomError::NotUnit(n.to_f64_lossy()));
        }
        Self::from_xyzw(x, y, z, w)
    }

    /// Rotation of `angle` radians about `axis`. A zero axis yields identity.
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        match axis.normalize() {
            Some(a) => {
                let (s, c) = (angle * T::half()).sin_cos();
                Self {
                    x: a.x * s,
                    y: a.y * s,
                    z: a.z * s,
                    w: c,
                }
            }
            None => Self::identity(),
        }
    }

    /// Pure rotation about +z.
    pub fn from_yaw(yaw: T) -> Self {
        let (s, c) = (yaw * T::half()).sin_cos();
        Self {
            x: T::zero(),
            y: T::zero(),
            z: s,
            w: c,
        }
    }

    #[inline]
    pub fn x(&self) -> T {
        self.x
    }
    #[inline]
    pub fn y(&self) -> T {
        self.y
    }
    #[inline]
    pub fn z(&self) -> T {
        self.z
    }
    #[inline]
    pub fn w(&self) -> T {
        self.w
    }

    pub fn xyzw(&self) -> [T; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    /// Inverse rotation (the conjugate, since the quaternion is unit).
    #[inline]
    pub fn inverse(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
            w: self.w,
        }
    }

    fn negated(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
            w: -self.w,
        }
    }

    /// Hamilton product without renormalization.
    fn mul_raw(&self, b: &Self) -> (T, T, T, T) {
        let a = self;
        (
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }

    /// Rotates a vector.
    pub fn rotate(&self, v: &Vec3<T>) -> Vec3<T> {
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * T::two();
        *v + t * self.w + q.cross(&t)
    }

    /// Shortest-arc rotation taking direction `from` onto direction `to`.
    /// `None` if either vector is zero.
    pub fn rotation_between(from: &Vec3<T>, to: &Vec3<T>) -> Option<Self> {
        let a = from.normalize()?;
        let b = to.normalize()?;
        let cos = a.dot(&b);
        if cos <= -T::one() + T::lit(1e-12) {
            // antiparallel: any axis orthogonal to `a` works
            let trial = if a.x.abs() < T::lit(0.9) {
                Vec3::new(T::one(), T::zero(), T::zero())
            } else {
                Vec3::new(T::zero(), T::one(), T::zero())
            };
            let axis = a.cross(&trial);
            return Some(Self::from_axis_angle(axis, T::lit(std::f64::consts::PI)));
        }
        let c = a.cross(&b);
        Self::from_xyzw(c.x, c.y, c.z, T::one() + cos).ok()
    }

    /// Heading about +z, i.e. the yaw of the rotated x axis.
    pub fn yaw(&self) -> T {
        let siny = T::two() * (self.w * self.z + self.x * self.y);
        let cosy = T::one() - T::two() * (self.y * self.y + self.z * self.z);
        siny.atan2(cosy)
    }

    /// Smallest rotation angle between the two orientations, in `[0, pi]`.
    pub fn angle_to(&self, other: &Self) -> T {
        let d = self.dot(other).abs().min(T::one());
        T::two() * d.acos()
    }

    /// Row-major 3x3 rotation matrix.
    pub fn to_rotation_matrix(&self) -> [[T; 3]; 3] {
        let ex = self.rotate(&Vec3::new(T::one(), T::zero(), T::zero()));
        let ey = self.rotate(&Vec3::new(T::zero(), T::one(), T::zero()));
        let ez = self.rotate(&Vec3::new(T::zero(), T::zero(), T::one()));
        [[ex.x, ey.x, ez.x], [ex.y, ey.y, ez.y], [ex.z, ey.z, ez.z]]
    }

    /// Spherical linear interpolation along the shortest arc.
    pub fn slerp(&self, other: &Self, u: T) -> Self {
        let mut target = *other;
        let mut cos = self.dot(other);
        if cos < T::zero() {
            target = target.negated();
            cos = -cos;
        }
        let (s0, s1) = if cos > T::lit(SLERP_PARALLEL_COS) {
            (T::one() - u, u)
        } else {
            let theta = cos.min(T::one()).acos();
            let sin = theta.sin();
            (((T::one() - u) * theta).sin() / sin, (u * theta).sin() / sin)
        };
        Self::from_xyzw(
            self.x * s0 + target.x * s1,
            self.y * s0 + target.y * s1,
            self.z * s0 + target.z * s1,
            self.w * s0 + target.w * s1,
        )
        .unwrap_or(*self)
    }

    /// True if both represent the same rotation (q and -q are equal) within `tol` per component.
    pub fn same_rotation(&self, other: &Self, tol: T) -> bool {
        let close = |a: &Self, b: &Self| {
            (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol && (a.z - b.z).abs() <= tol && (a.w - b.w).abs() <= tol
        };
        close(self, other) || close(self, &other.negated())
    }

    pub fn cast<U: Scalar>(&self) -> UnitQuat<U> {
        UnitQuat::from_xyzw(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
            U::lit(self.w.to_f64_lossy()),
        )
        .unwrap_or_else(|_| UnitQuat::identity())
    }
}

impl<T: Scalar> Mul for UnitQuat<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (x, y, z, w) = self.mul_raw(&rhs);
        Self::from_xyzw(x, y, z, w).unwrap_or_else(|_| Self::identity())
    }
}

#[derive(Deserialize)]
struct RawQuat<T> {
    x: T,
    y: T,
    z: T,
    w: T,
}

impl<'de, T: Scalar + DeserializeOwned> Deserialize<'de> for UnitQuat<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawQuat::<T>::deserialize(d)?;
        UnitQuat::from_xyzw_checked(raw.x, raw.y, raw.z, raw.w, RENORMALIZE_TOLERANCE).map_err(serde::de::Error::custom)
    }
}

/// Rigid transform: rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct Transform<T> {
    pub translation: Vec3<T>,
    pub rotation: UnitQuat<T>,
}

impl<T: Scalar> Default for Transform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<'de, T: Scalar + DeserializeOwned> Deserialize<'de> for Transform<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(bound = "T: Scalar + DeserializeOwned")]
        struct Raw<T> {
            translation: Vec3<T>,
            rotation: UnitQuat<T>,
        }
        let raw = Raw::<T>::deserialize(d)?;
        Ok(Transform::new(raw.translation, raw.rotation))
    }
}

impl<T: Scalar> Transform<T> {
    #[inline]
    pub fn new(translation: Vec3<T>, rotation: UnitQuat<T>) -> Self {
        Self { translation, rotation }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zero(), UnitQuat::identity())
    }

    pub fn from_translation(translation: Vec3<T>) -> Self {
        Self::new(translation, UnitQuat::identity())
    }

    pub fn from_rotation(rotation: UnitQuat<T>) -> Self {
        Self::new(Vec3::zero(), rotation)
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation.rotate(&other.translation) + self.translation,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self::new(-r.rotate(&self.translation), r)
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(v)
    }

    /// Linear blend of translation, slerp of rotation.
    pub fn interpolate(&self, other: &Self, u: T) -> Self {
        Self::new(
            self.translation.lerp(&other.translation, u),
            self.rotation.slerp(&other.rotation, u),
        )
    }

    /// Row-major homogeneous matrix.
    pub fn to_matrix(&self) -> [[T; 4]; 4] {
        let r = self.rotation.to_rotation_matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [T::zero(), T::zero(), T::zero(), T::one()],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.rotation.norm().is_finite()
    }

    /// Translation within `tol` per component and same rotation within `tol` per component.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.translation.max_abs_diff(&other.translation) <= tol && self.rotation.same_rotation(&other.rotation, tol)
    }

    pub fn cast<U: Scalar>(&self) -> Transform<U> {
        Transform::new(self.translation.cast(), self.rotation.cast())
    }
}

impl<T: Scalar> Mul for Transform<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

/// Where a ray hits the `z = 0` ground plane, if it does so at or ahead of its origin.
pub fn ray_ground_intersect<T: Scalar>(origin: Vec3<T>, direction: Vec3<T>) -> Option<Vec3<T>> {
    if !origin.is_finite() || !direction.is_finite() || direction.norm_squared() <= T::zero() {
        return None;
    }
    if origin.z == T::zero() {
        return Some(Vec3::new(origin.x, origin.y, T::zero()));
    }
    if direction.z == T::zero() {
        return None;
    }
    let s = -origin.z / direction.z;
    if s < T::zero() || !s.is_finite() {
        return None;
    }
    Some(Vec3::new(
        origin.x + s * direction.x,
        origin.y + s * direction.y,
        T::zero(),
    ))
}

/// Heading-only orientation pointing from `tail` to `tip` in the ground plane.
pub fn yaw_quat<T: Scalar>(tail: Vec3<T>, tip: Vec3<T>) -> Result<UnitQuat<T>, GeomError> {
    let dx = tip.x - tail.x;
    let dy = tip.y - tail.y;
    if !(dx.is_finite() && dy.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    if dx.hypot(dy) < T::lit(MIN_HEADING_DISTANCE) {
        return Err(GeomError::DegenerateDirection);
    }
    Ok(UnitQuat::from_yaw(dy.atan2(dx)))
}
