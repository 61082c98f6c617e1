use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Point or direction in 3D space (mm for positions).
///
/// Serializes as a plain `[x, y, z]` array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
pub struct Vec3<T: Scalar> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> From<[T; 3]> for Vec3<T> {
    fn from(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl<T: Scalar> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
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

    pub fn unit_x() -> Self {
        Self::new(T::one(), T::zero(), T::zero())
    }

    pub fn unit_y() -> Self {
        Self::new(T::zero(), T::one(), T::zero())
    }

    pub fn unit_z() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
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

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn try_normalize(&self, eps: T) -> Option<Self> {
        let n = self.norm();
        if n <= eps || !n.is_finite() {
            None
        } else {
            Some(*self / n)
        }
    }

    pub fn normalize(&self) -> Self {
        *self / self.norm()
    }

    #[inline]
    pub fn distance(&self, o: &Self) -> T {
        (*self - *o).norm()
    }

    pub fn lerp(&self, o: &Self, s: T) -> Self {
        *self + (*o - *self) * s
    }

    /// Unsigned angle between two vectors in `[0, π]`.
    pub fn angle(&self, o: &Self) -> T {
        self.cross(o).norm().atan2(self.dot(o))
    }

    /// Any unit vector perpendicular to `self` (assumed non-zero).
    pub fn any_orthogonal(&self) -> Self {
        let a = if self.x.abs() <= self.y.abs() && self.x.abs() <= self.z.abs() {
            Self::unit_x()
        } else if self.y.abs() <= self.z.abs() {
            Self::unit_y()
        } else {
            Self::unit_z()
        };
        self.cross(&a).normalize()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Scalar>(&self) -> Vec3<U> {
        Vec3::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()), U::lit(self.z.as_f64()))
    }
}

impl<T: Scalar> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Scalar> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_right_handed() {
        let z = Vec3::<f64>::unit_x().cross(&Vec3::unit_y());
        assert_eq!(z, Vec3::unit_z());
    }

    #[test]
    fn any_orthogonal_is_perpendicular() {
        for v in [Vec3::new(1.0f64, 2.0, 3.0), Vec3::new(0.0, 0.0, -4.0), Vec3::new(1e-3, 7.0, 0.0)] {
            let o = v.any_orthogonal();
            assert!(o.dot(&v).abs() < 1e-12);
            assert!((o.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn serializes_as_array() {
        let v = Vec3::new(1.0f64, 2.5, -3.0);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.0,2.5,-3.0]");
        let back: Vec3<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
