//! Constant-curvature kinematics of a module stack.
//!
//! Each module deforms into a circular arc of fixed length `l` and bending
//! angle `θ`, whose bending plane is twisted by `Δφ` about the local axis
//! relative to the previous module. The module transform is
//! `Rz(Δφ)·Ry(θ)` with translation `(l/θ)(1 − cos θ)·(cos Δφ, sin Δφ)` in
//! the plane and `(l/θ) sin θ` along the axis.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::actuator::ActuatorSpec;
use crate::num::Scalar;
use crate::vector::Vec3;

/// Below this bending angle the translation uses its Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-7;

/// Homogeneous rigid transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose<T: Scalar = f64> {
    pub m: [[T; 4]; 4],
}

impl<T: Scalar> Pose<T> {
    pub fn identity() -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { m }
    }

    /// Pose from a rotation given by its columns and a translation.
    pub fn from_axes(x: Vec3<T>, y: Vec3<T>, z: Vec3<T>, origin: Vec3<T>) -> Self {
        let mut p = Self::identity();
        for (c, v) in [x, y, z, origin].iter().enumerate() {
            p.m[0][c] = v.x;
            p.m[1][c] = v.y;
            p.m[2][c] = v.z;
        }
        p
    }

    pub fn translation(&self) -> Vec3<T> {
        Vec3::new(self.m[0][3], self.m[1][3], self.m[2][3])
    }

    /// Column `c` of the rotation block.
    pub fn axis(&self, c: usize) -> Vec3<T> {
        Vec3::new(self.m[0][c], self.m[1][c], self.m[2][c])
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.transform_vector(p) + self.translation()
    }

    pub fn transform_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        let r = |i: usize| self.m[i][0] * v.x + self.m[i][1] * v.y + self.m[i][2] * v.z;
        Vec3::new(r(0), r(1), r(2))
    }

    /// Largest deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let mut worst = T::zero();
        for a in 0..3 {
            for b in 0..3 {
                let d = self.axis(a).dot(&self.axis(b)) - if a == b { T::one() } else { T::zero() };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> T {
        self.axis(0).cross(&self.axis(1)).dot(&self.axis(2))
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        worst
    }
}

impl<T: Scalar> Mul for Pose<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).fold(T::zero(), |s, k| s + self.m[i][k] * o.m[k][j]);
            }
        }
        Self { m }
    }
}

/// Deformed state of one module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleState<T: Scalar = f64> {
    /// Bending angle, rad.
    pub theta: T,
    /// Arc length, mm.
    pub l: T,
    /// Twist relative to the previous module, rad.
    pub dphi: T,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("module state must be finite with l > 0 and theta >= 0 (theta {theta}, l {l}, dphi {dphi})")]
    InvalidState { theta: f64, l: f64, dphi: f64 },
    #[error("expected {expected} bending angles, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("need at least 2 samples per module, got {0}")]
    TooFewSamples(usize),
    #[error("endpoints coincide in the x-z plane")]
    DegenerateEndpoints,
}

/// Base-to-tip transform of a single constant-curvature module.
pub fn cc_transform<T: Scalar>(s: &ModuleState<T>) -> Result<Pose<T>, KinematicsError> {
    let ok = s.theta.is_finite() && s.l.is_finite() && s.dphi.is_finite() && s.l > T::zero() && s.theta >= T::zero();
    if !ok {
        return Err(KinematicsError::InvalidState {
            theta: s.theta.as_f64(),
            l: s.l.as_f64(),
            dphi: s.dphi.as_f64(),
        });
    }
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.dphi.sin_cos();
    // in-plane offset (l/θ)(1 − cos θ) and axial advance (l/θ) sin θ
    let (radial, axial) = if s.theta < T::lit(SMALL_ANGLE) {
        let th = s.theta;
        let th2 = th * th;
        (s.l * th * (T::lit(0.5) - th2 / T::lit(24.0)), s.l * (T::one() - th2 / T::lit(6.0)))
    } else {
        let r = s.l / s.theta;
        let h = (s.theta / T::lit(2.0)).sin();
        // 1 − cos θ = 2 sin²(θ/2) keeps precision near the series branch
        (r * T::lit(2.0) * h * h, r * st)
    };
    let z = T::zero();
    Ok(Pose {
        m: [
            [cp * ct, -sp, cp * st, radial * cp],
            [sp * ct, cp, sp * st, radial * sp],
            [-st, z, ct, axial],
            [z, z, z, T::one()],
        ],
    })
}

fn module_states<T: Scalar>(a: &ActuatorSpec<T>, thetas: &[T]) -> Result<Vec<ModuleState<T>>, KinematicsError> {
    let n = a.modules().len();
    if thetas.len() != n {
        return Err(KinematicsError::CountMismatch { expected: n, got: thetas.len() });
    }
    Ok(a.modules()
        .iter()
        .zip(thetas)
        .enumerate()
        .map(|(i, (m, &theta))| ModuleState { theta, l: m.l, dphi: a.twist_before(i) })
        .collect())
}

/// Tip pose of every module in the actuator base frame.
pub fn forward_kinematics<T: Scalar>(a: &ActuatorSpec<T>, thetas: &[T]) -> Result<Vec<Pose<T>>, KinematicsError> {
    chain_poses(&module_states(a, thetas)?)
}

/// Cumulative product of module transforms.
pub fn chain_poses<T: Scalar>(states: &[ModuleState<T>]) -> Result<Vec<Pose<T>>, KinematicsError> {
    let mut acc = Pose::identity();
    states
        .iter()
        .map(|s| {
            acc = acc * cc_transform(s)?;
            Ok(acc)
        })
        .collect()
}

/// Points along the deformed centerline, `samples_per_module` per module
/// with shared module endpoints emitted once.
pub fn sample_centerline<T: Scalar>(
    a: &ActuatorSpec<T>,
    thetas: &[T],
    samples_per_module: usize,
) -> Result<Vec<Vec3<T>>, KinematicsError> {
    sample_chain(&module_states(a, thetas)?, samples_per_module)
}

/// Centerline samples of an arbitrary chain of module states.
pub fn sample_chain<T: Scalar>(states: &[ModuleState<T>], samples_per_module: usize) -> Result<Vec<Vec3<T>>, KinematicsError> {
    if samples_per_module < 2 {
        return Err(KinematicsError::TooFewSamples(samples_per_module));
    }
    let mut base = Pose::identity();
    let mut out = vec![Vec3::zero()];
    let last = T::lit((samples_per_module - 1) as f64);
    for s in states {
        // validate once for the whole module
        let tip = base * cc_transform(s)?;
        for k in 1..samples_per_module {
            let frac = T::lit(k as f64) / last;
            let partial = ModuleState { theta: s.theta * frac, l: s.l * frac, dphi: s.dphi };
            out.push((base * cc_transform(&partial)?).translation());
        }
        base = tip;
    }
    Ok(out)
}

/// `count` points spaced uniformly by arc length along a chain.
pub fn sample_chain_uniform<T: Scalar>(states: &[ModuleState<T>], count: usize) -> Result<Vec<Vec3<T>>, KinematicsError> {
    if count < 2 {
        return Err(KinematicsError::TooFewSamples(count));
    }
    let poses = chain_poses(states)?;
    let total = states.iter().fold(T::zero(), |a, s| a + s.l);
    let last = T::lit((count - 1) as f64);
    let mut out = Vec::with_capacity(count);
    let (mut idx, mut start) = (0usize, T::zero());
    for k in 0..count {
        let s = total * T::lit(k as f64) / last;
        while idx + 1 < states.len() && s > start + states[idx].l {
            start = start + states[idx].l;
            idx += 1;
        }
        let st = &states[idx];
        let local = (s - start).max(T::zero()).min(st.l);
        let base = if idx == 0 { Pose::identity() } else { poses[idx - 1] };
        if local <= T::zero() {
            out.push(base.translation());
            continue;
        }
        let frac = local / st.l;
        let partial = ModuleState { theta: st.theta * frac, l: local, dphi: st.dphi };
        out.push((base * cc_transform(&partial)?).translation());
    }
    Ok(out)
}

/// Bending angle recovered from two markers on the free end plane.
///
/// Only the x and z offsets enter; y displacement of the pair is ignored.
pub fn angle_from_endpoints<T: Scalar>(e1: &Vec3<T>, e2: &Vec3<T>) -> Result<T, KinematicsError> {
    let dz = e1.z - e2.z;
    let dx = e1.x - e2.x;
    let h = (dz * dz + dx * dx).sqrt();
    if !(h > T::zero()) || !h.is_finite() {
        return Err(KinematicsError::DegenerateEndpoints);
    }
    Ok((dz / h).max(-T::one()).min(T::one()).acos())
}

/// Total length of a polyline.
pub fn polyline_length<T: Scalar>(pts: &[Vec3<T>]) -> T {
    pts.windows(2).fold(T::zero(), |s, w| s + w[0].distance(&w[1]))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use super::*;
    use crate::actuator::{Material, ModuleDesign};

    fn state(theta: f64, l: f64, dphi: f64) -> ModuleState {
        ModuleState { theta, l, dphi }
    }

    fn close(a: Vec3<f64>, b: Vec3<f64>, tol: f64) {
        assert!(a.distance(&b) < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn straight_module() {
        let p = cc_transform(&state(0.0, 10.0, 0.0)).unwrap();
        assert_eq!(p, Pose { m: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 10.0], [0.0, 0.0, 0.0, 1.0]] });
    }

    #[test]
    fn quarter_bend() {
        let p = cc_transform(&state(FRAC_PI_2, 10.0, 0.0)).unwrap();
        close(p.translation(), Vec3::new(20.0 / PI, 0.0, 20.0 / PI), 1e-12);
        let q = cc_transform(&state(FRAC_PI_2, 10.0, FRAC_PI_2)).unwrap();
        close(q.translation(), Vec3::new(0.0, 20.0 / PI, 20.0 / PI), 1e-12);
    }

    #[test]
    fn rejects_bad_state() {
        assert!(cc_transform(&state(-0.1, 10.0, 0.0)).is_err());
        assert!(cc_transform(&state(0.1, 0.0, 0.0)).is_err());
        assert!(cc_transform(&state(f64::NAN, 1.0, 0.0)).is_err());
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let a = cc_transform(&state(SMALL_ANGLE * (1.0 - 1e-9), 10.0, 0.7)).unwrap();
        let b = cc_transform(&state(SMALL_ANGLE * (1.0 + 1e-9), 10.0, 0.7)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn two_module_chain() {
        let m = ModuleDesign::new(5.0, 1.5, 8.0, 10.0);
        let a = ActuatorSpec::uniform(m, 2, 0.0, 0.0, Material::agilus30()).unwrap();
        let straight = forward_kinematics(&a, &[0.0, 0.0]).unwrap();
        close(straight[1].translation(), Vec3::new(0.0, 0.0, 20.0), 1e-12);

        let bent = forward_kinematics(&a, &[FRAC_PI_2, FRAC_PI_2]).unwrap();
        close(bent[1].translation(), Vec3::new(40.0 / PI, 0.0, 0.0), 1e-12);
        // total bend of π about y flips x and z
        let r = &bent[1];
        close(r.axis(0), Vec3::new(-1.0, 0.0, 0.0), 1e-12);
        close(r.axis(2), Vec3::new(0.0, 0.0, -1.0), 1e-12);
        assert!(forward_kinematics(&a, &[0.1]).is_err());
    }

    #[test]
    fn centerline_samples() {
        let a = ActuatorSpec::uniform(ModuleDesign::new(5.0, 1.5, 8.0, 10.0), 1, 0.0, 0.0, Material::agilus30()).unwrap();
        let pts = sample_centerline(&a, &[0.0], 3).unwrap();
        assert_eq!(pts.len(), 3);
        close(pts[1], Vec3::new(0.0, 0.0, 5.0), 1e-12);
        close(pts[2], Vec3::new(0.0, 0.0, 10.0), 1e-12);
        assert!(sample_centerline(&a, &[0.0], 1).is_err());

        let semi = [state(PI, 5.0 * PI, 0.0)];
        let pts = sample_chain(&semi, 33).unwrap();
        close(*pts.last().unwrap(), Vec3::new(10.0, 0.0, 0.0), 1e-9);
        for p in &pts {
            assert!(p.y.abs() < 1e-12);
            assert!((p.distance(&Vec3::new(5.0, 0.0, 0.0)) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn endpoint_angle() {
        let o = Vec3::zero();
        assert_eq!(angle_from_endpoints(&Vec3::new(0.0, 0.0, 1.0), &o).unwrap(), 0.0);
        assert!((angle_from_endpoints(&Vec3::new(1.0, 0.0, 0.0), &o).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((angle_from_endpoints(&Vec3::new(1.0, 0.0, 1.0), &o).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(angle_from_endpoints(&Vec3::new(0.0, 3.0, 0.0), &o).is_err());
    }

    #[test]
    fn works_in_f32() {
        let p = cc_transform(&ModuleState { theta: 0.5f32, l: 10.0, dphi: 0.3 }).unwrap();
        assert!(p.orthonormality_error() < 1e-6);
    }
}
