//! Biarcs: pairs of circular arcs joined with a common tangent.

use crate::num::Scalar;
use crate::vector::Vec3;

/// Scan resolution used to seed the golden-section search over `d1`.
pub const BIARC_SCAN: usize = 32;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BiarcError {
    #[error("biarc endpoints coincide")]
    CoincidentEndpoints,
    #[error("tangents must be unit vectors")]
    NonUnitTangent,
    #[error("d1 must be positive and finite, got {0}")]
    InvalidD1(f64),
    #[error("no positive d2 for d1 = {d1}")]
    NoPositiveRoot { d1: f64 },
    #[error("degenerate configuration: biarc undefined")]
    Degenerate,
}

/// A circular arc (or straight line when `center` is `None`) starting at
/// `start` with unit tangent `tangent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc<T: Scalar = f64> {
    pub start: Vec3<T>,
    pub end: Vec3<T>,
    pub tangent: Vec3<T>,
    /// Unit vector from `start` toward the centre.
    pub normal: Option<Vec3<T>>,
    pub center: Option<Vec3<T>>,
    pub radius: Option<T>,
    /// Swept angle, rad (0 for lines).
    pub sweep: T,
    pub length: T,
}

impl<T: Scalar> Arc<T> {
    /// The unique arc leaving `p` with tangent `t` that passes through `q`.
    pub fn through(p: Vec3<T>, t: Vec3<T>, q: Vec3<T>) -> Result<Self, BiarcError> {
        let c = q - p;
        let len = c.norm();
        if len <= T::epsilon() {
            return Err(BiarcError::CoincidentEndpoints);
        }
        let along = c.dot(&t);
        let perp = c - t * along;
        let pn = perp.norm();
        if pn <= len * T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) {
            if along <= T::zero() {
                return Err(BiarcError::Degenerate);
            }
            return Ok(Self { start: p, end: q, tangent: t, normal: None, center: None, radius: None, sweep: T::zero(), length: len });
        }
        let n = perp / pn;
        let r = c.norm_squared() / (T::lit(2.0) * pn);
        let sweep = T::lit(2.0) * t.angle(&c);
        Ok(Self {
            start: p,
            end: q,
            tangent: t,
            normal: Some(n),
            center: Some(p + n * r),
            radius: Some(r),
            sweep,
            length: r * sweep,
        })
    }

    pub fn curvature(&self) -> T {
        self.radius.map_or(T::zero(), |r| T::one() / r)
    }

    /// Point at arc length `s` from the start.
    pub fn point_at(&self, s: T) -> Vec3<T> {
        match (self.center, self.normal, self.radius) {
            (Some(c), Some(n), Some(r)) => {
                let (sp, cp) = (s / r).sin_cos();
                c - n * (r * cp) + self.tangent * (r * sp)
            }
            _ => self.start + self.tangent * s,
        }
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: T) -> Vec3<T> {
        match (self.normal, self.radius) {
            (Some(n), Some(r)) => {
                let (sp, cp) = (s / r).sin_cos();
                n * sp + self.tangent * cp
            }
            _ => self.tangent,
        }
    }

    /// Unit normal toward the centre at arc length `s`.
    pub fn normal_at(&self, s: T) -> Option<Vec3<T>> {
        match (self.normal, self.radius) {
            (Some(n), Some(r)) => {
                let (sp, cp) = (s / r).sin_cos();
                Some(n * cp - self.tangent * sp)
            }
            _ => None,
        }
    }

    pub fn end_tangent(&self) -> Vec3<T> {
        self.tangent_at(self.length)
    }

    /// Unit binormal `T × N` (plane normal), if curved.
    pub fn binormal(&self) -> Option<Vec3<T>> {
        self.normal.map(|n| self.tangent.cross(&n))
    }

    /// Euclidean distance from `q` to the arc.
    pub fn distance(&self, q: &Vec3<T>) -> T {
        let (c, n, r) = match (self.center, self.normal, self.radius) {
            (Some(c), Some(n), Some(r)) => (c, n, r),
            _ => {
                let d = *q - self.start;
                let s = d.dot(&self.tangent).max(T::zero()).min(self.length);
                return (self.start + self.tangent * s).distance(q);
            }
        };
        let b = self.tangent.cross(&n);
        let d = *q - c;
        let h = d.dot(&b);
        let inplane = d - b * h;
        // angle measured from the start radius toward the tangent
        let ux = -inplane.dot(&n);
        let uy = inplane.dot(&self.tangent);
        let mut phi = uy.atan2(ux);
        if phi < T::zero() {
            phi = phi + T::TAU();
        }
        if phi <= self.sweep {
            let rho = inplane.norm();
            (h * h + (rho - r) * (rho - r)).sqrt()
        } else {
            q.distance(&self.start).min(q.distance(&self.end))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biarc<T: Scalar = f64> {
    pub p_i: Vec3<T>,
    pub t_i: Vec3<T>,
    pub p_e: Vec3<T>,
    pub t_e: Vec3<T>,
    /// Connection point.
    pub p_c: Vec3<T>,
    /// Common unit tangent at the connection point.
    pub t_c: Vec3<T>,
    pub d1: T,
    pub d2: T,
    pub first: Arc<T>,
    pub second: Arc<T>,
}

impl<T: Scalar> Biarc<T> {
    pub fn c_i(&self) -> Option<Vec3<T>> {
        self.first.center
    }

    pub fn c_e(&self) -> Option<Vec3<T>> {
        self.second.center
    }

    pub fn distance(&self, q: &Vec3<T>) -> T {
        self.first.distance(q).min(self.second.distance(q))
    }

    pub fn max_distance(&self, pts: &[Vec3<T>]) -> T {
        pts.iter().map(|p| self.distance(p)).fold(T::zero(), T::max)
    }

    pub fn length(&self) -> T {
        self.first.length + self.second.length
    }
}

fn check_inputs<T: Scalar>(p_i: &Vec3<T>, t_i: &Vec3<T>, p_e: &Vec3<T>, t_e: &Vec3<T>) -> Result<(), BiarcError> {
    let tol = T::lit(1e-6).max(T::epsilon() * T::lit(16.0));
    if (t_i.norm() - T::one()).abs() > tol || (t_e.norm() - T::one()).abs() > tol {
        return Err(BiarcError::NonUnitTangent);
    }
    if p_i.distance(p_e) <= T::epsilon() * (T::one() + p_i.norm()) {
        return Err(BiarcError::CoincidentEndpoints);
    }
    Ok(())
}

/// Biarc for a given `d1`. The second distance follows from
/// `|Q_e − Q_i| = d1 + d2` with `Q_i = P_i + d1·T_i` and
/// `Q_e = P_e − d2·T_e`, and the connection point is
/// `P_c = (d2·Q_i + d1·Q_e) / (d1 + d2)`.
pub fn solve_biarc<T: Scalar>(p_i: Vec3<T>, t_i: Vec3<T>, p_e: Vec3<T>, t_e: Vec3<T>, d1: T) -> Result<Biarc<T>, BiarcError> {
    check_inputs(&p_i, &t_i, &p_e, &t_e)?;
    if !(d1 > T::zero()) || !d1.is_finite() {
        return Err(BiarcError::InvalidD1(d1.as_f64()));
    }
    let v = p_e - p_i;
    let num = v.norm_squared() - T::lit(2.0) * d1 * v.dot(&t_i);
    let den = T::lit(2.0) * (v.dot(&t_e) + d1 * (T::one() - t_i.dot(&t_e)));
    let scale = v.norm_squared();
    if den.abs() <= T::epsilon() * T::lit(64.0) * (T::one() + scale) {
        return Err(if num.abs() <= T::epsilon() * T::lit(64.0) * (T::one() + scale) {
            BiarcError::Degenerate
        } else {
            BiarcError::NoPositiveRoot { d1: d1.as_f64() }
        });
    }
    let d2 = num / den;
    if !(d2 > T::zero()) || !d2.is_finite() {
        return Err(BiarcError::NoPositiveRoot { d1: d1.as_f64() });
    }
    build(p_i, t_i, p_e, t_e, d1, d2)
}

fn build<T: Scalar>(p_i: Vec3<T>, t_i: Vec3<T>, p_e: Vec3<T>, t_e: Vec3<T>, d1: T, d2: T) -> Result<Biarc<T>, BiarcError> {
    let q_i = p_i + t_i * d1;
    let q_e = p_e - t_e * d2;
    let p_c = (q_i * d2 + q_e * d1) / (d1 + d2);
    let t_c = (q_e - q_i).try_normalize(T::epsilon()).ok_or(BiarcError::Degenerate)?;
    let first = Arc::through(p_i, t_i, p_c)?;
    let second = Arc::through(p_c, t_c, p_e)?;
    Ok(Biarc { p_i, t_i, p_e, t_e, p_c, t_c, d1, d2, first, second })
}

/// `d1 = d2 = d`: positive root of `d²(|t|² − 4) − 2d(v·t) + |v|² = 0`
/// with `t = T_i + T_e` and `v = P_e − P_i`.
pub fn symmetric_d<T: Scalar>(p_i: &Vec3<T>, t_i: &Vec3<T>, p_e: &Vec3<T>, t_e: &Vec3<T>) -> Result<T, BiarcError> {
    let v = *p_e - *p_i;
    let t = *t_i + *t_e;
    let a = t.norm_squared() - T::lit(4.0);
    let b = -T::lit(2.0) * v.dot(&t);
    let c = v.norm_squared();
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return Err(BiarcError::Degenerate);
    }
    let den = disc.sqrt() - b;
    if !(den > T::zero()) {
        return Err(BiarcError::Degenerate);
    }
    Ok(T::lit(2.0) * c / den)
}

/// Biarc with `d1 = d2`.
pub fn symmetric_biarc<T: Scalar>(p_i: Vec3<T>, t_i: Vec3<T>, p_e: Vec3<T>, t_e: Vec3<T>) -> Result<Biarc<T>, BiarcError> {
    check_inputs(&p_i, &t_i, &p_e, &t_e)?;
    let d = symmetric_d(&p_i, &t_i, &p_e, &t_e)?;
    build(p_i, t_i, p_e, t_e, d, d)
}

/// Biarc whose `d1 ∈ (0, 2|P_e − P_i|]` minimises the largest distance to
/// `interior`. A uniform scan seeds a golden-section refinement; the
/// symmetric biarc is kept on ties and returned when `interior` is empty.
pub fn best_biarc<T: Scalar>(
    p_i: Vec3<T>,
    t_i: Vec3<T>,
    p_e: Vec3<T>,
    t_e: Vec3<T>,
    interior: &[Vec3<T>],
) -> Result<Biarc<T>, BiarcError> {
    check_inputs(&p_i, &t_i, &p_e, &t_e)?;
    let sym = symmetric_biarc(p_i, t_i, p_e, t_e);
    if interior.is_empty() {
        return sym;
    }
    let cost = |d1: T| -> T {
        match solve_biarc(p_i, t_i, p_e, t_e, d1) {
            Ok(b) => b.max_distance(interior),
            Err(_) => T::infinity(),
        }
    };
    let mut best: Option<(T, Biarc<T>)> = sym.clone().ok().map(|b| (b.max_distance(interior), b));
    let hi = T::lit(2.0) * p_i.distance(&p_e);
    let step = hi / T::lit(BIARC_SCAN as f64);
    let scan: Vec<T> = (1..=BIARC_SCAN).map(|k| cost(step * T::lit(k as f64))).collect();
    let (k_best, c_best) = scan
        .iter()
        .enumerate()
        .fold((0, T::infinity()), |acc, (k, &c)| if c < acc.1 { (k, c) } else { acc });
    if c_best.is_finite() {
        let mut a = step * T::lit(k_best as f64).max(T::lit(1e-3));
        let mut b = step * T::lit((k_best + 2) as f64);
        let phi = T::lit(0.618_033_988_749_894_8);
        let mut x1 = b - (b - a) * phi;
        let mut x2 = a + (b - a) * phi;
        let (mut f1, mut f2) = (cost(x1), cost(x2));
        let tol = T::epsilon().sqrt() * hi;
        while b - a > tol {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - (b - a) * phi;
                f1 = cost(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + (b - a) * phi;
                f2 = cost(x2);
            }
        }
        let mut cands = vec![(k_best + 1) as f64];
        cands.push(((a + b) / T::lit(2.0) / step).as_f64());
        for c in cands {
            let d1 = step * T::lit(c);
            if let Ok(bi) = solve_biarc(p_i, t_i, p_e, t_e, d1) {
                let m = bi.max_distance(interior);
                if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
                    best = Some((m, bi));
                }
            }
        }
    }
    match best {
        Some((_, b)) => Ok(b),
        None => sym,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn straight_biarc() {
        let b = solve_biarc(v(0., 0., 0.), v(0., 0., 1.), v(0., 0., 10.), v(0., 0., 1.), 3.0).unwrap();
        assert_eq!(b.first.curvature(), 0.0);
        assert_eq!(b.second.curvature(), 0.0);
        assert!((b.length() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_circle_symmetric() {
        let r = 10.0;
        let b = symmetric_biarc(v(0., 0., 0.), v(0., 0., 1.), v(r, 0., r), v(1., 0., 0.)).unwrap();
        let c = v(r, 0., 0.);
        assert!((b.first.curvature() - 0.1).abs() < 1e-12);
        assert!((b.second.curvature() - 0.1).abs() < 1e-12);
        assert!((b.p_c.distance(&c) - r).abs() < 1e-12);
        for s in [0.0, 3.0, 7.0] {
            assert!((b.first.point_at(s).distance(&c) - r).abs() < 1e-12);
            assert!((b.second.point_at(s).distance(&c) - r).abs() < 1e-12);
        }
        assert!((b.length() - FRAC_PI_2 * r).abs() < 1e-12);
        assert!(b.second.end_tangent().distance(&v(1., 0., 0.)) < 1e-12);
    }

    #[test]
    fn antiparallel_is_degenerate() {
        let e = solve_biarc(v(0., 0., 0.), v(0., 0., 1.), v(0., 0., 10.), v(0., 0., -1.), 5.0);
        assert!(e.is_err());
        assert!(symmetric_biarc(v(0., 0., 0.), v(0., 0., 1.), v(0., 0., 10.), v(0., 0., -1.)).is_err());
    }

    #[test]
    fn connection_distances_hold() {
        let b = solve_biarc(v(0., 0., 0.), v(0., 0., 1.), v(12., 3., 8.), v(0.6, 0., 0.8), 4.0).unwrap();
        let q_i = b.p_i + b.t_i * b.d1;
        let q_e = b.p_e - b.t_e * b.d2;
        assert!((q_i.distance(&b.p_c) - b.d1).abs() < 1e-9);
        assert!((q_e.distance(&b.p_c) - b.d2).abs() < 1e-9);
        assert!((q_e.distance(&q_i) - (b.d1 + b.d2)).abs() < 1e-9);
        assert!(b.first.end.distance(&b.second.start) < 1e-12);
        assert!(b.first.end_tangent().distance(&b.t_c) < 1e-9);
        assert!(b.second.end_tangent().distance(&b.t_e) < 1e-9);
    }

    #[test]
    fn arc_distance() {
        let a = Arc::through(v(0., 0., 0.), v(0., 0., 1.), v(10., 0., 10.)).unwrap();
        assert!((a.distance(&v(10., 0., 0.)) - 10.0).abs() < 1e-12);
        assert!((a.distance(&v(10., 5., 0.)) - (125f64).sqrt()).abs() < 1e-12);
        // beyond the end: nearest endpoint
        assert!((a.distance(&v(20., 0., 0.)) - (200f64).sqrt()).abs() < 1e-12);
        assert!((a.sweep - FRAC_PI_2).abs() < 1e-12);
        let half = Arc::through(v(0., 0., 0.), v(0., 0., 1.), v(10., 0., 0.)).unwrap();
        assert!((half.sweep - PI).abs() < 1e-12);
    }

    #[test]
    fn best_biarc_on_exact_circle() {
        let r = 30.0;
        let pts: Vec<Vec3<f64>> = (0..=40)
            .map(|k| {
                let a = 2.0 * k as f64 / 40.0;
                v(r - r * a.cos(), 0., r * a.sin())
            })
            .collect();
        let t = |a: f64| v(a.sin(), 0., a.cos());
        let b = best_biarc(pts[0], t(0.0), pts[40], t(2.0), &pts[1..40]).unwrap();
        assert!(b.max_distance(&pts) < 1e-6 * r);
    }
}
