//! Clamped uniform B-spline curves: evaluation, least-squares fitting and
//! closest-point projection.

use crate::linalg::{least_squares, LeastSquaresError, Matrix};
use crate::num::Scalar;
use crate::vector::Vec3;

/// Degree used by the segmentation pipeline (order 3).
pub const DEFAULT_DEGREE: usize = 2;

/// Uniform seeds used before local refinement in [`BSplineCurve::project`].
pub const PROJECTION_SEEDS: usize = 256;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BSplineError {
    #[error("basis index {index} out of range for {count} basis functions of degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize, count: usize },
    #[error("need at least {needed} points for {n_control} control points, got {got}")]
    TooFewPoints { needed: usize, got: usize, n_control: usize },
    #[error("need at least {min} control points for degree {degree}, got {got}")]
    TooFewControlPoints { min: usize, degree: usize, got: usize },
    #[error("least-squares system is rank deficient (column {column}); data too sparse or coincident")]
    RankDeficient { column: usize },
    #[error("only {distinct} distinct points for {n_control} control points")]
    CoincidentPoints { distinct: usize, n_control: usize },
    #[error("invalid residual target {0}")]
    InvalidTarget(f64),
    #[error("non-finite input point at index {0}")]
    NonFinite(usize),
}

/// Clamped knot vector with uniform interior knots for `n_control`
/// control points: `d + 1` zeros, `(i − d)/(n + 1 − d)` for
/// `d + 1 ≤ i ≤ n`, then `d + 1` ones.
pub fn clamped_uniform_knots<T: Scalar>(n_control: usize, degree: usize) -> Vec<T> {
    let n = n_control - 1;
    let mut knots = vec![T::zero(); degree + 1];
    let denom = T::lit((n + 1 - degree) as f64);
    for i in degree + 1..=n {
        knots.push(T::lit((i - degree) as f64) / denom);
    }
    knots.extend(std::iter::repeat_n(T::one(), degree + 1));
    knots
}

/// Index of the last knot span with positive width.
fn last_span<T: Scalar>(knots: &[T]) -> usize {
    (0..knots.len() - 1).rev().find(|&i| knots[i] < knots[i + 1]).unwrap_or(0)
}

/// Cox–de Boor basis function `B_{i,j}(t)`, evaluated by the textbook
/// recursion. Terms with a zero denominator contribute zero, and the
/// last non-empty span is closed on the right so `t = 1` is covered.
pub fn basis<T: Scalar>(i: usize, j: usize, t: T, knots: &[T]) -> Result<T, BSplineError> {
    if i + j + 1 >= knots.len() {
        return Err(BSplineError::IndexOutOfRange {
            index: i,
            degree: j,
            count: knots.len().saturating_sub(j + 1),
        });
    }
    Ok(basis_rec(i, j, t, knots, last_span(knots)))
}

fn basis_rec<T: Scalar>(i: usize, j: usize, t: T, k: &[T], last: usize) -> T {
    if j == 0 {
        let inside = k[i] <= t && t < k[i + 1];
        let closed_end = i == last && t == k[i + 1];
        return if inside || closed_end { T::one() } else { T::zero() };
    }
    let mut v = T::zero();
    let d1 = k[i + j] - k[i];
    if d1 > T::zero() {
        v = v + (t - k[i]) / d1 * basis_rec(i, j - 1, t, k, last);
    }
    let d2 = k[i + j + 1] - k[i + 1];
    if d2 > T::zero() {
        v = v + (k[i + j + 1] - t) / d2 * basis_rec(i + 1, j - 1, t, k, last);
    }
    v
}

/// Closest point on a curve to a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedPoint<T: Scalar = f64> {
    pub position: Vec3<T>,
    /// Unit tangent `S′(t*) / |S′(t*)|`.
    pub tangent: Vec3<T>,
    pub param: T,
    pub distance: T,
    pub source_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BSplineCurve<T: Scalar = f64> {
    control_points: Vec<Vec3<T>>,
    knots: Vec<T>,
    degree: usize,
    /// Derivative curves `S′`, `S″`, … down to degree zero.
    derivs: Vec<BSplineCurve<T>>,
}

impl<T: Scalar> BSplineCurve<T> {
    /// Clamped uniform curve over the given control polygon.
    pub fn new(control_points: Vec<Vec3<T>>, degree: usize) -> Result<Self, BSplineError> {
        if control_points.len() < degree + 1 {
            return Err(BSplineError::TooFewControlPoints { min: degree + 1, degree, got: control_points.len() });
        }
        let knots = clamped_uniform_knots(control_points.len(), degree);
        Ok(Self::with_knots(control_points, knots, degree, true))
    }

    fn with_knots(control_points: Vec<Vec3<T>>, knots: Vec<T>, degree: usize, with_derivs: bool) -> Self {
        let mut c = Self { control_points, knots, degree, derivs: Vec::new() };
        if with_derivs {
            let mut cur = c.derivative_curve();
            while let Some(d) = cur {
                let next = d.derivative_curve();
                c.derivs.push(d);
                cur = next;
                if c.derivs.len() == 2 {
                    break;
                }
            }
        }
        c
    }

    fn derivative_curve(&self) -> Option<Self> {
        if self.degree == 0 {
            return None;
        }
        let p = self.degree;
        let dp = T::lit(p as f64);
        let q: Vec<Vec3<T>> = self
            .control_points
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let span = self.knots[i + p + 1] - self.knots[i + 1];
                if span > T::zero() {
                    (w[1] - w[0]) * (dp / span)
                } else {
                    Vec3::zero()
                }
            })
            .collect();
        let knots = self.knots[1..self.knots.len() - 1].to_vec();
        if q.is_empty() {
            return None;
        }
        Some(Self::with_knots(q, knots, p - 1, false))
    }

    pub fn control_points(&self) -> &[Vec3<T>] {
        &self.control_points
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn find_span(&self, t: T) -> usize {
        let n = self.control_points.len() - 1;
        let p = self.degree;
        if t >= self.knots[n + 1] {
            return last_span(&self.knots).min(n).max(p);
        }
        if t <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Non-zero basis values `B_{span−p..=span, p}(t)` (triangular scheme).
    fn basis_funs(&self, span: usize, t: T) -> Vec<T> {
        let p = self.degree;
        let k = &self.knots;
        let mut n = vec![T::zero(); p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        n[0] = T::one();
        for j in 1..=p {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = T::zero();
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom == T::zero() { T::zero() } else { n[r] / denom };
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        n
    }

    /// Curve point `S(t)`; `t` is clamped to `[0, 1]`.
    pub fn eval(&self, t: T) -> Vec3<T> {
        let t = t.max(T::zero()).min(T::one());
        let span = self.find_span(t);
        let b = self.basis_funs(span, t);
        let p = self.degree;
        b.iter()
            .enumerate()
            .fold(Vec3::zero(), |acc, (r, &w)| acc + self.control_points[span - p + r] * w)
    }

    /// `k`-th derivative (k ≤ 2); zero beyond the curve degree.
    pub fn eval_derivative(&self, k: usize, t: T) -> Vec3<T> {
        match k {
            0 => self.eval(t),
            _ => self.derivs.get(k - 1).map_or(Vec3::zero(), |d| d.eval(t)),
        }
    }

    pub fn tangent(&self, t: T) -> Vec3<T> {
        let d = self.eval_derivative(1, t);
        d.try_normalize(T::epsilon()).unwrap_or_else(|| {
            // a vanishing derivative only happens at coincident control points;
            // fall back to a finite difference across the parameter
            let h = T::lit(1e-4);
            (self.eval((t + h).min(T::one())) - self.eval((t - h).max(T::zero()))).normalize()
        })
    }

    /// Polyline approximation of the arc length.
    pub fn arc_length(&self, samples: usize) -> T {
        let n = samples.max(2);
        let last = T::lit((n - 1) as f64);
        let pts: Vec<Vec3<T>> = (0..n).map(|i| self.eval(T::lit(i as f64) / last)).collect();
        crate::kinematics::polyline_length(&pts)
    }

    /// Closest point on the curve to `p`: dense uniform seeding followed by
    /// safeguarded Newton refinement of `g(t) = (S(t) − p)·S′(t)`.
    pub fn project(&self, p: &Vec3<T>) -> ProjectedPoint<T> {
        let seeds = PROJECTION_SEEDS.max(8 * self.control_points.len());
        let last = T::lit((seeds - 1) as f64);
        let (mut best_i, mut best_d) = (0usize, T::infinity());
        for i in 0..seeds {
            let d = (self.eval(T::lit(i as f64) / last) - *p).norm_squared();
            if d < best_d {
                best_d = d;
                best_i = i;
            }
        }
        let h = T::one() / last;
        let center = T::lit(best_i as f64) / last;
        let t = self.refine(p, (center - h).max(T::zero()), (center + h).min(T::one()), center);
        let position = self.eval(t);
        ProjectedPoint { position, tangent: self.tangent(t), param: t, distance: position.distance(p), source_index: 0 }
    }

    /// Gradient of `½‖S(t) − p‖²` along the parameter.
    fn grad(&self, p: &Vec3<T>, t: T) -> T {
        (self.eval(t) - *p).dot(&self.eval_derivative(1, t))
    }

    fn refine(&self, p: &Vec3<T>, mut lo: T, mut hi: T, start: T) -> T {
        let tol = T::lit(5e-11).max(T::epsilon() * T::lit(64.0));
        let g_lo = self.grad(p, lo);
        let g_hi = self.grad(p, hi);
        // monotone bracket without a sign change: minimum sits on an end
        if g_lo >= T::zero() && g_hi >= T::zero() {
            return if lo == T::zero() || g_lo.abs() < tol { lo } else { self.refine_interior(p, lo, hi, start, tol) };
        }
        if g_lo <= T::zero() && g_hi <= T::zero() {
            return if hi == T::one() || g_hi.abs() < tol { hi } else { self.refine_interior(p, lo, hi, start, tol) };
        }
        let mut t = start;
        for _ in 0..100 {
            let g = self.grad(p, t);
            if g.abs() < tol {
                return t;
            }
            if g > T::zero() {
                hi = t;
            } else {
                lo = t;
            }
            let s = self.eval(t) - *p;
            let d1 = self.eval_derivative(1, t);
            let dg = d1.norm_squared() + s.dot(&self.eval_derivative(2, t));
            let newton = if dg > T::zero() { t - g / dg } else { T::nan() };
            t = if newton > lo && newton < hi { newton } else { (lo + hi) / T::lit(2.0) };
            if hi - lo <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        t
    }

    /// Fallback when the seed bracket has no sign change: golden section.
    fn refine_interior(&self, p: &Vec3<T>, mut a: T, mut b: T, _start: T, _tol: T) -> T {
        let phi = T::lit(0.618_033_988_749_894_8);
        let f = |t: T| (self.eval(t) - *p).norm_squared();
        let mut c = b - (b - a) * phi;
        let mut d = a + (b - a) * phi;
        for _ in 0..200 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - (b - a) * phi;
            d = a + (b - a) * phi;
            if b - a < T::epsilon() * T::lit(8.0) {
                break;
            }
        }
        (a + b) / T::lit(2.0)
    }

    /// Projects every point, tagging each result with its input index.
    pub fn project_all(&self, points: &[Vec3<T>]) -> Vec<ProjectedPoint<T>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| ProjectedPoint { source_index: i, ..self.project(p) })
            .collect()
    }

    /// Largest distance from the points to the curve.
    pub fn max_residual(&self, points: &[Vec3<T>]) -> T {
        points.iter().map(|p| self.project(p).distance).fold(T::zero(), T::max)
    }
}

/// Least-squares fit of `n_control` control points to ordered data sampled
/// at `t_k = k/m`.
pub fn fit<T: Scalar>(points: &[Vec3<T>], n_control: usize, degree: usize) -> Result<BSplineCurve<T>, BSplineError> {
    if n_control < degree + 1 {
        return Err(BSplineError::TooFewControlPoints { min: degree + 1, degree, got: n_control });
    }
    if points.len() < n_control || points.len() < 2 {
        return Err(BSplineError::TooFewPoints { needed: n_control.max(2), got: points.len(), n_control });
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(BSplineError::NonFinite(i));
    }
    let distinct = distinct_count(points);
    if distinct < n_control.min(degree + 2) {
        return Err(BSplineError::CoincidentPoints { distinct, n_control });
    }
    let knots: Vec<T> = clamped_uniform_knots(n_control, degree);
    let shell = BSplineCurve::with_knots(vec![Vec3::zero(); n_control], knots.clone(), degree, false);
    let m = T::lit((points.len() - 1) as f64);
    let mut a = Matrix::zeros(points.len(), n_control);
    for (k, _) in points.iter().enumerate() {
        let t = T::lit(k as f64) / m;
        let span = shell.find_span(t);
        for (r, w) in shell.basis_funs(span, t).into_iter().enumerate() {
            a.set(k, span - degree + r, w);
        }
    }
    let b = Matrix::from_fn(points.len(), 3, |r, c| points[r][c]);
    let x = least_squares(&a, &b, T::lit(1e-10).max(T::epsilon() * T::lit(100.0))).map_err(|e| match e {
        LeastSquaresError::RankDeficient { column } => BSplineError::RankDeficient { column },
        LeastSquaresError::Underdetermined => BSplineError::TooFewPoints {
            needed: n_control,
            got: points.len(),
            n_control,
        },
    })?;
    let ctrl = (0..n_control).map(|i| Vec3::new(x.get(i, 0), x.get(i, 1), x.get(i, 2))).collect();
    Ok(BSplineCurve::with_knots(ctrl, knots, degree, true))
}

/// Number of consecutive points that are not coincident with their predecessor.
fn distinct_count<T: Scalar>(points: &[Vec3<T>]) -> usize {
    let scale = points.iter().map(|p| p.norm()).fold(T::zero(), T::max);
    let eps = T::epsilon() * T::lit(1e3) * (T::one() + scale);
    1 + points.windows(2).filter(|w| w[0].distance(&w[1]) > eps).count()
}

/// Result of the control-point count search.
#[derive(Clone, Debug)]
pub struct AutoFit<T: Scalar = f64> {
    pub curve: BSplineCurve<T>,
    pub n_control: usize,
    /// Largest projection distance from the data to the curve.
    pub max_residual: T,
    /// False when no count in range met the target; `curve` is then the best seen.
    pub target_met: bool,
}

/// Smallest control-point count in `[4, count/2]` whose maximum projection
/// residual is within `residual_target`.
pub fn auto_fit<T: Scalar>(points: &[Vec3<T>], residual_target: T, degree: usize) -> Result<AutoFit<T>, BSplineError> {
    if !(residual_target > T::zero()) || !residual_target.is_finite() {
        return Err(BSplineError::InvalidTarget(residual_target.as_f64()));
    }
    let lo = 4.max(degree + 1);
    let hi = (points.len() / 2).max(lo).min(points.len());
    let mut best: Option<AutoFit<T>> = None;
    for n in lo..=hi {
        let curve = match fit(points, n, degree) {
            Ok(c) => c,
            Err(e) if best.is_none() => return Err(e),
            Err(_) => break,
        };
        let residual = curve.max_residual(points);
        let better = best.as_ref().is_none_or(|b| residual < b.max_residual);
        if residual <= residual_target {
            return Ok(AutoFit { curve, n_control: n, max_residual: residual, target_met: true });
        }
        if better {
            best = Some(AutoFit { curve, n_control: n, max_residual: residual, target_met: false });
        }
    }
    best.ok_or(BSplineError::TooFewPoints { needed: lo, got: points.len(), n_control: lo })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Vec3<f64>> {
        (0..n).map(|i| Vec3::new(0.0, 0.0, i as f64)).collect()
    }

    #[test]
    fn knot_vector_layout() {
        let k: Vec<f64> = clamped_uniform_knots(6, 2);
        assert_eq!(k, vec![0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn degree_zero_basis_is_indicator() {
        let k: Vec<f64> = clamped_uniform_knots(5, 2);
        // k = [0,0,0,1/3,2/3,1,1,1]
        assert_eq!(basis(2, 0, 0.1, &k).unwrap(), 1.0);
        assert_eq!(basis(3, 0, 0.1, &k).unwrap(), 0.0);
        assert_eq!(basis(3, 0, 1.0 / 3.0, &k).unwrap(), 1.0);
        assert_eq!(basis(4, 0, 1.0, &k).unwrap(), 1.0);
        assert!(basis(7, 0, 0.5, &k).is_err());
    }

    #[test]
    fn clamped_start_and_partition() {
        let k: Vec<f64> = clamped_uniform_knots(7, 2);
        assert_eq!(basis(0, 2, 0.0, &k).unwrap(), 1.0);
        for i in 1..7 {
            assert_eq!(basis(i, 2, 0.0, &k).unwrap(), 0.0);
        }
        for t in [0.0, 0.13, 0.5, 0.77, 0.999, 1.0] {
            let s: f64 = (0..7).map(|i| basis(i, 2, t, &k).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-14, "t={t} sum={s}");
        }
    }

    #[test]
    fn triangular_scheme_matches_recursion() {
        let ctrl: Vec<Vec3<f64>> = (0..6).map(|i| Vec3::new(i as f64, (i * i) as f64, 1.0)).collect();
        let c = BSplineCurve::new(ctrl.clone(), 2).unwrap();
        for t in [0.0, 0.21, 0.5, 0.93, 1.0] {
            let direct = (0..6).fold(Vec3::zero(), |acc, i| acc + ctrl[i] * basis(i, 2, t, c.knots()).unwrap());
            assert!(c.eval(t).distance(&direct) < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ctrl: Vec<Vec3<f64>> = (0..7).map(|i| Vec3::new((i as f64).cos(), (i as f64).sin(), i as f64)).collect();
        let c = BSplineCurve::new(ctrl, 2).unwrap();
        for t in [0.1, 0.35, 0.6, 0.9] {
            let h = 1e-6;
            let fd = (c.eval(t + h) - c.eval(t - h)) / (2.0 * h);
            assert!(c.eval_derivative(1, t).distance(&fd) < 1e-5);
        }
    }

    #[test]
    fn line_fit_is_exact() {
        let pts = line(50);
        let c = fit(&pts, 4, 2).unwrap();
        assert!(c.max_residual(&pts) < 1e-6);
        assert!(c.eval(0.0).distance(&c.control_points()[0]) < 1e-12);
        assert!(c.eval(1.0).distance(c.control_points().last().unwrap()) < 1e-12);
    }

    #[test]
    fn fit_failures() {
        let pts = line(5);
        assert!(matches!(fit(&pts, 6, 2), Err(BSplineError::TooFewPoints { .. })));
        let same = vec![Vec3::new(1.0, 2.0, 3.0); 100];
        assert!(matches!(auto_fit(&same, 0.1, 2), Err(BSplineError::CoincidentPoints { .. })));
        assert!(auto_fit(&line(20), 0.0, 2).is_err());
    }

    #[test]
    fn auto_fit_line_uses_minimal_basis() {
        let f = auto_fit(&line(40), 0.01, 2).unwrap();
        assert_eq!(f.n_control, 4);
        assert!(f.target_met);
    }

    #[test]
    fn projection_onto_line() {
        let c = fit(&line(50), 4, 2).unwrap();
        let p = c.project(&Vec3::new(3.0, -4.0, 20.0));
        assert!(p.position.distance(&Vec3::new(0.0, 0.0, 20.0)) < 1e-8);
        assert!((p.distance - 5.0).abs() < 1e-8);
        assert!((p.tangent.z - 1.0).abs() < 1e-12);
        // beyond the end clamps to the endpoint
        let q = c.project(&Vec3::new(0.0, 0.0, 60.0));
        assert_eq!(q.param, 1.0);
    }

    #[test]
    fn projection_recovers_on_curve_points() {
        let ctrl: Vec<Vec3<f64>> = (0..8).map(|i| Vec3::new(i as f64 * 3.0, (i as f64 * 0.7).sin() * 5.0, 0.0)).collect();
        let c = BSplineCurve::new(ctrl, 2).unwrap();
        for t in [0.05, 0.3, 0.62, 0.95] {
            let p = c.project(&c.eval(t));
            assert!(p.distance < 1e-9);
            assert!((p.param - t).abs() < 1e-8);
        }
    }
}
