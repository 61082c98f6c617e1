//! Greedy piecewise-constant-curvature segmentation of an ordered point
//! sequence into arcs and lines.

use serde::{Deserialize, Serialize};

use crate::biarc::{best_biarc, Arc, BiarcError};
use crate::bspline::{auto_fit, BSplineError, DEFAULT_DEGREE};
use crate::kinematics::{sample_chain, KinematicsError, ModuleState, Pose};
use crate::num::Scalar;
use crate::vector::Vec3;

/// Curvature below which a segment is classified as a line, 1/mm.
pub const LINE_CURVATURE: f64 = 1e-4;
/// Tangent agreement for a straight run, degrees.
pub const STRAIGHT_TANGENT_DEG: f64 = 0.1;
/// Curvature and coplanarity tolerance for merging adjacent arcs.
pub const MERGE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Arc,
    Line,
}

/// One constant-curvature piece of a target curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSegment<T: Scalar = f64> {
    #[serde(rename = "L")]
    pub length: T,
    pub kappa: T,
    /// Twist of this segment's bending plane relative to the previous arc, rad.
    pub dphi: T,
    pub kind: SegmentKind,
}

impl<T: Scalar> ArcSegment<T> {
    /// Segment with its kind derived from the curvature threshold.
    pub fn new(length: T, kappa: T, dphi: T) -> Result<Self, SegmentError> {
        let s = Self { length, kappa, dphi, kind: classify(kappa) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        let ok = self.length.is_finite()
            && self.length > T::zero()
            && self.kappa.is_finite()
            && self.kappa >= T::zero()
            && self.dphi.is_finite()
            && self.kind == classify(self.kappa);
        if ok {
            Ok(())
        } else {
            Err(SegmentError::InvalidSegment {
                length: self.length.as_f64(),
                kappa: self.kappa.as_f64(),
            })
        }
    }

    pub fn is_line(&self) -> bool {
        self.kind == SegmentKind::Line
    }

    /// Total bending angle `κ·L` (zero for lines).
    pub fn theta(&self) -> T {
        if self.is_line() {
            T::zero()
        } else {
            self.kappa * self.length
        }
    }
}

pub fn classify<T: Scalar>(kappa: T) -> SegmentKind {
    if kappa < T::lit(LINE_CURVATURE) {
        SegmentKind::Line
    } else {
        SegmentKind::Arc
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("curve fit failed: {0}")]
    Fit(#[from] BSplineError),
    #[error("tolerance {tolerance} mm unattainable: no biarc covers three points from index {index}")]
    ToleranceUnattainable { tolerance: f64, index: usize },
    #[error("biarc construction failed: {0}")]
    Biarc(#[from] BiarcError),
    #[error("invalid segment (L = {length}, kappa = {kappa})")]
    InvalidSegment { length: f64, kappa: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Placement of the first segment: origin, start tangent and the normal of
/// the first arc (the local x axis of the reconstruction chain).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseFrame<T: Scalar = f64> {
    pub origin: Vec3<T>,
    pub tangent: Vec3<T>,
    pub normal: Vec3<T>,
}

impl<T: Scalar> BaseFrame<T> {
    pub fn pose(&self) -> Pose<T> {
        Pose::from_axes(self.normal, self.tangent.cross(&self.normal), self.tangent, self.origin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_control: usize,
    pub max_residual: f64,
    pub target_met: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation<T: Scalar = f64> {
    pub segments: Vec<ArcSegment<T>>,
    pub base: BaseFrame<T>,
    pub fit: FitSummary,
    /// Arc length of the fitted spline, mm.
    pub curve_length: T,
    /// Geometry of each segment in the input frame.
    #[serde(skip)]
    pub pieces: Vec<Arc<T>>,
}

impl<T: Scalar> Segmentation<T> {
    /// Module chain equivalent to the segments, one state per segment.
    pub fn states(&self) -> Vec<ModuleState<T>> {
        self.segments
            .iter()
            .map(|s| ModuleState { theta: s.theta(), l: s.length, dphi: s.dphi })
            .collect()
    }

    pub fn total_length(&self) -> T {
        self.segments.iter().fold(T::zero(), |a, s| a + s.length)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentOptions {
    pub degree: usize,
    /// Spline residual target as a fraction of the segmentation tolerance.
    pub fit_fraction: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { degree: DEFAULT_DEGREE, fit_fraction: 0.05 }
    }
}

/// Segments `points` with maximum deviation `tolerance` (mm) from the fitted curve.
pub fn segment<T: Scalar>(points: &[Vec3<T>], tolerance: T) -> Result<Segmentation<T>, SegmentError> {
    segment_with(points, tolerance, &SegmentOptions::default())
}

pub fn segment_with<T: Scalar>(points: &[Vec3<T>], tolerance: T, opts: &SegmentOptions) -> Result<Segmentation<T>, SegmentError> {
    if points.len() < 4 {
        return Err(SegmentError::TooFewPoints(points.len()));
    }
    if !(tolerance > T::zero()) || !tolerance.is_finite() {
        return Err(SegmentError::InvalidTolerance(tolerance.as_f64()));
    }
    let fit = auto_fit(points, tolerance * T::lit(opts.fit_fraction), opts.degree)?;
    let proj = fit.curve.project_all(points);
    let p: Vec<Vec3<T>> = proj.iter().map(|q| q.position).collect();
    let mut tan: Vec<Vec3<T>> = proj.iter().map(|q| q.tangent).collect();
    let n = p.len();

    let runs = straight_runs(&p, &tan, tolerance);
    for &(s, e) in &runs {
        let d = (p[e] - p[s]).normalize();
        for t in tan.iter_mut().take(e + 1).skip(s) {
            *t = d;
        }
    }

    let mut pieces: Vec<Arc<T>> = Vec::new();
    let mut cur = 0;
    for &(s, e) in &runs {
        if s > cur {
            cover_region(&p, &tan, cur, s, tolerance, &mut pieces)?;
        }
        pieces.push(Arc::through(p[s], tan[s], p[e])?);
        cur = e;
    }
    if cur < n - 1 {
        cover_region(&p, &tan, cur, n - 1, tolerance, &mut pieces)?;
    }

    let pieces = merge_pieces(pieces);
    let (segments, base) = describe(&pieces)?;
    Ok(Segmentation {
        segments,
        base,
        fit: FitSummary {
            n_control: fit.n_control,
            max_residual: fit.max_residual.as_f64(),
            target_met: fit.target_met,
        },
        curve_length: fit.curve.arc_length(4096),
        pieces,
    })
}

/// Maximal runs of at least three points whose tangents agree within
/// [`STRAIGHT_TANGENT_DEG`], whose implied curvature stays below
/// [`LINE_CURVATURE`] and whose points lie within `tol` of the chord.
fn straight_runs<T: Scalar>(p: &[Vec3<T>], tan: &[Vec3<T>], tol: T) -> Vec<(usize, usize)> {
    let limit = T::lit(STRAIGHT_TANGENT_DEG.to_radians());
    let n = p.len();
    let mut runs = Vec::new();
    let mut i = 0;
    while i + 2 < n {
        let mut j = i + 1;
        let mut spread = T::zero();
        while j < n {
            let a = tan[i].angle(&tan[j]);
            if a > limit {
                break;
            }
            spread = spread.max(a);
            j += 1;
        }
        let e = j - 1;
        if e >= i + 2 {
            let chord = p[e] - p[i];
            let len = chord.norm();
            let straight = spread <= T::lit(LINE_CURVATURE) * len
                && len > T::zero()
                && {
                    let d = chord / len;
                    (i + 1..e).all(|k| {
                        let w = p[k] - p[i];
                        (w - d * w.dot(&d)).norm() <= tol
                    })
                };
            if straight {
                runs.push((i, e));
                i = e;
                continue;
            }
        }
        i += 1;
    }
    runs
}

/// Greedy biarc cover of points `a..=b`, each biarc extended to the
/// farthest endpoint that keeps the deviation within `tol`.
fn cover_region<T: Scalar>(
    p: &[Vec3<T>],
    tan: &[Vec3<T>],
    a: usize,
    b: usize,
    tol: T,
    out: &mut Vec<Arc<T>>,
) -> Result<(), SegmentError> {
    let attempt = |s: usize, e: usize| best_biarc(p[s], tan[s], p[e], tan[e], &p[s + 1..e]);
    let fits = |s: usize, e: usize| attempt(s, e).is_ok_and(|bi| bi.max_distance(&p[s + 1..e]) <= tol);
    let mut s = a;
    while s < b {
        let e = if b - s == 1 || fits(s, b) {
            b
        } else {
            if !fits(s, s + 2) {
                return Err(SegmentError::ToleranceUnattainable { tolerance: tol.as_f64(), index: s });
            }
            let (mut lo, mut hi) = (s + 2, b);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if fits(s, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let bi = attempt(s, e)?;
        let scale = bi.length() * T::lit(1e-9);
        for arc in [bi.first, bi.second] {
            if arc.length > scale {
                out.push(arc);
            }
        }
        s = e;
    }
    Ok(())
}

/// Joins consecutive pieces lying on the same circle (or line).
fn merge_pieces<T: Scalar>(pieces: Vec<Arc<T>>) -> Vec<Arc<T>> {
    let tol = T::lit(MERGE_TOL);
    let mut out: Vec<Arc<T>> = Vec::with_capacity(pieces.len());
    for next in pieces {
        if let Some(prev) = out.last_mut() {
            let same = match (prev.binormal(), next.binormal()) {
                (None, None) => true,
                (Some(b1), Some(b2)) => {
                    (prev.curvature() - next.curvature()).abs() < tol && b1.cross(&b2).norm() < tol && b1.dot(&b2) > T::zero()
                }
                _ => false,
            };
            if same {
                prev.end = next.end;
                prev.length = prev.length + next.length;
                prev.sweep = prev.sweep + next.sweep;
                if prev.radius.is_some() {
                    prev.radius = Some(prev.length / prev.sweep);
                }
                continue;
            }
        }
        out.push(next);
    }
    out
}

/// Signed angle from `a` to `b` about `axis`, in `(−π, π]`.
fn signed_angle<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>, axis: &Vec3<T>) -> T {
    let ang = a.cross(b).dot(axis).atan2(a.dot(b));
    if ang <= -T::PI() + T::epsilon() * T::lit(16.0) {
        T::PI()
    } else {
        ang
    }
}

fn describe<T: Scalar>(pieces: &[Arc<T>]) -> Result<(Vec<ArcSegment<T>>, BaseFrame<T>), SegmentError> {
    let mut segments = Vec::with_capacity(pieces.len());
    let mut prev_normal: Option<Vec3<T>> = None;
    let mut first_normal: Option<Vec3<T>> = None;
    for piece in pieces {
        let kappa = if piece.length > T::zero() { piece.sweep / piece.length } else { T::zero() };
        let kind = classify(kappa);
        let mut dphi = T::zero();
        if kind == SegmentKind::Arc {
            let n0 = piece.normal.expect("curved piece has a normal");
            if let Some(prev) = prev_normal {
                // transport the previous normal onto this segment's normal plane
                let t = piece.tangent;
                let prev = (prev - t * prev.dot(&t)).try_normalize(T::epsilon()).unwrap_or(n0);
                dphi = signed_angle(&prev, &n0, &t);
            } else {
                first_normal = Some(n0);
            }
            prev_normal = piece.normal_at(piece.length);
        }
        segments.push(ArcSegment::new(piece.length, kappa, dphi)?);
    }
    let first = pieces.first().ok_or(SegmentError::TooFewPoints(0))?;
    let tangent = first.tangent;
    let normal = first_normal
        .and_then(|n| (n - tangent * n.dot(&tangent)).try_normalize(T::epsilon()))
        .unwrap_or_else(|| tangent.any_orthogonal());
    Ok((segments, BaseFrame { origin: first.start, tangent, normal }))
}

/// Samples the constant-curvature chain described by a segmentation,
/// placed in the input frame.
pub fn reconstruct<T: Scalar>(seg: &Segmentation<T>, samples_per_segment: usize) -> Result<Vec<Vec3<T>>, SegmentError> {
    let pose = seg.base.pose();
    Ok(sample_chain(&seg.states(), samples_per_segment)?
        .iter()
        .map(|q| pose.transform_point(q))
        .collect())
}

/// Largest distance from `points` to the polyline through `curve`.
pub fn max_deviation<T: Scalar>(points: &[Vec3<T>], curve: &[Vec3<T>]) -> T {
    points
        .iter()
        .map(|q| {
            curve
                .windows(2)
                .map(|w| {
                    let d = w[1] - w[0];
                    let l2 = d.norm_squared();
                    let s = if l2 > T::zero() { ((*q - w[0]).dot(&d) / l2).max(T::zero()).min(T::one()) } else { T::zero() };
                    (w[0] + d * s).distance(q)
                })
                .fold(T::infinity(), T::min)
        })
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_is_one_line() {
        let pts: Vec<Vec3<f64>> = (0..60).map(|i| Vec3::new(1.0, 2.0 * i as f64, 0.5 * i as f64)).collect();
        let s = segment(&pts, 0.1).unwrap();
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].kind, SegmentKind::Line);
        let chord = pts[0].distance(&pts[59]);
        assert!((s.segments[0].length - chord).abs() < 1e-6);
    }

    #[test]
    fn kind_follows_threshold() {
        assert_eq!(ArcSegment::new(10.0, 0.5e-4, 0.0).unwrap().kind, SegmentKind::Line);
        assert_eq!(ArcSegment::new(10.0, 1e-4, 0.0).unwrap().kind, SegmentKind::Arc);
        assert!(ArcSegment::new(0.0, 0.1, 0.0).is_err());
        assert!(ArcSegment::new(1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let pts: Vec<Vec3<f64>> = (0..3).map(|i| Vec3::new(0.0, 0.0, i as f64)).collect();
        assert!(matches!(segment(&pts, 0.1), Err(SegmentError::TooFewPoints(3))));
        let pts: Vec<Vec3<f64>> = (0..10).map(|i| Vec3::new(0.0, 0.0, i as f64)).collect();
        assert!(matches!(segment(&pts, 0.0), Err(SegmentError::InvalidTolerance(_))));
    }

    #[test]
    fn json_field_names() {
        let s = ArcSegment::new(12.5, 0.04, 0.3).unwrap();
        let j = serde_json::to_value(s).unwrap();
        assert_eq!(j["L"], 12.5);
        assert_eq!(j["kind"], "arc");
        assert!(j.get("kappa").is_some() && j.get("dphi").is_some());
    }
}
