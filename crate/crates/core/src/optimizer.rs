//! Bi-level Bayesian optimisation of shared parameters `x = (r_in, t, P)`
//! and per-segment parameters `y_j = (R_j, l_j)` so that stacked modules
//! reproduce a segmented target curve.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuator::{build_actuator, ActuatorError, ActuatorSpec, Material, ModuleDesign, Violation};
use crate::gp::{expected_improvement, GaussianProcess};
use crate::segmentation::{ArcSegment, SegmentKind};
use crate::surrogate::DeflectionModel;

/// Stopping target for both levels.
pub const TARGET_COST: f64 = 0.02;
/// Space-filling samples before the acquisition loop starts.
pub const INITIAL_SAMPLES: usize = 5;
/// Random candidates scored per acquisition step.
const CANDIDATES: usize = 384;
/// Offset inside `ln(cost + ε)` for the GP response.
const LOG_EPS: f64 = 1e-3;
/// Margin keeping strict inequalities strict, mm.
const STRICT_MARGIN: f64 = 1e-7;
/// Fallback `r_in` search range when the model does not report one.
pub const DEFAULT_R_IN_RANGE: (f64, f64) = (2.0, 10.0);

pub const RULE_PRESSURE: &str = "0 <= P <= P_max";
pub const RULE_INNER_RADIUS: &str = "0 < r_in <= 1/kappa_max";
pub const RULE_THICKNESS: &str = "r_in/4 <= t <= r_in/2";
pub const RULE_THICKNESS_AVG: &str = "R_j/4 <= t <= r_in/2";
pub const RULE_AVERAGE_RADIUS: &str = "r_in + t <= R_j <= min(1/(2 kappa_j) + r_in/2, 2 r_in)";
pub const RULE_MODULE_LENGTH: &str = "4t <= l_j < min(L_j, 4(R_j - r_in))";
pub const RULE_OUTER_RADIUS: &str = "r_ou_min <= 2R_j - r_in <= r_ou_max";

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("invalid problem: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<Violation>),
    #[error("point violates constraints: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Infeasible(Vec<Violation>),
    #[error("result is infeasible and cannot be assembled")]
    InfeasibleResult,
    #[error("result does not match the segment list ({expected} segments, result has {got})")]
    SegmentMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
}

/// Lower bound used for the wall thickness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThicknessBound {
    /// `r_in/4 ≤ t`, the lower edge of the training grid.
    #[default]
    InnerRadius,
    /// `R_j/4 ≤ t`, as written in the constraint set; forces `t ≥ r_in/3`.
    AverageRadius,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub upper_iters: usize,
    pub lower_iters: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { upper_iters: 1000, lower_iters: 15 }
    }
}

impl Budget {
    /// Reduced budget for quick runs.
    pub fn desk() -> Self {
        Self { upper_iters: 60, lower_iters: 10 }
    }
}

fn default_target() -> f64 {
    TARGET_COST
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchProblem {
    pub segments: Vec<ArcSegment>,
    /// Pressure upper bound, kPa.
    pub p_max: f64,
    /// Defaults to the largest segment curvature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rout_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rout_max: Option<f64>,
    /// Search range for `r_in`; defaults to the model's training range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_in_range: Option<(f64, f64)>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default = "default_target")]
    pub target_cost: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thickness_bound: ThicknessBound,
    #[serde(default)]
    pub material: Material,
}

impl MatchProblem {
    pub fn new(segments: Vec<ArcSegment>, p_max: f64) -> Self {
        Self {
            segments,
            p_max,
            kappa_max: None,
            rout_min: None,
            rout_max: None,
            r_in_range: None,
            budget: Budget::default(),
            target_cost: TARGET_COST,
            seed: 0,
            thickness_bound: ThicknessBound::default(),
            material: Material::default(),
        }
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, &ArcSegment)> {
        self.segments.iter().enumerate().filter(|(_, s)| s.kind == SegmentKind::Arc)
    }

    pub fn limits(&self) -> Limits {
        let kappa_max = self.kappa_max.unwrap_or_else(|| self.arcs().map(|(_, s)| s.kappa).fold(0.0, f64::max));
        Limits {
            p_max: self.p_max,
            kappa_max,
            rout_min: self.rout_min.unwrap_or(0.0),
            rout_max: self.rout_max.unwrap_or(f64::INFINITY),
            thickness: self.thickness_bound,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let mut v = Vec::new();
        if self.segments.is_empty() {
            v.push(Violation::new("segments_empty", "segments non-empty", "no segments"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.validate().is_err() {
                v.push(Violation::new("segment_invalid", "L > 0, kappa >= 0", format!("segment {i}: L = {}, kappa = {}", s.length, s.kappa)));
            }
        }
        if !(self.p_max >= 0.0) || !self.p_max.is_finite() {
            v.push(Violation::new("p_max", "P_max >= 0", format!("P_max = {}", self.p_max)));
        }
        if let Some(k) = self.kappa_max {
            if !(k > 0.0) || !k.is_finite() {
                v.push(Violation::new("kappa_max", "kappa_max > 0", format!("kappa_max = {k}")));
            }
        }
        let (lo, hi) = (self.rout_min.unwrap_or(0.0), self.rout_max.unwrap_or(f64::INFINITY));
        if !(lo >= 0.0) || !(hi >= lo) {
            v.push(Violation::new("rout_bounds", "0 <= r_ou_min <= r_ou_max", format!("[{lo}, {hi}]")));
        }
        if let Some((a, b)) = self.r_in_range {
            if !(a > 0.0 && b >= a && b.is_finite()) {
                v.push(Violation::new("r_in_range", "0 < r_in_min <= r_in_max", format!("[{a}, {b}]")));
            }
        }
        if self.budget.upper_iters == 0 || self.budget.lower_iters == 0 {
            v.push(Violation::new("budget", "budgets >= 1", format!("{:?}", self.budget)));
        }
        if !(self.target_cost > 0.0) {
            v.push(Violation::new("target_cost", "target_cost > 0", format!("{}", self.target_cost)));
        }
        let m = self.material.validate();
        v.extend(m.violations);
        if v.is_empty() {
            Ok(())
        } else {
            Err(OptimizeError::InvalidProblem(v))
        }
    }
}

/// Problem-level bounds entering the constraint set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub p_max: f64,
    pub kappa_max: f64,
    pub rout_min: f64,
    pub rout_max: f64,
    pub thickness: ThicknessBound,
}

/// Shared parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    pub r_in: f64,
    pub t: f64,
    #[serde(rename = "P")]
    pub pressure: f64,
}

/// Per-segment parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    #[serde(rename = "R")]
    pub r_avg: f64,
    pub l: f64,
}

fn v(code: &str, rule: &str, detail: String) -> Violation {
    Violation::new(code, rule, detail)
}

/// Checks every constraint row for one segment; empty means feasible.
pub fn feasible(x: &SharedParams, y: &SegmentParams, seg: &ArcSegment, lim: &Limits) -> Vec<Violation> {
    let tol = 1e-9;
    let mut out = Vec::new();
    let SharedParams { r_in, t, pressure: p } = *x;
    let SegmentParams { r_avg: r, l } = *y;
    if !(p >= -tol && p <= lim.p_max + tol) {
        out.push(v("pressure", RULE_PRESSURE, format!("P = {p}, P_max = {}", lim.p_max)));
    }
    if !(r_in > 0.0 && (lim.kappa_max <= 0.0 || r_in <= 1.0 / lim.kappa_max + tol)) {
        out.push(v("inner_radius", RULE_INNER_RADIUS, format!("r_in = {r_in}, kappa_max = {}", lim.kappa_max)));
    }
    let (t_lo, rule) = match lim.thickness {
        ThicknessBound::InnerRadius => (r_in / 4.0, RULE_THICKNESS),
        ThicknessBound::AverageRadius => (r / 4.0, RULE_THICKNESS_AVG),
    };
    if !(t >= t_lo - tol && t <= r_in / 2.0 + tol) {
        out.push(v("thickness", rule, format!("t = {t}, bounds [{t_lo}, {}]", r_in / 2.0)));
    }
    let mut r_hi = 2.0 * r_in;
    if seg.kappa > 0.0 {
        r_hi = r_hi.min(1.0 / (2.0 * seg.kappa) + r_in / 2.0);
    }
    if !(r >= r_in + t - tol && r <= r_hi + tol) {
        out.push(v("average_radius", RULE_AVERAGE_RADIUS, format!("R = {r}, bounds [{}, {r_hi}]", r_in + t)));
    }
    let l_hi = seg.length.min(4.0 * (r - r_in));
    if !(l >= 4.0 * t - tol && l < l_hi) {
        out.push(v("module_length", RULE_MODULE_LENGTH, format!("l = {l}, bounds [{}, {l_hi})", 4.0 * t)));
    }
    let r_ou = 2.0 * r - r_in;
    if !(r_ou >= lim.rout_min - tol && r_ou <= lim.rout_max + tol) {
        out.push(v("outer_radius", RULE_OUTER_RADIUS, format!("r_ou = {r_ou}, bounds [{}, {}]", lim.rout_min, lim.rout_max)));
    }
    let report = ModuleDesign::new(r_in, t, r, l).validate();
    out.extend(report.violations);
    out
}

/// Cost of one segment with its module count and predicted angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentCost {
    pub cost: f64,
    pub n: usize,
    pub theta: f64,
}

/// `d_j = sqrt(w1·(L − n·l)² + w2·(κ − θ/l)²)` with `w1 = 1/L²`,
/// `w2 = 1/κ²` and `n = max(1, round(L/l))`.
pub fn segment_cost(
    x: &SharedParams,
    y: &SegmentParams,
    seg: &ArcSegment,
    model: &dyn DeflectionModel,
) -> Result<SegmentCost, OptimizeError> {
    let design = ModuleDesign::new(x.r_in, x.t, y.r_avg, y.l);
    let report = design.validate();
    if !report.is_ok() {
        return Err(OptimizeError::Infeasible(report.violations));
    }
    if !(seg.length > 0.0 && seg.kappa > 0.0) {
        return Err(OptimizeError::Infeasible(vec![v(
            "segment_invalid",
            "L > 0, kappa > 0",
            format!("L = {}, kappa = {}", seg.length, seg.kappa),
        )]));
    }
    let n = ((seg.length / y.l).round() as usize).max(1);
    let theta = model.theta(&design, x.pressure);
    if !theta.is_finite() {
        return Err(OptimizeError::Infeasible(vec![v("model", "finite prediction", "model returned NaN".into())]));
    }
    let dl = (seg.length - n as f64 * y.l) / seg.length;
    let dk = (seg.kappa - theta / y.l) / seg.kappa;
    Ok(SegmentCost { cost: (dl * dl + dk * dk).sqrt(), n, theta })
}

/// `(R, l)` search region for one segment under fixed `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct LowerBox {
    r_lo: f64,
    r_hi: f64,
    l_lo: f64,
    r_in: f64,
    length: f64,
}

impl LowerBox {
    fn new(x: &SharedParams, seg: &ArcSegment, lim: &Limits) -> Option<Self> {
        let (r_in, t) = (x.r_in, x.t);
        let mut r_lo = (r_in + t).max((lim.rout_min + r_in) / 2.0);
        let mut r_hi = (2.0 * r_in).min((lim.rout_max + r_in) / 2.0);
        if seg.kappa > 0.0 {
            r_hi = r_hi.min(1.0 / (2.0 * seg.kappa) + r_in / 2.0);
        }
        if lim.thickness == ThicknessBound::AverageRadius {
            r_hi = r_hi.min(4.0 * t);
        }
        let l_lo = 4.0 * t + STRICT_MARGIN;
        // l < 4(R − r_in) needs R above r_in + l_lo/4
        r_lo = r_lo.max(r_in + (l_lo + STRICT_MARGIN) / 4.0);
        if r_hi - r_lo < -1e-12 {
            return None;
        }
        r_hi = r_hi.max(r_lo);
        let b = Self { r_lo, r_hi, l_lo, r_in, length: seg.length };
        if b.l_hi(r_hi) < l_lo {
            return None;
        }
        Some(b)
    }

    fn l_hi(&self, r: f64) -> f64 {
        self.length.min(4.0 * (r - self.r_in)) - STRICT_MARGIN
    }

    fn map(&self, u: [f64; 2]) -> SegmentParams {
        let r = self.r_lo + u[0] * (self.r_hi - self.r_lo);
        let span = (self.l_hi(r) - self.l_lo).max(0.0);
        SegmentParams { r_avg: r, l: self.l_lo + u[1] * span }
    }

    fn unmap(&self, y: &SegmentParams) -> [f64; 2] {
        let dr = self.r_hi - self.r_lo;
        let u0 = if dr > 0.0 { (y.r_avg - self.r_lo) / dr } else { 0.5 };
        let span = self.l_hi(y.r_avg) - self.l_lo;
        let u1 = if span > 0.0 { (y.l - self.l_lo) / span } else { 0.5 };
        [u0.clamp(0.0, 1.0), u1.clamp(0.0, 1.0)]
    }

    /// Replaces `l` by `L/n` (whole number of modules) when that stays feasible.
    fn snap(&self, y: SegmentParams) -> SegmentParams {
        let n = (self.length / y.l).round();
        if n >= 2.0 {
            let l = self.length / n;
            if l >= self.l_lo && l <= self.l_hi(y.r_avg) {
                return SegmentParams { l, ..y };
            }
        }
        y
    }
}

/// Outcome of the lower-level search for one segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerResult {
    pub y: SegmentParams,
    pub cost: f64,
    pub n: usize,
    pub theta: f64,
    pub evaluations: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C909, |acc, &p| splitmix(acc ^ p))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Greedy maximin selection of `k` points from `cands`.
fn maximin(cands: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    if cands.is_empty() {
        return chosen;
    }
    chosen.push(0);
    while chosen.len() < k.min(cands.len()) {
        let next = (0..cands.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| (i, chosen.iter().map(|&c| dist2(&cands[i], &cands[c])).fold(f64::INFINITY, f64::min)))
            .fold((usize::MAX, -1.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        chosen.push(next.0);
    }
    chosen
}

/// Highest-EI candidate among random points and perturbations of the best
/// observations; `accept` rejects infeasible candidates.
fn propose(
    rng: &mut ChaCha8Rng,
    xs: &[Vec<f64>],
    ys: &[f64],
    dim: usize,
    accept: &dyn Fn(&[f64]) -> bool,
) -> Option<Vec<f64>> {
    let gp = GaussianProcess::fit(xs, ys).ok()?;
    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut cands: Vec<Vec<f64>> = (0..CANDIDATES).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
    for &i in order.iter().take(3) {
        for _ in 0..16 {
            cands.push(xs[i].iter().map(|c| (c + 0.05 * (rng.gen::<f64>() * 2.0 - 1.0)).clamp(0.0, 1.0)).collect());
        }
    }
    let mut pick: Option<(f64, Vec<f64>)> = None;
    for c in cands {
        if xs.iter().any(|x| dist2(x, &c) < 1e-14) || !accept(&c) {
            continue;
        }
        let (m, var) = gp.predict(&c);
        let ei = expected_improvement(m, var, best);
        if pick.as_ref().is_none_or(|(b, _)| ei > *b) {
            pick = Some((ei, c));
        }
    }
    pick.map(|(_, c)| c)
}

struct LowerState {
    us: Vec<Vec<f64>>,
    ys: Vec<f64>,
    best: Option<LowerResult>,
    evals: usize,
}

/// Bayesian optimisation of `(R_j, l_j)` for one segment under fixed `x`.
/// Returns `None` when no feasible `y` exists.
pub fn optimize_lower(
    x: &SharedParams,
    seg: &ArcSegment,
    model: &dyn DeflectionModel,
    lim: &Limits,
    budget: usize,
    target: f64,
    seed: u64,
) -> Option<LowerResult> {
    if x.r_in <= 0.0 || (lim.kappa_max > 0.0 && x.r_in > 1.0 / lim.kappa_max + 1e-9) {
        return None;
    }
    let bx = LowerBox::new(x, seg, lim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        seed,
        x.r_in.to_bits(),
        x.t.to_bits(),
        x.pressure.to_bits(),
        seg.length.to_bits(),
        seg.kappa.to_bits(),
    ]));
    let mut st = LowerState { us: Vec::new(), ys: Vec::new(), best: None, evals: 0 };
    let evaluate = |u: &[f64], st: &mut LowerState| -> bool {
        let y = bx.snap(bx.map([u[0], u[1]]));
        let uu = bx.unmap(&y).to_vec();
        if st.us.iter().any(|p| dist2(p, &uu) < 1e-14) {
            return false;
        }
        let Ok(c) = segment_cost(x, &y, seg, model) else { return false };
        if !feasible(x, &y, seg, lim).is_empty() {
            return false;
        }
        st.evals += 1;
        st.us.push(uu);
        st.ys.push((c.cost + LOG_EPS).ln());
        if st.best.as_ref().is_none_or(|b| c.cost < b.cost) {
            st.best = Some(LowerResult { y, cost: c.cost, n: c.n, theta: c.theta, evaluations: 0 });
        }
        true
    };

    let init: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let mut seeds = vec![vec![0.5, 0.5]];
    seeds.extend(maximin(&init, INITIAL_SAMPLES * 2).into_iter().map(|i| init[i].clone()));
    for u in &seeds {
        if st.us.len() >= INITIAL_SAMPLES.min(budget) {
            break;
        }
        evaluate(u, &mut st);
    }
    let mut stalls = 0;
    while st.us.len() < budget && st.best.as_ref().is_none_or(|b| b.cost >= target) && stalls < 8 {
        let next = if st.us.len() >= 2 { propose(&mut rng, &st.us, &st.ys, 2, &|_| true) } else { None };
        let u = next.unwrap_or_else(|| vec![rng.gen::<f64>(), rng.gen::<f64>()]);
        if !evaluate(&u, &mut st) {
            stalls += 1;
        }
    }
    let evals = st.evals;
    st.best.map(|b| LowerResult { evaluations: evals, ..b })
}

/// Design chosen for one input segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDesign {
    pub kind: SegmentKind,
    #[serde(rename = "L")]
    pub length: f64,
    pub kappa: f64,
    pub dphi: f64,
    #[serde(rename = "R")]
    pub r_avg: f64,
    pub l: f64,
    pub n: usize,
    /// Predicted bending angle per module (0 for rigid modules).
    pub theta: f64,
    /// `d_j` for arcs; absent for lines.
    pub cost: Option<f64>,
    /// `L − n·l`.
    pub length_error: f64,
    pub rigid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Converged,
    BudgetExhausted,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub x: SharedParams,
    pub segments: Vec<SegmentDesign>,
    /// Mean of `d_j` over arc segments.
    pub mean_cost: f64,
    pub feasible: bool,
    pub status: MatchStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub upper_iterations: usize,
    pub lower_evaluations: usize,
    pub seed: u64,
    pub kappa_max: f64,
    pub thickness_bound: ThicknessBound,
    pub material: Material,
    /// Best mean cost after each upper iteration.
    pub history: Vec<f64>,
}

impl MatchResult {
    pub fn arc_costs(&self) -> Vec<f64> {
        self.segments.iter().filter_map(|s| s.cost).collect()
    }
}

/// Rigid stack for a straight segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StraightPlan {
    pub n: usize,
    #[serde(rename = "R")]
    pub r_avg: f64,
    pub l: f64,
    /// `L − n·l`.
    pub length_error: f64,
    /// Segment shorter than the shortest valid module.
    pub short: bool,
}

/// Rigid modules for a line: `n = max(1, round(L/l))` copies of the
/// template; below the shortest valid module a single module is used.
pub fn plan_straight(seg: &ArcSegment, x: &SharedParams, template: &SegmentParams) -> StraightPlan {
    let l_min = 4.0 * x.t + 1e-6;
    if seg.length < l_min {
        let l = l_min;
        let r_avg = template.r_avg.max(x.r_in + l / 4.0);
        return StraightPlan { n: 1, r_avg, l, length_error: seg.length - l, short: true };
    }
    let l = template.l.max(l_min);
    let r_avg = template.r_avg.max(x.r_in + l / 4.0);
    let n = ((seg.length / l).round() as usize).max(1);
    StraightPlan { n, r_avg, l, length_error: seg.length - n as f64 * l, short: false }
}

/// Progress of the upper loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: usize,
    pub budget: usize,
    pub best_mean_cost: f64,
}

/// `x` search region: `r_in` range plus `t ∈ [t_lo(r_in), r_in/2]` and
/// `P ∈ [0, P_max]`, mapped from the unit cube.
struct UpperBox {
    r_lo: f64,
    r_hi: f64,
    p_max: f64,
    thickness: ThicknessBound,
}

impl UpperBox {
    fn map(&self, u: &[f64]) -> SharedParams {
        let r_in = self.r_lo + u[0] * (self.r_hi - self.r_lo);
        let t_lo = match self.thickness {
            ThicknessBound::InnerRadius => r_in / 4.0,
            ThicknessBound::AverageRadius => r_in / 3.0,
        };
        let t = t_lo + u[1] * (r_in / 2.0 - t_lo);
        SharedParams { r_in, t, pressure: u[2] * self.p_max }
    }
}

struct Evaluation {
    x: SharedParams,
    mean: f64,
    lower: Vec<(usize, LowerResult)>,
}

/// Runs the bi-level search.
pub fn optimize(problem: &MatchProblem, model: &dyn DeflectionModel) -> Result<MatchResult, OptimizeError> {
    optimize_with_progress(problem, model, &mut |_| {})
}

pub fn optimize_with_progress(
    problem: &MatchProblem,
    model: &dyn DeflectionModel,
    on_progress: &mut dyn FnMut(&Progress),
) -> Result<MatchResult, OptimizeError> {
    problem.validate()?;
    let lim = problem.limits();
    let arcs: Vec<(usize, ArcSegment)> = problem.arcs().map(|(i, s)| (i, *s)).collect();
    let (mut r_lo, mut r_hi) = problem.r_in_range.or_else(|| model.r_in_range()).unwrap_or(DEFAULT_R_IN_RANGE);
    if lim.kappa_max > 0.0 {
        r_hi = r_hi.min(1.0 / lim.kappa_max);
    }
    r_lo = r_lo.min(r_hi);
    let bx = UpperBox { r_lo, r_hi, p_max: problem.p_max, thickness: problem.thickness_bound };
    let target = problem.target_cost;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[problem.seed, 0x0055_5050_4552]));

    let x_feasible = |x: &SharedParams| x.r_in > 0.0 && arcs.iter().all(|(_, s)| LowerBox::new(x, s, &lim).is_some());

    let mut cache: HashMap<[u64; 5], Option<LowerResult>> = HashMap::new();
    let mut lower_evals = 0usize;
    let mut evaluate = |x: SharedParams| -> Option<Evaluation> {
        let mut lower = Vec::with_capacity(arcs.len());
        for (i, s) in &arcs {
            let key = [x.r_in.to_bits(), x.t.to_bits(), x.pressure.to_bits(), s.length.to_bits(), s.kappa.to_bits()];
            let res = *cache.entry(key).or_insert_with(|| {
                let r = optimize_lower(&x, s, model, &lim, problem.budget.lower_iters, target, problem.seed);
                if let Some(r) = &r {
                    lower_evals += r.evaluations;
                }
                r
            });
            lower.push((*i, res?));
        }
        let mean = if lower.is_empty() { 0.0 } else { lower.iter().map(|(_, r)| r.cost).sum::<f64>() / lower.len() as f64 };
        Some(Evaluation { x, mean, lower })
    };
    let done = |e: &Evaluation| e.mean < target && e.lower.iter().all(|(_, r)| r.cost < target);

    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut best: Option<Evaluation> = None;
    let mut history = Vec::new();
    let mut iterations = 0;

    let init: Vec<Vec<f64>> = (0..4096)
        .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
        .filter(|u| x_feasible(&bx.map(u)))
        .take(256)
        .collect();
    let mut queue: Vec<Vec<f64>> = maximin(&init, INITIAL_SAMPLES.min(problem.budget.upper_iters)).into_iter().map(|i| init[i].clone()).collect();
    queue.reverse();

    let mut converged = false;
    let mut stalls = 0;
    while iterations < problem.budget.upper_iters && !converged && stalls < 16 {
        let u = match queue.pop() {
            Some(u) => u,
            None if us.len() >= 2 => {
                let accept = |c: &[f64]| x_feasible(&bx.map(c));
                match propose(&mut rng, &us, &ys, 3, &accept) {
                    Some(u) => u,
                    None => {
                        stalls += 1;
                        match init.get(rng.gen_range(0..init.len().max(1))) {
                            Some(u) if !us.iter().any(|p| dist2(p, u) < 1e-14) => u.clone(),
                            _ => continue,
                        }
                    }
                }
            }
            None => break,
        };
        iterations += 1;
        let Some(e) = evaluate(bx.map(&u)) else { continue };
        us.push(u);
        ys.push((e.mean + LOG_EPS).ln());
        converged = done(&e);
        if best.as_ref().is_none_or(|b| e.mean < b.mean) {
            best = Some(e);
        }
        let bm = best.as_ref().map_or(f64::INFINITY, |b| b.mean);
        history.push(bm);
        on_progress(&Progress { iteration: iterations, budget: problem.budget.upper_iters, best_mean_cost: bm });
    }

    let Some(best) = best else {
        let x = bx.map(&[0.5, 0.5, 0.5]);
        return Ok(infeasible_result(problem, &lim, x, iterations, lower_evals, history, "no feasible shared parameters found"));
    };
    let mut designs: Vec<SegmentDesign> = Vec::with_capacity(problem.segments.len());
    let lower_map: HashMap<usize, LowerResult> = best.lower.iter().copied().collect();
    let template = best
        .lower
        .first()
        .map(|(_, r)| r.y)
        .unwrap_or_else(|| default_template(&best.x));
    for (i, s) in problem.segments.iter().enumerate() {
        designs.push(match lower_map.get(&i) {
            Some(r) => SegmentDesign {
                kind: s.kind,
                length: s.length,
                kappa: s.kappa,
                dphi: s.dphi,
                r_avg: r.y.r_avg,
                l: r.y.l,
                n: r.n,
                theta: r.theta,
                cost: Some(r.cost),
                length_error: s.length - r.n as f64 * r.y.l,
                rigid: false,
            },
            None => {
                let p = plan_straight(s, &best.x, &template);
                SegmentDesign {
                    kind: s.kind,
                    length: s.length,
                    kappa: s.kappa,
                    dphi: s.dphi,
                    r_avg: p.r_avg,
                    l: p.l,
                    n: p.n,
                    theta: 0.0,
                    cost: None,
                    length_error: p.length_error,
                    rigid: true,
                }
            }
        });
    }
    // independent re-check of every arc against the full constraint set
    let violations: Vec<Violation> = arcs
        .iter()
        .flat_map(|(i, s)| feasible(&best.x, &SegmentParams { r_avg: designs[*i].r_avg, l: designs[*i].l }, s, &lim))
        .collect();
    let mut feasible_flag = violations.is_empty();
    let mut message = None;
    if problem.p_max <= 0.0 && !arcs.is_empty() {
        feasible_flag = false;
        message = Some("P_max = 0 leaves no pressure to bend; curvature cannot be matched".to_owned());
    } else if !violations.is_empty() {
        message = Some(violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "));
    }
    let status = if !feasible_flag {
        MatchStatus::Infeasible
    } else if converged {
        MatchStatus::Converged
    } else {
        MatchStatus::BudgetExhausted
    };
    Ok(MatchResult {
        x: best.x,
        segments: designs,
        mean_cost: best.mean,
        feasible: feasible_flag,
        status,
        message,
        upper_iterations: iterations,
        lower_evaluations: lower_evals,
        seed: problem.seed,
        kappa_max: lim.kappa_max,
        thickness_bound: problem.thickness_bound,
        material: problem.material,
        history,
    })
}

fn default_template(x: &SharedParams) -> SegmentParams {
    let r_avg = x.r_in + x.t + (x.r_in - x.t) / 2.0;
    SegmentParams { r_avg, l: (4.0 * x.t + 4.0 * (r_avg - x.r_in)) / 2.0 }
}

fn infeasible_result(
    problem: &MatchProblem,
    lim: &Limits,
    x: SharedParams,
    iterations: usize,
    lower_evals: usize,
    history: Vec<f64>,
    why: &str,
) -> MatchResult {
    MatchResult {
        x,
        segments: Vec::new(),
        mean_cost: f64::MAX,
        feasible: false,
        status: MatchStatus::Infeasible,
        message: Some(why.to_owned()),
        upper_iterations: iterations,
        lower_evaluations: lower_evals,
        seed: problem.seed,
        kappa_max: lim.kappa_max,
        thickness_bound: problem.thickness_bound,
        material: problem.material,
        history,
    }
}

/// Stacks `n_j` copies of each segment's module, twisting by the
/// segment's `dphi` at its first module.
pub fn assemble(result: &MatchResult) -> Result<ActuatorSpec, OptimizeError> {
    if !result.feasible {
        return Err(OptimizeError::InfeasibleResult);
    }
    let mut modules = Vec::new();
    let mut rotations = Vec::new();
    let mut rigid = Vec::new();
    for (j, s) in result.segments.iter().enumerate() {
        for k in 0..s.n {
            if !modules.is_empty() {
                rotations.push(if k == 0 && j > 0 { s.dphi } else { 0.0 });
            }
            if s.rigid {
                rigid.push(modules.len());
            }
            modules.push(ModuleDesign::new(result.x.r_in, result.x.t, s.r_avg, s.l));
        }
    }
    let mut spec = build_actuator(modules, rotations, result.x.pressure, result.material)?;
    spec.set_rigid(rigid)?;
    Ok(spec)
}
