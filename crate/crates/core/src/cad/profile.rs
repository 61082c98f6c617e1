use std::f64::consts::FRAC_PI_2;

use super::CadError;
use crate::actuator::ModuleDesign;

/// Half-plane cross-section of one module in `(ρ, z)`, module-local `z ∈ [0, l]`.
///
/// `outer` runs from `(r_in, 0)` over the crown to `(r_in, l)`; `inner` is
/// the wall offset by `t` toward the axis, from `(r_in − t, 0)` to
/// `(r_in − t, l)`. `inner[fan.0..=fan.1]` is the stretch with `ρ ≥ r_in`,
/// which the constraint fan closes with the straight edge at `ρ = r_in`.
/// `inner[cap.0]` and `inner[cap.1]` lie one wall thickness from either end.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleProfile {
    pub outer: Vec<[f64; 2]>,
    pub inner: Vec<[f64; 2]>,
    pub fan: (usize, usize),
    pub cap: (usize, usize),
}

/// Shortest chord an arc is split into, mm.
const MIN_CHORD: f64 = 1e-3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tag {
    None,
    Fan,
    Cap,
}

struct Curve {
    pts: Vec<([f64; 2], Tag)>,
    step: f64,
}

impl Curve {
    fn push(&mut self, p: [f64; 2], tag: Tag) {
        if let Some(last) = self.pts.last_mut() {
            if (last.0[0] - p[0]).abs() < 1e-9 && (last.0[1] - p[1]).abs() < 1e-9 {
                if tag != Tag::None {
                    last.1 = tag;
                }
                return;
            }
        }
        self.pts.push((p, tag));
    }

    /// Arc `centre + r·(cos a, sin a)` from `a0` to `a1`, split at `marks`.
    fn arc(&mut self, c: [f64; 2], r: f64, a0: f64, a1: f64, marks: &[(f64, Tag)]) {
        let mut stops: Vec<(f64, Tag)> = vec![(a0, Tag::None), (a1, Tag::None)];
        stops.extend(marks.iter().copied());
        if a1 < a0 {
            stops.sort_by(|a, b| b.0.total_cmp(&a.0));
        } else {
            stops.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        for w in stops.windows(2) {
            let span = w[1].0 - w[0].0;
            // sub-micron chords only produce slivers; their sagitta is negligible
            let by_chord = (span.abs() * r / MIN_CHORD).floor() as usize;
            let n = ((span.abs() / self.step).ceil() as usize).min(by_chord).max(1);
            for k in 0..n {
                let a = w[0].0 + span * k as f64 / n as f64;
                self.push([c[0] + r * a.cos(), c[1] + r * a.sin()], if k == 0 { w[0].1 } else { Tag::None });
            }
        }
        let last = stops.last().unwrap();
        self.push([c[0] + r * a1.cos(), c[1] + r * a1.sin()], last.1);
    }

    fn index(&self, tag: Tag) -> Vec<usize> {
        self.pts.iter().enumerate().filter(|(_, p)| p.1 == tag).map(|(i, _)| i).collect()
    }
}

/// Builds the module cross-section with arcs split at most `step` radians.
pub(crate) fn profile_with_step(d: &ModuleDesign, step: f64) -> Result<ModuleProfile, CadError> {
    let g = d.derived().map_err(|r| CadError::InvalidDesign(r.violations))?;
    let (r_in, t, l) = (d.r_in, d.t, d.l);
    let (r1, r2, r_ou) = (g.r_1, g.r_2, g.r_ou);
    let valley = r_in + r2;
    let crown = valley.max(r_ou - r1);
    let pi = std::f64::consts::PI;

    let mut o = Curve { pts: Vec::new(), step };
    // angles measured from +ρ; the valley arcs sit left of their centre
    o.arc([valley, 0.0], r2, pi, FRAC_PI_2, &[]);
    o.arc([crown, l / 2.0], r1, -FRAC_PI_2, FRAC_PI_2, &[]);
    o.arc([valley, l], r2, -FRAC_PI_2, -pi, &[]);

    let ri = r2 + t;
    let a_fan = (r2 / ri).acos();
    let a_cap = (t / ri).asin();
    let mut i = Curve { pts: Vec::new(), step };
    i.arc([valley, 0.0], ri, pi, FRAC_PI_2, &[(pi - a_cap, Tag::Cap), (pi - a_fan, Tag::Fan)]);
    i.arc([crown, l / 2.0], r1 - t, -FRAC_PI_2, FRAC_PI_2, &[]);
    i.arc([valley, l], ri, -FRAC_PI_2, -pi, &[(-pi + a_fan, Tag::Fan), (-pi + a_cap, Tag::Cap)]);

    let fan = i.index(Tag::Fan);
    let cap = i.index(Tag::Cap);
    if fan.len() != 2 || cap.len() != 2 {
        return Err(CadError::InvalidDesign(Vec::new()));
    }
    let mut p = ModuleProfile {
        outer: o.pts.into_iter().map(|p| p.0).collect(),
        inner: i.pts.into_iter().map(|p| p.0).collect(),
        fan: (fan[0], fan[1]),
        cap: (cap[0], cap[1]),
    };
    // snap the end and fan points onto their exact coordinates
    let last_o = p.outer.len() - 1;
    p.outer[0] = [r_in, 0.0];
    p.outer[last_o] = [r_in, l];
    let last_i = p.inner.len() - 1;
    p.inner[0] = [r_in - t, 0.0];
    p.inner[last_i] = [r_in - t, l];
    p.inner[p.fan.0][0] = r_in;
    p.inner[p.fan.1][0] = r_in;
    p.inner[p.cap.0][1] = t;
    p.inner[p.cap.1][1] = l - t;
    check_simple(&p.closed())?;
    Ok(p)
}

/// Closed wall cross-section of one module at the default tessellation.
pub fn module_profile(d: &ModuleDesign) -> Result<ModuleProfile, CadError> {
    profile_with_step(d, super::DEFAULT_ANGULAR_STEP_DEG.to_radians())
}

impl ModuleProfile {
    /// Counter-clockwise closed polygon of the wall: outer curve up, inner curve down.
    pub fn closed(&self) -> Vec<[f64; 2]> {
        self.outer.iter().chain(self.inner.iter().rev()).copied().collect()
    }

    /// Closed polygon of the cavity region the fan fills.
    pub fn cavity(&self) -> Vec<[f64; 2]> {
        self.inner[self.fan.0..=self.fan.1].to_vec()
    }

    /// `(ρ_min, ρ_max, z_min, z_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.closed().iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |b, p| (b.0.min(p[0]), b.1.max(p[0]), b.2.min(p[1]), b.3.max(p[1])),
        )
    }
}

fn seg_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// Rejects polygons whose non-adjacent edges properly cross.
pub(crate) fn check_simple(poly: &[[f64; 2]]) -> Result<(), CadError> {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if seg_cross(a, b, c, d) {
                return Err(CadError::SelfIntersection { first: i, second: j, rho: a[0], z: a[1] });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::triangulate::signed_area2;

    #[test]
    fn default_bounds() {
        let p = module_profile(&ModuleDesign::standard()).unwrap();
        let (r0, r1, z0, z1) = p.bounds();
        assert!((r0 - 3.5).abs() < 1e-12 && (r1 - 11.0).abs() < 1e-9);
        assert!(z0.abs() < 1e-12 && (z1 - 10.0).abs() < 1e-12);
        assert!(signed_area2(&p.closed()) > 0.0);
        assert!(p.cavity().iter().all(|q| q[0] >= 5.0 - 1e-12));
    }

    #[test]
    fn arcs_respect_the_step() {
        let p = module_profile(&ModuleDesign::standard()).unwrap();
        // crown radius 2.5: a 2 degree chord is at most 2.5 * 2 * sin(1 deg)
        let max_chord = 2.5 * 2.0 * 1f64.to_radians().sin() + 1e-12;
        let crown: Vec<_> = p.outer.iter().filter(|q| q[0] > 8.5 + 1e-9).collect();
        assert!(crown.windows(2).all(|w| ((w[0][0] - w[1][0]).powi(2) + (w[0][1] - w[1][1]).powi(2)).sqrt() <= max_chord));
    }

    #[test]
    fn zero_flank_is_still_closed() {
        // l = 4(R - r_in): flank collapses
        let p = module_profile(&ModuleDesign::new(5.0, 1.5, 7.5, 10.0)).unwrap();
        let (_, r1, _, _) = p.bounds();
        assert!((r1 - 10.0).abs() < 1e-9);
        check_simple(&p.closed()).unwrap();
    }

    #[test]
    fn invalid_design_is_rejected() {
        assert!(matches!(module_profile(&ModuleDesign::new(5.0, 3.0, 8.0, 10.0)), Err(CadError::InvalidDesign(_))));
    }
}
