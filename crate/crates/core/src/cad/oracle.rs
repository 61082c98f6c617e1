//! Closed-form volume of a module from its exact arcs, by Green's theorem
//! on `∬ρ dρ dz = ∮ ρ²/2 dz` and Pappus' rule.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::CadError;
use crate::actuator::ModuleDesign;

/// `∮ ρ²/2 dz` along the arc `(a + r cos α, b + r sin α)`, `α` from `a0` to `a1`.
fn arc_term(a: f64, r: f64, a0: f64, a1: f64) -> f64 {
    let f = |x: f64| {
        let s = x.sin();
        a * a * s + a * r * (x + (2.0 * x).sin() / 2.0) + r * r * (s - s * s * s / 3.0)
    };
    r / 2.0 * (f(a1) - f(a0))
}

/// `∮ ρ²/2 dz` along a straight edge.
fn line_term(p: [f64; 2], q: [f64; 2]) -> f64 {
    (q[1] - p[1]) * (p[0] * p[0] + p[0] * q[0] + q[0] * q[0]) / 6.0
}

struct Dims {
    r_in: f64,
    t: f64,
    l: f64,
    fillet: f64,
    crown_centre: f64,
    valley_centre: f64,
}

fn dims(d: &ModuleDesign) -> Result<Dims, CadError> {
    let report = d.validate();
    if !report.is_ok() {
        return Err(CadError::InvalidDesign(report.violations));
    }
    let fillet = d.l / 4.0;
    let r_ou = 2.0 * d.r_avg - d.r_in;
    Ok(Dims {
        r_in: d.r_in,
        t: d.t,
        l: d.l,
        fillet,
        crown_centre: (r_ou - fillet).max(d.r_in + fillet),
        valley_centre: d.r_in + fillet,
    })
}

/// First moment `∬ρ dA` of the wall cross-section.
pub fn shell_moment(d: &ModuleDesign) -> Result<f64, CadError> {
    let g = dims(d)?;
    let (v, c, r, ri, rc) = (g.valley_centre, g.crown_centre, g.fillet, g.fillet + g.t, g.fillet - g.t);
    // horizontal flanks and end faces have dz = 0
    let outer = arc_term(v, r, PI, FRAC_PI_2) + arc_term(c, r, -FRAC_PI_2, FRAC_PI_2) + arc_term(v, r, -FRAC_PI_2, -PI);
    let inner = arc_term(v, ri, -PI, -FRAC_PI_2) + arc_term(c, rc, FRAC_PI_2, -FRAC_PI_2) + arc_term(v, ri, FRAC_PI_2, PI);
    Ok(outer + inner)
}

/// First moment of the cavity region `ρ ≥ r_in` that the fan fills.
pub fn cavity_moment(d: &ModuleDesign) -> Result<f64, CadError> {
    let g = dims(d)?;
    let (v, c, ri, rc) = (g.valley_centre, g.crown_centre, g.fillet + g.t, g.fillet - g.t);
    let a = (g.fillet / ri).acos();
    let z_a = ri * a.sin();
    let curve = arc_term(v, ri, PI - a, FRAC_PI_2) + arc_term(c, rc, -FRAC_PI_2, FRAC_PI_2) + arc_term(v, ri, -FRAC_PI_2, -PI + a);
    Ok(curve + line_term([g.r_in, g.l - z_a], [g.r_in, z_a]))
}

/// Solid volume of an open module with a fan of angular width `fan`.
pub fn module_volume(d: &ModuleDesign, fan: f64) -> Result<f64, CadError> {
    Ok(TAU * shell_moment(d)? + fan * cavity_moment(d)?)
}
