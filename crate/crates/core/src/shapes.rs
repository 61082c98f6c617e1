//! Reference target curves built from constant-curvature pieces.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::kinematics::{sample_chain_uniform, ModuleState};
use crate::vector::Vec3;

/// Letter "S": two mirrored arcs of equal radius, each sweeping 3π/4,
/// starting at the origin heading along +z.
pub fn letter_s(radius: f64, count: usize) -> Vec<Vec3<f64>> {
    let sweep = 0.75 * PI;
    let states = [
        ModuleState { theta: sweep, l: radius * sweep, dphi: 0.0 },
        ModuleState { theta: sweep, l: radius * sweep, dphi: PI },
    ];
    sample_chain_uniform(&states, count).expect("valid chain")
}

/// Elephant-trunk curve: two quarter arcs in perpendicular planes.
pub fn trunk(radius: f64, count: usize) -> Vec<Vec3<f64>> {
    let states = [
        ModuleState { theta: FRAC_PI_2, l: radius * FRAC_PI_2, dphi: 0.0 },
        ModuleState { theta: FRAC_PI_2, l: radius * FRAC_PI_2, dphi: FRAC_PI_2 },
    ];
    sample_chain_uniform(&states, count).expect("valid chain")
}

/// Planar circular arc of the given radius and sweep in the x–z plane.
pub fn circle_arc(radius: f64, sweep: f64, count: usize) -> Vec<Vec3<f64>> {
    let states = [ModuleState { theta: sweep, l: radius * sweep, dphi: 0.0 }];
    sample_chain_uniform(&states, count).expect("valid chain")
}

/// Straight run along +z.
pub fn line(length: f64, count: usize) -> Vec<Vec3<f64>> {
    let last = (count.max(2) - 1) as f64;
    (0..count.max(2)).map(|k| Vec3::new(0.0, 0.0, length * k as f64 / last)).collect()
}

/// Named reference shape, if known (`s`, `trunk`, `arc`, `line`).
pub fn by_name(name: &str, count: usize) -> Option<Vec<Vec3<f64>>> {
    match name {
        "s" | "letter-s" => Some(letter_s(25.0, count)),
        "trunk" => Some(trunk(30.0, count)),
        "arc" => Some(circle_arc(30.0, PI, count)),
        "line" => Some(line(100.0, count)),
        _ => None,
    }
}
