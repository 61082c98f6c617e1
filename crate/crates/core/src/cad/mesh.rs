use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::profile::{profile_with_step, ModuleProfile};
use super::triangulate::ear_clip;
use super::{CadError, DEFAULT_ANGULAR_STEP_DEG, FAN_ANGLE};
use crate::actuator::{ActuatorSpec, ModuleDesign};

/// Indexed triangle mesh in mm, counter-clockwise seen from outside.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn triangle(&self, i: usize) -> [[f64; 3]; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize]]
    }

    /// Unit outward normal of triangle `i`.
    pub fn normal(&self, i: usize) -> [f64; 3] {
        let [a, b, c] = self.triangle(i);
        let n = cross(sub(b, a), sub(c, a));
        let len = dot(n, n).sqrt();
        if len > 0.0 {
            [n[0] / len, n[1] / len, n[2] / len]
        } else {
            [0.0; 3]
        }
    }

    pub fn normals(&self) -> Vec<[f64; 3]> {
        (0..self.triangles.len()).map(|i| self.normal(i)).collect()
    }

    pub fn area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        let n = cross(sub(b, a), sub(c, a));
        dot(n, n).sqrt() / 2.0
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Largest angular step for revolution and arc tessellation, degrees.
    pub angular_step_deg: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { angular_step_deg: DEFAULT_ANGULAR_STEP_DEG }
    }
}

impl MeshOptions {
    fn step(&self) -> Result<f64, CadError> {
        let s = self.angular_step_deg;
        if !(s.is_finite() && (0.05..=30.0).contains(&s)) {
            return Err(CadError::InvalidStep(s));
        }
        Ok(s.to_radians())
    }
}

/// Uniform angles no further apart than `step`, merged with `marks`.
fn angular_grid(step: f64, marks: &[f64]) -> Vec<f64> {
    let snap = (step / 10.0).min(1e-4);
    let mut marks: Vec<f64> = marks.iter().map(|a| a.rem_euclid(TAU)).map(|a| if TAU - a < snap { 0.0 } else { a }).collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|a, b| (*a - *b).abs() < snap);
    let n = (TAU / step - 1e-9).ceil() as usize;
    let mut all: Vec<f64> = (0..n)
        .map(|k| TAU * k as f64 / n as f64)
        .filter(|u| marks.iter().all(|m| {
            let d = (u - m).abs();
            d.min(TAU - d) >= snap
        }))
        .collect();
    all.extend(marks);
    all.sort_by(f64::total_cmp);
    all
}

/// Whether the fan centred at `centre` covers angle `a`.
fn in_fan(a: f64, centre: f64, width: f64) -> bool {
    if width >= TAU {
        return true;
    }
    let d = (a - centre + PI).rem_euclid(TAU) - PI;
    d.abs() < width / 2.0
}

#[derive(Clone, Copy, PartialEq)]
enum Ends {
    Open,
    Capped,
}

struct Stacked {
    profile: ModuleProfile,
    /// Point ids of the inner curve, bottom to top.
    inner: Vec<u32>,
    centre: f64,
    width: f64,
}

struct Builder {
    points: Vec<[f64; 2]>,
    angles: Vec<f64>,
    ids: Vec<u32>,
    mesh: TriangleMesh,
}

impl Builder {
    fn point(&mut self, p: [f64; 2]) -> u32 {
        self.points.push(p);
        (self.points.len() - 1) as u32
    }

    fn vertex(&mut self, pid: u32, j: usize) -> u32 {
        let m = self.angles.len();
        let p = self.points[pid as usize];
        let j = if p[0] == 0.0 { 0 } else { j % m };
        let key = pid as usize * m + j;
        if self.ids.len() <= key {
            self.ids.resize(self.points.len() * m, u32::MAX);
        }
        if self.ids[key] == u32::MAX {
            let a = self.angles[j];
            self.mesh.vertices.push([p[0] * a.cos(), p[0] * a.sin(), p[1]]);
            self.ids[key] = (self.mesh.vertices.len() - 1) as u32;
        }
        self.ids[key]
    }

    fn tri(&mut self, t: [u32; 3]) {
        self.mesh.triangles.push(t);
    }

    /// Sweeps a counter-clockwise closed loop between angles `j` and `j + 1`.
    fn sweep(&mut self, lp: &[u32], j: usize) {
        for k in 0..lp.len() {
            let (p, q) = (lp[k], lp[(k + 1) % lp.len()]);
            let (pa, qa) = (self.points[p as usize][0] == 0.0, self.points[q as usize][0] == 0.0);
            if pa && qa {
                continue;
            }
            let (p0, p1, q0, q1) = (self.vertex(p, j), self.vertex(p, j + 1), self.vertex(q, j), self.vertex(q, j + 1));
            if !qa {
                self.tri([p0, q1, q0]);
            }
            if !pa {
                self.tri([p0, p1, q1]);
            }
        }
    }
}

fn build(modules: &[(ModuleDesign, f64, f64)], ends: Ends, opts: &MeshOptions) -> Result<TriangleMesh, CadError> {
    let step = opts.step()?;
    let mut marks = Vec::new();
    for &(_, c, w) in modules {
        if w < TAU {
            marks.push(c - w / 2.0);
            marks.push(c + w / 2.0);
        }
    }
    let mut b = Builder { points: Vec::new(), angles: angular_grid(step, &marks), ids: Vec::new(), mesh: TriangleMesh::default() };

    let mut outer: Vec<u32> = Vec::new();
    let mut stack: Vec<Stacked> = Vec::new();
    let mut z0 = 0.0;
    for &(d, centre, width) in modules {
        let profile = profile_with_step(&d, step)?;
        for (k, p) in profile.outer.iter().enumerate() {
            if k == 0 && !outer.is_empty() {
                continue;
            }
            let id = b.point([p[0], p[1] + z0]);
            outer.push(id);
        }
        let mut inner = Vec::with_capacity(profile.inner.len());
        for (k, p) in profile.inner.iter().enumerate() {
            if k == 0 {
                if let Some(prev) = stack.last() {
                    inner.push(*prev.inner.last().unwrap());
                    continue;
                }
            }
            inner.push(b.point([p[0], p[1] + z0]));
        }
        z0 += d.l;
        stack.push(Stacked { profile, inner, centre, width });
    }

    let r_in = modules[0].0.r_in;
    let t = modules[0].0.t;
    let top = b.point([0.0, z0]);
    let top_in = b.point([0.0, z0 - t]);
    let port_in = b.point([r_in / 2.0, t]);
    let port_out = b.point([r_in / 2.0, 0.0]);

    let m = b.angles.len();
    let last = stack.len() - 1;
    let fills = |s: &Stacked, j: usize, angles: &[f64]| {
        let j = j % m;
        let (a0, a1) = (angles[j], if j + 1 < m { angles[j + 1] } else { angles[0] + TAU });
        in_fan((a0 + a1) / 2.0, s.centre, s.width)
    };
    for j in 0..m {
        let mut lp = outer.clone();
        if ends == Ends::Capped {
            lp.push(top);
            lp.push(top_in);
        }
        for (k, s) in stack.iter().enumerate().rev() {
            let filled = fills(s, j, &b.angles);
            let (f0, f1) = s.profile.fan;
            let hi = if ends == Ends::Capped && k == last { s.profile.cap.1 } else { s.inner.len() - 1 };
            let lo = if ends == Ends::Capped && k == 0 { s.profile.cap.0 } else { 0 };
            // walk top to bottom, skipping the shared bottom point except on the first module
            let mut idx = hi;
            loop {
                if idx == lo && k != 0 {
                    break;
                }
                lp.push(s.inner[idx]);
                if idx == lo {
                    break;
                }
                idx = if filled && idx == f1 { f0 } else { idx - 1 };
            }
        }
        if ends == Ends::Capped {
            lp.push(port_in);
            lp.push(port_out);
        }
        b.sweep(&lp, j);
    }

    // fan side faces at angles where the fill state flips
    for s in &stack {
        if s.width >= TAU {
            continue;
        }
        let (f0, f1) = s.profile.fan;
        let poly: Vec<[f64; 2]> = s.inner[f0..=f1].iter().map(|&p| b.points[p as usize]).collect();
        let tris = ear_clip(&poly).ok_or(CadError::Triangulation { rho: poly[0][0], z: poly[0][1] })?;
        for j in 0..m {
            let before = fills(s, j + m - 1, &b.angles);
            let after = fills(s, j, &b.angles);
            if before == after {
                continue;
            }
            for tr in &tris {
                let v: Vec<u32> = tr.iter().map(|&i| b.vertex(s.inner[f0 + i], j)).collect();
                // counter-clockwise in (ρ, z) faces −φ̂, outward when the fill lies ahead
                if after {
                    b.tri([v[0], v[1], v[2]]);
                } else {
                    b.tri([v[0], v[2], v[1]]);
                }
            }
        }
    }
    Ok(b.mesh)
}

/// One open-ended module revolved about `z`, with its fan centred on `+x`.
pub fn mesh_module(d: &ModuleDesign, opts: &MeshOptions) -> Result<TriangleMesh, CadError> {
    build(&[(*d, 0.0, FAN_ANGLE)], Ends::Open, opts)
}

/// The straight, unpressurised actuator: modules stacked along `z`, each
/// fan turned to the module's cumulative twist, rigid modules filled all
/// round, top cap closed and an inlet port of radius `r_in/2` in the base.
pub fn mesh_actuator(a: &ActuatorSpec, opts: &MeshOptions) -> Result<TriangleMesh, CadError> {
    let twists = a.cumulative_twists();
    let modules: Vec<(ModuleDesign, f64, f64)> = a
        .modules()
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, twists[i], if a.is_rigid(i) { TAU } else { FAN_ANGLE }))
        .collect();
    build(&modules, Ends::Capped, opts)
}
