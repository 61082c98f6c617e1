use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mesh::{cross, dot, sub, TriangleMesh};
use super::MIN_TRIANGLE_AREA;

/// Topological and geometric health of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshAudit {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    /// `V − E + F`.
    pub euler: i64,
    /// Edges used by one triangle only.
    pub boundary_edges: usize,
    /// Edges used by more than two triangles.
    pub non_manifold_edges: usize,
    /// Directed edges traversed twice in the same direction.
    pub inconsistent_edges: usize,
    pub degenerate_triangles: usize,
    /// Distinct vertices closer than 1e-7 mm.
    pub duplicate_vertices: usize,
    pub volume: f64,
}

impl MeshAudit {
    /// Closed, edge-manifold, consistently wound, with positive volume.
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges == 0
            && self.non_manifold_edges == 0
            && self.inconsistent_edges == 0
            && self.degenerate_triangles == 0
            && self.duplicate_vertices == 0
            && self.triangles > 0
            && self.volume > 0.0
    }

    /// Genus of a closed orientable surface, `(2 − χ)/2`.
    pub fn genus(&self) -> i64 {
        (2 - self.euler) / 2
    }
}

pub fn signed_volume(mesh: &TriangleMesh) -> f64 {
    (0..mesh.triangles.len())
        .map(|i| {
            let [a, b, c] = mesh.triangle(i);
            dot(a, cross(b, c))
        })
        .sum::<f64>()
        / 6.0
}

pub fn audit(mesh: &TriangleMesh) -> MeshAudit {
    let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut undirected: HashMap<(u32, u32), usize> = HashMap::new();
    for (&(a, b), &n) in &directed {
        *undirected.entry((a.min(b), a.max(b))).or_default() += n;
    }
    let inconsistent_edges = directed.values().filter(|&&n| n > 1).count();
    let boundary_edges = undirected.values().filter(|&&n| n == 1).count();
    let non_manifold_edges = undirected.values().filter(|&&n| n > 2).count();
    let degenerate_triangles = (0..mesh.triangles.len()).filter(|&i| !(mesh.area(i) > MIN_TRIANGLE_AREA)).count();

    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &v in t {
            used[v as usize] = true;
        }
    }
    let vertices = used.iter().filter(|&&u| u).count();
    let mut cells: HashMap<[i64; 3], usize> = HashMap::new();
    let mut duplicate_vertices = 0;
    for (i, v) in mesh.vertices.iter().enumerate().filter(|(i, _)| used[*i]) {
        let key = v.map(|c| (c * 1e7).round() as i64);
        // compare against the neighbouring lattice cells too
        let mut hit = false;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(&j) = cells.get(&[key[0] + dx, key[1] + dy, key[2] + dz]) {
                        let d = sub(*v, mesh.vertices[j]);
                        hit |= dot(d, d).sqrt() < 1e-7;
                    }
                }
            }
        }
        if hit {
            duplicate_vertices += 1;
        }
        cells.entry(key).or_insert(i);
    }

    MeshAudit {
        vertices,
        edges: undirected.len(),
        triangles: mesh.triangles.len(),
        euler: vertices as i64 - undirected.len() as i64 + mesh.triangles.len() as i64,
        boundary_edges,
        non_manifold_edges,
        inconsistent_edges,
        degenerate_triangles,
        duplicate_vertices,
        volume: signed_volume(mesh),
    }
}

/// Axis-aligned `(min, max)` corners.
pub fn bounding_box(mesh: &TriangleMesh) -> ([f64; 3], [f64; 3]) {
    mesh.vertices.iter().fold(([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]), |(lo, hi), v| {
        ([lo[0].min(v[0]), lo[1].min(v[1]), lo[2].min(v[2])], [hi[0].max(v[0]), hi[1].max(v[1]), hi[2].max(v[2])])
    })
}

/// Point-in-solid test by ray-crossing parity.
pub fn contains(mesh: &TriangleMesh, p: [f64; 3]) -> bool {
    // an irrational-ish direction keeps the ray off edges of the grid
    let dir = [0.538_342_1, 0.317_124_9, 0.780_776_3];
    let mut crossings = 0;
    for i in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(i);
        let (e1, e2) = (sub(b, a), sub(c, a));
        let h = cross(dir, e2);
        let det = dot(e1, h);
        if det.abs() < 1e-14 {
            continue;
        }
        let s = sub(p, a);
        let u = dot(s, h) / det;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let q = cross(s, e1);
        let v = dot(dir, q) / det;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        if dot(e2, q) / det > 0.0 {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}
