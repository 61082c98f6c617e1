/// Twice the signed area of a polygon, positive when counter-clockwise.
pub(crate) fn signed_area2(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        a[0] * b[1] - b[0] * a[1]
    }).sum()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn inside_or_on(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
}

/// Ear-clipping triangulation of a simple polygon.
///
/// Returns counter-clockwise index triples into `pts` regardless of the
/// input orientation, or `None` when no ear can be found.
pub fn ear_clip(pts: &[[f64; 2]]) -> Option<Vec<[usize; 3]>> {
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if signed_area2(pts) < 0.0 {
        idx.reverse();
    }
    let mut out = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            let (a, b, c) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let area = cross(pts[a], pts[b], pts[c]);
            if area <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&k| {
                k != a && k != b && k != c && pts[k] != pts[a] && pts[k] != pts[b] && pts[k] != pts[c] && inside_or_on(pts[k], pts[a], pts[b], pts[c])
            });
            if blocked {
                continue;
            }
            // prefer well-shaped ears: largest minimum angle proxy
            let (ab, bc, ca) = (dist2(pts[a], pts[b]), dist2(pts[b], pts[c]), dist2(pts[c], pts[a]));
            let quality = area / ab.max(bc).max(ca);
            if best.is_none_or(|(_, q)| quality > q) {
                best = Some((i, quality));
            }
        }
        let (i, _) = best?;
        let m = idx.len();
        out.push([idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]]);
        idx.remove(i);
    }
    out.push([idx[0], idx[1], idx[2]]);
    Some(out)
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangulates_a_u_shape() {
        let u = [[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [2.0, 3.0], [2.0, 1.0], [1.0, 1.0], [1.0, 3.0], [0.0, 3.0]];
        for pts in [u.to_vec(), u.iter().rev().copied().collect()] {
            let tris = ear_clip(&pts).unwrap();
            assert_eq!(tris.len(), pts.len() - 2);
            let total: f64 = tris.iter().map(|t| cross(pts[t[0]], pts[t[1]], pts[t[2]]) / 2.0).sum();
            assert!((total - 7.0).abs() < 1e-12);
            assert!(tris.iter().all(|t| cross(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0));
        }
    }
}
