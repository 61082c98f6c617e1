//! Curve comparison.

use crate::num::Scalar;
use crate::vector::Vec3;

/// Discrete Fréchet distance between two polylines.
///
/// Returns `None` when either input is empty.
pub fn discrete_frechet<T: Scalar>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Option<T> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let m = b.len();
    let mut prev = vec![T::zero(); m];
    let mut cur = vec![T::zero(); m];
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = p.distance(q);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Some(prev[m - 1])
}
