//! Dense least squares via Householder QR, generic over the scalar type.

use crate::num::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "dimension mismatch");
        Self::from_fn(self.rows, o.cols, |r, c| {
            (0..self.cols).fold(T::zero(), |acc, k| acc + self.get(r, k) * o.get(k, c))
        })
    }
}

/// Failure of [`least_squares`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeastSquaresError {
    Underdetermined,
    RankDeficient { column: usize },
}

/// Solves `min ‖A·X − B‖` column-wise for full-column-rank `A`.
///
/// Numerically equivalent to the normal equations `X = (AᵀA)⁻¹AᵀB` but
/// never forms `AᵀA`. A column is deemed dependent when its reflected
/// diagonal falls below `rank_tol` times the largest column norm of `A`.
pub fn least_squares<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    rank_tol: T,
) -> Result<Matrix<T>, LeastSquaresError> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.rows, m, "rhs row count must match");
    if m < n {
        return Err(LeastSquaresError::Underdetermined);
    }
    let k = b.cols;
    let mut r = a.clone();
    let mut qb = b.clone();

    let scale = (0..n)
        .map(|c| (0..m).fold(T::zero(), |s, i| s + r.get(i, c) * r.get(i, c)).sqrt())
        .fold(T::zero(), T::max);
    let threshold = rank_tol * scale.max(T::min_positive_value());

    for j in 0..n {
        let norm = (j..m).fold(T::zero(), |s, i| s + r.get(i, j) * r.get(i, j)).sqrt();
        if norm <= threshold {
            return Err(LeastSquaresError::RankDeficient { column: j });
        }
        let alpha = if r.get(j, j) > T::zero() { -norm } else { norm };
        // v = x - alpha e1, stored in place below the diagonal
        let mut v: Vec<T> = (j..m).map(|i| r.get(i, j)).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for c in j..n {
                let dot = (j..m).fold(T::zero(), |s, i| s + v[i - j] * r.get(i, c));
                let f = two * dot / vnorm2;
                for i in j..m {
                    r.set(i, c, r.get(i, c) - f * v[i - j]);
                }
            }
            for c in 0..k {
                let dot = (j..m).fold(T::zero(), |s, i| s + v[i - j] * qb.get(i, c));
                let f = two * dot / vnorm2;
                for i in j..m {
                    qb.set(i, c, qb.get(i, c) - f * v[i - j]);
                }
            }
        }
    }

    let mut x = Matrix::zeros(n, k);
    for c in 0..k {
        for i in (0..n).rev() {
            let mut s = qb.get(i, c);
            for jj in i + 1..n {
                s = s - r.get(i, jj) * x.get(jj, c);
            }
            x.set(i, c, s / r.get(i, i));
        }
    }
    Ok(x)
}
