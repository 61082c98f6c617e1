//! Gaussian-process regression with a Matérn-5/2 ARD kernel and the
//! expected-improvement acquisition, on inputs scaled to the unit box.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Observation noise variance (standardised units).
pub const NOISE: f64 = 1e-6;
/// Diagonal jitter keeping the covariance positive definite.
pub const JITTER: f64 = 1e-8;
/// Candidate length scales per input dimension.
pub const LENGTH_SCALES: [f64; 5] = [0.1, 0.25, 0.5, 1.0, 2.0];
/// Candidate signal variances (standardised units).
pub const SIGNAL_VARIANCES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error("no observations")]
    Empty,
    #[error("inconsistent input dimensions")]
    Dimension,
    #[error("non-finite observation")]
    NonFinite,
    #[error("covariance matrix not positive definite")]
    NotPositiveDefinite,
}

pub fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_distance(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct GaussianProcess {
    xs: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub log_marginal_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GaussianProcess {
    /// Fits the GP, choosing length scales and signal variance from the
    /// candidate grids by marginal likelihood (ties keep the first).
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self, GpError> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(GpError::Empty);
        }
        let dim = xs[0].len();
        if xs.iter().any(|x| x.len() != dim) {
            return Err(GpError::Dimension);
        }
        if ys.iter().chain(xs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        let n = ys.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - y_mean) / y_scale));

        let mut best: Option<Self> = None;
        let combos = LENGTH_SCALES.len().pow(dim as u32);
        for c in 0..combos {
            let mut k = c;
            let ls: Vec<f64> = (0..dim)
                .map(|_| {
                    let l = LENGTH_SCALES[k % LENGTH_SCALES.len()];
                    k /= LENGTH_SCALES.len();
                    l
                })
                .collect();
            let corr = DMatrix::from_fn(n, n, |i, j| matern52(scaled_distance(&xs[i], &xs[j], &ls)));
            for &s2 in &SIGNAL_VARIANCES {
                let mut kmat = &corr * s2;
                for i in 0..n {
                    kmat[(i, i)] += NOISE + JITTER;
                }
                let Some(chol) = kmat.cholesky() else { continue };
                let alpha = chol.solve(&y);
                let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum::<f64>() * 2.0;
                let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                if best.as_ref().is_none_or(|b| lml > b.log_marginal_likelihood) {
                    best = Some(Self {
                        xs: xs.to_vec(),
                        y_mean,
                        y_scale,
                        length_scales: ls.clone(),
                        signal_variance: s2,
                        log_marginal_likelihood: lml,
                        chol,
                        alpha,
                    });
                }
            }
        }
        best.ok_or(GpError::NotPositiveDefinite)
    }

    /// Posterior mean and variance at `x` (original y units).
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kx = DVector::from_iterator(
            self.xs.len(),
            self.xs.iter().map(|xi| self.signal_variance * matern52(scaled_distance(x, xi, &self.length_scales))),
        );
        let mean = kx.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&kx).unwrap_or_else(|| DVector::zeros(kx.len()));
        let var = (self.signal_variance - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` for a Gaussian posterior.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    if sd < 1e-12 {
        return (best - mean).max(0.0);
    }
    let z = (best - mean) / sd;
    (best - mean) * normal_cdf(z) + sd * normal_pdf(z)
}
