//! 5–20–20–1 feed-forward regressor for the bending angle, trained by
//! Levenberg–Marquardt on an L2-regularised sum of squares.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorSpec, Material, ModuleDesign};
use crate::oracle::{oracle_theta, OracleSample};

pub const MODEL_FORMAT: &str = "bellow-surrogate";
pub const MODEL_VERSION: u32 = 1;
pub const LAYERS: [usize; 4] = [5, 20, 20, 1];
pub const INPUT_NAMES: [&str; 5] = ["r_in", "t", "R", "l", "P"];
/// Minimum number of rows accepted by [`train`].
pub const MIN_ROWS: usize = 500;
/// Fraction of the input span beyond the training box that is still trusted.
pub const EXTRAPOLATION_MARGIN: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("dataset has {got} rows, need at least {min}")]
    TooFewRows { got: usize, min: usize },
    #[error("dataset row {0} is not finite")]
    NonFiniteRow(usize),
    #[error("every row is identical; nothing to learn")]
    Degenerate,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("not a surrogate model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that maps a module design and pressure to a bending angle.
pub trait DeflectionModel: Send + Sync {
    fn theta(&self, d: &ModuleDesign, pressure: f64) -> f64;

    /// Range of inner radii the model was built for, if known.
    fn r_in_range(&self) -> Option<(f64, f64)> {
        None
    }

    /// True when the query lies outside the model's trusted inputs.
    fn extrapolated(&self, _d: &ModuleDesign, _pressure: f64) -> bool {
        false
    }
}

/// The analytic oracle itself, usable wherever a trained model is.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleModel(pub Material);

impl DeflectionModel for OracleModel {
    fn theta(&self, d: &ModuleDesign, pressure: f64) -> f64 {
        oracle_theta(d, pressure, &self.0).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub split_ratio: f64,
    /// Maximum number of accepted-or-rejected LM iterations.
    pub epochs: usize,
    pub seed: u64,
    /// Weight-decay coefficient on the summed squared error.
    pub lambda: f64,
    /// Stop once the training MSE falls below this value (0 disables).
    pub mse_goal: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { split_ratio: 0.8, epochs: 1000, seed: 42, lambda: 1e-4, mse_goal: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mse: f64,
    pub test_mse: f64,
    pub epochs: usize,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    /// Regularised objective after each epoch.
    pub loss_history: Vec<f64>,
    pub stop_reason: String,
}

/// Trained network with its input normalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub format: String,
    pub version: u32,
    pub activation: Activation,
    pub layers: Vec<usize>,
    pub inputs: Vec<String>,
    pub input_min: [f64; 5],
    pub input_max: [f64; 5],
    /// Row-major `out × in` matrices, one per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<TrainReport>,
}

/// Prediction with a flag set when an input lies beyond the trusted box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub theta: f64,
    pub extrapolated: bool,
}

const N_PARAMS: usize = LAYERS[1] * LAYERS[0] + LAYERS[1] + LAYERS[2] * LAYERS[1] + LAYERS[2] + LAYERS[3] * LAYERS[2] + LAYERS[3];

/// Hidden activations of one forward pass.
struct Trace {
    x: [f64; 5],
    a1: [f64; 20],
    a2: [f64; 20],
    y: f64,
}

impl SurrogateModel {
    fn blank(input_min: [f64; 5], input_max: [f64; 5]) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            activation: Activation::Tanh,
            layers: LAYERS.to_vec(),
            inputs: INPUT_NAMES.iter().map(|s| s.to_string()).collect(),
            input_min,
            input_max,
            weights: (0..3).map(|k| vec![0.0; LAYERS[k + 1] * LAYERS[k]]).collect(),
            biases: (0..3).map(|k| vec![0.0; LAYERS[k + 1]]).collect(),
            report: None,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn initialise(input_min: [f64; 5], input_max: [f64; 5], rng: &mut impl Rng) -> Self {
        let mut m = Self::blank(input_min, input_max);
        for k in 0..3 {
            let limit = (6.0 / (LAYERS[k] + LAYERS[k + 1]) as f64).sqrt();
            for w in m.weights[k].iter_mut() {
                *w = rng.gen_range(-limit..limit);
            }
        }
        m
    }

    pub fn param_count() -> usize {
        N_PARAMS
    }

    /// Flat parameters: W1, b1, W2, b2, W3, b3.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(N_PARAMS);
        for k in 0..3 {
            p.extend_from_slice(&self.weights[k]);
            p.extend_from_slice(&self.biases[k]);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), N_PARAMS, "parameter count");
        let mut o = 0;
        for k in 0..3 {
            let nw = self.weights[k].len();
            self.weights[k].copy_from_slice(&p[o..o + nw]);
            o += nw;
            let nb = self.biases[k].len();
            self.biases[k].copy_from_slice(&p[o..o + nb]);
            o += nb;
        }
    }

    /// True for coordinates that are weights (regularised), false for biases.
    pub fn weight_mask() -> Vec<bool> {
        let mut m = Vec::with_capacity(N_PARAMS);
        for k in 0..3 {
            m.extend(std::iter::repeat_n(true, LAYERS[k + 1] * LAYERS[k]));
            m.extend(std::iter::repeat_n(false, LAYERS[k + 1]));
        }
        m
    }

    fn normalise(&self, raw: &[f64; 5]) -> [f64; 5] {
        let mut x = [0.0; 5];
        for i in 0..5 {
            let span = self.input_max[i] - self.input_min[i];
            x[i] = 2.0 * (raw[i] - self.input_min[i]) / span - 1.0;
        }
        x
    }

    fn forward(&self, raw: &[f64; 5]) -> Trace {
        let x = self.normalise(raw);
        let (w1, w2, w3) = (&self.weights[0], &self.weights[1], &self.weights[2]);
        let mut a1 = [0.0; 20];
        for i in 0..20 {
            let z = (0..5).fold(self.biases[0][i], |s, j| s + w1[i * 5 + j] * x[j]);
            a1[i] = z.tanh();
        }
        let mut a2 = [0.0; 20];
        for i in 0..20 {
            let z = (0..20).fold(self.biases[1][i], |s, j| s + w2[i * 20 + j] * a1[j]);
            a2[i] = z.tanh();
        }
        let y = (0..20).fold(self.biases[2][0], |s, j| s + w3[j] * a2[j]);
        Trace { x, a1, a2, y }
    }

    /// Raw network output for `[r_in, t, R, l, P]`, without clamping.
    pub fn output(&self, inputs: &[f64; 5]) -> f64 {
        self.forward(inputs).y
    }

    /// Bending angle clamped to `[0, π]`.
    pub fn predict_theta(&self, inputs: &[f64; 5]) -> f64 {
        let y = self.output(inputs);
        if y.is_nan() {
            return y;
        }
        y.clamp(0.0, std::f64::consts::PI)
    }

    pub fn predict(&self, inputs: &[f64; 5]) -> Prediction {
        Prediction { theta: self.predict_theta(inputs), extrapolated: self.is_extrapolated(inputs) }
    }

    /// True when an input lies more than 10% of its span outside the
    /// training box.
    pub fn is_extrapolated(&self, inputs: &[f64; 5]) -> bool {
        (0..5).any(|i| {
            let margin = EXTRAPOLATION_MARGIN * (self.input_max[i] - self.input_min[i]);
            inputs[i] < self.input_min[i] - margin || inputs[i] > self.input_max[i] + margin
        })
    }

    /// Gradient of the output with respect to the flat parameters.
    fn output_jacobian(&self, t: &Trace, row: &mut [f64]) {
        let (w2, w3) = (&self.weights[1], &self.weights[2]);
        let mut d2 = [0.0; 20];
        for i in 0..20 {
            d2[i] = w3[i] * (1.0 - t.a2[i] * t.a2[i]);
        }
        let mut d1 = [0.0; 20];
        for j in 0..20 {
            let s = (0..20).fold(0.0, |acc, i| acc + w2[i * 20 + j] * d2[i]);
            d1[j] = s * (1.0 - t.a1[j] * t.a1[j]);
        }
        let mut o = 0;
        for i in 0..20 {
            for j in 0..5 {
                row[o] = d1[i] * t.x[j];
                o += 1;
            }
        }
        row[o..o + 20].copy_from_slice(&d1);
        o += 20;
        for i in 0..20 {
            for j in 0..20 {
                row[o] = d2[i] * t.a1[j];
                o += 1;
            }
        }
        row[o..o + 20].copy_from_slice(&d2);
        o += 20;
        row[o..o + 20].copy_from_slice(&t.a2);
        o += 20;
        row[o] = 1.0;
    }

    /// Mean squared error of the raw output on `rows`.
    pub fn mse(&self, rows: &[OracleSample]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| (self.output(&r.inputs()) - r.theta).powi(2)).sum::<f64>() / rows.len() as f64
    }

    /// Training objective `Σ (y − θ)² + λ‖w‖²` (biases unregularised).
    pub fn objective(&self, rows: &[OracleSample], lambda: f64) -> f64 {
        let sse: f64 = rows.iter().map(|r| (self.output(&r.inputs()) - r.theta).powi(2)).sum();
        sse + lambda * self.weight_norm_sq()
    }

    fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum()
    }

    /// Analytic gradient of [`Self::objective`] by backpropagation.
    pub fn objective_gradient(&self, rows: &[OracleSample], lambda: f64) -> Vec<f64> {
        let mut g = vec![0.0; N_PARAMS];
        let mut row = vec![0.0; N_PARAMS];
        for r in rows {
            let t = self.forward(&r.inputs());
            self.output_jacobian(&t, &mut row);
            let e = 2.0 * (t.y - r.theta);
            for (gi, ji) in g.iter_mut().zip(&row) {
                *gi += e * ji;
            }
        }
        for ((gi, w), m) in g.iter_mut().zip(self.params()).zip(Self::weight_mask()) {
            if m {
                *gi += 2.0 * lambda * w;
            }
        }
        g
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::Malformed(m.to_owned()));
        if self.format != MODEL_FORMAT {
            return bad("format tag");
        }
        if self.layers != LAYERS {
            return bad("layer sizes must be 5-20-20-1");
        }
        for k in 0..3 {
            if self.weights.len() != 3
                || self.biases.len() != 3
                || self.weights[k].len() != LAYERS[k + 1] * LAYERS[k]
                || self.biases[k].len() != LAYERS[k + 1]
            {
                return bad("weight shapes");
            }
        }
        if !self.params().iter().all(|v| v.is_finite()) {
            return bad("non-finite weights");
        }
        for i in 0..5 {
            if !(self.input_max[i] > self.input_min[i]) || !self.input_min[i].is_finite() || !self.input_max[i].is_finite() {
                return bad("degenerate normalisation range");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    /// Parses a model, checking the format tag and version first.
    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(MODEL_FORMAT) => {}
            _ => return Err(SurrogateError::Malformed("missing format tag".into())),
        }
        match v.get("version").and_then(|f| f.as_u64()) {
            Some(n) if n == MODEL_VERSION as u64 => {}
            Some(n) => return Err(SurrogateError::Version { found: n, expected: MODEL_VERSION }),
            None => return Err(SurrogateError::Malformed("missing version".into())),
        }
        let m: Self = serde_json::from_value(v)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl DeflectionModel for SurrogateModel {
    fn theta(&self, d: &ModuleDesign, pressure: f64) -> f64 {
        self.predict_theta(&[d.r_in, d.t, d.r_avg, d.l, pressure])
    }

    fn r_in_range(&self) -> Option<(f64, f64)> {
        Some((self.input_min[0], self.input_max[0]))
    }

    fn extrapolated(&self, d: &ModuleDesign, pressure: f64) -> bool {
        self.is_extrapolated(&[d.r_in, d.t, d.r_avg, d.l, pressure])
    }
}

/// Per-module bending angles of an actuator; rigid modules stay straight.
pub fn actuator_thetas(spec: &ActuatorSpec, model: &dyn DeflectionModel) -> Vec<f64> {
    spec.modules()
        .iter()
        .enumerate()
        .map(|(i, m)| if spec.is_rigid(i) { 0.0 } else { model.theta(m, spec.pressure()) })
        .collect()
}

/// Deterministic train/test split of row indices.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * ratio).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

/// Per-column `[min, max]`; a constant column is widened by ±1 so the
/// normalisation stays defined.
fn input_box(rows: &[OracleSample]) -> ([f64; 5], [f64; 5]) {
    let mut lo = [f64::INFINITY; 5];
    let mut hi = [f64::NEG_INFINITY; 5];
    for r in rows {
        for (i, v) in r.inputs().into_iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    for i in 0..5 {
        if hi[i] - lo[i] <= 1e-12 * (1.0 + lo[i].abs()) {
            lo[i] -= 1.0;
            hi[i] += 1.0;
        }
    }
    (lo, hi)
}

/// Fits a surrogate to `rows`.
///
/// Each epoch solves `(JᵀJ + λD + μI)δ = −(Jᵀr + λDw)` and keeps the step
/// only if the objective drops (μ ÷ 3); otherwise μ × 4 and retry. The
/// objective is therefore monotone over epochs.
pub fn train(rows: &[OracleSample], cfg: &TrainConfig) -> Result<(SurrogateModel, TrainReport), SurrogateError> {
    train_with_progress(rows, cfg, &mut |_, _| {})
}

/// [`train`] reporting `(epoch, objective)` after every epoch.
pub fn train_with_progress(
    rows: &[OracleSample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<(SurrogateModel, TrainReport), SurrogateError> {
    if rows.len() < MIN_ROWS {
        return Err(SurrogateError::TooFewRows { got: rows.len(), min: MIN_ROWS });
    }
    if let Some(i) = rows.iter().position(|r| !r.inputs().iter().chain([r.theta].iter()).all(|v| v.is_finite())) {
        return Err(SurrogateError::NonFiniteRow(i));
    }
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(SurrogateError::Degenerate);
    }
    if !(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0) || !(cfg.lambda >= 0.0) || cfg.epochs == 0 {
        return Err(SurrogateError::InvalidConfig(format!(
            "split_ratio {} lambda {} epochs {}",
            cfg.split_ratio, cfg.lambda, cfg.epochs
        )));
    }
    let (train_idx, test_idx) = split_indices(rows.len(), cfg.split_ratio, cfg.seed);
    let train_rows: Vec<OracleSample> = train_idx.iter().map(|&i| rows[i]).collect();
    let test_rows: Vec<OracleSample> = test_idx.iter().map(|&i| rows[i]).collect();

    let (lo, hi) = input_box(rows);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut model = SurrogateModel::initialise(lo, hi, &mut rng);
    let mask: Vec<f64> = SurrogateModel::weight_mask().into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect();

    let n = train_rows.len();
    let mut w = DVector::from_vec(model.params());
    let mut loss = model.objective(&train_rows, cfg.lambda);
    if !loss.is_finite() {
        return Err(SurrogateError::NonFiniteLoss(0));
    }
    let mut mu = 1e-3;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut epochs = 0;
    let mut stop_reason = "epoch limit".to_owned();
    let mut jac = DMatrix::<f64>::zeros(n, N_PARAMS);
    let mut res = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; N_PARAMS];

    'outer: for epoch in 0..cfg.epochs {
        epochs = epoch + 1;
        for (k, r) in train_rows.iter().enumerate() {
            let t = model.forward(&r.inputs());
            model.output_jacobian(&t, &mut row);
            for (p, v) in row.iter().enumerate() {
                jac[(k, p)] = *v;
            }
            res[k] = t.y - r.theta;
        }
        let jtj = jac.transpose() * &jac;
        let mut grad = jac.tr_mul(&res);
        for p in 0..N_PARAMS {
            grad[p] += cfg.lambda * mask[p] * w[p];
        }
        let grad_norm = grad.norm();
        if grad_norm < 1e-14 {
            stop_reason = "gradient below 1e-14".into();
            history.push(loss);
            break;
        }
        loop {
            let mut h = jtj.clone();
            for p in 0..N_PARAMS {
                h[(p, p)] += cfg.lambda * mask[p] + mu;
            }
            let accepted = match h.cholesky() {
                Some(ch) => {
                    let step = ch.solve(&(-&grad));
                    let cand = &w + &step;
                    model.set_params(cand.as_slice());
                    let cand_loss = model.objective(&train_rows, cfg.lambda);
                    if cand_loss.is_finite() && cand_loss < loss {
                        w = cand;
                        loss = cand_loss;
                        true
                    } else {
                        model.set_params(w.as_slice());
                        false
                    }
                }
                None => false,
            };
            if accepted {
                mu = (mu / 3.0).max(1e-20);
                break;
            }
            mu *= 4.0;
            if mu > 1e10 {
                stop_reason = "damping limit reached".into();
                history.push(loss);
                break 'outer;
            }
        }
        history.push(loss);
        on_epoch(epochs, loss);
        if cfg.mse_goal > 0.0 && model.mse(&train_rows) < cfg.mse_goal {
            stop_reason = "mse goal reached".into();
            break;
        }
    }
    if !loss.is_finite() {
        return Err(SurrogateError::NonFiniteLoss(epochs));
    }
    let report = TrainReport {
        train_mse: model.mse(&train_rows),
        test_mse: model.mse(&test_rows),
        epochs,
        split_seed: cfg.seed,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        lambda: cfg.lambda,
        loss_history: history,
        stop_reason,
    };
    model.report = Some(report.clone());
    Ok((model, report))
}
