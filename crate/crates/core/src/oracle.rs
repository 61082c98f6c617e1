//! Analytic deflection model standing in for finite-element runs, and the
//! training-grid generator built on it.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::actuator::{Material, ModuleDesign, ValidationReport, BOUNDARY_TOL};

/// Load-to-angle gain of the saturating response.
pub const ORACLE_GAIN: f64 = 0.05;

/// Column order of dataset files.
pub const DATASET_HEADER: [&str; 6] = ["r_in", "t", "R", "l", "P", "theta"];

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("invalid module design: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDesign(ValidationReport),
    #[error("invalid material: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMaterial(ValidationReport),
    #[error("pressure must be finite and non-negative, got {0} kPa")]
    InvalidPressure(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dataset format: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dimensionless load `Λ = P·(R − r_in)²·l / (μ·t³)`.
pub fn load_parameter(d: &ModuleDesign, pressure: f64, m: &Material) -> f64 {
    let arm = d.r_avg - d.r_in;
    pressure * arm * arm * d.l / (m.shear_modulus() * d.t.powi(3))
}

/// Saturation angle: the smaller of π/2 and `l / (2·r_in)`.
pub fn theta_cap(d: &ModuleDesign) -> f64 {
    FRAC_PI_2.min(d.l / (2.0 * d.r_in))
}

/// Bending angle (rad) of one module at `pressure` kPa:
/// `θ = θ_cap·tanh(c·Λ)`.
pub fn oracle_theta(d: &ModuleDesign, pressure: f64, m: &Material) -> Result<f64, OracleError> {
    let report = d.validate();
    if !report.is_ok() {
        return Err(OracleError::InvalidDesign(report));
    }
    let mr = m.validate();
    if !mr.is_ok() {
        return Err(OracleError::InvalidMaterial(mr));
    }
    if !(pressure >= 0.0) || !pressure.is_finite() {
        return Err(OracleError::InvalidPressure(pressure));
    }
    Ok(theta_cap(d) * (ORACLE_GAIN * load_parameter(d, pressure, m)).tanh())
}

/// One row of a deflection dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub r_in: f64,
    pub t: f64,
    #[serde(rename = "R")]
    pub r_avg: f64,
    pub l: f64,
    #[serde(rename = "P")]
    pub pressure: f64,
    pub theta: f64,
}

impl OracleSample {
    pub fn design(&self) -> ModuleDesign {
        ModuleDesign::new(self.r_in, self.t, self.r_avg, self.l)
    }

    pub fn inputs(&self) -> [f64; 5] {
        [self.r_in, self.t, self.r_avg, self.l, self.pressure]
    }
}

/// Evenly spaced values `min, min + step, …` up to `max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub interval: f64,
}

impl Range {
    pub fn new(min: f64, max: f64, interval: f64) -> Self {
        Self { min, max, interval }
    }

    fn check(&self, name: &str) -> Result<(), OracleError> {
        let ok = self.min.is_finite() && self.max >= self.min && self.interval > 0.0 && self.interval.is_finite();
        if ok {
            Ok(())
        } else {
            Err(OracleError::InvalidGrid(format!("{name}: {self:?}")))
        }
    }

    /// Values generated by integer index so no rounding drift accumulates.
    pub fn values(&self) -> Vec<f64> {
        if self.interval <= 0.0 {
            return vec![self.min];
        }
        let n = ((self.max - self.min) / self.interval + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.interval).collect()
    }
}

/// Sampling grid. `r_in` and `pressure` are absolute; the other axes are
/// coupled to the outer values:
/// `t ∈ [a·r_in, b·r_in]` in steps of `c·r_in`,
/// `R ∈ [r_in + t, 2·r_in]` in `r_avg_divisions` steps of `(r_in − t)/4`,
/// `l ∈ [4t, 4(R − r_in)]` in `l_divisions` steps of `R − r_in − t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetGrid {
    pub r_in: Range,
    /// Thickness as multiples of `r_in`.
    pub t_ratio: Range,
    pub r_avg_divisions: usize,
    pub l_divisions: usize,
    pub pressure: Range,
}

impl Default for DatasetGrid {
    fn default() -> Self {
        Self {
            r_in: Range::new(2.0, 10.0, 2.0),
            t_ratio: Range::new(0.25, 1.0 / 3.0, 1.0 / 24.0),
            r_avg_divisions: 4,
            l_divisions: 4,
            pressure: Range::new(0.0, 10.0, 0.5),
        }
    }
}

impl DatasetGrid {
    pub fn validate(&self) -> Result<(), OracleError> {
        self.r_in.check("r_in")?;
        self.t_ratio.check("t")?;
        self.pressure.check("P")?;
        if self.r_in.min <= 0.0 || self.t_ratio.min <= 0.0 || self.pressure.min < 0.0 {
            return Err(OracleError::InvalidGrid("lower bounds must be positive (P non-negative)".into()));
        }
        if self.r_avg_divisions == 0 || self.l_divisions == 0 {
            return Err(OracleError::InvalidGrid("divisions must be at least 1".into()));
        }
        Ok(())
    }

    /// Thickness values for a given inner radius.
    pub fn t_values(&self, r_in: f64) -> Vec<f64> {
        let n = ((self.t_ratio.max - self.t_ratio.min) / self.t_ratio.interval + 1e-9).floor() as usize;
        (0..=n).map(|i| (self.t_ratio.min + i as f64 * self.t_ratio.interval) * r_in).collect()
    }

    pub fn r_avg_values(&self, r_in: f64, t: f64) -> Vec<f64> {
        let span = r_in - t;
        if span < 0.0 {
            return Vec::new();
        }
        let step = span / self.r_avg_divisions as f64;
        (0..=self.r_avg_divisions).map(|i| r_in + t + i as f64 * step).collect()
    }

    pub fn l_values(&self, r_in: f64, t: f64, r_avg: f64) -> Vec<f64> {
        let step = r_avg - r_in - t;
        if step <= BOUNDARY_TOL {
            // zero interval: the axis collapses to l = 4t
            return vec![4.0 * t];
        }
        (0..=self.l_divisions).map(|i| 4.0 * t + i as f64 * step).collect()
    }

    /// All design/pressure combinations that satisfy the module
    /// constraints, in lexicographic `(r_in, t, R, l, P)` order.
    pub fn points(&self) -> Result<Vec<(ModuleDesign, f64)>, OracleError> {
        self.validate()?;
        let pressures = self.pressure.values();
        let mut out = Vec::new();
        for r_in in self.r_in.values() {
            for t in self.t_values(r_in) {
                for r_avg in self.r_avg_values(r_in, t) {
                    for l in self.l_values(r_in, t, r_avg) {
                        let d = ModuleDesign::new(r_in, t, r_avg, l);
                        if !d.validate().is_ok() {
                            continue;
                        }
                        out.extend(pressures.iter().map(|&p| (d, p)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Box spanned by the grid inputs, `[min, max]` per column.
    pub fn input_bounds(&self) -> Result<[(f64, f64); 5], OracleError> {
        let mut b = [(f64::INFINITY, f64::NEG_INFINITY); 5];
        for (d, p) in self.points()? {
            for (k, v) in [d.r_in, d.t, d.r_avg, d.l, p].into_iter().enumerate() {
                b[k].0 = b[k].0.min(v);
                b[k].1 = b[k].1.max(v);
            }
        }
        Ok(b)
    }
}

/// Evaluates the oracle on every grid point.
pub fn generate_dataset(grid: &DatasetGrid, m: &Material) -> Result<Vec<OracleSample>, OracleError> {
    grid.points()?
        .into_iter()
        .map(|(d, p)| {
            Ok(OracleSample { r_in: d.r_in, t: d.t, r_avg: d.r_avg, l: d.l, pressure: p, theta: oracle_theta(&d, p, m)? })
        })
        .collect()
}

/// Writes rows as CSV with LF line endings and round-trip precision.
pub fn write_dataset<W: Write>(w: W, rows: &[OracleSample]) -> Result<(), OracleError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(DATASET_HEADER)?;
    for r in rows {
        // `{}` on f64 prints the shortest string that parses back exactly
        wr.write_record(r.inputs().iter().chain([r.theta].iter()).map(|v| format!("{v}")))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn dataset_to_bytes(rows: &[OracleSample]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, rows).expect("writing to memory");
    buf
}

/// Reads a dataset CSV; the header must match [`DATASET_HEADER`].
pub fn read_dataset<R: Read>(r: R) -> Result<Vec<OracleSample>, OracleError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != DATASET_HEADER {
        return Err(OracleError::Format(format!("expected header {}, got {}", DATASET_HEADER.join(","), header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.deserialize::<OracleSample>().enumerate() {
        let s = rec?;
        if !s.inputs().iter().chain([s.theta].iter()).all(|v| v.is_finite()) {
            return Err(OracleError::Format(format!("row {}: non-finite value", i + 1)));
        }
        rows.push(s);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agilus() -> Material {
        Material::agilus30()
    }

    #[test]
    fn zero_pressure_gives_zero() {
        assert_eq!(oracle_theta(&ModuleDesign::standard(), 0.0, &agilus()).unwrap(), 0.0);
    }

    #[test]
    fn defaults_at_ten_kpa() {
        // independent evaluation: μ = 546 / 2.98, Λ = 10·9·10 / (μ·3.375)
        let mu: f64 = 546.0 / 2.98;
        let lambda = 900.0 / (mu * 3.375);
        let expected = (10.0f64 / 10.0).min(FRAC_PI_2) * (0.05 * lambda).tanh();
        let got = oracle_theta(&ModuleDesign::standard(), 10.0, &agilus()).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((lambda - 1.455_433_455_433_455_4).abs() < 1e-12);
        assert!((got - 0.072_643_484_924_120_93).abs() < 1e-12, "{got}");
    }

    #[test]
    fn thicker_wall_bends_less() {
        let thin = oracle_theta(&ModuleDesign::new(5.0, 1.5, 8.0, 10.0), 5.0, &agilus()).unwrap();
        let thick = oracle_theta(&ModuleDesign::new(5.0, 2.0, 8.0, 10.0), 5.0, &agilus()).unwrap();
        assert!(thin > thick);
    }

    #[test]
    fn stiffer_material_bends_less() {
        let d = ModuleDesign::standard();
        let soft = agilus();
        let stiff = Material { youngs_modulus: 2.0 * soft.youngs_modulus, ..soft };
        assert!((load_parameter(&d, 7.0, &stiff) * 2.0 - load_parameter(&d, 7.0, &soft)).abs() < 1e-12);
        assert!(oracle_theta(&d, 7.0, &stiff).unwrap() < oracle_theta(&d, 7.0, &soft).unwrap());
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(oracle_theta(&ModuleDesign::new(5.0, 2.5, 8.0, 10.0), 1.0, &agilus()).is_err());
        assert!(oracle_theta(&ModuleDesign::standard(), -1.0, &agilus()).is_err());
    }

    #[test]
    fn grid_axes() {
        let g = DatasetGrid::default();
        assert_eq!(g.r_in.values(), vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(g.t_values(6.0), vec![1.5, 1.75, 2.0]);
        let p = g.pressure.values();
        assert_eq!(p.len(), 21);
        assert_eq!(p[20], 10.0);
    }
}
