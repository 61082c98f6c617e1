//! Bellow module geometry, constraint checks and actuator assembly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Slack (mm) allowed when comparing against constraint boundaries.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Geometric parameters of one bellow module (all mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleDesign<T: Scalar = f64> {
    /// Inner radius.
    pub r_in: T,
    /// Wall thickness.
    pub t: T,
    /// Average radius, `(r_in + r_ou) / 2`.
    #[serde(rename = "R")]
    pub r_avg: T,
    /// Module length along the central axis.
    pub l: T,
}

/// Quantities that follow from the four free parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedGeometry<T: Scalar = f64> {
    pub r_ou: T,
    /// Upper (crown) fillet radius.
    pub r_1: T,
    /// Lower (root) fillet radius.
    pub r_2: T,
    /// Flank length.
    pub f: T,
}

/// A violated inequality, with a stable machine-readable code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    /// The inequality as written, e.g. `l > 4t`.
    pub rule: String,
    pub detail: String,
}

impl Violation {
    pub fn new(code: &str, rule: &str, detail: impl Into<String>) -> Self {
        Self { code: code.to_owned(), rule: rule.to_owned(), detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.rule, self.detail)
    }
}

/// Outcome of [`validate_module`]; empty means the design is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

pub const RULE_POSITIVE: &str = "r_in, t, R, l > 0";
pub const RULE_LENGTH: &str = "l > 4t";
pub const RULE_FLANK: &str = "R - r_in >= l/4";

/// Checks the module against positivity and the two design inequalities.
pub fn validate_module<T: Scalar>(d: &ModuleDesign<T>) -> ValidationReport {
    let tol = T::lit(BOUNDARY_TOL);
    let four = T::lit(4.0);
    let mut violations = Vec::new();
    for (name, v) in [("r_in", d.r_in), ("t", d.t), ("R", d.r_avg), ("l", d.l)] {
        if !(v > T::zero()) || !v.is_finite() {
            violations.push(Violation::new(
                "non_positive",
                RULE_POSITIVE,
                format!("{name} = {v} is not a positive finite length"),
            ));
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }
    if d.l - four * d.t <= tol {
        violations.push(Violation::new(
            "length_vs_thickness",
            RULE_LENGTH,
            format!("{} ≯ {}", d.l, four * d.t),
        ));
    }
    if d.r_avg - d.r_in < d.l / four - tol {
        violations.push(Violation::new(
            "flank_negative",
            RULE_FLANK,
            format!("{} < {}", d.r_avg - d.r_in, d.l / four),
        ));
    }
    ValidationReport { violations }
}

impl<T: Scalar> ModuleDesign<T> {
    pub fn new(r_in: T, t: T, r_avg: T, l: T) -> Self {
        Self { r_in, t, r_avg, l }
    }

    /// Default module dimensions (r_in 5, t 1.5, R 8, l 10).
    pub fn standard() -> Self {
        Self::new(T::lit(5.0), T::lit(1.5), T::lit(8.0), T::lit(10.0))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_module(self)
    }

    /// Radii and flank length of the U-profile; rejects invalid designs.
    pub fn derived(&self) -> Result<DerivedGeometry<T>, ValidationReport> {
        derived_geometry(self)
    }

    pub fn r_ou(&self) -> T {
        T::lit(2.0) * self.r_avg - self.r_in
    }
}

pub fn derived_geometry<T: Scalar>(d: &ModuleDesign<T>) -> Result<DerivedGeometry<T>, ValidationReport> {
    let report = validate_module(d);
    if !report.is_ok() {
        return Err(report);
    }
    let r_ou = d.r_ou();
    let r = d.l / T::lit(4.0);
    // clamp the boundary case so f never reports a -1e-15 artefact
    let f = (r_ou - d.r_in - r - r).max(T::zero());
    Ok(DerivedGeometry { r_ou, r_1: r, r_2: r, f })
}

/// Elastic properties of the print material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material<T: Scalar = f64> {
    /// Young's modulus in kPa.
    pub youngs_modulus: T,
    pub poissons_ratio: T,
    /// g/cm³.
    pub density: T,
}

impl<T: Scalar> Material<T> {
    /// Agilus30 photopolymer: E = 546 kPa, ν = 0.49, ρ = 1.16 g/cm³.
    pub fn agilus30() -> Self {
        Self { youngs_modulus: T::lit(546.0), poissons_ratio: T::lit(0.49), density: T::lit(1.16) }
    }

    /// Neo-Hookean shear modulus μ = E / (2(1 + ν)), kPa.
    pub fn shear_modulus(&self) -> T {
        self.youngs_modulus / (T::lit(2.0) * (T::one() + self.poissons_ratio))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if !(self.youngs_modulus > T::zero()) || !self.youngs_modulus.is_finite() {
            violations.push(Violation::new("material_modulus", "E > 0", format!("E = {}", self.youngs_modulus)));
        }
        if !(self.poissons_ratio > T::zero() && self.poissons_ratio <= T::lit(0.5)) {
            violations.push(Violation::new(
                "material_poisson",
                "0 < nu <= 0.5",
                format!("nu = {}", self.poissons_ratio),
            ));
        }
        if !(self.density > T::zero()) || !self.density.is_finite() {
            violations.push(Violation::new("material_density", "rho > 0", format!("rho = {}", self.density)));
        }
        ValidationReport { violations }
    }
}

impl<T: Scalar> Default for Material<T> {
    fn default() -> Self {
        Self::agilus30()
    }
}

/// Why an actuator could not be assembled.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ActuatorError {
    #[error("actuator needs at least one module")]
    Empty,
    #[error("{modules} modules need {} rotations, got {rotations}", modules.saturating_sub(1))]
    LengthMismatch { modules: usize, rotations: usize },
    #[error("module {index} does not share {field} with module 0")]
    SharedParameter { index: usize, field: &'static str },
    #[error("module {index} is invalid: {}", join(&report.violations))]
    InvalidModule { index: usize, report: ValidationReport },
    #[error("invalid material: {}", join(&.0.violations))]
    InvalidMaterial(ValidationReport),
    #[error("pressure must be finite and >= 0 kPa, got {0}")]
    InvalidPressure(f64),
    #[error("rotation {index} is not finite")]
    InvalidRotation { index: usize },
    #[error("rigid module index {0} out of range")]
    RigidIndex(usize),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ActuatorError {
    /// Flattened, machine-readable view of the failure.
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            Self::InvalidModule { index, report } => report
                .violations
                .iter()
                .map(|v| Violation { detail: format!("module {index}: {}", v.detail), ..v.clone() })
                .collect(),
            Self::InvalidMaterial(r) => r.violations.clone(),
            Self::Empty => vec![Violation::new("empty_actuator", "modules >= 1", self.to_string())],
            Self::LengthMismatch { .. } => {
                vec![Violation::new("rotation_count", "rotations = modules - 1", self.to_string())]
            }
            Self::SharedParameter { .. } => {
                vec![Violation::new("shared_parameter", "shared r_in and t", self.to_string())]
            }
            Self::InvalidPressure(_) => vec![Violation::new("pressure", "P >= 0", self.to_string())],
            Self::InvalidRotation { .. } => vec![Violation::new("rotation", "finite rotation", self.to_string())],
            Self::RigidIndex(_) => vec![Violation::new("rigid_index", "rigid index < modules", self.to_string())],
        }
    }
}

/// Unvalidated wire form of [`ActuatorSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpecData<T: Scalar = f64> {
    pub modules: Vec<ModuleDesign<T>>,
    /// `rotations_rad[i]` is the clockwise twist between module i and i+1.
    pub rotations_rad: Vec<T>,
    pub pressure_kpa: T,
    #[serde(default)]
    pub material: Material<T>,
    /// Indices of fully constrained (non-bending) modules.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rigid: Vec<usize>,
}

/// A validated stack of modules sharing `r_in`, `t`, pressure and material.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActuatorSpecData<T>", into = "ActuatorSpecData<T>")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ActuatorSpec<T: Scalar = f64> {
    modules: Vec<ModuleDesign<T>>,
    rotations: Vec<T>,
    pressure: T,
    material: Material<T>,
    rigid: Vec<usize>,
}

impl<T: Scalar> TryFrom<ActuatorSpecData<T>> for ActuatorSpec<T> {
    type Error = ActuatorError;

    fn try_from(d: ActuatorSpecData<T>) -> Result<Self, Self::Error> {
        let mut spec = build_actuator(d.modules, d.rotations_rad, d.pressure_kpa, d.material)?;
        spec.set_rigid(d.rigid)?;
        Ok(spec)
    }
}

impl<T: Scalar> From<ActuatorSpec<T>> for ActuatorSpecData<T> {
    fn from(s: ActuatorSpec<T>) -> Self {
        Self {
            modules: s.modules,
            rotations_rad: s.rotations,
            pressure_kpa: s.pressure,
            material: s.material,
            rigid: s.rigid,
        }
    }
}

/// Validates and assembles a module stack.
pub fn build_actuator<T: Scalar>(
    modules: Vec<ModuleDesign<T>>,
    rotations: Vec<T>,
    pressure: T,
    material: Material<T>,
) -> Result<ActuatorSpec<T>, ActuatorError> {
    if modules.is_empty() {
        return Err(ActuatorError::Empty);
    }
    if rotations.len() + 1 != modules.len() {
        return Err(ActuatorError::LengthMismatch { modules: modules.len(), rotations: rotations.len() });
    }
    for (index, m) in modules.iter().enumerate() {
        let report = validate_module(m);
        if !report.is_ok() {
            return Err(ActuatorError::InvalidModule { index, report });
        }
    }
    let tol = T::lit(BOUNDARY_TOL);
    let first = modules[0];
    for (index, m) in modules.iter().enumerate().skip(1) {
        if (m.r_in - first.r_in).abs() > tol {
            return Err(ActuatorError::SharedParameter { index, field: "r_in" });
        }
        if (m.t - first.t).abs() > tol {
            return Err(ActuatorError::SharedParameter { index, field: "t" });
        }
    }
    if let Some(index) = rotations.iter().position(|r| !r.is_finite()) {
        return Err(ActuatorError::InvalidRotation { index });
    }
    if !(pressure >= T::zero()) || !pressure.is_finite() {
        return Err(ActuatorError::InvalidPressure(pressure.as_f64()));
    }
    let report = material.validate();
    if !report.is_ok() {
        return Err(ActuatorError::InvalidMaterial(report));
    }
    Ok(ActuatorSpec { modules, rotations, pressure, material, rigid: Vec::new() })
}

impl<T: Scalar> ActuatorSpec<T> {
    /// `count` identical modules with a constant twist between neighbours.
    pub fn uniform(
        module: ModuleDesign<T>,
        count: usize,
        twist: T,
        pressure: T,
        material: Material<T>,
    ) -> Result<Self, ActuatorError> {
        build_actuator(vec![module; count], vec![twist; count.saturating_sub(1)], pressure, material)
    }

    pub fn modules(&self) -> &[ModuleDesign<T>] {
        &self.modules
    }

    pub fn rotations(&self) -> &[T] {
        &self.rotations
    }

    /// Twist applied at the base of module `i` (zero for the first module).
    pub fn twist_before(&self, i: usize) -> T {
        if i == 0 {
            T::zero()
        } else {
            self.rotations[i - 1]
        }
    }

    pub fn pressure(&self) -> T {
        self.pressure
    }

    pub fn material(&self) -> &Material<T> {
        &self.material
    }

    pub fn rigid(&self) -> &[usize] {
        &self.rigid
    }

    pub fn is_rigid(&self, i: usize) -> bool {
        self.rigid.contains(&i)
    }

    /// Marks modules as fully constrained; they stay straight under pressure.
    pub fn set_rigid(&mut self, mut rigid: Vec<usize>) -> Result<(), ActuatorError> {
        rigid.sort_unstable();
        rigid.dedup();
        if let Some(&i) = rigid.iter().find(|&&i| i >= self.modules.len()) {
            return Err(ActuatorError::RigidIndex(i));
        }
        self.rigid = rigid;
        Ok(())
    }

    pub fn with_pressure(&self, pressure: T) -> Result<Self, ActuatorError> {
        if !(pressure >= T::zero()) || !pressure.is_finite() {
            return Err(ActuatorError::InvalidPressure(pressure.as_f64()));
        }
        Ok(Self { pressure, ..self.clone() })
    }

    /// Unpressurized length along the axis.
    pub fn total_length(&self) -> T {
        self.modules.iter().fold(T::zero(), |s, m| s + m.l)
    }

    /// Absolute twist of every module's bending plane in the base frame.
    pub fn cumulative_twists(&self) -> Vec<T> {
        let mut acc = T::zero();
        (0..self.modules.len())
            .map(|i| {
                acc = acc + self.twist_before(i);
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use super::*;

    fn md(r_in: f64, t: f64, r: f64, l: f64) -> ModuleDesign {
        ModuleDesign::new(r_in, t, r, l)
    }

    #[test]
    fn default_design_is_valid() {
        assert!(validate_module(&md(5.0, 1.5, 8.0, 10.0)).is_ok());
        assert_eq!(ModuleDesign::<f64>::standard(), md(5.0, 1.5, 8.0, 10.0));
    }

    #[test]
    fn strict_length_boundary() {
        let r = validate_module(&md(5.0, 2.5, 8.0, 10.0));
        assert_eq!(r.violations.len(), 1);
        assert!(r.has(RULE_LENGTH));
    }

    #[test]
    fn flank_violation() {
        let r = validate_module(&md(5.0, 1.5, 7.0, 10.0));
        assert_eq!(r.violations.len(), 1);
        assert!(r.has(RULE_FLANK));
    }

    #[test]
    fn non_positive_fields_reported_by_name() {
        let r = validate_module(&md(5.0, 0.0, -1.0, 10.0));
        assert_eq!(r.violations.len(), 2);
        assert!(r.violations[0].detail.starts_with("t ="));
        assert!(r.violations[1].detail.starts_with("R ="));
    }

    #[test]
    fn derived_values() {
        let d = derived_geometry(&md(5.0, 1.5, 8.0, 10.0)).unwrap();
        assert_eq!((d.r_ou, d.r_1, d.r_2, d.f), (11.0, 2.5, 2.5, 1.0));
        let d = derived_geometry(&md(5.0, 1.25, 7.5, 10.0)).unwrap();
        assert_eq!(d.f, 0.0);
        let d = derived_geometry(&md(2.0, 0.5, 4.0, 4.0)).unwrap();
        assert_eq!((d.r_ou, d.r_1, d.r_2, d.f), (6.0, 1.0, 1.0, 2.0));
        assert!(derived_geometry(&md(5.0, 2.5, 8.0, 10.0)).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let d = ModuleDesign::<f32>::standard();
        assert!(d.validate().is_ok());
        assert_eq!(d.derived().unwrap().r_ou, 11.0f32);
    }

    #[test]
    fn builds_planar_and_spatial_stacks() {
        let m = ModuleDesign::standard();
        let a = ActuatorSpec::uniform(m, 8, 0.0, 10.0, Material::agilus30()).unwrap();
        assert_eq!(a.modules().len(), 8);
        assert!(a.rotations().iter().all(|&r| r == 0.0));
        let b = ActuatorSpec::uniform(m, 8, FRAC_PI_4, 10.0, Material::agilus30()).unwrap();
        assert_eq!(b.cumulative_twists()[7], 7.0 * FRAC_PI_4);
        assert_eq!(b.total_length(), 80.0);
    }

    #[test]
    fn rejects_mixed_shared_parameters() {
        let e = build_actuator(
            vec![md(5.0, 1.5, 8.0, 10.0), md(6.0, 1.5, 9.0, 10.0)],
            vec![0.0],
            10.0,
            Material::agilus30(),
        )
        .unwrap_err();
        assert_eq!(e, ActuatorError::SharedParameter { index: 1, field: "r_in" });
    }

    #[test]
    fn rejects_length_mismatch_and_bad_modules() {
        let m = ModuleDesign::standard();
        assert!(matches!(
            build_actuator(vec![m, m], vec![], 1.0, Material::agilus30()),
            Err(ActuatorError::LengthMismatch { modules: 2, rotations: 0 })
        ));
        let e = build_actuator(vec![md(5.0, 3.0, 8.0, 10.0)], vec![], 1.0, Material::agilus30()).unwrap_err();
        assert!(e.violations().iter().any(|v| v.rule == RULE_LENGTH));
        assert!(matches!(
            build_actuator(vec![m], vec![], -1.0, Material::agilus30()),
            Err(ActuatorError::InvalidPressure(_))
        ));
    }

    #[test]
    fn json_field_names() {
        let a = ActuatorSpec::uniform(ModuleDesign::standard(), 2, 0.5, 10.0, Material::agilus30()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        let m = &v["modules"][0];
        for k in ["r_in", "t", "R", "l"] {
            assert!(m.get(k).is_some(), "missing {k}");
        }
        assert_eq!(v["rotations_rad"][0], 0.5);
        assert_eq!(v["pressure_kpa"], 10.0);
        assert_eq!(v["material"]["youngs_modulus"], 546.0);
        assert!(v.get("rigid").is_none());
    }

    #[test]
    fn deserialization_validates() {
        let bad = r#"{"modules":[{"r_in":5,"t":3,"R":8,"l":10}],"rotations_rad":[],"pressure_kpa":1}"#;
        let err = serde_json::from_str::<ActuatorSpec>(bad).unwrap_err();
        assert!(err.to_string().contains("l > 4t"));
    }
}
