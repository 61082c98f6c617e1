//! Request-level engine shared by the command-line tool and the HTTP
//! service, so both produce identical bytes for identical inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorError, ActuatorSpec, ActuatorSpecData, Material, Violation};
use crate::cad::{self, CadError, MeshOptions};
use crate::io::{self, IoError};
use crate::kinematics::{forward_kinematics, sample_centerline, KinematicsError};
use crate::optimizer::{self, MatchProblem, MatchResult, OptimizeError, Progress};
use crate::oracle::{dataset_to_bytes, generate_dataset, read_dataset, DatasetGrid, OracleError};
use crate::segmentation::{segment, ArcSegment, BaseFrame, SegmentError, Segmentation};
use crate::surrogate::{actuator_thetas, train_with_progress, DeflectionModel, OracleModel, SurrogateError, SurrogateModel, TrainConfig, TrainReport};
use crate::{ModuleDesign, Vec3};

/// Model name that selects the analytic oracle instead of a trained file.
pub const ORACLE_MODEL: &str = "oracle";
pub const DEFAULT_SAMPLES_PER_MODULE: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{message}")]
    Invalid { code: &'static str, message: String, violations: Vec<Violation> },
    #[error("{0} not found")]
    NotFound(String),
    #[error("{message}")]
    Failed { code: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::Invalid { code, message: message.into(), violations: Vec::new() }
    }

    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Invalid { code, .. } | Self::Failed { code, .. } => code,
            Self::NotFound(_) => "not_found",
            Self::Io(_) => "io_error",
        }
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Self::Invalid { violations, .. } => violations,
            _ => &[],
        }
    }

    /// Caller error, as opposed to an engine or environment failure.
    pub fn is_client_error(&self) -> bool {
        matches!(self, Self::Invalid { .. } | Self::NotFound(_))
    }
}

impl From<ActuatorError> for EngineError {
    fn from(e: ActuatorError) -> Self {
        Self::Invalid { code: "invalid_spec", violations: e.violations(), message: e.to_string() }
    }
}

impl From<SegmentError> for EngineError {
    fn from(e: SegmentError) -> Self {
        let code = match e {
            SegmentError::ToleranceUnattainable { .. } => "tolerance_unattainable",
            SegmentError::TooFewPoints(_) => "too_few_points",
            SegmentError::InvalidTolerance(_) => "invalid_tolerance",
            SegmentError::InvalidSegment { .. } => "invalid_segment",
            _ => "segmentation_failed",
        };
        Self::Invalid { code, message: e.to_string(), violations: Vec::new() }
    }
}

impl From<OptimizeError> for EngineError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::InvalidProblem(v) => {
                Self::Invalid { code: "invalid_problem", message: OptimizeError::InvalidProblem(v.clone()).to_string(), violations: v }
            }
            OptimizeError::Infeasible(v) => {
                Self::Invalid { code: "infeasible", message: OptimizeError::Infeasible(v.clone()).to_string(), violations: v }
            }
            OptimizeError::InfeasibleResult => Self::invalid("infeasible_result", e.to_string()),
            OptimizeError::SegmentMismatch { .. } => Self::invalid("segment_mismatch", e.to_string()),
            OptimizeError::Actuator(a) => a.into(),
        }
    }
}

impl From<SurrogateError> for EngineError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Io(io) => Self::Io(io),
            SurrogateError::Version { .. } => Self::invalid("model_version", e.to_string()),
            SurrogateError::Malformed(_) | SurrogateError::Json(_) => Self::invalid("malformed_model", e.to_string()),
            SurrogateError::NonFiniteLoss(_) => Self::Failed { code: "training_diverged", message: e.to_string() },
            _ => Self::invalid("invalid_dataset", e.to_string()),
        }
    }
}

impl From<OracleError> for EngineError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Io(io) => Self::Io(io),
            OracleError::InvalidMaterial(r) => Self::Invalid { code: "invalid_material", message: "invalid material".into(), violations: r.violations },
            OracleError::InvalidDesign(r) => Self::Invalid { code: "invalid_spec", message: "invalid module design".into(), violations: r.violations },
            OracleError::Format(_) | OracleError::Csv(_) => Self::invalid("dataset_schema", e.to_string()),
            _ => Self::invalid("invalid_dataset", e.to_string()),
        }
    }
}

impl From<CadError> for EngineError {
    fn from(e: CadError) -> Self {
        match e {
            CadError::InvalidDesign(v) => Self::Invalid { code: "invalid_spec", message: "invalid module design".into(), violations: v },
            CadError::InvalidStep(_) => Self::invalid("invalid_step", e.to_string()),
            CadError::Io(io) => Self::Io(io),
            _ => Self::Failed { code: "mesh_failed", message: e.to_string() },
        }
    }
}

impl From<KinematicsError> for EngineError {
    fn from(e: KinematicsError) -> Self {
        Self::invalid("kinematics", e.to_string())
    }
}

impl From<IoError> for EngineError {
    fn from(e: IoError) -> Self {
        Self::invalid("malformed_points", e.to_string())
    }
}

impl From<serde_json::Error> for EngineError {
    fn from(e: serde_json::Error) -> Self {
        Self::invalid("malformed_json", e.to_string())
    }
}

/// Deflection model chosen at run time.
#[derive(Clone, Debug)]
pub enum Model {
    Oracle(OracleModel),
    Surrogate(Box<SurrogateModel>),
}

impl DeflectionModel for Model {
    fn theta(&self, d: &ModuleDesign, pressure: f64) -> f64 {
        match self {
            Self::Oracle(m) => m.theta(d, pressure),
            Self::Surrogate(m) => m.theta(d, pressure),
        }
    }

    fn r_in_range(&self) -> Option<(f64, f64)> {
        match self {
            Self::Oracle(m) => m.r_in_range(),
            Self::Surrogate(m) => m.r_in_range(),
        }
    }

    fn extrapolated(&self, d: &ModuleDesign, pressure: f64) -> bool {
        match self {
            Self::Oracle(m) => m.extrapolated(d, pressure),
            Self::Surrogate(m) => m.extrapolated(d, pressure),
        }
    }
}

/// `"oracle"` or the path of a surrogate model file.
pub fn load_model(name: &str) -> Result<Model, EngineError> {
    if name == ORACLE_MODEL {
        return Ok(Model::Oracle(OracleModel::default()));
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(EngineError::NotFound(format!("model {name}")));
    }
    Ok(Model::Surrogate(Box::new(SurrogateModel::load(path)?)))
}

/// Canonical JSON: pretty-printed with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("engine types serialise");
    s.push('\n');
    s
}

/// Training grid CSV for `material`, with its row count.
pub fn dataset_csv(material: &Material, grid: &DatasetGrid) -> Result<(Vec<u8>, usize), EngineError> {
    let rows = generate_dataset(grid, material)?;
    Ok((dataset_to_bytes(&rows), rows.len()))
}

/// Trains on a dataset CSV; the report is embedded in the returned model.
pub fn train_csv(
    csv: &[u8],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<(SurrogateModel, TrainReport), EngineError> {
    let rows = read_dataset(csv)?;
    let (mut model, report) = train_with_progress(&rows, cfg, on_epoch)?;
    model.report = Some(report.clone());
    Ok((model, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub points: Vec<Vec3>,
    /// Maximum deviation from the fitted curve, mm.
    pub tolerance: f64,
}

pub fn run_segment(req: &SegmentRequest) -> Result<Segmentation, EngineError> {
    Ok(segment(&req.points, req.tolerance)?)
}

/// Segment list from either a bare JSON array or a segmentation document.
pub fn parse_segments(text: &str) -> Result<(Vec<ArcSegment>, Option<BaseFrame>), EngineError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        List(Vec<ArcSegment>),
        Full { segments: Vec<ArcSegment>, base: Option<BaseFrame> },
    }
    let (segments, base) = match serde_json::from_str::<Doc>(text)? {
        Doc::List(s) => (s, None),
        Doc::Full { segments, base } => (segments, base),
    };
    for (i, s) in segments.iter().enumerate() {
        s.validate().map_err(|e| EngineError::invalid("invalid_segment", format!("segment {i}: {e}")))?;
    }
    Ok((segments, base))
}

pub fn run_match(
    problem: &MatchProblem,
    model: &dyn DeflectionModel,
    on_progress: &mut dyn FnMut(&Progress),
) -> Result<MatchResult, EngineError> {
    Ok(optimizer::optimize_with_progress(problem, model, on_progress)?)
}

pub fn assemble(result: &MatchResult) -> Result<ActuatorSpec, EngineError> {
    Ok(optimizer::assemble(result)?)
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES_PER_MODULE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    /// Validated on use so violations come back itemised.
    pub spec: ActuatorSpecData,
    /// Overrides the spec's pressure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_kpa: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples_per_module: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub pressure_kpa: f64,
    /// Bending angle per module, rad.
    pub thetas: Vec<f64>,
    /// Modules whose inputs lie outside the model's trusted range.
    pub extrapolated: Vec<usize>,
    pub centerline: Vec<Vec3>,
    pub tip: Vec3,
}

pub fn simulate(req: &SimulateRequest, model: &dyn DeflectionModel) -> Result<Simulation, EngineError> {
    let spec = ActuatorSpec::try_from(req.spec.clone())?;
    let spec = match req.pressure_kpa {
        Some(p) => spec.with_pressure(p)?,
        None => spec,
    };
    let thetas = actuator_thetas(&spec, model);
    if let Some(i) = thetas.iter().position(|t| !t.is_finite()) {
        return Err(EngineError::Failed { code: "model_failed", message: format!("model returned no angle for module {i}") });
    }
    let extrapolated = (0..spec.modules().len())
        .filter(|&i| !spec.is_rigid(i) && model.extrapolated(&spec.modules()[i], spec.pressure()))
        .collect();
    let centerline = sample_centerline(&spec, &thetas, req.samples_per_module)?;
    let tip = forward_kinematics(&spec, &thetas)?.last().map(|p| p.translation()).unwrap_or_default();
    Ok(Simulation { pressure_kpa: spec.pressure(), thetas, extrapolated, centerline, tip })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshRequest {
    pub spec: ActuatorSpecData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_step_deg: Option<f64>,
}

/// Binary STL of the straight actuator.
pub fn mesh_stl(req: &MeshRequest) -> Result<Vec<u8>, EngineError> {
    let opts = MeshOptions { angular_step_deg: req.angular_step_deg.unwrap_or(cad::DEFAULT_ANGULAR_STEP_DEG) };
    let spec = ActuatorSpec::try_from(req.spec.clone())?;
    let mesh = cad::mesh_actuator(&spec, &opts)?;
    Ok(cad::stl_bytes(&mesh))
}

/// Centerline of an actuator placed in the frame of a segmented shape.
pub fn place_centerline(sim: &Simulation, base: &BaseFrame) -> Vec<Vec3> {
    let pose = base.pose();
    sim.centerline.iter().map(|p| pose.transform_point(p)).collect()
}

pub fn parse_points(text: &str) -> Result<Vec<Vec3>, EngineError> {
    Ok(io::parse_points(text)?)
}
