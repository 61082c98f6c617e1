//! Watertight triangle meshes and STL export of bellow modules and stacks.

mod audit;
mod mesh;
mod oracle;
mod profile;
mod stl;
mod triangulate;

pub use audit::{audit, bounding_box, contains, signed_volume, MeshAudit};
pub use mesh::{mesh_actuator, mesh_module, MeshOptions, TriangleMesh};
pub use oracle::{cavity_moment, module_volume, shell_moment};
pub use profile::{module_profile, ModuleProfile};
pub use stl::{read_stl, stl_bytes, write_ascii_stl, write_stl, StlTriangle};
pub use triangulate::ear_clip;

use crate::actuator::Violation;

/// Largest angular step of the tessellation, degrees.
pub const DEFAULT_ANGULAR_STEP_DEG: f64 = 2.0;
/// Angular width of the constraint fan.
pub const FAN_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
/// Smallest triangle area the mesher may emit, mm².
pub const MIN_TRIANGLE_AREA: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CadError {
    #[error("invalid design: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDesign(Vec<Violation>),
    #[error("profile self-intersects between edges {first} and {second} near ({rho:.4}, {z:.4})")]
    SelfIntersection { first: usize, second: usize, rho: f64, z: f64 },
    #[error("triangulation of the fan side face failed at ({rho:.4}, {z:.4})")]
    Triangulation { rho: f64, z: f64 },
    #[error("invalid tessellation step {0} deg")]
    InvalidStep(f64),
    #[error("malformed STL: {0}")]
    Stl(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
