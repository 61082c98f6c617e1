//! Design engine for modular bellow soft pneumatic actuators.
//!
//! Geometry and kinematics are generic over the scalar type; the aliases
//! below fix the common `f64` instantiation.

pub mod actuator;
pub mod biarc;
pub mod cad;
pub mod bspline;
pub mod gp;
pub mod io;
pub mod kinematics;
pub mod linalg;
pub mod metrics;
pub mod num;
pub mod optimizer;
pub mod oracle;
pub mod pipeline;
pub mod segmentation;
pub mod shapes;
pub mod surrogate;
pub mod vector;

pub use num::Scalar;

pub type Vec3 = vector::Vec3<f64>;
pub type Vec3f = vector::Vec3<f32>;
pub type Pose = kinematics::Pose<f64>;
pub type Posef = kinematics::Pose<f32>;
pub type ModuleDesign = actuator::ModuleDesign<f64>;
pub type ModuleDesignf = actuator::ModuleDesign<f32>;
pub type ModuleState = kinematics::ModuleState<f64>;
pub type BSplineCurve = bspline::BSplineCurve<f64>;
pub type ProjectedPoint = bspline::ProjectedPoint<f64>;
