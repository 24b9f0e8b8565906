//! Whole-body and hand motion capture toolkit.
//!
//! A parametric body model with articulated hands, copy-and-paste fusion of
//! separately predicted body and hand parameters, keypoint-driven fitting,
//! dataset harmonisation helpers and PCK/AUC evaluation.

pub mod camera;
pub mod dataprep;
pub mod error;
pub mod fitting;
pub mod formats;
pub mod integration;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod sparse;
pub mod toy;

pub use camera::WeakPerspectiveCamera;
pub use error::{Error, Result};
pub use integration::{BodyPrediction, HandPrediction, WholeBodyParams};
pub use kinematics::{AxisAngle, RigidTransform, SkeletonTree};
pub use model::{ParametricModel, PoseParams, ShapeParams, Side};
