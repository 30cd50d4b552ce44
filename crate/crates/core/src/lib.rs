//! Propagation of first-frame edits through a dynamic Gaussian point-cloud
//! scene.
//!
//! The crate is organised along the pipeline:
//!
//! * [`scene`] holds the domain types (Gaussians, clouds, deformation
//!   fields, cameras, edit sessions) and their binary/JSON file formats.
//! * [`render`] is a CPU splatting rasterizer producing color, alpha, flow
//!   and uncertainty maps, plus the masked image losses and their analytic
//!   gradients with respect to SH coefficients.
//! * [`anchor`] extracts region-level anchors with bounding-sphere line
//!   sampling and cylinder tests.
//! * [`uot`] matches anchor sets with entropic unbalanced optimal transport.
//! * [`propagate`] transfers source deformations onto edited Gaussians.
//! * [`refine`] repairs motion-induced color artifacts with
//!   uncertainty-masked SH refinement.

pub mod anchor;
pub mod error;
pub mod math;
pub mod propagate;
pub mod refine;
pub mod render;
pub mod scene;
pub mod sh;
pub mod spatial;
pub mod uot;

pub use error::{Error, Result};
pub use scene::{
    AnalyticMotion, Camera, CameraModel, DeformationField, EditSession, Gaussian, GaussianCloud,
    GaussianDelta, PipelineConfig,
};
