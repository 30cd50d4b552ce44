//! Scene model: Gaussians, clouds, deformation fields, cameras and edit
//! sessions, with the on-disk formats in [`io`].

mod camera;
mod cloud;
mod deformation;
mod gaussian;
pub mod io;
mod session;

pub use camera::{Camera, CameraModel, CameraSpec};
pub use cloud::GaussianCloud;
pub use deformation::{
    deform_source, source_delta, AnalyticField, AnalyticMotion, DeformationField, GaussianDelta,
    SourceDelta, TabulatedField,
};
pub use gaussian::{sh_coeff_count, Gaussian, OPACITY_CLAMP_TOLERANCE, QUAT_NORM_TOLERANCE};
pub use session::{EditSession, PipelineConfig, SessionFile};
