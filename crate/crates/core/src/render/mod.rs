//! CPU splatting rasterizer.
//!
//! Rendering is split in two: [`Coverage`] records, per pixel, the
//! depth-sorted blend weights `αᵢ ∏ⱼ<ᵢ (1 − αⱼ)` of every contributing
//! Gaussian; any per-Gaussian quantity (color, flow vector, uncertainty) is
//! then composited with those weights. With geometry frozen the weights are
//! constant, which is what the SH gradients rely on.

mod coverage;
mod image;
pub mod loss;
mod maps;
mod project;
mod shading;
mod warp;

pub use coverage::{Contribution, Coverage, ALPHA_MAX, TRANSMITTANCE_MIN};
pub use image::{Image, Mask, IMAGE_MAGIC};
pub use maps::{
    flow_vectors, gaussian_colors, render_color, render_flow, render_uncertainty, RenderedMaps,
};
pub use project::{project, Splat2D, LOW_PASS};
pub use shading::{masked_loss_and_sh_gradient, LossTerm, ShTable, ViewShading};
pub use warp::{warp_frame1, WARP_ALPHA_THRESHOLD};
