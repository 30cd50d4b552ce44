//! Region-level anchors: neighborhoods of Gaussians hit by random lines
//! through a shared bounding sphere, each summarized by a distance-weighted
//! centroid.

mod extract;
mod lines;
mod neighborhoods;
mod sphere;

pub use extract::{extract_anchors, AnchorSet};
pub use lines::{sample_lines, sphere_point, Line};
pub use neighborhoods::{build_neighborhoods, Neighborhoods};
pub use sphere::{bounding_sphere, BoundingSphere, MIN_RADIUS};
