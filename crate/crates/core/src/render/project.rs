use nalgebra::{Matrix2, Vector2};

use crate::scene::{Camera, GaussianCloud};

/// Isotropic dilation added to every projected covariance, in px².
pub const LOW_PASS: f64 = 0.3;

/// Footprint cutoff in Mahalanobis units (3 sigma).
pub(crate) const FOOTPRINT_SIGMAS: f64 = 3.0;

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    pub center_px: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub gaussian_index: usize,
    /// Half extents of the axis-aligned box around the 3-sigma ellipse.
    pub extent: Vector2<f64>,
}

/// Projects every Gaussian whose center lies between the clip planes and
/// whose 3-sigma footprint touches the image.
pub fn project(cloud: &GaussianCloud, camera: &Camera) -> Vec<Splat2D> {
    let w = camera.rotation();
    let (max_x, max_y) = (f64::from(camera.width() - 1), f64::from(camera.height() - 1));
    cloud
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let pc = camera.to_camera(g.mu());
            if pc.z <= camera.near() || pc.z >= camera.far() {
                return None;
            }
            let center = camera.project_camera_point(&pc);
            let j = camera.jacobian(&pc);
            let cov_cam = w * g.covariance() * w.transpose();
            let cov2d = j * cov_cam * j.transpose() + Matrix2::identity() * LOW_PASS;
            let conic = cov2d.try_inverse()?;
            if !center.iter().chain(conic.iter()).all(|v| v.is_finite()) {
                return None;
            }
            let extent = Vector2::new(cov2d[(0, 0)].sqrt(), cov2d[(1, 1)].sqrt()) * FOOTPRINT_SIGMAS;
            let outside = center.x + extent.x < 0.0
                || center.y + extent.y < 0.0
                || center.x - extent.x > max_x
                || center.y - extent.y > max_y;
            (!outside).then_some(Splat2D {
                center_px: center,
                cov2d,
                conic,
                depth: pc.z,
                gaussian_index: i,
                extent,
            })
        })
        .collect()
}
