use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::render::coverage::Coverage;
use crate::render::image::Image;
use crate::scene::{Camera, GaussianCloud};
use crate::sh;

/// Outputs of one view render. Optional channels are filled by the
/// operation that produces them.
#[derive(Debug, Clone)]
pub struct RenderedMaps {
    /// H×W×3, clamped to [0, 1].
    pub color: Image,
    /// H×W accumulated opacity.
    pub alpha_acc: Image,
    /// H×W×2 pixel displacement.
    pub flow: Option<Image>,
    /// H×W composited uncertainty.
    pub uncertainty: Option<Image>,
    pub contributors: Option<Coverage>,
}

/// Per-Gaussian SH color as seen from `camera`.
pub fn gaussian_colors(cloud: &GaussianCloud, camera: &Camera) -> Vec<[f64; 3]> {
    cloud
        .iter()
        .map(|g| sh::eval(g.sh(), &camera.view_direction(g.mu())))
        .collect()
}

fn color_maps(cloud: &GaussianCloud, camera: &Camera, coverage: Coverage) -> RenderedMaps {
    let color = coverage.blend(&gaussian_colors(cloud, camera)).clamp01();
    RenderedMaps {
        color,
        alpha_acc: coverage.alpha_image(),
        flow: None,
        uncertainty: None,
        contributors: Some(coverage),
    }
}

pub fn render_color(cloud: &GaussianCloud, camera: &Camera) -> RenderedMaps {
    color_maps(cloud, camera, Coverage::new(cloud, camera))
}

fn require_same_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

/// Image-space displacement of every Gaussian center between two
/// index-aligned clouds. Gaussians whose center is not in front of the
/// near plane in both configurations get a zero vector.
pub fn flow_vectors(from: &GaussianCloud, to: &GaussianCloud, camera: &Camera) -> Result<Vec<[f64; 2]>> {
    require_same_len(from.len(), to.len())?;
    let proj = |p| -> Option<Vector2<f64>> {
        let pc = camera.to_camera(p);
        (pc.z > camera.near()).then(|| camera.project_camera_point(&pc))
    };
    Ok(from
        .iter()
        .zip(to)
        .map(|(a, b)| match (proj(a.mu()), proj(b.mu())) {
            (Some(p1), Some(pt)) => [pt.x - p1.x, pt.y - p1.y],
            _ => [0.0, 0.0],
        })
        .collect())
}

/// Flow from frame 1 to frame t, composited with the frame-t blend
/// weights. The color channel holds the frame-t render.
pub fn render_flow(cloud1: &GaussianCloud, cloud_t: &GaussianCloud, camera: &Camera) -> Result<RenderedMaps> {
    let f = flow_vectors(cloud1, cloud_t, camera)?;
    let mut maps = render_color(cloud_t, camera);
    maps.flow = Some(maps.contributors.as_ref().expect("set").blend(&f));
    Ok(maps)
}

/// Composites per-Gaussian uncertainty `xi ∈ [0, 1]` with the blend weights
/// of `cloud_t`.
pub fn render_uncertainty(xi: &[f64], cloud_t: &GaussianCloud, camera: &Camera) -> Result<RenderedMaps> {
    require_same_len(cloud_t.len(), xi.len())?;
    if let Some(v) = xi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvariantViolation(format!("uncertainty {v} outside [0, 1]")));
    }
    let mut maps = render_color(cloud_t, camera);
    maps.uncertainty = Some(maps.contributors.as_ref().expect("set").blend_scalar(xi));
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Mat3, Quat, Vec3};
    use crate::render::coverage::{ALPHA_MAX, TRANSMITTANCE_MIN};
    use crate::scene::{CameraModel, Gaussian};

    fn ortho(size: u32) -> Camera {
        let c = f64::from(size - 1) / 2.0;
        Camera::new(
            CameraModel::Orthographic,
            Mat3::identity(),
            Vec3::new(0.0, 0.0, 10.0),
            [1.0, 1.0, c, c],
            (size, size),
            (0.1, 100.0),
        )
        .unwrap()
    }

    fn splat(mu: Vec3, s: f64, sigma: f64, gray: f64) -> Gaussian {
        Gaussian::new(mu, Quat::new(1.0, 0.0, 0.0, 0.0), Vec3::repeat(s), sigma, vec![[sh::dc_from_color(gray); 3]]).unwrap()
    }

    fn cloud(gs: Vec<Gaussian>) -> GaussianCloud {
        GaussianCloud::new(gs, 0, 1).unwrap()
    }

    #[test]
    fn empty_scene_is_black() {
        let maps = render_color(&GaussianCloud::empty(0), &ortho(9));
        assert!(maps.color.data().iter().all(|&v| v == 0.0));
        assert!(maps.alpha_acc.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_splat_center_value() {
        let maps = render_color(&cloud(vec![splat(Vec3::zeros(), 2.0, 0.6, 0.5)]), &ortho(21));
        let c = maps.color.get(10, 10, 0);
        assert!((c - 0.5 * 0.6).abs() < 1e-12);
        assert!((maps.alpha_acc.get(10, 10, 0) - 0.6).abs() < 1e-12);
        // one pixel off-center, the blend follows the projected Gaussian
        let var = 4.0 + crate::render::LOW_PASS;
        let alpha = 0.6 * (-0.5 / var).exp();
        assert!((maps.color.get(11, 10, 1) - 0.5 * alpha).abs() < 1e-12);
        // opaque splats are clamped
        let maps = render_color(&cloud(vec![splat(Vec3::zeros(), 2.0, 1.0, 1.0)]), &ortho(21));
        assert!((maps.alpha_acc.get(10, 10, 0) - ALPHA_MAX).abs() < 1e-12);
    }

    #[test]
    fn occluded_splat_contributes_at_most_one_percent() {
        let front = splat(Vec3::new(0.0, 0.0, -1.0), 2.0, 0.99, 0.2);
        let back = splat(Vec3::zeros(), 2.0, 0.99, 1.0);
        let maps = render_color(&cloud(vec![back, front]), &ortho(21));
        let c = maps.contributors.as_ref().unwrap().contributors(10, 10);
        assert_eq!(c[0].index, 1);
        assert!(c[1].weight <= 0.01 + 1e-12);
        assert!((maps.color.get(10, 10, 0) - (0.99 * 0.2 + 0.01 * 0.99)).abs() < 1e-12);
    }

    #[test]
    fn blending_stops_at_transmittance_floor() {
        let gs: Vec<_> = (0..6).map(|i| splat(Vec3::new(0.0, 0.0, i as f64 * 0.1), 2.0, 1.0, 0.5)).collect();
        let maps = render_color(&cloud(gs), &ortho(21));
        let c = maps.contributors.as_ref().unwrap().contributors(10, 10);
        // T after two layers is exactly 1e-4, which is not below the floor;
        // the third layer drives it below and ends the loop
        assert_eq!(c.len(), 3);
        let t: f64 = c.iter().map(|c| c.weight).sum::<f64>();
        assert!(1.0 - t < TRANSMITTANCE_MIN);
    }

    #[test]
    fn flow_of_translated_splat() {
        let c1 = cloud(vec![splat(Vec3::zeros(), 2.0, 0.7, 0.5)]);
        let ct = cloud(vec![splat(Vec3::new(3.0, -1.0, 0.0), 2.0, 0.7, 0.5)]);
        let maps = render_flow(&c1, &ct, &ortho(31)).unwrap();
        let flow = maps.flow.unwrap();
        // frame-t center pixel
        assert!((flow.get(18, 14, 0) - 0.7 * 3.0).abs() < 1e-12);
        assert!((flow.get(18, 14, 1) + 0.7).abs() < 1e-12);
        assert_eq!(flow.get(0, 0, 0), 0.0);
        let still = render_flow(&c1, &c1, &ortho(31)).unwrap().flow.unwrap();
        assert!(still.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uncertainty_validation() {
        let c = cloud(vec![splat(Vec3::zeros(), 2.0, 0.8, 0.5)]);
        assert!(matches!(render_uncertainty(&[0.1, 0.2], &c, &ortho(9)), Err(Error::SizeMismatch { .. })));
        assert!(render_uncertainty(&[1.5], &c, &ortho(9)).is_err());
        let u = render_uncertainty(&[1.0], &c, &ortho(9)).unwrap().uncertainty.unwrap();
        assert!((u.get(4, 4, 0) - 0.8).abs() < 1e-12);
    }
}
