use nalgebra::{Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModel {
    Pinhole,
    Orthographic,
}

/// A validated camera. Camera space is x right, y down, z forward; pixel
/// `(x, y)` is sampled at the integer coordinate `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct Camera {
    model: CameraModel,
    rotation: Mat3,
    translation: Vec3,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    near: f64,
    far: f64,
}

/// JSON form of a camera: `rotation` is the row-major world-to-camera
/// rotation and `translation` its offset, so `x_cam = R x_world + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub model: CameraModel,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl TryFrom<CameraSpec> for Camera {
    type Error = Error;

    fn try_from(spec: CameraSpec) -> Result<Self> {
        let r = spec.rotation;
        let rotation = Mat3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        Camera::new(
            spec.model,
            rotation,
            Vec3::from(spec.translation),
            [spec.fx, spec.fy, spec.cx, spec.cy],
            (spec.width, spec.height),
            (spec.near, spec.far),
        )
    }
}

impl From<Camera> for CameraSpec {
    fn from(c: Camera) -> Self {
        let r = c.rotation;
        CameraSpec {
            model: c.model,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: c.translation.into(),
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            near: c.near,
            far: c.far,
        }
    }
}

impl Camera {
    /// `intrinsics` is `[fx, fy, cx, cy]`, `size` is `(width, height)` and
    /// `clip` is `(near, far)`.
    pub fn new(
        model: CameraModel,
        rotation: Mat3,
        translation: Vec3,
        intrinsics: [f64; 4],
        size: (u32, u32),
        clip: (f64, f64),
    ) -> Result<Self> {
        let [fx, fy, cx, cy] = intrinsics;
        let (width, height) = size;
        let (near, far) = clip;
        if width == 0 || height == 0 {
            return Err(Error::InvariantViolation("camera image must be at least 1x1".into()));
        }
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvariantViolation("focal lengths must be positive".into()));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvariantViolation("principal point must be finite".into()));
        }
        if !(near < far) || !near.is_finite() {
            return Err(Error::InvariantViolation("near clip must be below far clip".into()));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvariantViolation("camera translation must be finite".into()));
        }
        let ortho_err = (rotation.transpose() * rotation - Mat3::identity()).amax();
        if !(ortho_err <= 1e-6) || rotation.determinant() <= 0.0 {
            return Err(Error::InvariantViolation(
                "camera rotation must be a proper orthonormal matrix".into(),
            ));
        }
        Ok(Self {
            model,
            rotation,
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
            far,
        })
    }

    /// Pinhole camera at `eye` looking at `target`; `up` picks the image
    /// vertical (image y grows opposite to `up`).
    pub fn look_at(
        model: CameraModel,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: [f64; 4],
        size: (u32, u32),
        clip: (f64, f64),
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::InvariantViolation("look_at up vector is parallel to view".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(model, rotation, translation, intrinsics, size, clip)
    }

    pub fn model(&self) -> CameraModel {
        self.model
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.cx, self.cy)
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    /// Unit viewing direction towards a world point; constant for
    /// orthographic cameras.
    pub fn view_direction(&self, p: &Vec3) -> Vec3 {
        match self.model {
            CameraModel::Orthographic => self.forward(),
            CameraModel::Pinhole => {
                let d = p - self.center();
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    self.forward()
                }
            }
        }
    }

    /// Pixel position of a camera-space point, without clipping.
    pub fn project_camera_point(&self, pc: &Vec3) -> Vector2<f64> {
        match self.model {
            CameraModel::Pinhole => Vector2::new(
                self.fx * pc.x / pc.z + self.cx,
                self.fy * pc.y / pc.z + self.cy,
            ),
            CameraModel::Orthographic => {
                Vector2::new(self.fx * pc.x + self.cx, self.fy * pc.y + self.cy)
            }
        }
    }

    /// Pixel position of a world point if it lies strictly between the
    /// clip planes.
    pub fn project(&self, p: &Vec3) -> Option<(Vector2<f64>, f64)> {
        let pc = self.to_camera(p);
        if pc.z <= self.near || pc.z >= self.far {
            return None;
        }
        Some((self.project_camera_point(&pc), pc.z))
    }

    /// Jacobian of the camera-space-to-pixel map at `pc`.
    pub fn jacobian(&self, pc: &Vec3) -> Matrix2x3<f64> {
        match self.model {
            CameraModel::Pinhole => {
                let iz = 1.0 / pc.z;
                Matrix2x3::new(
                    self.fx * iz,
                    0.0,
                    -self.fx * pc.x * iz * iz,
                    0.0,
                    self.fy * iz,
                    -self.fy * pc.y * iz * iz,
                )
            }
            CameraModel::Orthographic => Matrix2x3::new(self.fx, 0.0, 0.0, 0.0, self.fy, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_maps_target_to_principal_point() {
        let cam = Camera::look_at(
            CameraModel::Pinhole,
            Vec3::new(0.0, 0.0, -4.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            [100.0, 100.0, 32.0, 24.0],
            (64, 48),
            (0.1, 100.0),
        )
        .unwrap();
        let (px, depth) = cam.project(&Vec3::zeros()).unwrap();
        assert!((px - cam.principal_point()).norm() < 1e-12);
        assert!((depth - 4.0).abs() < 1e-12);
        assert!((cam.center() - Vec3::new(0.0, 0.0, -4.0)).norm() < 1e-12);
        // world up projects upwards in the image
        let (up, _) = cam.project(&Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(up.y < 24.0);
    }

    #[test]
    fn rejects_invalid() {
        let ok = |m: Mat3, size, clip, f| Camera::new(CameraModel::Pinhole, m, Vec3::zeros(), [f, f, 0.0, 0.0], size, clip);
        assert!(ok(Mat3::identity(), (1, 1), (0.1, 1.0), 1.0).is_ok());
        assert!(ok(Mat3::identity(), (0, 1), (0.1, 1.0), 1.0).is_err());
        assert!(ok(Mat3::identity(), (1, 1), (1.0, 1.0), 1.0).is_err());
        assert!(ok(Mat3::identity(), (1, 1), (0.1, 1.0), 0.0).is_err());
        assert!(ok(Mat3::identity() * 1.01, (1, 1), (0.1, 1.0), 1.0).is_err());
        assert!(ok(-Mat3::identity(), (1, 1), (0.1, 1.0), 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cam = Camera::look_at(
            CameraModel::Orthographic,
            Vec3::new(1.0, 2.0, -3.0),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            [1.0, 1.0, 8.0, 8.0],
            (17, 17),
            (0.01, 10.0),
        )
        .unwrap();
        let json = serde_json::to_string(&cam).unwrap();
        let back: Camera = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cam);
        let bad = json.replace("\"width\":17", "\"width\":0");
        assert!(serde_json::from_str::<Camera>(&bad).is_err());
    }
}
