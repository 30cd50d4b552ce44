//! Small geometric helpers shared across modules.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = Quaternion<f64>;

/// Rotation matrix of a (possibly slightly non-unit) quaternion.
pub fn rotation_matrix(q: &Quat) -> Mat3 {
    UnitQuaternion::from_quaternion(*q).to_rotation_matrix().into_inner()
}

/// Σ = R S Sᵀ Rᵀ.
pub fn covariance(q: &Quat, s: &Vec3) -> Mat3 {
    let r = rotation_matrix(q);
    r * Mat3::from_diagonal(&s.component_mul(s)) * r.transpose()
}

/// Σ⁻¹ = R S⁻² Rᵀ, computed without a general inverse.
pub fn inverse_covariance(q: &Quat, s: &Vec3) -> Mat3 {
    let r = rotation_matrix(q);
    let inv = Vec3::new(1.0 / (s.x * s.x), 1.0 / (s.y * s.y), 1.0 / (s.z * s.z));
    r * Mat3::from_diagonal(&inv) * r.transpose()
}

/// Squared Mahalanobis distance dᵀ Σ⁻¹ d.
pub fn mahalanobis_sq(inv_cov: &Mat3, d: &Vec3) -> f64 {
    d.dot(&(inv_cov * d))
}

/// Distance from `x` to the infinite line through `origin` with unit
/// direction `dir`.
#[inline]
pub fn point_line_distance(x: &Vec3, origin: &Vec3, dir: &Vec3) -> f64 {
    (x - origin).cross(dir).norm()
}

/// Four-component dot product of two quaternions.
#[inline]
pub fn quat_dot(a: &Quat, b: &Quat) -> f64 {
    a.coords.dot(&b.coords)
}

/// Rounds every component through `f32`, giving values that survive the
/// on-disk formats unchanged.
pub fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

pub fn round_vec3(v: &Vec3) -> Vec3 {
    v.map(round_f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn covariance_is_spd_and_inverse_matches() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.7).into_inner();
        let s = Vec3::new(0.3, 1.2, 0.05);
        let cov = covariance(&q, &s);
        assert!((cov - cov.transpose()).norm() < 1e-12);
        let eig = cov.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e > 0.0));
        let prod = cov * inverse_covariance(&q, &s);
        assert!((prod - Mat3::identity()).norm() < 1e-9);
    }

    #[test]
    fn line_distance() {
        let d = point_line_distance(
            &Vec3::new(1.0, 2.0, 5.0),
            &Vec3::zeros(),
            &Vec3::new(0.0, 0.0, 1.0),
        );
        assert!((d - 5f64.sqrt()).abs() < 1e-12);
        let r = rotation_matrix(&UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2).into_inner());
        assert!((r * Vec3::x() - Vec3::y()).norm() < 1e-12);
    }
}
