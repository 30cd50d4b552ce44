use crate::error::{Error, Result};
use crate::math::{self, Mat3, Quat, Vec3};

/// Unit-norm tolerance below which a quaternion is stored untouched.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;
/// Opacities this far outside [0, 1] are clamped; anything further is
/// rejected.
pub const OPACITY_CLAMP_TOLERANCE: f64 = 1e-4;

/// Number of SH basis functions for a band-limit `degree`.
pub const fn sh_coeff_count(degree: u8) -> usize {
    let d = degree as usize + 1;
    d * d
}

/// One anisotropic splat.
///
/// Fields are private so that every instance satisfies: `q` unit within
/// [`QUAT_NORM_TOLERANCE`], every scale component strictly positive,
/// opacity in [0, 1], all values finite. SH coefficients are stored as one
/// RGB triple per basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mu: Vec3,
    q: Quat,
    s: Vec3,
    sigma: f64,
    sh: Vec<[f64; 3]>,
}

impl Gaussian {
    pub fn new(mu: Vec3, q: Quat, s: Vec3, sigma: f64, sh: Vec<[f64; 3]>) -> Result<Self> {
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::InvariantViolation("non-finite position".into()));
        }
        let q = normalize_quat(q)?;
        check_scale(&s)?;
        let sigma = clamp_opacity(sigma)?;
        check_sh(&sh)?;
        Ok(Self { mu, q, s, sigma, sh })
    }

    pub fn mu(&self) -> &Vec3 {
        &self.mu
    }

    pub fn rotation(&self) -> &Quat {
        &self.q
    }

    pub fn scale(&self) -> &Vec3 {
        &self.s
    }

    pub fn opacity(&self) -> f64 {
        self.sigma
    }

    pub fn sh(&self) -> &[[f64; 3]] {
        &self.sh
    }

    pub fn covariance(&self) -> Mat3 {
        math::covariance(&self.q, &self.s)
    }

    pub fn inverse_covariance(&self) -> Mat3 {
        math::inverse_covariance(&self.q, &self.s)
    }

    /// Replaces the SH coefficients, keeping geometry and opacity.
    pub fn with_sh(&self, sh: Vec<[f64; 3]>) -> Result<Self> {
        if sh.len() != self.sh.len() {
            return Err(Error::SizeMismatch {
                expected: self.sh.len(),
                found: sh.len(),
            });
        }
        check_sh(&sh)?;
        Ok(Self { sh, ..self.clone() })
    }

    /// Replaces position, rotation and scale; the rotation is renormalized.
    pub fn with_geometry(&self, mu: Vec3, q: Quat, s: Vec3) -> Result<Self> {
        Self::new(mu, q, s, self.sigma, self.sh.clone())
    }
}

fn normalize_quat(q: Quat) -> Result<Quat> {
    let n = q.norm();
    if !n.is_finite() || n < 1e-12 {
        return Err(Error::InvariantViolation(format!(
            "quaternion {:?} is not normalizable",
            q.coords.as_slice()
        )));
    }
    if (n - 1.0).abs() > QUAT_NORM_TOLERANCE {
        Ok(q / n)
    } else {
        Ok(q)
    }
}

fn check_scale(s: &Vec3) -> Result<()> {
    if s.iter().all(|&v| v.is_finite() && v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!(
            "scale ({}, {}, {}) must be finite and strictly positive",
            s.x, s.y, s.z
        )))
    }
}

fn clamp_opacity(sigma: f64) -> Result<f64> {
    if !sigma.is_finite()
        || sigma < -OPACITY_CLAMP_TOLERANCE
        || sigma > 1.0 + OPACITY_CLAMP_TOLERANCE
    {
        return Err(Error::InvariantViolation(format!(
            "opacity {sigma} outside [0, 1]"
        )));
    }
    Ok(sigma.clamp(0.0, 1.0))
}

fn check_sh(sh: &[[f64; 3]]) -> Result<()> {
    if !matches!(sh.len(), 1 | 4 | 9 | 16) {
        return Err(Error::InvariantViolation(format!(
            "{} SH coefficients do not form a band-limited basis of degree <= 3",
            sh.len()
        )));
    }
    if sh.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvariantViolation("non-finite SH coefficient".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Quat {
        Quat::new(1.0, 0.0, 0.0, 0.0)
    }

    #[test]
    fn rejects_nonpositive_scale() {
        let err = Gaussian::new(Vec3::zeros(), unit(), Vec3::new(0.0, 1.0, 1.0), 0.5, vec![[0.0; 3]]);
        assert!(matches!(err, Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn opacity_clamps_within_tolerance_only() {
        let g = Gaussian::new(Vec3::zeros(), unit(), Vec3::repeat(1.0), 1.00005, vec![[0.0; 3]]).unwrap();
        assert_eq!(g.opacity(), 1.0);
        let g = Gaussian::new(Vec3::zeros(), unit(), Vec3::repeat(1.0), -0.00005, vec![[0.0; 3]]).unwrap();
        assert_eq!(g.opacity(), 0.0);
        assert!(Gaussian::new(Vec3::zeros(), unit(), Vec3::repeat(1.0), 1.01, vec![[0.0; 3]]).is_err());
    }

    #[test]
    fn quaternion_is_normalized() {
        let g = Gaussian::new(Vec3::zeros(), Quat::new(2.0, 0.0, 0.0, 0.0), Vec3::repeat(1.0), 0.5, vec![[0.0; 3]]).unwrap();
        assert!((g.rotation().norm() - 1.0).abs() < 1e-12);
        assert!(Gaussian::new(Vec3::zeros(), Quat::new(0.0, 0.0, 0.0, 0.0), Vec3::repeat(1.0), 0.5, vec![[0.0; 3]]).is_err());
    }

    #[test]
    fn sh_length_must_be_square() {
        assert!(Gaussian::new(Vec3::zeros(), unit(), Vec3::repeat(1.0), 0.5, vec![[0.0; 3]; 3]).is_err());
        let g = Gaussian::new(Vec3::zeros(), unit(), Vec3::repeat(1.0), 0.5, vec![[0.0; 3]; 4]).unwrap();
        assert!(g.with_sh(vec![[1.0; 3]; 9]).is_err());
        assert_eq!(g.with_sh(vec![[1.0; 3]; 4]).unwrap().sh()[3], [1.0; 3]);
    }
}
