use nalgebra::{Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::scene::cloud::GaussianCloud;

/// Per-Gaussian parameter delta from frame 1 to some frame `t`.
///
/// `d_q` is added to the frame-1 quaternion before renormalization and
/// `d_s` is added to the frame-1 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDelta {
    pub d_mu: Vec3,
    pub d_q: Quat,
    pub d_s: Vec3,
}

impl GaussianDelta {
    pub fn zero() -> Self {
        Self {
            d_mu: Vec3::zeros(),
            d_q: Quat::new(0.0, 0.0, 0.0, 0.0),
            d_s: Vec3::zeros(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d_mu.iter().chain(self.d_q.coords.iter()).chain(self.d_s.iter()).all(|&v| v == 0.0)
    }

    fn is_finite(&self) -> bool {
        self.d_mu.iter().chain(self.d_q.coords.iter()).chain(self.d_s.iter()).all(|v| v.is_finite())
    }
}

/// Source-cloud deltas in the form edited Gaussians consume: additive
/// position and rotation deltas plus a multiplicative scale ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceDelta {
    pub d_mu: Vec3,
    pub d_q: Quat,
    pub s_ratio: Vec3,
}

/// Deltas stored per frame and per Gaussian, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedField {
    n_frames: u32,
    count: usize,
    deltas: Vec<GaussianDelta>,
}

impl TabulatedField {
    /// `deltas` is frame-major: all Gaussians of frame 1, then frame 2, ...
    pub fn new(n_frames: u32, count: usize, deltas: Vec<GaussianDelta>) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::InvariantViolation("deformation needs at least one frame".into()));
        }
        let expected = (n_frames as usize)
            .checked_mul(count)
            .ok_or_else(|| Error::InvariantViolation("deformation table too large".into()))?;
        if deltas.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: deltas.len(),
            });
        }
        if let Some(i) = deltas[..count].iter().position(|d| !d.is_zero()) {
            return Err(Error::InvariantViolation(format!(
                "frame-1 delta of Gaussian {i} is not zero"
            )));
        }
        if deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvariantViolation("non-finite deformation delta".into()));
        }
        Ok(Self {
            n_frames,
            count,
            deltas,
        })
    }

    pub fn n_frames(&self) -> u32 {
        self.n_frames
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn frame(&self, t: u32) -> &[GaussianDelta] {
        let start = (t as usize - 1) * self.count;
        &self.deltas[start..start + self.count]
    }

    pub fn deltas(&self) -> &[GaussianDelta] {
        &self.deltas
    }
}

/// Closed-form motions used for synthetic scenes and oracle tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticMotion {
    /// Constant velocity in world units per frame.
    Translation { velocity: [f64; 3] },
    /// Rotation by `omega · (t − 1)` radians about `axis` through `center`.
    Rotation {
        axis: [f64; 3],
        center: [f64; 3],
        omega: f64,
    },
    /// `μ[axis] += amplitude · sin(2π (t − 1) / period) · μ[reference_axis]`.
    Shear {
        axis: usize,
        reference_axis: usize,
        amplitude: f64,
        period: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    pub n_frames: u32,
    pub motion: AnalyticMotion,
}

impl AnalyticField {
    fn delta(&self, mu: &Vec3, q: &Quat, t: u32) -> GaussianDelta {
        let elapsed = f64::from(t - 1);
        match &self.motion {
            AnalyticMotion::Translation { velocity } => GaussianDelta {
                d_mu: Vec3::from(*velocity) * elapsed,
                ..GaussianDelta::zero()
            },
            AnalyticMotion::Rotation {
                axis,
                center,
                omega,
            } => {
                let rot = rotation(axis, omega * elapsed);
                let c = Vec3::from(*center);
                GaussianDelta {
                    d_mu: rot * (mu - c) + c - mu,
                    d_q: rot.quaternion() * q - q,
                    d_s: Vec3::zeros(),
                }
            }
            AnalyticMotion::Shear {
                axis,
                reference_axis,
                amplitude,
                period,
            } => {
                let mut d_mu = Vec3::zeros();
                let phase = std::f64::consts::TAU * elapsed / period;
                d_mu[*axis] = amplitude * phase.sin() * mu[*reference_axis];
                GaussianDelta {
                    d_mu,
                    ..GaussianDelta::zero()
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvariantViolation("deformation needs at least one frame".into()));
        }
        match &self.motion {
            AnalyticMotion::Rotation { axis, .. } if Vec3::from(*axis).norm() < 1e-12 => {
                Err(Error::InvariantViolation("rotation axis has zero length".into()))
            }
            AnalyticMotion::Shear {
                axis,
                reference_axis,
                period,
                ..
            } if *axis > 2 || *reference_axis > 2 || *period == 0.0 => Err(
                Error::InvariantViolation("shear axes must be 0..=2 and period non-zero".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Rotation by `angle` radians about `axis`.
pub(crate) fn rotation(axis: &[f64; 3], angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vec3::from(*axis)), angle)
}

/// Per-frame deltas for a source cloud, either tabulated or analytic.
#[derive(Debug, Clone, PartialEq)]
pub enum DeformationField {
    Tabulated(TabulatedField),
    Analytic(AnalyticField),
}

impl DeformationField {
    pub fn analytic(n_frames: u32, motion: AnalyticMotion) -> Result<Self> {
        let field = AnalyticField { n_frames, motion };
        field.validate()?;
        Ok(Self::Analytic(field))
    }

    pub fn n_frames(&self) -> u32 {
        match self {
            Self::Tabulated(f) => f.n_frames,
            Self::Analytic(f) => f.n_frames,
        }
    }

    /// Deltas of every Gaussian in `cloud` from frame 1 to frame `t`.
    pub fn deltas(&self, cloud: &GaussianCloud, t: u32) -> Result<Vec<GaussianDelta>> {
        let n_frames = self.n_frames();
        if t == 0 || t > n_frames {
            return Err(Error::FrameOutOfRange { frame: t, n_frames });
        }
        match self {
            Self::Tabulated(f) => {
                if f.count != cloud.len() {
                    return Err(Error::SizeMismatch {
                        expected: f.count,
                        found: cloud.len(),
                    });
                }
                Ok(f.frame(t).to_vec())
            }
            Self::Analytic(f) => {
                if t == 1 {
                    return Ok(vec![GaussianDelta::zero(); cloud.len()]);
                }
                Ok(cloud
                    .iter()
                    .map(|g| f.delta(g.mu(), g.rotation(), t))
                    .collect())
            }
        }
    }

    /// Evaluates the field for every frame of `cloud`.
    pub fn tabulate(&self, cloud: &GaussianCloud) -> Result<TabulatedField> {
        let mut deltas = Vec::with_capacity(self.n_frames() as usize * cloud.len());
        for t in 1..=self.n_frames() {
            deltas.extend(self.deltas(cloud, t)?);
        }
        TabulatedField::new(self.n_frames(), cloud.len(), deltas)
    }
}

fn require_frame_one(cloud: &GaussianCloud) -> Result<()> {
    if cloud.frame() != 1 {
        return Err(Error::InvariantViolation(format!(
            "deformation applies to the frame-1 cloud, got frame {}",
            cloud.frame()
        )));
    }
    Ok(())
}

/// Applies the field to the frame-1 source cloud: additive position,
/// rotation (renormalized) and scale deltas. Opacity and SH are unchanged.
pub fn deform_source(cloud: &GaussianCloud, field: &DeformationField, t: u32) -> Result<GaussianCloud> {
    require_frame_one(cloud)?;
    let deltas = field.deltas(cloud, t)?;
    if t == 1 {
        return cloud.clone().with_frame(1);
    }
    let gaussians = cloud
        .iter()
        .zip(&deltas)
        .map(|(g, d)| {
            let q = g.rotation() + d.d_q;
            g.with_geometry(g.mu() + d.d_mu, q.normalize(), g.scale() + d.d_s)
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianCloud::new(gaussians, cloud.sh_degree(), t)
}

/// Source deltas with the scale delta converted to the ratio
/// `(s + Δs) / s`.
pub fn source_delta(cloud: &GaussianCloud, field: &DeformationField, t: u32) -> Result<Vec<SourceDelta>> {
    require_frame_one(cloud)?;
    let deltas = field.deltas(cloud, t)?;
    cloud
        .iter()
        .zip(&deltas)
        .map(|(g, d)| {
            let s = g.scale();
            if let Some(&bad) = s.iter().find(|&&v| v < 1e-9) {
                return Err(Error::DivisionDegenerate(bad));
            }
            let s_ratio = (s + d.d_s).component_div(s);
            if s_ratio.iter().any(|&r| r <= 0.0) {
                return Err(Error::InvariantViolation(
                    "scale delta drives a scale component non-positive".into(),
                ));
            }
            Ok(SourceDelta {
                d_mu: d.d_mu,
                d_q: d.d_q,
                s_ratio,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian;
    use std::f64::consts::FRAC_PI_2;

    fn cloud(points: &[[f64; 3]], s: f64) -> GaussianCloud {
        let gs = points
            .iter()
            .map(|p| {
                Gaussian::new(Vec3::from(*p), Quat::new(1.0, 0.0, 0.0, 0.0), Vec3::repeat(s), 0.5, vec![[0.1; 3]]).unwrap()
            })
            .collect();
        GaussianCloud::new(gs, 0, 1).unwrap()
    }

    #[test]
    fn translation_ramp_counts_frames_from_one() {
        let c = cloud(&[[0.0, 0.0, 0.0]], 1.0);
        let field = DeformationField::analytic(5, AnalyticMotion::Translation { velocity: [1.0, 0.0, 0.0] }).unwrap();
        let out = deform_source(&c, &field, 3).unwrap();
        assert_eq!(*out.gaussians()[0].mu(), Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(out.frame(), 3);
    }

    #[test]
    fn frame_one_is_identity() {
        let c = cloud(&[[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]], 0.2);
        let field = DeformationField::analytic(
            4,
            AnalyticMotion::Rotation { axis: [0.0, 1.0, 1.0], center: [0.1, 0.2, 0.3], omega: 0.4 },
        )
        .unwrap();
        assert_eq!(deform_source(&c, &field, 1).unwrap(), c);
        let sd = source_delta(&c, &field, 1).unwrap();
        assert!(sd.iter().all(|d| d.d_mu == Vec3::zeros() && d.s_ratio == Vec3::repeat(1.0)));
    }

    #[test]
    fn errors() {
        let c = cloud(&[[0.0; 3]], 1.0);
        let field = DeformationField::analytic(2, AnalyticMotion::Translation { velocity: [1.0, 0.0, 0.0] }).unwrap();
        assert!(matches!(deform_source(&c, &field, 3), Err(Error::FrameOutOfRange { .. })));
        assert!(matches!(deform_source(&c, &field, 0), Err(Error::FrameOutOfRange { .. })));
        let table = TabulatedField::new(2, 2, vec![GaussianDelta::zero(); 4]).unwrap();
        assert!(matches!(
            deform_source(&c, &DeformationField::Tabulated(table), 2),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn scale_ratio() {
        let c = cloud(&[[0.0; 3]], 2.0);
        let mut d = GaussianDelta::zero();
        d.d_s = Vec3::repeat(2.0);
        let table = TabulatedField::new(2, 1, vec![GaussianDelta::zero(), d]).unwrap();
        let sd = source_delta(&c, &DeformationField::Tabulated(table), 2).unwrap();
        assert_eq!(sd[0].s_ratio, Vec3::repeat(2.0));
    }

    #[test]
    fn tabulated_frame_one_must_be_zero() {
        let mut d = GaussianDelta::zero();
        d.d_mu.x = 1e-30;
        assert!(TabulatedField::new(1, 1, vec![d]).is_err());
        assert!(TabulatedField::new(2, 1, vec![GaussianDelta::zero()]).is_err());
    }

    #[test]
    fn quarter_turn() {
        let c = cloud(&[[1.0, 0.0, 0.0]], 1.0);
        let field = DeformationField::analytic(
            2,
            AnalyticMotion::Rotation { axis: [0.0, 0.0, 1.0], center: [0.0; 3], omega: FRAC_PI_2 },
        )
        .unwrap();
        let out = deform_source(&c, &field, 2).unwrap();
        assert!((out.gaussians()[0].mu() - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let expected = rotation(&[0.0, 0.0, 1.0], FRAC_PI_2).into_inner();
        assert!((out.gaussians()[0].rotation() - expected).norm() < 1e-12);
    }
}
