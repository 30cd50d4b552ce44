use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::gaussian::{sh_coeff_count, Gaussian};

/// Ordered Gaussians sharing one SH degree, tagged with a 1-based frame.
///
/// Index identity is stable: every operation that returns a new cloud keeps
/// Gaussian `i` at position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    gaussians: Vec<Gaussian>,
    sh_degree: u8,
    frame: u32,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian>, sh_degree: u8, frame: u32) -> Result<Self> {
        if sh_degree > 3 {
            return Err(Error::InvariantViolation(format!(
                "SH degree {sh_degree} exceeds 3"
            )));
        }
        if frame == 0 {
            return Err(Error::InvariantViolation("frame indices are 1-based".into()));
        }
        let expected = sh_coeff_count(sh_degree);
        if let Some((i, g)) = gaussians
            .iter()
            .enumerate()
            .find(|(_, g)| g.sh().len() != expected)
        {
            return Err(Error::InvariantViolation(format!(
                "Gaussian {i} has {} SH coefficients, cloud degree {sh_degree} needs {expected}",
                g.sh().len()
            )));
        }
        Ok(Self {
            gaussians,
            sh_degree,
            frame,
        })
    }

    pub fn empty(sh_degree: u8) -> Self {
        Self {
            gaussians: Vec::new(),
            sh_degree: sh_degree.min(3),
            frame: 1,
        }
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn into_gaussians(self) -> Vec<Gaussian> {
        self.gaussians
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn sh_count(&self) -> usize {
        sh_coeff_count(self.sh_degree)
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Gaussian> {
        self.gaussians.iter()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.gaussians.iter().map(|g| *g.mu()).collect()
    }

    pub fn with_frame(mut self, frame: u32) -> Result<Self> {
        if frame == 0 {
            return Err(Error::InvariantViolation("frame indices are 1-based".into()));
        }
        self.frame = frame;
        Ok(self)
    }

    /// Copy of this cloud with every Gaussian's SH coefficients replaced.
    pub fn with_sh(&self, sh: &[Vec<[f64; 3]>]) -> Result<Self> {
        if sh.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found: sh.len(),
            });
        }
        let gaussians = self
            .gaussians
            .iter()
            .zip(sh)
            .map(|(g, c)| g.with_sh(c.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gaussians,
            ..self.clone()
        })
    }
}

impl<'a> IntoIterator for &'a GaussianCloud {
    type Item = &'a Gaussian;
    type IntoIter = std::slice::Iter<'a, Gaussian>;

    fn into_iter(self) -> Self::IntoIter {
        self.gaussians.iter()
    }
}
