use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::camera::Camera;
use crate::scene::cloud::GaussianCloud;
use crate::scene::deformation::DeformationField;
use crate::scene::io;

/// Hyperparameters for every pipeline stage. Missing keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Neighbors per anchor neighborhood.
    pub k: usize,
    /// Lines sampled on the shared bounding sphere.
    pub n_rays: usize,
    /// Welsch bandwidth factor, β = γ · median anchor distance.
    pub gamma: f64,
    /// Entropy weight.
    pub lambda0: f64,
    /// KL weight on the source marginal.
    pub lambda1: f64,
    /// KL weight on the edit marginal.
    pub lambda2: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iters: usize,
    /// Artifact mask threshold factor.
    pub epsilon: f64,
    /// SSIM share of the foreground loss.
    pub eta: f64,
    /// Background share of the refinement loss.
    pub zeta: f64,
    pub step_size: f64,
    pub momentum: f64,
    pub refine_iters: usize,
    /// Upper bound on (frame, view) pairs visited per refinement step.
    pub max_pairs_per_epoch: usize,
    /// Neighbors per anchor in the neighborhood distance deviation.
    pub ndd_k: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 2,
            n_rays: 300_000,
            gamma: 0.05,
            lambda0: 0.1,
            lambda1: 1.0,
            lambda2: 1.0,
            sinkhorn_tol: 1e-8,
            sinkhorn_max_iters: 2000,
            epsilon: 1.0,
            eta: 0.2,
            zeta: 0.3,
            step_size: 0.01,
            momentum: 0.9,
            refine_iters: 200,
            max_pairs_per_epoch: 64,
            ndd_k: 5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.n_rays == 0 {
            return bad("n_rays must be at least 1");
        }
        if !(self.gamma > 0.0 && self.lambda0 > 0.0 && self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return bad("gamma and lambda0..2 must be positive");
        }
        if !(self.sinkhorn_tol > 0.0) || self.sinkhorn_max_iters == 0 {
            return bad("sinkhorn_tol must be positive and sinkhorn_max_iters non-zero");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.eta) || !(0.0..=1.0).contains(&self.zeta) {
            return bad("eta and zeta must lie in [0, 1]");
        }
        if !(self.step_size > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("step_size must be positive and momentum in [0, 1)");
        }
        if self.max_pairs_per_epoch == 0 || self.ndd_k == 0 {
            return bad("max_pairs_per_epoch and ndd_k must be at least 1");
        }
        if !(0.5..=2.0).contains(&self.epsilon) {
            log::warn!("epsilon {} lies outside the usual [0.5, 2.0] range", self.epsilon);
        }
        Ok(())
    }
}

/// The JSON session document: input paths (relative to the document),
/// cameras and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub source_cloud: PathBuf,
    pub edited_cloud: PathBuf,
    pub deformation: PathBuf,
    #[serde(default)]
    pub cameras: Vec<Camera>,
    #[serde(default)]
    pub params: PipelineConfig,
}

impl SessionFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let file: SessionFile = serde_json::from_slice(bytes)?;
        file.params.validate()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::file(path, e))
    }
}

/// Inputs of one edit propagation run.
#[derive(Debug, Clone)]
pub struct EditSession {
    pub source_cloud: GaussianCloud,
    pub edited_cloud: GaussianCloud,
    pub deformation: DeformationField,
    pub cameras: Vec<Camera>,
    pub config: PipelineConfig,
}

impl EditSession {
    pub fn new(
        source_cloud: GaussianCloud,
        edited_cloud: GaussianCloud,
        deformation: DeformationField,
        cameras: Vec<Camera>,
        config: PipelineConfig,
    ) -> Result<Self> {
        if source_cloud.frame() != 1 || edited_cloud.frame() != 1 {
            return Err(Error::InvariantViolation(
                "source and edited clouds must both be at frame 1".into(),
            ));
        }
        if let DeformationField::Tabulated(t) = &deformation {
            if t.count() != source_cloud.len() {
                return Err(Error::SizeMismatch {
                    expected: source_cloud.len(),
                    found: t.count(),
                });
            }
        }
        config.validate()?;
        Ok(Self {
            source_cloud,
            edited_cloud,
            deformation,
            cameras,
            config,
        })
    }

    /// Loads a session document and every file it references.
    pub fn load(config_path: &Path) -> Result<Self> {
        let file = SessionFile::read(config_path)?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        let source = io::load_cloud(&base.join(&file.source_cloud))?;
        let edited = io::load_cloud(&base.join(&file.edited_cloud))?;
        let field = io::load_deformation(&base.join(&file.deformation))?;
        Self::new(
            source,
            edited,
            DeformationField::Tabulated(field),
            file.cameras,
            file.params,
        )
    }

    pub fn n_frames(&self) -> u32 {
        self.deformation.n_frames()
    }
}
