use g4d_core::scene::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::pipeline::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub n_source: usize,
    pub n_edit: usize,
    pub n_lines: usize,
    pub d_mean_source: f64,
    pub d_mean_edit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub iterations: usize,
    pub converged: bool,
    pub marginal_err: f64,
    pub welsch_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub weight_fallbacks: usize,
    /// Neighborhood distance deviation for frames 1..=T.
    pub ndd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub pairs: usize,
    pub masked_pixels: usize,
    pub steps: usize,
    pub initial_l_fore: f64,
    pub final_l_fore: f64,
    pub initial_l_refine: f64,
    pub final_l_refine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Everything a run reports. Apart from `timings`, identical inputs give
/// an identical document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub config: PipelineConfig,
    pub stopped_after: Stage,
    pub n_frames: u32,
    pub n_views: usize,
    pub anchors: Option<AnchorReport>,
    pub matching: Option<MatchReport>,
    pub propagation: Option<PropagationReport>,
    pub refinement: Option<RefineReport>,
    pub warnings: Vec<Warning>,
    pub timings: Vec<StageTiming>,
}

impl PipelineReport {
    pub fn warn(&mut self, stage: Stage, message: impl Into<String>) {
        let message = message.into();
        log::warn!("[{stage}] {message}");
        self.warnings.push(Warning { stage, message });
    }

    pub fn converged(&self) -> bool {
        self.matching.as_ref().is_none_or(|m| m.converged)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
