//! Transfer of source deformations onto edited Gaussians through matched
//! anchors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchor::{
    bounding_sphere, build_neighborhoods, extract_anchors, sample_lines, AnchorSet, BoundingSphere,
};
use crate::error::{Error, Result};
use crate::math::{quat_dot, Quat, Vec3};
use crate::scene::{source_delta, DeformationField, EditSession, GaussianCloud, PipelineConfig, SourceDelta};
use crate::spatial::PointGrid;
use crate::uot::{extract_correspondence, sinkhorn_uot, welsch_cost, CorrespondenceMap, CostMatrix, SinkhornConfig, TransportPlan};

/// Total weight at or below which an edited Gaussian falls back to its
/// nearest source Gaussian.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;

/// Seed for one pipeline stage, derived from the run seed by hashing.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Anchors of both clouds, built from one bounding sphere and line set.
#[derive(Debug, Clone)]
pub struct AnchorPair {
    pub sphere: BoundingSphere,
    pub n_lines: usize,
    pub src: AnchorSet,
    pub edit: AnchorSet,
}

pub fn build_anchor_pair(source: &GaussianCloud, edited: &GaussianCloud, config: &PipelineConfig) -> Result<AnchorPair> {
    let src_pts = source.positions();
    let edit_pts = edited.positions();
    if src_pts.is_empty() || edit_pts.is_empty() {
        return Err(Error::EmptyInput("anchor extraction needs nonempty clouds"));
    }
    let all: Vec<Vec3> = src_pts.iter().chain(&edit_pts).copied().collect();
    let sphere = bounding_sphere(&all)?;
    let lines = sample_lines(&sphere, config.n_rays, stage_seed(config.seed, "anchors"));
    let src = extract_anchors(&src_pts, &lines, &build_neighborhoods(&src_pts, config.k)?)?;
    let edit = extract_anchors(&edit_pts, &lines, &build_neighborhoods(&edit_pts, config.k)?)?;
    log::info!("anchors: {} source, {} edited from {} lines", src.len(), edit.len(), lines.len());
    Ok(AnchorPair {
        sphere,
        n_lines: lines.len(),
        src,
        edit,
    })
}

#[derive(Debug, Clone)]
pub struct Matching {
    pub cost: CostMatrix,
    pub plan: TransportPlan,
    pub corr: CorrespondenceMap,
}

pub fn match_anchors(src: &AnchorSet, edit: &AnchorSet, config: &SinkhornConfig) -> Result<Matching> {
    let cost = welsch_cost(src.positions(), edit.positions(), config.gamma)?;
    let plan = sinkhorn_uot(&cost.d, config)?;
    let corr = extract_correspondence(&plan.p);
    Ok(Matching { cost, plan, corr })
}

/// Contributing source Gaussians and their weights for every edited
/// Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable {
    sources: Vec<Vec<u32>>,
    weights: Vec<Vec<f64>>,
    fallbacks: Vec<usize>,
}

impl InfluenceTable {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self, g: usize) -> &[u32] {
        &self.sources[g]
    }

    pub fn weights(&self, g: usize) -> &[f64] {
        &self.weights[g]
    }

    /// Edited Gaussians whose total weight was degenerate and which copy
    /// their nearest source Gaussian instead.
    pub fn fallbacks(&self) -> &[usize] {
        &self.fallbacks
    }
}

/// Weights `σ′ · exp(−½ (μ′ − μ)ᵀ Σ′⁻¹ (μ′ − μ))` over the members of the
/// source anchors matched to each edited Gaussian's anchors.
pub fn build_influence(
    edited: &GaussianCloud,
    source: &GaussianCloud,
    anchors_src: &AnchorSet,
    anchors_edit: &AnchorSet,
    corr: &CorrespondenceMap,
) -> Result<InfluenceTable> {
    if anchors_edit.gaussian_to_anchors().len() != edited.len() {
        return Err(Error::SizeMismatch {
            expected: edited.len(),
            found: anchors_edit.gaussian_to_anchors().len(),
        });
    }
    if anchors_src.gaussian_to_anchors().len() != source.len() {
        return Err(Error::SizeMismatch {
            expected: source.len(),
            found: anchors_src.gaussian_to_anchors().len(),
        });
    }
    if corr.corr.len() != anchors_edit.len() {
        return Err(Error::SizeMismatch {
            expected: anchors_edit.len(),
            found: corr.corr.len(),
        });
    }
    if let Some(&i) = corr.corr.iter().find(|&&i| i >= anchors_src.len()) {
        return Err(Error::InvariantViolation(format!("correspondence refers to source anchor {i}")));
    }
    let inv_cov: Vec<_> = source.iter().map(|g| g.inverse_covariance()).collect();
    let src_positions = source.positions();
    let grid = PointGrid::new(&src_positions);

    let rows: Vec<(Vec<u32>, Vec<f64>, bool)> = edited
        .gaussians()
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            let mut ids: Vec<u32> = anchors_edit.gaussian_to_anchors()[gi]
                .iter()
                .flat_map(|&j| anchors_src.members(corr.corr[j]).iter().map(|&s| s as u32))
                .collect();
            ids.sort_unstable();
            ids.dedup();
            let w: Vec<f64> = ids
                .iter()
                .map(|&s| {
                    let src = &source.gaussians()[s as usize];
                    let d = src.mu() - g.mu();
                    src.opacity() * (-0.5 * crate::math::mahalanobis_sq(&inv_cov[s as usize], &d)).exp()
                })
                .collect();
            if w.iter().sum::<f64>() > DEGENERATE_WEIGHT {
                (ids, w, false)
            } else {
                let (nearest, _) = grid.nearest(g.mu()).expect("nonempty source");
                (vec![nearest as u32], vec![1.0], true)
            }
        })
        .collect();

    let fallbacks: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.2).map(|(i, _)| i).collect();
    if !fallbacks.is_empty() {
        log::warn!("{} edited Gaussians had degenerate influence weights and copy their nearest source Gaussian", fallbacks.len());
    }
    let (sources, weights): (Vec<_>, Vec<_>) = rows.into_iter().map(|(s, w, _)| (s, w)).unzip();
    Ok(InfluenceTable {
        sources,
        weights,
        fallbacks,
    })
}

/// Weighted average of contributor deltas: arithmetic for position and
/// (hemisphere-aligned) quaternion deltas, geometric for scale ratios.
pub fn aggregate_deformation(influence: &InfluenceTable, deltas: &[SourceDelta]) -> Result<Vec<SourceDelta>> {
    if let Some(&bad) = influence.sources.iter().flatten().find(|&&s| s as usize >= deltas.len()) {
        return Err(Error::SizeMismatch {
            expected: bad as usize + 1,
            found: deltas.len(),
        });
    }
    Ok(influence
        .sources
        .par_iter()
        .zip(&influence.weights)
        .map(|(ids, w)| aggregate_one(ids, w, deltas))
        .collect())
}

fn aggregate_one(ids: &[u32], w: &[f64], deltas: &[SourceDelta]) -> SourceDelta {
    let total: f64 = w.iter().sum();
    let dominant = (0..w.len()).fold(0, |best, k| if w[k] > w[best] { k } else { best });
    let reference = deltas[ids[dominant] as usize].d_q;
    let mut d_mu = Vec3::zeros();
    let mut d_q = Quat::new(0.0, 0.0, 0.0, 0.0);
    let mut log_s = Vec3::zeros();
    for (&s, &wk) in ids.iter().zip(w) {
        let d = &deltas[s as usize];
        d_mu += d.d_mu * wk;
        let sign = if quat_dot(&d.d_q, &reference) < 0.0 { -wk } else { wk };
        d_q += d.d_q * sign;
        log_s += d.s_ratio.map(f64::ln) * wk;
    }
    SourceDelta {
        d_mu: d_mu / total,
        d_q: d_q / total,
        s_ratio: (log_s / total).map(f64::exp),
    }
}

/// Applies aggregated deltas to frame-1 edited Gaussians; opacity and SH
/// are carried over unchanged.
pub fn apply_deltas(edited: &GaussianCloud, deltas: &[SourceDelta], t: u32) -> Result<GaussianCloud> {
    if deltas.len() != edited.len() {
        return Err(Error::SizeMismatch {
            expected: edited.len(),
            found: deltas.len(),
        });
    }
    let gaussians = edited
        .gaussians()
        .par_iter()
        .zip(deltas)
        .map(|(g, d)| {
            let q = g.rotation() + d.d_q;
            if q.norm() < 1e-12 {
                return Err(Error::InvariantViolation("propagated quaternion vanished".into()));
            }
            g.with_geometry(g.mu() + d.d_mu, q.normalize(), g.scale().component_mul(&d.s_ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianCloud::new(gaussians, edited.sh_degree(), t)
}

/// Mean relative change of distances from every anchor to its `k_nn`
/// nearest frame-1 anchors.
pub fn neighborhood_distance_deviation(at1: &[Vec3], at_t: &[Vec3], k_nn: usize) -> Result<f64> {
    if at1.len() != at_t.len() {
        return Err(Error::SizeMismatch {
            expected: at1.len(),
            found: at_t.len(),
        });
    }
    if k_nn == 0 {
        return Err(Error::InvalidConfig("k_nn must be at least 1".into()));
    }
    if at1.len() < 2 {
        return Ok(0.0);
    }
    let grid = PointGrid::new(at1);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, p) in at1.iter().enumerate() {
        for (b, d2) in grid.knn(p, k_nn + 1).into_iter().filter(|&(b, _)| b != a).take(k_nn) {
            let d1 = d2.sqrt();
            let dt = (at_t[a] - at_t[b]).norm();
            sum += (dt - d1).abs() / d1.max(1e-9);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Everything produced by motion transfer.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub frames: Vec<GaussianCloud>,
    pub anchors: AnchorPair,
    pub matching: Matching,
    pub influence: InfluenceTable,
    /// NDD of the edited anchors per frame, starting at frame 1.
    pub ndd: Vec<f64>,
}

/// Per-frame summary suitable for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSummary {
    pub n_source_anchors: usize,
    pub n_edit_anchors: usize,
    pub n_lines: usize,
    pub sinkhorn_iterations: usize,
    pub sinkhorn_converged: bool,
    pub marginal_err: f64,
    pub weight_fallbacks: usize,
    pub ndd: Vec<f64>,
}

impl Propagation {
    pub fn summary(&self) -> PropagationSummary {
        PropagationSummary {
            n_source_anchors: self.anchors.src.len(),
            n_edit_anchors: self.anchors.edit.len(),
            n_lines: self.anchors.n_lines,
            sinkhorn_iterations: self.matching.plan.iterations,
            sinkhorn_converged: self.matching.plan.converged,
            marginal_err: self.matching.plan.marginal_err,
            weight_fallbacks: self.influence.fallbacks().len(),
            ndd: self.ndd.clone(),
        }
    }
}

/// Propagates frames `1..=T` with precomputed anchors and matching.
pub fn propagate_with(
    source: &GaussianCloud,
    edited: &GaussianCloud,
    field: &DeformationField,
    anchors: AnchorPair,
    matching: Matching,
    ndd_k: usize,
) -> Result<Propagation> {
    let influence = build_influence(edited, source, &anchors.src, &anchors.edit, &matching.corr)?;
    let edit_at1 = anchors.edit.positions_at(&edited.positions())?;
    let mut frames = vec![edited.clone().with_frame(1)?];
    let mut ndd = vec![0.0];
    for t in 2..=field.n_frames() {
        let deltas = aggregate_deformation(&influence, &source_delta(source, field, t)?)?;
        let cloud = apply_deltas(edited, &deltas, t)?;
        let at_t = anchors.edit.positions_at(&cloud.positions())?;
        ndd.push(neighborhood_distance_deviation(&edit_at1, &at_t, ndd_k)?);
        frames.push(cloud);
    }
    Ok(Propagation {
        frames,
        anchors,
        matching,
        influence,
        ndd,
    })
}

/// Full motion transfer for a session: anchors, matching, aggregation.
pub fn propagate_sequence(session: &EditSession) -> Result<Propagation> {
    let c = &session.config;
    let anchors = build_anchor_pair(&session.source_cloud, &session.edited_cloud, c)?;
    let matching = match_anchors(&anchors.src, &anchors.edit, &SinkhornConfig::from(c))?;
    propagate_with(&session.source_cloud, &session.edited_cloud, &session.deformation, anchors, matching, c.ndd_k)
}
