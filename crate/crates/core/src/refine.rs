//! Appearance refinement guided by color uncertainty.
//!
//! Every scheduled (frame, view) pair gets, once at entry: the frame-1
//! render warped to frame t by the rendered flow, the composited
//! uncertainty, its artifact mask, and a snapshot of the unrefined frame-t
//! render. SH coefficients (shared by all frames) are then optimized so
//! masked pixels match the warped frame-1 render while the rest stays at
//! the snapshot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{warp_frame1, Image, LossTerm, Mask, ShTable, ViewShading, WARP_ALPHA_THRESHOLD};
use crate::render::flow_vectors;
use crate::scene::{Camera, GaussianCloud, PipelineConfig};
use crate::sh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Mask threshold factor on the mean covered uncertainty.
    pub epsilon: f64,
    /// SSIM share of the foreground loss.
    pub eta: f64,
    /// Background share of the total loss.
    pub zeta: f64,
    pub step_size: f64,
    pub momentum: f64,
    pub iters: usize,
    pub max_pairs_per_epoch: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

impl From<&PipelineConfig> for RefineConfig {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            epsilon: c.epsilon,
            eta: c.eta,
            zeta: c.zeta,
            step_size: c.step_size,
            momentum: c.momentum,
            iters: c.refine_iters,
            max_pairs_per_epoch: c.max_pairs_per_epoch,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) || !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::InvalidConfig("eta and zeta must lie in [0, 1]".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("step_size must be positive and momentum in [0, 1)".into()));
        }
        if self.max_pairs_per_epoch == 0 {
            return Err(Error::InvalidConfig("max_pairs_per_epoch must be at least 1".into()));
        }
        Ok(())
    }
}

/// `ξ = 1 − exp(−‖c_t − c_1‖₁)` per Gaussian, where `c_1` and `c_t` are the
/// frame-1 SH colors seen along the viewing rays to the frame-1 and frame-t
/// centers.
pub fn color_uncertainty(cloud1: &GaussianCloud, cloud_t: &GaussianCloud, camera: &Camera) -> Result<Vec<f64>> {
    if cloud1.len() != cloud_t.len() {
        return Err(Error::SizeMismatch {
            expected: cloud1.len(),
            found: cloud_t.len(),
        });
    }
    Ok(cloud1
        .iter()
        .zip(cloud_t)
        .map(|(g1, gt)| {
            let c1 = sh::eval(g1.sh(), &camera.view_direction(g1.mu()));
            let ct = sh::eval(g1.sh(), &camera.view_direction(gt.mu()));
            let diff: f64 = c1.iter().zip(&ct).map(|(a, b)| (a - b).abs()).sum();
            1.0 - (-diff).exp()
        })
        .collect())
}

/// Pixels whose uncertainty strictly exceeds `epsilon` times the mean
/// uncertainty over covered pixels (accumulated alpha above 0.01).
pub fn artifact_mask(u: &Image, alpha: &Image, epsilon: f64) -> Result<Mask> {
    if !u.same_shape(alpha) || u.channels() != 1 {
        return Err(Error::DimensionMismatch("uncertainty and alpha maps must be single-channel and equal in size".into()));
    }
    let covered: Vec<f64> = u
        .data()
        .iter()
        .zip(alpha.data())
        .filter(|(_, a)| **a > WARP_ALPHA_THRESHOLD)
        .map(|(v, _)| *v)
        .collect();
    if covered.is_empty() {
        return Ok(Mask::filled(u.width(), u.height(), false));
    }
    // offsetting by the minimum makes the mean of a constant map exact
    let min = covered.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = min + covered.iter().map(|v| v - min).sum::<f64>() / covered.len() as f64;
    let threshold = epsilon * mean;
    Mask::new(u.width(), u.height(), u.data().iter().map(|&v| v > threshold).collect())
}

/// Views are all visited; frames are taken from `T` downward with a stride
/// chosen so at most `max_pairs` pairs are visited (at least one frame).
/// Frame 1 carries no supervision and is never scheduled.
pub fn schedule(n_frames: u32, n_views: usize, max_pairs: usize) -> Vec<(u32, usize)> {
    if n_frames < 2 || n_views == 0 {
        return Vec::new();
    }
    let candidates = (n_frames - 1) as usize;
    let per_epoch = (max_pairs / n_views).max(1);
    let stride = candidates.div_ceil(per_epoch);
    let mut frames: Vec<u32> = (0..)
        .map(|k| n_frames as i64 - (k * stride) as i64)
        .take_while(|&t| t >= 2)
        .map(|t| t as u32)
        .collect();
    frames.sort_unstable();
    frames
        .into_iter()
        .flat_map(|t| (0..n_views).map(move |v| (t, v)))
        .collect()
}

/// Fixed supervision for one (frame, view) pair.
#[derive(Debug, Clone)]
pub struct PairMaps {
    pub t: u32,
    pub v: usize,
    pub flow: Image,
    pub warp: Image,
    pub uncertainty: Image,
    pub mask: Mask,
    /// Unrefined frame-t render.
    pub original: Image,
}

struct Pair {
    maps: PairMaps,
    background: Mask,
    view: ViewShading,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub t: u32,
    pub v: usize,
    pub l_fore: f64,
    pub l_back: f64,
    pub l_refine: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    /// Input frames with refined SH; geometry and opacity untouched.
    pub frames: Vec<GaussianCloud>,
    /// Losses per step and pair before each update, then one final
    /// evaluation at `step = iters`.
    pub trace: Vec<LossRecord>,
    pub maps: Vec<PairMaps>,
    pub notices: Vec<String>,
}

impl RefineOutcome {
    /// Sum of a loss column over the pairs of one step.
    pub fn step_total(&self, step: usize, f: impl Fn(&LossRecord) -> f64) -> f64 {
        self.trace.iter().filter(|r| r.step == step).map(f).sum()
    }
}

fn prepare_pair(frame1: &GaussianCloud, frame_t: &GaussianCloud, camera: &Camera, t: u32, v: usize, epsilon: f64) -> Result<Pair> {
    let table = ShTable::from_cloud(frame_t);
    let view = ViewShading::new(frame_t, camera);
    let render1 = ViewShading::new(frame1, camera).render(&ShTable::from_cloud(frame1))?;
    let coverage = view.coverage();
    let flow = coverage.blend(&flow_vectors(frame1, frame_t, camera)?);
    let alpha = coverage.alpha_image();
    let warp = warp_frame1(&render1, &flow, &alpha)?;
    let uncertainty = coverage.blend_scalar(&color_uncertainty(frame1, frame_t, camera)?);
    let mask = artifact_mask(&uncertainty, &alpha, epsilon)?;
    let original = view.render(&table)?;
    Ok(Pair {
        background: mask.invert(),
        maps: PairMaps {
            t,
            v,
            flow,
            warp,
            uncertainty,
            mask,
            original,
        },
        view,
    })
}

/// Refines the SH shared by `frames` (index-aligned clouds for t = 1..T).
pub fn refine(frames: &[GaussianCloud], cameras: &[Camera], config: &RefineConfig) -> Result<RefineOutcome> {
    config.validate()?;
    let first = frames.first().ok_or(Error::EmptyInput("refinement needs at least one frame"))?;
    for f in frames {
        if f.len() != first.len() || f.sh_degree() != first.sh_degree() {
            return Err(Error::SizeMismatch {
                expected: first.len(),
                found: f.len(),
            });
        }
    }
    let sched = schedule(frames.len() as u32, cameras.len(), config.max_pairs_per_epoch);
    let pairs: Vec<Pair> = sched
        .par_iter()
        .map(|&(t, v)| prepare_pair(first, &frames[t as usize - 1], &cameras[v], t, v, config.epsilon))
        .collect::<Result<_>>()?;

    let mut notices = Vec::new();
    let unchanged = |notices: Vec<String>, pairs: Vec<Pair>| RefineOutcome {
        frames: frames.to_vec(),
        trace: Vec::new(),
        maps: pairs.into_iter().map(|p| p.maps).collect(),
        notices,
    };
    if pairs.iter().all(|p| p.maps.mask.is_empty()) {
        notices.push("artifact masks are empty for every scheduled frame and view; refinement skipped".into());
        log::info!("{}", notices[0]);
        return Ok(unchanged(notices, pairs));
    }
    if pairs.len() > config.max_pairs_per_epoch {
        notices.push(format!("{} views exceed max_pairs_per_epoch; visiting {} pairs per step", cameras.len(), pairs.len()));
    }

    let mut params = ShTable::from_cloud(first);
    let mut velocity = params.zeros_like();
    let mut trace = Vec::with_capacity((config.iters + 1) * pairs.len());
    let fore_w = 1.0 - config.zeta;
    let back_w = config.zeta;
    for step in 0..=config.iters {
        let evaluated: Vec<(f64, f64, ShTable)> = pairs
            .par_iter()
            .map(|p| {
                let mut g = params.zeros_like();
                let terms = [
                    LossTerm { target: &p.maps.warp, mask: &p.maps.mask, eta: config.eta, scale: fore_w },
                    LossTerm { target: &p.maps.original, mask: &p.background, eta: 0.0, scale: back_w },
                ];
                let l = p.view.accumulate_terms(&params, &terms, &mut g)?;
                Ok((l[0], l[1], g))
            })
            .collect::<Result<_>>()?;

        let mut grad = params.zeros_like();
        for (p, (l_fore, l_back, g)) in pairs.iter().zip(&evaluated) {
            let l_refine = fore_w * l_fore + back_w * l_back;
            if !l_refine.is_finite() {
                log::error!(
                    "non-finite loss at step {step}, frame {}, view {}: L_fore {l_fore}, L_back {l_back}, parameters finite: {}",
                    p.maps.t,
                    p.maps.v,
                    params.is_finite()
                );
                return Err(Error::NonFiniteLoss { step, frame: p.maps.t, view: p.maps.v });
            }
            trace.push(LossRecord { step, t: p.maps.t, v: p.maps.v, l_fore: *l_fore, l_back: *l_back, l_refine });
            for (acc, gv) in grad.values_mut().iter_mut().zip(g.values()) {
                for c in 0..3 {
                    acc[c] += gv[c];
                }
            }
        }
        if step == config.iters {
            break;
        }
        for ((p, v), g) in params.values_mut().iter_mut().zip(velocity.values_mut()).zip(grad.values()) {
            for c in 0..3 {
                v[c] = config.momentum * v[c] + g[c];
                p[c] -= config.step_size * v[c];
            }
        }
    }

    let frames = frames.iter().map(|f| params.apply(f)).collect::<Result<Vec<_>>>()?;
    Ok(RefineOutcome {
        frames,
        trace,
        maps: pairs.into_iter().map(|p| p.maps).collect(),
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Quat, Vec3};
    use crate::scene::{CameraModel, Gaussian};
    use proptest::prelude::*;

    fn camera() -> Camera {
        Camera::look_at(
            CameraModel::Pinhole,
            Vec3::new(0.0, 0.0, -4.0),
            Vec3::zeros(),
            Vec3::new(0.0, -1.0, 0.0),
            [24.0, 24.0, 11.5, 11.5],
            (24, 24),
            (0.1, 100.0),
        )
        .unwrap()
    }

    fn gaussian(mu: Vec3, sh: Vec<[f64; 3]>) -> Gaussian {
        Gaussian::new(mu, Quat::new(1.0, 0.0, 0.0, 0.0), Vec3::repeat(0.2), 0.8, sh).unwrap()
    }

    fn degree1(dc: f64, band: f64) -> Vec<[f64; 3]> {
        vec![[dc; 3], [band; 3], [band; 3], [band; 3]]
    }

    #[test]
    fn uncertainty_examples() {
        let cam = camera();
        let c1 = GaussianCloud::new(vec![gaussian(Vec3::zeros(), degree1(1.0, 0.5))], 1, 1).unwrap();
        assert_eq!(color_uncertainty(&c1, &c1, &cam).unwrap(), vec![0.0]);
        let moved = GaussianCloud::new(vec![gaussian(Vec3::new(1.0, 0.5, 0.0), degree1(1.0, 0.5))], 1, 2).unwrap();
        let xi = color_uncertainty(&c1, &moved, &cam).unwrap()[0];
        assert!(xi > 0.0 && xi < 1.0);
        // view-independent color never changes
        let flat = |mu| GaussianCloud::new(vec![gaussian(mu, vec![[1.0; 3]])], 0, 1).unwrap();
        assert_eq!(color_uncertainty(&flat(Vec3::zeros()), &flat(Vec3::new(1.0, 0.5, 0.0)), &cam).unwrap(), vec![0.0]);
        // orthographic view direction is constant
        let ortho = Camera::new(CameraModel::Orthographic, crate::math::Mat3::identity(), Vec3::new(0.0, 0.0, 4.0), [10.0, 10.0, 12.0, 12.0], (24, 24), (0.1, 10.0)).unwrap();
        assert_eq!(color_uncertainty(&c1, &moved, &ortho).unwrap(), vec![0.0]);
        assert!(matches!(color_uncertainty(&c1, &GaussianCloud::empty(1), &cam), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn uncertainty_of_ln2_is_half() {
        // C_diff = ln 2 → ξ = 1 − 1/2
        assert!((1.0 - (-(2f64.ln())).exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mask_examples() {
        let alpha = Image::from_fn(10, 10, 1, |x, _, _| if x < 8 { 1.0 } else { 0.0 });
        let zero = Image::new(10, 10, 1);
        assert!(artifact_mask(&zero, &alpha, 1.0).unwrap().is_empty());
        for c in [0.1, 0.3, 0.4, 0.7, 1.0 / 3.0] {
            let uniform = Image::from_fn(10, 10, 1, |x, _, _| if x < 8 { c } else { 0.0 });
            assert!(artifact_mask(&uniform, &alpha, 1.0).unwrap().is_empty());
        }
        // 10% of covered pixels at 1
        let sparse = Image::from_fn(10, 10, 1, |x, y, _| if x < 8 && (y * 8 + x) % 10 == 0 { 1.0 } else { 0.0 });
        let m = artifact_mask(&sparse, &alpha, 1.0).unwrap();
        assert_eq!(m.count(), 8);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(m.get(x, y), sparse.get(x, y, 0) == 1.0);
            }
        }
        assert!(artifact_mask(&zero, &Image::new(10, 10, 1), 1.0).unwrap().is_empty());
    }

    #[test]
    fn schedule_shapes() {
        assert!(schedule(1, 4, 64).is_empty());
        let s = schedule(10, 8, 64);
        let frames: Vec<u32> = s.iter().map(|p| p.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        assert_eq!(frames, vec![2, 4, 6, 8, 10]);
        assert_eq!(s.len(), 40);
        assert_eq!(schedule(5, 2, 64).len(), 8);
        assert_eq!(schedule(5, 100, 64).len(), 100);
    }

    #[test]
    fn static_scene_is_identity() {
        let cloud = GaussianCloud::new(vec![gaussian(Vec3::zeros(), degree1(1.0, 0.3)), gaussian(Vec3::new(0.5, 0.0, 0.5), degree1(0.5, -0.2))], 1, 1).unwrap();
        let frames: Vec<GaussianCloud> = (1..=4).map(|t| cloud.clone().with_frame(t).unwrap()).collect();
        let out = refine(&frames, &[camera()], &RefineConfig::default()).unwrap();
        assert_eq!(out.frames, frames);
        assert_eq!(out.notices.len(), 1);
        assert!(out.maps.iter().all(|m| m.flow.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn pure_background_weight_keeps_sh() {
        let cloud = GaussianCloud::new(vec![gaussian(Vec3::zeros(), degree1(1.0, 0.4))], 1, 1).unwrap();
        let moved = GaussianCloud::new(vec![gaussian(Vec3::new(0.4, 0.2, 0.0), degree1(1.0, 0.4))], 1, 2).unwrap();
        let config = RefineConfig { zeta: 1.0, iters: 5, ..RefineConfig::default() };
        let out = refine(&[cloud.clone(), moved.clone()], &[camera()], &config).unwrap();
        assert!(!out.maps[0].mask.is_empty());
        assert_eq!(out.frames, vec![cloud, moved]);
        assert!(out.trace.iter().all(|r| r.l_back == 0.0));
    }

    #[test]
    fn geometry_is_untouched_and_loss_drops() {
        let cloud = GaussianCloud::new(vec![gaussian(Vec3::zeros(), degree1(1.2, 0.6)), gaussian(Vec3::new(-0.5, 0.3, 0.4), degree1(0.8, -0.4))], 1, 1).unwrap();
        let moved = GaussianCloud::new(
            vec![gaussian(Vec3::new(0.3, 0.1, 0.0), degree1(1.2, 0.6)), gaussian(Vec3::new(-0.2, 0.4, 0.4), degree1(0.8, -0.4))],
            1,
            2,
        )
        .unwrap();
        let config = RefineConfig { iters: 30, step_size: 0.02, ..RefineConfig::default() };
        let out = refine(&[cloud.clone(), moved.clone()], &[camera()], &config).unwrap();
        for (a, b) in out.frames.iter().zip([&cloud, &moved]) {
            for (ga, gb) in a.iter().zip(b.iter()) {
                assert_eq!(ga.mu(), gb.mu());
                assert_eq!(ga.rotation(), gb.rotation());
                assert_eq!(ga.scale(), gb.scale());
                assert_eq!(ga.opacity(), gb.opacity());
            }
        }
        let first = out.step_total(0, |r| r.l_refine);
        let last = out.step_total(30, |r| r.l_refine);
        assert!(last < first, "{first} → {last}");
    }

    proptest! {
        #[test]
        fn mask_shrinks_as_epsilon_grows(values in prop::collection::vec(0.0f64..1.0, 36), e1 in 0.5f64..2.0, e2 in 0.5f64..2.0) {
            let u = Image::from_data(6, 6, 1, values).unwrap();
            let alpha = Image::from_fn(6, 6, 1, |_, _, _| 1.0);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(artifact_mask(&u, &alpha, hi).unwrap().is_subset_of(&artifact_mask(&u, &alpha, lo).unwrap()));
        }

        #[test]
        fn uncertainty_stays_below_one(dx in -2.0f64..2.0, dy in -2.0f64..2.0, band in -3.0f64..3.0) {
            let c1 = GaussianCloud::new(vec![gaussian(Vec3::zeros(), degree1(1.0, band))], 1, 1).unwrap();
            let ct = GaussianCloud::new(vec![gaussian(Vec3::new(dx, dy, 0.0), degree1(1.0, band))], 1, 2).unwrap();
            let xi = color_uncertainty(&c1, &ct, &camera()).unwrap()[0];
            prop_assert!((0.0..1.0).contains(&xi));
        }
    }
}
