use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use g4d_core::math::{round_f32, round_vec3, Quat, Vec3};
use g4d_core::scene::io::{save_cloud, save_deformation};
use g4d_core::scene::{
    AnalyticMotion, Camera, CameraModel, DeformationField, EditSession, Gaussian, GaussianCloud, GaussianDelta,
    PipelineConfig, SessionFile, TabulatedField,
};
use g4d_core::sh;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::reference::rotate_about;

/// Standard deviation of the clone jitter, per coordinate.
pub const CLONE_JITTER: f64 = 0.01;

/// A generated test scene with its expected answer.
#[derive(Debug, Clone)]
pub struct OracleScene {
    pub tag: String,
    pub source: GaussianCloud,
    pub edited: GaussianCloud,
    /// Edited cloud without the deliberate corruption, when there is one.
    pub clean: Option<GaussianCloud>,
    pub field: DeformationField,
    pub cameras: Vec<Camera>,
    /// `expected_positions[t - 1][i]` is where edited Gaussian `i` should be
    /// at frame `t`.
    pub expected_positions: Vec<Vec<Vec3>>,
    /// `(edited index, source index)` for every cloned Gaussian.
    pub clone_parents: Vec<(usize, usize)>,
    pub config: PipelineConfig,
}

impl OracleScene {
    pub fn n_frames(&self) -> u32 {
        self.field.n_frames()
    }

    pub fn session(&self) -> g4d_core::Result<EditSession> {
        EditSession::new(
            self.source.clone(),
            self.edited.clone(),
            self.field.clone(),
            self.cameras.clone(),
            self.config.clone(),
        )
    }

    /// Writes the scene in the standard file formats and returns the
    /// session document path. The field is tabulated at f32 precision.
    pub fn write(&self, dir: &Path) -> g4d_core::Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| g4d_core::Error::file(dir, e))?;
        save_cloud(&dir.join("source.g4dc"), &self.source)?;
        save_cloud(&dir.join("edited.g4dc"), &self.edited)?;
        if let Some(clean) = &self.clean {
            save_cloud(&dir.join("clean.g4dc"), clean)?;
        }
        let table = match &self.field {
            DeformationField::Tabulated(t) => t.clone(),
            analytic => analytic.tabulate(&self.source)?,
        };
        save_deformation(&dir.join("deformation.g4df"), &table)?;
        let session = SessionFile {
            source_cloud: "source.g4dc".into(),
            edited_cloud: "edited.g4dc".into(),
            deformation: "deformation.g4df".into(),
            cameras: self.cameras.clone(),
            params: self.config.clone(),
        };
        let path = dir.join("session.json");
        session.write(&path)?;
        Ok(path)
    }
}

/// How the edited cloud of a rigid scene differs from the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigidEdit {
    Identity,
    Recolor,
    /// Recolor, then append jittered copies of 10% of the Gaussians.
    RecolorAndClone,
}

/// Builder for rotating-blob scenes.
#[derive(Debug, Clone)]
pub struct RigidScene {
    pub n_gaussians: usize,
    pub axis: Vec3,
    pub omega: f64,
    pub n_frames: u32,
    pub seed: u64,
    pub edit: RigidEdit,
    pub sh_degree: u8,
}

impl RigidScene {
    pub fn new(n_gaussians: usize, axis: Vec3, omega: f64, n_frames: u32, seed: u64) -> Self {
        Self {
            n_gaussians,
            axis,
            omega,
            n_frames,
            seed,
            edit: RigidEdit::Recolor,
            sh_degree: 1,
        }
    }

    pub fn edit(mut self, edit: RigidEdit) -> Self {
        self.edit = edit;
        self
    }

    pub fn build(&self) -> OracleScene {
        assert!(self.n_gaussians >= 1 && self.n_frames >= 1, "need at least one Gaussian and one frame");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.n_gaussians;
        let points = poisson_ball(n, &mut rng);
        let spacing = 0.6 * (4.0 / 3.0 * PI / n as f64).cbrt();
        let n_coeffs = g4d_core::scene::sh_coeff_count(self.sh_degree);

        let gaussians: Vec<Gaussian> = points
            .iter()
            .map(|p| {
                let q = random_rotation(&mut rng);
                let s = round_vec3(&Vec3::from_fn(|_, _| spacing * rng.random_range(0.05..0.1)));
                let sigma = round_f32(rng.random_range(0.5..0.95));
                Gaussian::new(*p, q, s, sigma, random_sh(n_coeffs, &mut rng)).expect("valid generated Gaussian")
            })
            .collect();
        let source = GaussianCloud::new(gaussians, self.sh_degree, 1).expect("valid generated cloud");

        let centroid = source.positions().iter().sum::<Vec3>() / n as f64;
        let center = round_vec3(&centroid);
        let axis = self.axis.normalize();

        let mut edit_rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_ed17);
        let mut edited: Vec<Gaussian> = match self.edit {
            RigidEdit::Identity => source.gaussians().to_vec(),
            _ => source
                .iter()
                .map(|g| g.with_sh(random_sh(n_coeffs, &mut edit_rng)).expect("valid sh"))
                .collect(),
        };
        let mut clone_parents = Vec::new();
        if self.edit == RigidEdit::RecolorAndClone {
            let count = (n / 10).max(1);
            let jitter = Normal::new(0.0, CLONE_JITTER).expect("valid normal");
            let mut picked = index::sample(&mut edit_rng, n, count).into_vec();
            picked.sort_unstable();
            for parent in picked {
                let g = &edited[parent];
                let offset = Vec3::from_fn(|_, _| jitter.sample(&mut edit_rng));
                let clone = g
                    .with_geometry(round_vec3(&(g.mu() + offset)), *g.rotation(), *g.scale())
                    .expect("valid clone");
                clone_parents.push((edited.len(), parent));
                edited.push(clone);
            }
        }
        let edited = GaussianCloud::new(edited, self.sh_degree, 1).expect("valid edited cloud");

        let expected_positions = (1..=self.n_frames)
            .map(|t| {
                let angle = self.omega * f64::from(t - 1);
                edited.iter().map(|g| rotate_about(g.mu(), &axis, &center, angle)).collect()
            })
            .collect();
        let field = DeformationField::analytic(
            self.n_frames,
            AnalyticMotion::Rotation {
                axis: axis.into(),
                center: center.into(),
                omega: self.omega,
            },
        )
        .expect("valid rotation field");

        let cameras = ring_cameras(&center, 4.0, 4, 64, 30f64.to_radians());
        let tag = match self.edit {
            RigidEdit::Identity => "rigid-identity",
            RigidEdit::Recolor => "rigid-recolor",
            RigidEdit::RecolorAndClone => "rigid-clone",
        };
        OracleScene {
            tag: tag.into(),
            source,
            edited,
            clean: None,
            field,
            cameras,
            expected_positions,
            clone_parents,
            config: PipelineConfig {
                seed: self.seed,
                ..PipelineConfig::default()
            },
        }
    }
}

/// Rotating blob of `n_gaussians` with a recolor edit.
pub fn make_rigid_scene(n_gaussians: usize, axis: Vec3, omega: f64, n_frames: u32, seed: u64) -> OracleScene {
    RigidScene::new(n_gaussians, axis, omega, n_frames, seed).build()
}

/// Points in the unit ball, pairwise at least `0.6 (V/n)^⅓` apart, by
/// dart throwing on a hash grid. Coordinates are f32-representable.
fn poisson_ball(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let dmin = 0.6 * (4.0 / 3.0 * PI / n as f64).cbrt();
    let cells = (2.0 / dmin).ceil() as i64 + 1;
    let cell_of = |p: &Vec3| -> [i64; 3] { [0, 1, 2].map(|k| ((p[k] + 1.0) / dmin).floor() as i64) };
    let mut grid: std::collections::HashMap<[i64; 3], Vec<usize>> = std::collections::HashMap::new();
    let mut points: Vec<Vec3> = Vec::with_capacity(n);
    while points.len() < n {
        let p = round_vec3(&Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        if p.norm() > 1.0 {
            continue;
        }
        let c = cell_of(&p);
        let mut clear = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if key.iter().any(|&v| v < -1 || v > cells) {
                        continue;
                    }
                    if let Some(bucket) = grid.get(&key) {
                        if bucket.iter().any(|&i| (points[i] - p).norm() < dmin) {
                            clear = false;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if clear {
            grid.entry(c).or_default().push(points.len());
            points.push(p);
        }
    }
    points
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quat {
    let q = Quat::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let q = if q.norm() < 1e-3 { Quat::identity() } else { q.normalize() };
    Quat::from(q.coords.map(round_f32))
}

fn random_sh(n_coeffs: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    (0..n_coeffs)
        .map(|k| {
            if k == 0 {
                [0; 3].map(|_| round_f32(sh::dc_from_color(rng.random_range(0.2..0.8))))
            } else {
                [0; 3].map(|_| round_f32(rng.random_range(-0.1..0.1)))
            }
        })
        .collect()
}

/// `count` pinhole cameras on a circle around `target`, tilted up by
/// `elevation`, all looking at `target`.
fn ring_cameras(target: &Vec3, distance: f64, count: usize, size: u32, elevation: f64) -> Vec<Camera> {
    let f = size as f64 * 1.2;
    let c = (size as f64 - 1.0) / 2.0;
    (0..count)
        .map(|i| {
            let az = 2.0 * PI * i as f64 / count as f64;
            let dir = Vec3::new(az.cos() * elevation.cos(), elevation.sin(), az.sin() * elevation.cos());
            Camera::look_at(
                CameraModel::Pinhole,
                target + dir * distance,
                *target,
                Vec3::y(),
                [f, f, c, c],
                (size, size),
                (0.1, 100.0),
            )
            .expect("valid ring camera")
        })
        .collect()
}

const OCCLUSION_FRAMES: u32 = 10;
const OCCLUSION_SIZE: u32 = 128;
/// Per-frame sideways shift of the front slab.
const SLAB_SHIFT: f64 = 0.12;
/// Per-frame drift shared by every layer.
const DRIFT: [f64; 3] = [0.0, 0.02, 0.0];
const CLEAN_COLOR: [f64; 3] = [0.8, 0.15, 0.15];
const CORRUPT_COLOR: [f64; 3] = [0.2, 0.6, 0.25];

/// A red wall, a small block in front of it and an opaque red slab in front
/// of both. The slab slides sideways and uncovers the block, whose colors
/// are corrupted (green, strongly view dependent) in the edited cloud. In
/// the clean cloud the block matches the wall, so the frame-1 render warped
/// to any frame is exactly what the clean cloud renders.
pub fn make_occlusion_scene(seed: u64) -> OracleScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = |rgb: [f64; 3]| -> Vec<[f64; 3]> {
        let mut sh = vec![[0.0; 3]; 4];
        sh[0] = rgb.map(|c| round_f32(sh::dc_from_color(c)));
        sh
    };
    let mut clean = Vec::new();
    let mut edited = Vec::new();
    let mut slab = Vec::new();
    let mut push = |mu: Vec3, scale: f64, sigma: f64, clean_sh: Vec<[f64; 3]>, edited_sh: Vec<[f64; 3]>| {
        let mu = round_vec3(&mu);
        let s = Vec3::repeat(round_f32(scale));
        let q = Quat::identity();
        let sigma = round_f32(sigma);
        clean.push(Gaussian::new(mu, q, s, sigma, clean_sh).expect("valid Gaussian"));
        edited.push(Gaussian::new(mu, q, s, sigma, edited_sh).expect("valid Gaussian"));
    };
    let grid = |half: f64, step: f64| {
        let n = (2.0 * half / step).round() as i64;
        (0..=n).map(move |i| -half + i as f64 * step)
    };
    let jitter = |rng: &mut ChaCha8Rng, amount: f64| rng.random_range(-amount..amount);

    // back wall
    for y in grid(3.0, 0.1) {
        for x in grid(3.0, 0.1) {
            push(Vec3::new(x, y, 1.0), 0.08, 0.99, flat(CLEAN_COLOR), flat(CLEAN_COLOR));
            slab.push(false);
        }
    }
    // inner block: two sheets
    for layer in 0..2 {
        for y in grid(0.25, 0.05) {
            for x in grid(0.25, 0.05) {
                let mut bad = flat(CORRUPT_COLOR);
                for band in 1..4 {
                    bad[band] = [0; 3].map(|_| round_f32(jitter(&mut rng, 0.35)));
                }
                push(Vec3::new(x, y, 0.3 + 0.05 * layer as f64), 0.04, 0.99, flat(CLEAN_COLOR), bad);
                slab.push(false);
            }
        }
    }
    // front slab: four sheets
    for layer in 0..4 {
        for y in grid(0.9, 0.05) {
            for x in grid(0.9, 0.05) {
                let offset = 0.025 * (layer % 2) as f64;
                push(
                    Vec3::new(x + offset, y + offset, -0.3 - 0.02 * layer as f64),
                    0.04,
                    0.99,
                    flat(CLEAN_COLOR),
                    flat(CLEAN_COLOR),
                );
                slab.push(true);
            }
        }
    }
    let clean = GaussianCloud::new(clean, 1, 1).expect("valid clean cloud");
    let edited = GaussianCloud::new(edited, 1, 1).expect("valid edited cloud");
    let source = clean.clone();

    let n = source.len();
    let drift = Vec3::from(DRIFT);
    let mut deltas = Vec::with_capacity(n * OCCLUSION_FRAMES as usize);
    let mut expected_positions = Vec::new();
    for t in 1..=OCCLUSION_FRAMES {
        let k = f64::from(t - 1);
        let mut frame = Vec::with_capacity(n);
        for (g, &moving) in source.iter().zip(&slab) {
            let mut d_mu = drift * k;
            if moving {
                d_mu.x += SLAB_SHIFT * k;
            }
            let d_mu = round_vec3(&d_mu);
            deltas.push(GaussianDelta {
                d_mu,
                ..GaussianDelta::zero()
            });
            frame.push(g.mu() + d_mu);
        }
        expected_positions.push(frame);
    }
    let field = DeformationField::Tabulated(
        TabulatedField::new(OCCLUSION_FRAMES, n, deltas).expect("valid tabulated field"),
    );

    let f = 213.0;
    let c = (f64::from(OCCLUSION_SIZE) - 1.0) / 2.0;
    let cameras = (0..8)
        .map(|i| {
            let az = (-30.0 + 60.0 * i as f64 / 7.0).to_radians();
            let el = if i % 2 == 0 { 8f64 } else { -8.0 }.to_radians();
            let eye = Vec3::new(az.sin() * el.cos(), el.sin(), -az.cos() * el.cos()) * 4.0;
            Camera::look_at(
                CameraModel::Pinhole,
                eye,
                Vec3::zeros(),
                -Vec3::y(),
                [f, f, c, c],
                (OCCLUSION_SIZE, OCCLUSION_SIZE),
                (0.1, 100.0),
            )
            .expect("valid occlusion camera")
        })
        .collect();

    OracleScene {
        tag: "occlusion".into(),
        source,
        edited,
        clean: Some(clean),
        field,
        cameras,
        expected_positions,
        clone_parents: Vec::new(),
        config: PipelineConfig {
            seed,
            step_size: 0.2,
            ..PipelineConfig::default()
        },
    }
}

