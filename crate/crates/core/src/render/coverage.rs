use rayon::prelude::*;

use crate::render::image::Image;
use crate::render::project::{project, Splat2D, FOOTPRINT_SIGMAS};
use crate::scene::{Camera, GaussianCloud};

/// Upper clamp on per-splat alpha.
pub const ALPHA_MAX: f64 = 0.99;
/// Blending for a pixel stops once transmittance falls below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub index: u32,
    /// `αᵢ ∏ⱼ<ᵢ (1 − αⱼ)`.
    pub weight: f64,
}

/// Per-pixel blend weights of a frozen splat configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    width: usize,
    height: usize,
    offsets: Vec<usize>,
    entries: Vec<Contribution>,
    alpha: Vec<f64>,
}

impl Coverage {
    pub fn new(cloud: &GaussianCloud, camera: &Camera) -> Self {
        let mut splats = project(cloud, camera);
        splats.sort_by(|a, b| {
            a.depth
                .total_cmp(&b.depth)
                .then(a.gaussian_index.cmp(&b.gaussian_index))
        });
        let opacity: Vec<f64> = cloud.iter().map(|g| g.opacity()).collect();
        Self::from_sorted(&splats, &opacity, camera.width() as usize, camera.height() as usize)
    }

    /// `splats` must already be in front-to-back order.
    pub fn from_sorted(splats: &[Splat2D], opacity: &[f64], width: usize, height: usize) -> Self {
        // (pixel, gaussian, alpha) in splat order; a stable counting sort by
        // pixel keeps the depth order within each pixel.
        let mut raw: Vec<(u32, u32, f64)> = Vec::new();
        for s in splats {
            let sigma = opacity[s.gaussian_index];
            if sigma <= 0.0 {
                continue;
            }
            let x0 = (s.center_px.x - s.extent.x).ceil().max(0.0) as usize;
            let y0 = (s.center_px.y - s.extent.y).ceil().max(0.0) as usize;
            let x1 = (s.center_px.x + s.extent.x).floor().min(width as f64 - 1.0);
            let y1 = (s.center_px.y + s.extent.y).floor().min(height as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            let (x1, y1) = (x1 as usize, y1 as usize);
            let cutoff = FOOTPRINT_SIGMAS * FOOTPRINT_SIGMAS;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dx = x as f64 - s.center_px.x;
                    let dy = y as f64 - s.center_px.y;
                    let power = s.conic[(0, 0)] * dx * dx
                        + 2.0 * s.conic[(0, 1)] * dx * dy
                        + s.conic[(1, 1)] * dy * dy;
                    if power > cutoff {
                        continue;
                    }
                    let alpha = (sigma * (-0.5 * power).exp()).min(ALPHA_MAX);
                    raw.push(((y * width + x) as u32, s.gaussian_index as u32, alpha));
                }
            }
        }

        let n_px = width * height;
        let mut start = vec![0usize; n_px + 1];
        for &(p, _, _) in &raw {
            start[p as usize + 1] += 1;
        }
        for i in 0..n_px {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut sorted = vec![(0u32, 0.0f64); raw.len()];
        for &(p, g, a) in &raw {
            sorted[fill[p as usize]] = (g, a);
            fill[p as usize] += 1;
        }

        let mut offsets = Vec::with_capacity(n_px + 1);
        let mut entries = Vec::with_capacity(sorted.len());
        let mut alpha = vec![0.0; n_px];
        offsets.push(0);
        for p in 0..n_px {
            let mut transmittance = 1.0;
            let mut acc = 0.0;
            for &(g, a) in &sorted[start[p]..start[p + 1]] {
                let weight = a * transmittance;
                entries.push(Contribution { index: g, weight });
                acc += weight;
                transmittance *= 1.0 - a;
                if transmittance < TRANSMITTANCE_MIN {
                    break;
                }
            }
            alpha[p] = acc;
            offsets.push(entries.len());
        }
        Self {
            width,
            height,
            offsets,
            entries,
            alpha,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Front-to-back contributors of pixel `(x, y)`.
    pub fn contributors(&self, x: usize, y: usize) -> &[Contribution] {
        let p = y * self.width + x;
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }

    pub(crate) fn pixel_contributors(&self, p: usize) -> &[Contribution] {
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Accumulated opacity `Σ weights`.
    pub fn alpha_image(&self) -> Image {
        Image::from_data(self.width, self.height, 1, self.alpha.clone()).expect("sized")
    }

    /// Composites one `N`-vector per Gaussian.
    pub fn blend<const N: usize>(&self, values: &[[f64; N]]) -> Image {
        let mut data = vec![0.0; self.width * self.height * N];
        data.par_chunks_mut(self.width * N)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..self.width {
                    let out = &mut row[x * N..(x + 1) * N];
                    for c in self.pixel_contributors(y * self.width + x) {
                        let v = &values[c.index as usize];
                        for k in 0..N {
                            out[k] += c.weight * v[k];
                        }
                    }
                }
            });
        Image::from_data(self.width, self.height, N, data).expect("sized")
    }

    /// Composites one scalar per Gaussian.
    pub fn blend_scalar(&self, values: &[f64]) -> Image {
        let wrapped: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        self.blend(&wrapped)
    }
}
