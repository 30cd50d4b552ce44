use crate::error::{Error, Result};
use crate::render::coverage::Coverage;
use crate::render::image::{Image, Mask};
use crate::render::loss::masked_loss_with_gradient;
use crate::scene::{Camera, GaussianCloud};
use crate::sh;

/// SH coefficients of a whole cloud in one flat buffer, the optimizer's
/// parameter (and gradient) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ShTable {
    n_coeffs: usize,
    data: Vec<[f64; 3]>,
}

impl ShTable {
    pub fn from_cloud(cloud: &GaussianCloud) -> Self {
        Self {
            n_coeffs: cloud.sh_count(),
            data: cloud.iter().flat_map(|g| g.sh().iter().copied()).collect(),
        }
    }

    pub fn zeros(n_gaussians: usize, n_coeffs: usize) -> Self {
        Self {
            n_coeffs,
            data: vec![[0.0; 3]; n_gaussians * n_coeffs],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.len(), self.n_coeffs)
    }

    pub fn len(&self) -> usize {
        if self.n_coeffs == 0 {
            0
        } else {
            self.data.len() / self.n_coeffs
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub fn get(&self, i: usize) -> &[[f64; 3]] {
        &self.data[i * self.n_coeffs..(i + 1) * self.n_coeffs]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [[f64; 3]] {
        &mut self.data[i * self.n_coeffs..(i + 1) * self.n_coeffs]
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<[f64; 3]>> {
        (0..self.len()).map(|i| self.get(i).to_vec()).collect()
    }

    /// Copy of `cloud` carrying these coefficients.
    pub fn apply(&self, cloud: &GaussianCloud) -> Result<GaussianCloud> {
        if cloud.len() != self.len() || cloud.sh_count() != self.n_coeffs {
            return Err(Error::SizeMismatch {
                expected: cloud.len() * cloud.sh_count(),
                found: self.data.len(),
            });
        }
        cloud.with_sh(&self.to_nested())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}

/// Frozen geometry of one view: blend weights plus the SH basis of every
/// Gaussian along its viewing direction. Color is linear in SH given this.
#[derive(Debug, Clone)]
pub struct ViewShading {
    coverage: Coverage,
    basis: Vec<[f64; sh::MAX_COEFFS]>,
    n_coeffs: usize,
}

impl ViewShading {
    pub fn new(cloud: &GaussianCloud, camera: &Camera) -> Self {
        let degree = cloud.sh_degree();
        Self {
            coverage: Coverage::new(cloud, camera),
            basis: cloud
                .iter()
                .map(|g| sh::basis(degree, &camera.view_direction(g.mu())))
                .collect(),
            n_coeffs: cloud.sh_count(),
        }
    }

    pub fn coverage(&self) -> &Coverage {
        &self.coverage
    }

    fn check(&self, table: &ShTable) -> Result<()> {
        if table.len() != self.basis.len() || table.n_coeffs() != self.n_coeffs {
            return Err(Error::SizeMismatch {
                expected: self.basis.len() * self.n_coeffs,
                found: table.values().len(),
            });
        }
        Ok(())
    }

    fn colors(&self, table: &ShTable) -> Vec<[f64; 3]> {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, b)| sh::shade(table.get(i), b))
            .collect()
    }

    /// Blended color before the final clamp to [0, 1].
    pub fn render_unclamped(&self, table: &ShTable) -> Result<Image> {
        self.check(table)?;
        Ok(self.coverage.blend(&self.colors(table)))
    }

    pub fn render(&self, table: &ShTable) -> Result<Image> {
        Ok(self.render_unclamped(table)?.clamp01())
    }

    /// Evaluates the masked loss of this view against `target` and adds
    /// `scale ×` its SH gradient into `grad`.
    pub fn accumulate_gradient(
        &self,
        table: &ShTable,
        target: &Image,
        mask: &Mask,
        eta: f64,
        scale: f64,
        grad: &mut ShTable,
    ) -> Result<f64> {
        let term = LossTerm { target, mask, eta, scale };
        Ok(self.accumulate_terms(table, &[term], grad)?[0])
    }

    /// Several weighted loss terms sharing one render; returns the
    /// unweighted value of each.
    pub fn accumulate_terms(&self, table: &ShTable, terms: &[LossTerm<'_>], grad: &mut ShTable) -> Result<Vec<f64>> {
        self.check(table)?;
        self.check(grad)?;
        let raw = self.render_unclamped(table)?;
        let clamped = raw.clamp01();
        let w = raw.width();
        let mut per_gaussian = vec![[0.0f64; 3]; self.basis.len()];
        let mut losses = Vec::with_capacity(terms.len());
        for term in terms {
            let (loss, pixel_grad) = masked_loss_with_gradient(&clamped, term.target, term.mask, term.eta)?;
            losses.push(loss);
            if term.scale == 0.0 {
                continue;
            }
            for (p, _) in term.mask.data().iter().enumerate().filter(|(_, m)| **m) {
                let (x, y) = (p % w, p / w);
                let mut g = [0.0; 3];
                for (c, gc) in g.iter_mut().enumerate() {
                    if (0.0..=1.0).contains(&raw.get(x, y, c)) {
                        *gc = term.scale * pixel_grad.get(x, y, c);
                    }
                }
                if g == [0.0; 3] {
                    continue;
                }
                for contrib in self.coverage.pixel_contributors(p) {
                    let acc = &mut per_gaussian[contrib.index as usize];
                    for c in 0..3 {
                        acc[c] += contrib.weight * g[c];
                    }
                }
            }
        }
        for (i, (a, b)) in per_gaussian.iter().zip(&self.basis).enumerate() {
            if *a == [0.0; 3] {
                continue;
            }
            for (k, coeff) in grad.get_mut(i).iter_mut().enumerate() {
                for c in 0..3 {
                    coeff[c] += a[c] * b[k];
                }
            }
        }
        Ok(losses)
    }
}

/// One masked loss against a target, weighted by `scale` in the gradient.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm<'a> {
    pub target: &'a Image,
    pub mask: &'a Mask,
    pub eta: f64,
    pub scale: f64,
}

/// Masked loss of a render of `cloud` against `target` and its gradient
/// with respect to every SH coefficient, geometry and opacity held fixed.
pub fn masked_loss_and_sh_gradient(
    cloud: &GaussianCloud,
    camera: &Camera,
    target: &Image,
    mask: &Mask,
    eta: f64,
) -> Result<(f64, Vec<Vec<[f64; 3]>>)> {
    let view = ViewShading::new(cloud, camera);
    let table = ShTable::from_cloud(cloud);
    let mut grad = table.zeros_like();
    let loss = view.accumulate_gradient(&table, target, mask, eta, 1.0, &mut grad)?;
    Ok((loss, grad.to_nested()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Quat, Vec3};
    use crate::render::{loss::masked_loss, render_color};
    use crate::scene::{CameraModel, Gaussian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> Camera {
        Camera::look_at(
            CameraModel::Pinhole,
            Vec3::new(0.3, -0.2, -4.0),
            Vec3::zeros(),
            Vec3::new(0.0, -1.0, 0.0),
            [30.0, 30.0, 15.5, 15.5],
            (32, 32),
            (0.1, 100.0),
        )
        .unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, degree: u8) -> GaussianCloud {
        let nc = crate::scene::sh_coeff_count(degree);
        let gs = (0..n)
            .map(|_| {
                let mu = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
                let q = Quat::new(rng.random(), rng.random(), rng.random(), rng.random::<f64>() + 0.1);
                let s = Vec3::new(rng.random_range(0.1..0.3), rng.random_range(0.1..0.3), rng.random_range(0.1..0.3));
                let sh = (0..nc)
                    .map(|k| {
                        let base = if k == 0 { 0.0 } else { 0.05 };
                        [0, 1, 2].map(|_| if k == 0 { sh::dc_from_color(rng.random_range(0.3..0.7)) } else { base * rng.random_range(-1.0..1.0) })
                    })
                    .collect();
                Gaussian::new(mu, q, s, rng.random_range(0.3..0.9), sh).unwrap()
            })
            .collect();
        GaussianCloud::new(gs, degree, 1).unwrap()
    }

    #[test]
    fn table_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 4, 2);
        let t = ShTable::from_cloud(&cloud);
        assert_eq!(t.len(), 4);
        assert_eq!(t.n_coeffs(), 9);
        assert_eq!(t.apply(&cloud).unwrap(), cloud);
        assert!(t.apply(&random_cloud(&mut rng, 3, 2)).is_err());
    }

    #[test]
    fn matches_direct_render() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = random_cloud(&mut rng, 8, 3);
        let view = ViewShading::new(&cloud, &camera());
        let img = view.render(&ShTable::from_cloud(&cloud)).unwrap();
        assert_eq!(img, render_color(&cloud, &camera()).color);
    }

    #[test]
    fn brighter_target_pushes_dc_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_cloud(&mut rng, 1, 0);
        let render = render_color(&cloud, &camera());
        let target = render.color.map(|v| v + 0.1);
        let mask = Mask::from_fn(32, 32, |x, y| render.alpha_acc.get(x, y, 0) > 0.0);
        let (_, grad) = masked_loss_and_sh_gradient(&cloud, &camera(), &target, &mask, 0.0).unwrap();
        assert!(grad[0][0].iter().all(|&g| g < 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cam = camera();
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let cloud = random_cloud(&mut rng, 6, 2);
            let base = render_color(&cloud, &cam).color;
            let target = Image::from_fn(32, 32, 3, |x, y, c| {
                let d = rng.random_range(0.05..0.2);
                let v = base.get(x, y, c);
                if rng.random::<bool>() { v + d } else { v - d }
            });
            let mask = Mask::from_fn(32, 32, |x, y| (x / 3 + y / 5) % 4 != 0);
            for eta in [0.0, 0.2] {
                let (_, grad) = masked_loss_and_sh_gradient(&cloud, &cam, &target, &mask, eta).unwrap();
                let table = ShTable::from_cloud(&cloud);
                for i in 0..cloud.len() {
                    for k in [0, 3, 8] {
                        let c = (i + k) % 3;
                        let h = 1e-3;
                        let eval = |delta: f64| {
                            let mut t = table.clone();
                            t.get_mut(i)[k][c] += delta;
                            let img = ViewShading::new(&cloud, &cam).render(&t).unwrap();
                            masked_loss(&img, &target, &mask, eta).unwrap()
                        };
                        let fd = (eval(h) - eval(-h)) / (2.0 * h);
                        let g = grad[i][k][c];
                        let scale = fd.abs().max(g.abs()).max(1e-8);
                        assert!((fd - g).abs() / scale < 1e-4 || (fd - g).abs() < 1e-10, "seed {seed} eta {eta} g{i} k{k} c{c}: {g} vs {fd}");
                    }
                }
            }
        }
    }
}
