use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchor::sphere::BoundingSphere;
use crate::math::Vec3;

/// An infinite line through two sampled sphere-surface points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub a: Vec3,
    pub b: Vec3,
    /// Unit vector from `a` to `b`.
    pub dir: Vec3,
}

impl Line {
    pub fn distance(&self, x: &Vec3) -> f64 {
        crate::math::point_line_distance(x, &self.a, &self.dir)
    }
}

/// Area-uniform surface parameterization: `u` is the height coordinate in
/// [−1, 1] and `phi` the azimuth.
pub fn sphere_point(sphere: &BoundingSphere, u: f64, phi: f64) -> Vec3 {
    let rho = (1.0 - u * u).max(0.0).sqrt();
    sphere.center + sphere.radius * Vec3::new(rho * phi.cos(), rho * phi.sin(), u)
}

/// `n_rays` lines through pairs of uniform surface points. Draws are
/// sequential, so for a fixed seed a shorter run is a prefix of a longer
/// one. Pairs closer than `1e-9·r` are redrawn.
pub fn sample_lines(sphere: &BoundingSphere, n_rays: usize, seed: u64) -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let u = rng.random_range(-1.0..=1.0);
        let phi = rng.random_range(0.0..TAU);
        sphere_point(sphere, u, phi)
    };
    (0..n_rays)
        .map(|_| loop {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let d = (b - a).norm();
            if d >= 1e-9 * sphere.radius {
                break Line { a, b, dir: (b - a) / d };
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere() -> BoundingSphere {
        BoundingSphere {
            center: Vec3::new(1.0, -2.0, 0.5),
            radius: 3.0,
        }
    }

    #[test]
    fn parameterization() {
        let s = sphere();
        for phi in [0.0, 1.0, 4.0] {
            assert!((sphere_point(&s, 1.0, phi) - (s.center + Vec3::new(0.0, 0.0, 3.0))).norm() < 1e-15);
        }
        assert!((sphere_point(&s, 0.0, 0.0) - (s.center + Vec3::new(3.0, 0.0, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn deterministic_prefix() {
        let s = sphere();
        let long = sample_lines(&s, 500, 7);
        assert_eq!(long, sample_lines(&s, 500, 7));
        assert_eq!(&long[..120], &sample_lines(&s, 120, 7)[..]);
        assert_ne!(long, sample_lines(&s, 500, 8));
    }

    #[test]
    fn endpoints_lie_on_sphere() {
        let s = sphere();
        for l in sample_lines(&s, 200, 3) {
            assert!(((l.a - s.center).norm() - 3.0).abs() < 1e-12);
            assert!(((l.b - s.center).norm() - 3.0).abs() < 1e-12);
            assert!((l.dir.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heights_are_uniform() {
        // area-uniform sampling makes the height coordinate uniform on [−r, r]
        let s = BoundingSphere { center: Vec3::zeros(), radius: 1.0 };
        let lines = sample_lines(&s, 20000, 11);
        let mut bins = [0usize; 4];
        for l in &lines {
            for p in [l.a, l.b] {
                bins[(((p.z + 1.0) / 2.0 * 4.0) as usize).min(3)] += 1;
            }
        }
        for b in bins {
            assert!((b as f64 / 40000.0 - 0.25).abs() < 0.015, "{bins:?}");
        }
    }
}
