use crate::error::{Error, Result};
use crate::math::Vec3;

/// Radius floor for degenerate inputs.
pub const MIN_RADIUS: f64 = 1e-6;

const REFINE_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() <= self.radius * (1.0 + 1e-6)
    }
}

/// Approximate minimum enclosing sphere. A two-pass Ritter estimate is
/// followed by Bădoiu–Clarkson core-set iterations, and the tighter of the
/// two is kept; the radius is the exact farthest distance from the chosen
/// center, so every point is enclosed.
pub fn bounding_sphere(points: &[Vec3]) -> Result<BoundingSphere> {
    let first = points.first().ok_or(Error::EmptyInput("bounding sphere needs at least one point"))?;
    let farthest = |from: &Vec3| -> (usize, f64) {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - from).norm_squared()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    };
    let radius_at = |c: &Vec3| farthest(c).1.sqrt();

    // Ritter: diameter estimate from two farthest-point hops, then grow
    let (ia, _) = farthest(first);
    let (ib, _) = farthest(&points[ia]);
    let mut center = (points[ia] + points[ib]) / 2.0;
    let mut radius = (points[ia] - points[ib]).norm() / 2.0;
    for _ in 0..2 {
        for p in points {
            let d = (p - center).norm();
            if d > radius {
                let grown = (radius + d) / 2.0;
                center += (p - center) * ((grown - radius) / d);
                radius = grown;
            }
        }
    }
    let ritter = (center, radius_at(&center));

    let mut c = ritter.0;
    let mut best = ritter;
    for i in 1..=REFINE_ITERS {
        let (j, _) = farthest(&c);
        c += (points[j] - c) / (i as f64 + 1.0);
        let r = radius_at(&c);
        if r < best.1 {
            best = (c, r);
        }
    }
    Ok(BoundingSphere {
        center: best.0,
        radius: best.1.max(MIN_RADIUS),
    })
}
