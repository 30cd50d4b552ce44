use g4d_core::anchor::Line;
use g4d_core::math::Vec3;
use g4d_core::render::Image;
use g4d_core::scene::{Camera, CameraModel, GaussianCloud};
use g4d_core::uot::{SinkhornConfig, TransportPlan};
use nalgebra::{DMatrix, Matrix2, Matrix3};

pub const MAX_SINKHORN_SIZE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle supports at most {max}x{max}, got {n}x{m}")]
    OracleSizeExceeded { n: usize, m: usize, max: usize },
}

/// Plain-domain unbalanced Sinkhorn: `u ← (a ⊘ K v)^ρ₁`, `v ← (b ⊘ Kᵀ u)^ρ₂`,
/// stopping when the log scalings move less than `tol`.
pub fn brute_force_sinkhorn(d: &DMatrix<f64>, config: &SinkhornConfig) -> Result<TransportPlan, OracleError> {
    let (n, m) = d.shape();
    if n > MAX_SINKHORN_SIZE || m > MAX_SINKHORN_SIZE {
        return Err(OracleError::OracleSizeExceeded { n, m, max: MAX_SINKHORN_SIZE });
    }
    let k = d.map(|v| (-v / config.lambda0).exp());
    let r1 = config.lambda1 / (config.lambda1 + config.lambda0);
    let r2 = config.lambda2 / (config.lambda2 + config.lambda0);
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; m];
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let mut kv = 0.0;
            for j in 0..m {
                kv += k[(i, j)] * v[j];
            }
            let new = (1.0 / n as f64 / kv).powf(r1);
            change = change.max((new.ln() - u[i].ln()).abs());
            u[i] = new;
        }
        for j in 0..m {
            let mut ku = 0.0;
            for i in 0..n {
                ku += k[(i, j)] * u[i];
            }
            let new = (1.0 / m as f64 / ku).powf(r2);
            change = change.max((new.ln() - v[j].ln()).abs());
            v[j] = new;
        }
        residuals.push(change);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(TransportPlan {
        p: DMatrix::from_fn(n, m, |i, j| u[i] * k[(i, j)] * v[j]),
        converged,
        iterations: residuals.len(),
        marginal_err: residuals.last().copied().unwrap_or(0.0),
        residuals,
    })
}

/// All-pairs cylinder test: for each group, the first line whose
/// radius-`delta` cylinder holds every member.
pub fn brute_force_first_hits(points: &[Vec3], lines: &[Line], groups: &[Vec<usize>], delta: f64) -> Vec<Option<usize>> {
    groups
        .iter()
        .map(|g| {
            lines.iter().position(|l| {
                let axis = l.b - l.a;
                g.iter().all(|&i| (points[i] - l.a).cross(&axis).norm() / axis.norm() <= delta)
            })
        })
        .collect()
}

/// Sorted scan by `(squared distance, index)` over the alive points.
pub fn brute_force_knn(points: &[Vec3], alive: &[bool], q: &Vec3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| alive[*i])
        .map(|(i, p)| (i, (p - q).norm_squared()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Smallest enclosing sphere by Welzl's recursion over a fixed order.
pub fn exact_min_sphere(points: &[Vec3]) -> (Vec3, f64) {
    fn circum(support: &[Vec3]) -> (Vec3, f64) {
        match support.len() {
            0 => (Vec3::zeros(), -1.0),
            1 => (support[0], 0.0),
            2 => ((support[0] + support[1]) / 2.0, (support[0] - support[1]).norm() / 2.0),
            3 => {
                let (a, b, c) = (support[0], support[1], support[2]);
                let (ab, ac) = (b - a, c - a);
                let n = ab.cross(&ac);
                let denom = 2.0 * n.norm_squared();
                if denom < 1e-300 {
                    return widest_pair(support);
                }
                let off = (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / denom;
                (a + off, off.norm())
            }
            _ => {
                let (a, b, c, d) = (support[0], support[1], support[2], support[3]);
                let m = Matrix3::from_rows(&[(b - a).transpose(), (c - a).transpose(), (d - a).transpose()]);
                let rhs = Vec3::new((b - a).norm_squared(), (c - a).norm_squared(), (d - a).norm_squared()) / 2.0;
                match m.lu().solve(&rhs) {
                    Some(off) if off.iter().all(|v| v.is_finite()) => (a + off, off.norm()),
                    _ => widest_pair(support),
                }
            }
        }
    }
    fn widest_pair(s: &[Vec3]) -> (Vec3, f64) {
        let mut best = (s[0], 0.0);
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let r = (s[i] - s[j]).norm() / 2.0;
                if r > best.1 {
                    best = ((s[i] + s[j]) / 2.0, r);
                }
            }
        }
        best
    }
    fn inside(s: &(Vec3, f64), p: &Vec3) -> bool {
        (p - s.0).norm() <= s.1 * (1.0 + 1e-12) + 1e-12
    }
    fn welzl(p: &[Vec3], support: &mut Vec<Vec3>) -> (Vec3, f64) {
        if p.is_empty() || support.len() == 4 {
            return circum(support);
        }
        let (last, rest) = p.split_last().expect("nonempty");
        let s = welzl(rest, support);
        if s.1 >= 0.0 && inside(&s, last) {
            return s;
        }
        support.push(*last);
        let s = welzl(rest, support);
        support.pop();
        s
    }
    welzl(points, &mut Vec::new())
}

/// Rodrigues rotation of `p` by `angle` about `axis` through `center`.
pub fn rotate_about(p: &Vec3, axis: &Vec3, center: &Vec3, angle: f64) -> Vec3 {
    let k = axis.normalize();
    let v = p - center;
    let (s, c) = angle.sin_cos();
    center + v * c + k.cross(&v) * s + k * k.dot(&v) * (1.0 - c)
}

/// Per-pixel splatting written directly from the definitions: every
/// Gaussian is evaluated at every pixel, contributions sorted by depth and
/// composited front to back with the same clamps as the main renderer.
pub fn reference_render(cloud: &GaussianCloud, camera: &Camera) -> (Image, Image) {
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let spec: g4d_core::scene::CameraSpec = camera.clone().into();
    let r = Matrix3::from_fn(|i, j| spec.rotation[i][j]);
    let t = Vec3::from(spec.translation);
    let eye = -(r.transpose() * t);
    struct Proj {
        depth: f64,
        idx: usize,
        center: (f64, f64),
        conic: Matrix2<f64>,
        opacity: f64,
        color: [f64; 3],
    }
    let mut projs = Vec::new();
    for (idx, g) in cloud.iter().enumerate() {
        let pc = r * g.mu() + t;
        if pc.z <= spec.near || pc.z >= spec.far {
            continue;
        }
        let (center, j) = match spec.model {
            CameraModel::Pinhole => (
                (spec.fx * pc.x / pc.z + spec.cx, spec.fy * pc.y / pc.z + spec.cy),
                nalgebra::Matrix2x3::new(
                    spec.fx / pc.z,
                    0.0,
                    -spec.fx * pc.x / (pc.z * pc.z),
                    0.0,
                    spec.fy / pc.z,
                    -spec.fy * pc.y / (pc.z * pc.z),
                ),
            ),
            CameraModel::Orthographic => (
                (spec.fx * pc.x + spec.cx, spec.fy * pc.y + spec.cy),
                nalgebra::Matrix2x3::new(spec.fx, 0.0, 0.0, 0.0, spec.fy, 0.0),
            ),
        };
        let rm = nalgebra::UnitQuaternion::from_quaternion(*g.rotation()).to_rotation_matrix().into_inner();
        let s2 = Matrix3::from_diagonal(&g.scale().component_mul(g.scale()));
        let cov3 = rm * s2 * rm.transpose();
        let cov2 = j * r * cov3 * r.transpose() * j.transpose() + Matrix2::identity() * 0.3;
        let Some(conic) = cov2.try_inverse() else { continue };
        let dir = match spec.model {
            CameraModel::Pinhole => (g.mu() - eye).normalize(),
            CameraModel::Orthographic => r.row(2).transpose(),
        };
        projs.push(Proj {
            depth: pc.z,
            idx,
            center,
            conic,
            opacity: g.opacity(),
            color: g4d_core::sh::eval(g.sh(), &dir),
        });
    }
    projs.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.idx.cmp(&b.idx)));
    let mut color = Image::new(w, h, 3);
    let mut alpha = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let mut tr = 1.0;
            let mut acc = [0.0; 4];
            for p in &projs {
                let dx = x as f64 - p.center.0;
                let dy = y as f64 - p.center.1;
                let power = p.conic[(0, 0)] * dx * dx + 2.0 * p.conic[(0, 1)] * dx * dy + p.conic[(1, 1)] * dy * dy;
                if power > 9.0 || p.opacity <= 0.0 {
                    continue;
                }
                let a = (p.opacity * (-0.5 * power).exp()).min(0.99);
                for c in 0..3 {
                    acc[c] += a * tr * p.color[c];
                }
                acc[3] += a * tr;
                tr *= 1.0 - a;
                if tr < 1e-4 {
                    break;
                }
            }
            for c in 0..3 {
                color.set(x, y, c, acc[c].clamp(0.0, 1.0));
            }
            alpha.set(x, y, 0, acc[3]);
        }
    }
    (color, alpha)
}
