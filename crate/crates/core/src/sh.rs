//! Real spherical-harmonics basis up to degree 3, with the sign
//! convention common to splatting renderers.

use crate::math::Vec3;

pub const MAX_COEFFS: usize = 16;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// DC basis value; a degree-0 coefficient `c` renders as `c · C0`.
pub const DC: f64 = C0;

/// Basis values at unit direction `dir`; only the first `(degree+1)²`
/// entries are meaningful.
pub fn basis(degree: u8, dir: &Vec3) -> [f64; MAX_COEFFS] {
    let mut y = [0.0; MAX_COEFFS];
    y[0] = C0;
    if degree == 0 {
        return y;
    }
    let (x, yy, z) = (dir.x, dir.y, dir.z);
    y[1] = -C1 * yy;
    y[2] = C1 * z;
    y[3] = -C1 * x;
    if degree == 1 {
        return y;
    }
    let (xx, yy2, zz) = (x * x, yy * yy, z * z);
    let (xy, yz, xz) = (x * yy, yy * z, x * z);
    y[4] = C2[0] * xy;
    y[5] = C2[1] * yz;
    y[6] = C2[2] * (2.0 * zz - xx - yy2);
    y[7] = C2[3] * xz;
    y[8] = C2[4] * (xx - yy2);
    if degree == 2 {
        return y;
    }
    y[9] = C3[0] * yy * (3.0 * xx - yy2);
    y[10] = C3[1] * xy * z;
    y[11] = C3[2] * yy * (4.0 * zz - xx - yy2);
    y[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy2);
    y[13] = C3[4] * x * (4.0 * zz - xx - yy2);
    y[14] = C3[5] * z * (xx - yy2);
    y[15] = C3[6] * x * (xx - 3.0 * yy2);
    y
}

/// Linear RGB color of coefficients `sh` seen along `dir`. No offset or
/// clamp is applied here.
pub fn eval(sh: &[[f64; 3]], dir: &Vec3) -> [f64; 3] {
    let degree = degree_of(sh.len());
    shade(sh, &basis(degree, dir))
}

/// Color from precomputed basis values.
pub fn shade(sh: &[[f64; 3]], basis: &[f64; MAX_COEFFS]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for (coef, &y) in sh.iter().zip(basis) {
        c[0] += coef[0] * y;
        c[1] += coef[1] * y;
        c[2] += coef[2] * y;
    }
    c
}

pub(crate) fn degree_of(n_coeffs: usize) -> u8 {
    match n_coeffs {
        0 | 1 => 0,
        2..=4 => 1,
        5..=9 => 2,
        _ => 3,
    }
}

/// Coefficient that renders a view-independent `value` with degree 0.
pub fn dc_from_color(value: f64) -> f64 {
    value / C0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_band_ignores_direction() {
        let sh = [[dc_from_color(0.5), 0.0, 1.0]];
        for dir in [Vec3::x(), Vec3::y(), -Vec3::z()] {
            let c = eval(&sh, &dir);
            assert!((c[0] - 0.5).abs() < 1e-15);
            assert_eq!(c[1], 0.0);
        }
    }

    /// Numerical orthonormality over the sphere checks every constant and
    /// polynomial at once.
    #[test]
    fn basis_is_orthonormal() {
        let (nt, np) = (200, 400);
        let mut gram = [[0.0f64; 16]; 16];
        for i in 0..nt {
            let theta = (i as f64 + 0.5) * PI / nt as f64;
            for j in 0..np {
                let phi = (j as f64 + 0.5) * 2.0 * PI / np as f64;
                let d = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                let y = basis(3, &d);
                let w = theta.sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
                for a in 0..16 {
                    for b in 0..16 {
                        gram[a][b] += w * y[a] * y[b];
                    }
                }
            }
        }
        for a in 0..16 {
            for b in 0..16 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - expect).abs() < 1e-3, "({a},{b}) = {}", gram[a][b]);
            }
        }
    }
}
