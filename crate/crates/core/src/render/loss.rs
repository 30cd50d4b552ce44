//! Masked photometric losses and their gradients with respect to the
//! rendered image.
//!
//! Both terms are averaged over the masked pixels and the three color
//! channels. SSIM is computed on the masked images (zero outside the mask,
//! zero padding at the border), so everything outside the mask bounding box
//! is zero and the computation is restricted to that box without changing
//! the result.

use crate::error::{Error, Result};
use crate::render::image::{Image, Mask};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn check_inputs(render: &Image, target: &Image, mask: &Mask) -> Result<()> {
    if !render.same_shape(target) || render.channels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "render {}x{}x{} vs target {}x{}x{}",
            render.width(),
            render.height(),
            render.channels(),
            target.width(),
            target.height(),
            target.channels()
        )));
    }
    if mask.width() != render.width() || mask.height() != render.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width(),
            mask.height(),
            render.width(),
            render.height()
        )));
    }
    Ok(())
}

/// Mean absolute difference over masked pixels and channels.
pub fn masked_l1(render: &Image, target: &Image, mask: &Mask) -> Result<f64> {
    Ok(masked_loss_with_gradient(render, target, mask, 0.0)?.0)
}

/// `1 − mean SSIM` over masked pixels and channels.
pub fn masked_ssim_loss(render: &Image, target: &Image, mask: &Mask) -> Result<f64> {
    Ok(masked_loss_with_gradient(render, target, mask, 1.0)?.0)
}

/// `(1 − η)·L1 + η·L_ssim`.
pub fn masked_loss(render: &Image, target: &Image, mask: &Mask, eta: f64) -> Result<f64> {
    Ok(masked_loss_with_gradient(render, target, mask, eta)?.0)
}

/// Loss and its gradient with respect to every pixel of `render`. The
/// gradient is zero outside the mask. An empty mask gives zero for both.
pub fn masked_loss_with_gradient(
    render: &Image,
    target: &Image,
    mask: &Mask,
    eta: f64,
) -> Result<(f64, Image)> {
    check_inputs(render, target, mask)?;
    let (w, h) = (render.width(), render.height());
    let mut grad = Image::new(w, h, 3);
    let Some((x0, y0, x1, y1)) = mask.bounds() else {
        return Ok((0.0, grad));
    };
    let norm = 1.0 / (3 * mask.count()) as f64;
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let kernel = ssim_kernel();
    let mut l1 = 0.0;
    let mut ssim_sum = 0.0;

    for c in 0..3 {
        let mut xs = vec![0.0; cw * ch];
        let mut ys = vec![0.0; cw * ch];
        for j in 0..ch {
            for i in 0..cw {
                let (x, y) = (x0 + i, y0 + j);
                if mask.get(x, y) {
                    xs[j * cw + i] = render.get(x, y, c);
                    ys[j * cw + i] = target.get(x, y, c);
                }
            }
        }
        for j in 0..ch {
            for i in 0..cw {
                if !mask.get(x0 + i, y0 + j) {
                    continue;
                }
                let d = xs[j * cw + i] - ys[j * cw + i];
                l1 += d.abs();
                let g = grad.get(x0 + i, y0 + j, c);
                grad.set(x0 + i, y0 + j, c, g + (1.0 - eta) * norm * sign(d));
            }
        }
        if eta == 0.0 {
            continue;
        }

        let mx = blur(&xs, cw, ch, &kernel);
        let my = blur(&ys, cw, ch, &kernel);
        let xx = blur(&xs.iter().map(|v| v * v).collect::<Vec<_>>(), cw, ch, &kernel);
        let yy = blur(&ys.iter().map(|v| v * v).collect::<Vec<_>>(), cw, ch, &kernel);
        let xy = blur(
            &xs.iter().zip(&ys).map(|(a, b)| a * b).collect::<Vec<_>>(),
            cw,
            ch,
            &kernel,
        );

        let mut a1 = vec![0.0; cw * ch];
        let mut a2 = vec![0.0; cw * ch];
        let mut a3 = vec![0.0; cw * ch];
        for j in 0..ch {
            for i in 0..cw {
                if !mask.get(x0 + i, y0 + j) {
                    continue;
                }
                let p = j * cw + i;
                let (ux, uy) = (mx[p], my[p]);
                let vx = xx[p] - ux * ux;
                let vy = yy[p] - uy * uy;
                let cxy = xy[p] - ux * uy;
                let n1 = 2.0 * ux * uy + SSIM_C1;
                let n2 = 2.0 * cxy + SSIM_C2;
                let d1 = ux * ux + uy * uy + SSIM_C1;
                let d2 = vx + vy + SSIM_C2;
                let s = n1 * n2 / (d1 * d2);
                ssim_sum += s;

                let ds_dux = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
                let ds_dvx = -s / d2;
                let ds_dcxy = 2.0 * n1 / (d1 * d2);
                let g = -eta * norm;
                a1[p] = g * (ds_dux - 2.0 * ux * ds_dvx - uy * ds_dcxy);
                a2[p] = g * ds_dvx;
                a3[p] = g * ds_dcxy;
            }
        }
        let b1 = blur(&a1, cw, ch, &kernel);
        let b2 = blur(&a2, cw, ch, &kernel);
        let b3 = blur(&a3, cw, ch, &kernel);
        for j in 0..ch {
            for i in 0..cw {
                if !mask.get(x0 + i, y0 + j) {
                    continue;
                }
                let p = j * cw + i;
                let d = b1[p] + 2.0 * xs[p] * b2[p] + ys[p] * b3[p];
                let g = grad.get(x0 + i, y0 + j, c);
                grad.set(x0 + i, y0 + j, c, g + d);
            }
        }
    }

    let l1 = l1 * norm;
    let ssim_loss = if eta == 0.0 { 0.0 } else { 1.0 - ssim_sum * norm };
    Ok(((1.0 - eta) * l1 + eta * ssim_loss, grad))
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Separable symmetric blur with zero padding.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let sx = x as isize + t as isize - r;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * row[sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let sy = y as isize + t as isize - r;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |_, _, _| rng.random_range(0.1..0.9))
    }

    /// Direct 2-D SSIM on full masked images, no cropping, for comparison.
    fn reference_ssim_loss(x: &Image, y: &Image, mask: &Mask) -> f64 {
        let k = ssim_kernel();
        let (w, h) = (x.width(), x.height());
        let m = |img: &Image, px: isize, py: isize, c: usize| -> f64 {
            if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                return 0.0;
            }
            let (px, py) = (px as usize, py as usize);
            if mask.get(px, py) {
                img.get(px, py, c)
            } else {
                0.0
            }
        };
        let mut total = 0.0;
        for c in 0..3 {
            for py in 0..h {
                for px in 0..w {
                    if !mask.get(px, py) {
                        continue;
                    }
                    let (mut ux, mut uy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for (a, ka) in k.iter().enumerate() {
                        for (b, kb) in k.iter().enumerate() {
                            let qx = px as isize + b as isize - 5;
                            let qy = py as isize + a as isize - 5;
                            let wgt = ka * kb;
                            let (vx, vy) = (m(x, qx, qy, c), m(y, qx, qy, c));
                            ux += wgt * vx;
                            uy += wgt * vy;
                            sxx += wgt * vx * vx;
                            syy += wgt * vy * vy;
                            sxy += wgt * vx * vy;
                        }
                    }
                    let s = (2.0 * ux * uy + SSIM_C1) * (2.0 * (sxy - ux * uy) + SSIM_C2)
                        / ((ux * ux + uy * uy + SSIM_C1) * (sxx - ux * ux + syy - uy * uy + SSIM_C2));
                    total += 1.0 - s;
                }
            }
        }
        total / (3 * mask.count()) as f64
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = ssim_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
        assert!((k[5] / k[6] - (1.0 / (2.0 * 2.25f64)).exp()).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 20, 16);
        let mask = Mask::from_fn(20, 16, |x, y| (x + y) % 3 != 0);
        let (loss, grad) = masked_loss_with_gradient(&img, &img, &mask, 0.2).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn empty_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(&mut rng, 8, 8);
        let b = random_image(&mut rng, 8, 8);
        let (loss, grad) = masked_loss_with_gradient(&a, &b, &Mask::filled(8, 8, false), 0.5).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn l1_of_constant_offset() {
        let a = Image::from_fn(6, 5, 3, |_, _, _| 0.5);
        let b = Image::from_fn(6, 5, 3, |_, _, _| 0.3);
        let mask = Mask::from_fn(6, 5, |x, _| x < 2);
        assert!((masked_l1(&a, &b, &mask).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cropped_ssim_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 24, 20);
        let b = random_image(&mut rng, 24, 20);
        let mask = Mask::from_fn(24, 20, |x, y| (7..15).contains(&x) && (4..13).contains(&y) && x != 9);
        let got = masked_ssim_loss(&a, &b, &mask).unwrap();
        let want = reference_ssim_loss(&a, &b, &mask);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_image(&mut rng, 14, 12);
        let b = random_image(&mut rng, 14, 12);
        let mask = Mask::from_fn(14, 12, |x, y| x > 1 && y > 2 && (x * 7 + y) % 5 != 0);
        for eta in [0.0, 0.2, 1.0] {
            let (_, grad) = masked_loss_with_gradient(&a, &b, &mask, eta).unwrap();
            for (x, y, c) in [(3, 4, 0), (7, 7, 1), (12, 11, 2), (5, 9, 0), (0, 0, 1)] {
                let h = 1e-6;
                let mut p = a.clone();
                p.set(x, y, c, a.get(x, y, c) + h);
                let mut m = a.clone();
                m.set(x, y, c, a.get(x, y, c) - h);
                let fd = (masked_loss(&p, &b, &mask, eta).unwrap() - masked_loss(&m, &b, &mask, eta).unwrap()) / (2.0 * h);
                let g = grad.get(x, y, c);
                assert!((fd - g).abs() <= 1e-6 * fd.abs().max(1e-3), "eta {eta} ({x},{y},{c}): {g} vs {fd}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Image::new(4, 4, 3);
        let b = Image::new(4, 5, 3);
        assert!(matches!(masked_l1(&a, &b, &Mask::filled(4, 4, true)), Err(Error::DimensionMismatch(_))));
        assert!(matches!(masked_l1(&a, &a, &Mask::filled(4, 3, true)), Err(Error::DimensionMismatch(_))));
    }
}
