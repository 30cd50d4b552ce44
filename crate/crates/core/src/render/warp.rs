use crate::error::{Error, Result};
use crate::render::image::Image;

/// Pixels with less accumulated frame-t opacity keep their frame-1 color.
pub const WARP_ALPHA_THRESHOLD: f64 = 0.01;

/// Backward-warps a frame-1 render to frame t: covered pixels sample
/// `render1` bilinearly at `x − F(x)`, clamped to the border.
pub fn warp_frame1(render1: &Image, flow: &Image, alpha_t: &Image) -> Result<Image> {
    let (w, h) = (render1.width(), render1.height());
    flow.require_size(w, h, "flow")?;
    alpha_t.require_size(w, h, "alpha")?;
    if flow.channels() != 2 || alpha_t.channels() != 1 {
        return Err(Error::DimensionMismatch(
            "flow needs 2 channels and alpha 1".into(),
        ));
    }
    let ch = render1.channels();
    let mut out = render1.clone();
    for y in 0..h {
        for x in 0..w {
            if alpha_t.get(x, y, 0) <= WARP_ALPHA_THRESHOLD {
                continue;
            }
            let sx = x as f64 - flow.get(x, y, 0);
            let sy = y as f64 - flow.get(x, y, 1);
            for c in 0..ch {
                out.set(x, y, c, bilinear(render1, sx, sy, c));
            }
        }
    }
    Ok(out)
}

fn bilinear(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let y = y.clamp(0.0, (img.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = (1.0 - fx) * img.get(x0, y0, c) + fx * img.get(x1, y0, c);
    let bottom = (1.0 - fx) * img.get(x0, y1, c) + fx * img.get(x1, y1, c);
    (1.0 - fy) * top + fy * bottom
}
