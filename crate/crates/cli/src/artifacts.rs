use std::path::{Path, PathBuf};

use g4d_core::refine::{LossRecord, PairMaps};
use g4d_core::render::Image;
use g4d_core::{Error, Result};

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

pub(crate) fn frame_path(dir: &Path, t: u32) -> PathBuf {
    dir.join(format!("frame_{t:04}.g4dc"))
}

pub(crate) fn write_loss_csv(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::file(path, e),
        other => Error::InvariantViolation(format!("csv: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["step", "t", "v", "L_fore", "L_back", "L_refine"]).map_err(io_err)?;
    for r in trace {
        w.write_record([
            r.step.to_string(),
            r.t.to_string(),
            r.v.to_string(),
            r.l_fore.to_string(),
            r.l_back.to_string(),
            r.l_refine.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

/// Saves an image both as raw floats and as an 8-bit preview.
pub(crate) fn save_image(dir: &Path, stem: &str, image: &Image) -> Result<()> {
    image.save_float(&dir.join(format!("{stem}.g4di")))?;
    image.save_png(&dir.join(format!("{stem}.png")))
}

/// Flow as a 3-channel preview: x and y displacement around mid-gray.
fn flow_preview(flow: &Image) -> Image {
    let scale = flow.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    Image::from_fn(flow.width(), flow.height(), 3, |x, y, c| {
        if c == 2 {
            0.5
        } else {
            0.5 + 0.5 * flow.get(x, y, c) / scale
        }
    })
}

pub(crate) fn save_pair_maps(dir: &Path, maps: &PairMaps) -> Result<()> {
    let stem = format!("t{:04}_v{:02}", maps.t, maps.v);
    save_image(dir, &format!("{stem}_uncertainty"), &maps.uncertainty)?;
    save_image(dir, &format!("{stem}_mask"), &maps.mask.to_image())?;
    save_image(dir, &format!("{stem}_warp"), &maps.warp)?;
    maps.flow.save_float(&dir.join(format!("{stem}_flow.g4di")))?;
    flow_preview(&maps.flow).save_png(&dir.join(format!("{stem}_flow.png")))
}
