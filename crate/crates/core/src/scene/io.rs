//! Little-endian binary formats.
//!
//! Cloud (`G4DC`): magic, `u32` version, `u64` count, `u8` SH degree, then
//! per Gaussian `3×f32` position, `4×f32` quaternion (w, x, y, z),
//! `3×f32` scale, `f32` opacity and `3·(deg+1)²×f32` SH coefficients laid
//! out basis-major (r, g, b of basis 0, then basis 1, ...).
//!
//! Deformation (`G4DF`): magic, `u32` version, `u32` frame count, `u64`
//! Gaussian count, then frame-major, per Gaussian `3×f32` Δμ, `4×f32` Δq,
//! `3×f32` Δs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::scene::cloud::GaussianCloud;
use crate::scene::deformation::{GaussianDelta, TabulatedField};
use crate::scene::gaussian::{sh_coeff_count, Gaussian};

pub const CLOUD_MAGIC: &[u8; 4] = b"G4DC";
pub const DEFORMATION_MAGIC: &[u8; 4] = b"G4DF";
pub const FORMAT_VERSION: u32 = 1;

const CLOUD_HEADER_LEN: usize = 4 + 4 + 8 + 1;
const DEFORMATION_HEADER_LEN: usize = 4 + 4 + 4 + 8;
const DELTA_FLOATS: usize = 10;

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::MalformedFile("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f64> {
        let v = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::InvariantViolation("non-finite value in file".into()));
        }
        Ok(f64::from(v))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))
    }

    fn quat(&mut self) -> Result<Quat> {
        let (w, x, y, z) = (self.f32()?, self.f32()?, self.f32()?, self.f32()?);
        Ok(Quat::new(w, x, y, z))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != expected {
            return Err(Error::MalformedFile(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::MalformedFile(format!("unsupported version {v}")));
        }
        Ok(())
    }
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn put_vec3(out: &mut Vec<u8>, v: &Vec3) {
    v.iter().for_each(|&x| put_f32(out, x));
}

fn put_quat(out: &mut Vec<u8>, q: &Quat) {
    for v in [q.w, q.i, q.j, q.k] {
        put_f32(out, v);
    }
}

/// Bytes needed for `count` records of `record` bytes, or an error if the
/// payload does not match exactly.
fn expect_payload(r: &Reader<'_>, count: u64, record: usize) -> Result<()> {
    let need = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(record))
        .ok_or_else(|| Error::MalformedFile(format!("record count {count} overflows")))?;
    if r.remaining() != need {
        return Err(Error::MalformedFile(format!(
            "payload is {} bytes, header implies {need}",
            r.remaining()
        )));
    }
    Ok(())
}

pub fn encode_cloud(cloud: &GaussianCloud) -> Vec<u8> {
    let floats = 11 + 3 * cloud.sh_count();
    let mut out = Vec::with_capacity(CLOUD_HEADER_LEN + cloud.len() * floats * 4);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    out.push(cloud.sh_degree());
    for g in cloud {
        put_vec3(&mut out, g.mu());
        put_quat(&mut out, g.rotation());
        put_vec3(&mut out, g.scale());
        put_f32(&mut out, g.opacity());
        for rgb in g.sh() {
            rgb.iter().for_each(|&c| put_f32(&mut out, c));
        }
    }
    out
}

/// Decodes a cloud; the result is tagged as frame 1.
pub fn decode_cloud(bytes: &[u8]) -> Result<GaussianCloud> {
    let mut r = Reader::new(bytes);
    r.magic(CLOUD_MAGIC)?;
    r.version()?;
    let count = r.u64()?;
    let degree = r.u8()?;
    if degree > 3 {
        return Err(Error::MalformedFile(format!("SH degree {degree} exceeds 3")));
    }
    let n_sh = sh_coeff_count(degree);
    expect_payload(&r, count, (11 + 3 * n_sh) * 4)?;
    let mut gaussians = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mu = r.vec3()?;
        let q = r.quat()?;
        let s = r.vec3()?;
        let sigma = r.f32()?;
        let sh = (0..n_sh)
            .map(|_| Ok([r.f32()?, r.f32()?, r.f32()?]))
            .collect::<Result<Vec<_>>>()?;
        gaussians.push(Gaussian::new(mu, q, s, sigma, sh)?);
    }
    GaussianCloud::new(gaussians, degree, 1)
}

pub fn encode_deformation(field: &TabulatedField) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(DEFORMATION_HEADER_LEN + field.deltas().len() * DELTA_FLOATS * 4);
    out.extend_from_slice(DEFORMATION_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&field.n_frames().to_le_bytes());
    out.extend_from_slice(&(field.count() as u64).to_le_bytes());
    for d in field.deltas() {
        put_vec3(&mut out, &d.d_mu);
        put_quat(&mut out, &d.d_q);
        put_vec3(&mut out, &d.d_s);
    }
    out
}

pub fn decode_deformation(bytes: &[u8]) -> Result<TabulatedField> {
    let mut r = Reader::new(bytes);
    r.magic(DEFORMATION_MAGIC)?;
    r.version()?;
    let n_frames = r.u32()?;
    let count = r.u64()?;
    if n_frames == 0 {
        return Err(Error::MalformedFile("deformation has zero frames".into()));
    }
    let records = count
        .checked_mul(u64::from(n_frames))
        .ok_or_else(|| Error::MalformedFile("record count overflows".into()))?;
    expect_payload(&r, records, DELTA_FLOATS * 4)?;
    let mut deltas = Vec::with_capacity(records as usize);
    for _ in 0..records {
        deltas.push(GaussianDelta {
            d_mu: r.vec3()?,
            d_q: r.quat()?,
            d_s: r.vec3()?,
        });
    }
    let count = usize::try_from(count).map_err(|_| Error::MalformedFile("count too large".into()))?;
    TabulatedField::new(n_frames, count, deltas)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::file(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn load_cloud(path: &Path) -> Result<GaussianCloud> {
    decode_cloud(&read(path)?)
}

pub fn save_cloud(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    write(path, &encode_cloud(cloud))
}

pub fn load_deformation(path: &Path) -> Result<TabulatedField> {
    decode_deformation(&read(path)?)
}

pub fn save_deformation(path: &Path, field: &TabulatedField) -> Result<()> {
    write(path, &encode_deformation(field))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_gaussian() -> GaussianCloud {
        let g = Gaussian::new(
            Vec3::new(0.25, -1.5, 3.0),
            Quat::new(1.0, 0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            0.5,
            vec![[0.1, 0.2, 0.3]],
        )
        .unwrap();
        GaussianCloud::new(vec![g], 0, 1).unwrap()
    }

    #[test]
    fn empty_cloud_is_valid() {
        let c = GaussianCloud::empty(2);
        let bytes = encode_cloud(&c);
        assert_eq!(bytes.len(), CLOUD_HEADER_LEN);
        let back = decode_cloud(&bytes).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.sh_degree(), 2);
    }

    #[test]
    fn single_gaussian_round_trip() {
        let c = one_gaussian();
        let bytes = encode_cloud(&c);
        let back = decode_cloud(&bytes).unwrap();
        let g = &back.gaussians()[0];
        assert_eq!(*g.rotation(), Quat::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(*g.scale(), Vec3::repeat(1.0));
        assert_eq!(g.opacity(), 0.5);
        assert_eq!(encode_cloud(&back), bytes);
    }

    #[test]
    fn zero_scale_is_rejected() {
        let mut bytes = encode_cloud(&one_gaussian());
        // scale.x sits after magic/version/count/degree, mu and q
        let off = CLOUD_HEADER_LEN + 7 * 4;
        bytes[off..off + 4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_cloud(&bytes), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn malformed_headers() {
        let bytes = encode_cloud(&one_gaussian());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_cloud(&bad), Err(Error::MalformedFile(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_cloud(&bad), Err(Error::MalformedFile(_))));
        assert!(matches!(decode_cloud(&bytes[..bytes.len() - 1]), Err(Error::MalformedFile(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_cloud(&long), Err(Error::MalformedFile(_))));
        let mut huge = bytes;
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_cloud(&huge), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn nan_is_rejected() {
        let mut bytes = encode_cloud(&one_gaussian());
        bytes[CLOUD_HEADER_LEN..CLOUD_HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_cloud(&bytes).is_err());
    }

    #[test]
    fn deformation_round_trip_and_checks() {
        let mut d = GaussianDelta::zero();
        d.d_mu = Vec3::new(1.0, 2.0, 3.0);
        d.d_q = Quat::new(0.0, 0.5, 0.0, 0.0);
        let field = TabulatedField::new(2, 1, vec![GaussianDelta::zero(), d]).unwrap();
        let bytes = encode_deformation(&field);
        let back = decode_deformation(&bytes).unwrap();
        assert_eq!(back, field);
        assert_eq!(encode_deformation(&back), bytes);
        // extra trailing data (e.g. per-frame color channels) is rejected
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 12]);
        assert!(decode_deformation(&extra).is_err());
        // non-zero frame-1 delta
        let mut bad = bytes;
        bad[DEFORMATION_HEADER_LEN..DEFORMATION_HEADER_LEN + 4].copy_from_slice(&1f32.to_le_bytes());
        assert!(matches!(decode_deformation(&bad), Err(Error::InvariantViolation(_))));
    }
}
