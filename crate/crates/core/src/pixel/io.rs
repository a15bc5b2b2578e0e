//! `PSLG` pseudo-label files and 8-bit PNG label maps.
//!
//! `PSLG`: magic, u16 version (1), u32 batch, u32 height, u32 width, u32 k,
//! f64 gamma, `n*k` little-endian f64 distributions row-major, then the gate
//! as `ceil(n/8)` bytes, least significant bit first.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};
use crate::transport::io::{dim, put_f64s, put_u16, put_u32, Reader, FORMAT_VERSION};
use crate::transport::Layout;

use super::{GateMask, LabelGrid, PseudoLabelGrid};

pub const PSEUDO_MAGIC: &[u8; 4] = b"PSLG";

pub fn encode_pseudo_labels(pl: &PseudoLabelGrid) -> Result<Vec<u8>> {
    let n = pl.q.rows();
    let mut out = Vec::with_capacity(30 + n * pl.q.cols() * 8 + n.div_ceil(8));
    out.extend_from_slice(PSEUDO_MAGIC);
    put_u16(&mut out, FORMAT_VERSION);
    put_u32(&mut out, dim(pl.layout.batch, "batch")?);
    put_u32(&mut out, dim(pl.layout.height, "height")?);
    put_u32(&mut out, dim(pl.layout.width, "width")?);
    put_u32(&mut out, dim(pl.q.cols(), "k")?);
    put_f64s(&mut out, &[pl.gate.gamma]);
    put_f64s(&mut out, pl.q.matrix().data());
    let mut bits = vec![0u8; n.div_ceil(8)];
    for (i, &f) in pl.gate.flags.iter().enumerate() {
        if f {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bits);
    Ok(out)
}

pub fn decode_pseudo_labels(bytes: &[u8]) -> Result<PseudoLabelGrid> {
    let mut r = Reader::new(bytes);
    r.magic(PSEUDO_MAGIC)?;
    r.version()?;
    let at = r.position();
    let batch = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let k = r.u32()? as usize;
    let layout = Layout::new(batch, height, width).map_err(|e| Error::parse(at, e.to_string()))?;
    let gamma = r.f64()?;
    let n = layout.rows();
    let at = r.position();
    let data = r.f64s(n * k)?;
    let q = ProbMatrix::new(Matrix::from_vec(n, k, data)?)
        .map_err(|e| Error::parse(at, e.to_string()))?;
    let bits = r.bytes(n.div_ceil(8))?;
    r.finish()?;
    let flags = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
    PseudoLabelGrid::new(q, GateMask { flags, gamma }, layout)
}

/// Encodes one image of a label grid as an 8-bit grayscale PNG.
pub fn encode_label_png(labels: &[u8], height: usize, width: usize) -> Result<Vec<u8>> {
    if labels.len() != height * width {
        return Err(Error::Shape(format!(
            "{} labels for a {height}x{width} image",
            labels.len()
        )));
    }
    let img = GrayImage::from_raw(width as u32, height as u32, labels.to_vec())
        .ok_or_else(|| Error::Shape("label buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Decodes an 8-bit label PNG into `(labels, height, width)`.
pub fn decode_label_png(bytes: &[u8]) -> Result<(Vec<u8>, usize, usize)> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    if !matches!(img, image::DynamicImage::ImageLuma8(_)) {
        return Err(Error::Invalid(format!(
            "label maps must be 8-bit single channel, got {:?}",
            img.color()
        )));
    }
    let g = img.into_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok((g.into_raw(), h, w))
}

pub fn read_label_png(path: &Path) -> Result<LabelGrid> {
    let (labels, h, w) = decode_label_png(&std::fs::read(path)?)?;
    LabelGrid::new(labels, Layout::new(1, h, w)?)
}

pub fn write_label_png(path: &Path, labels: &[u8], height: usize, width: usize) -> Result<()> {
    std::fs::write(path, encode_label_png(labels, height, width)?)?;
    Ok(())
}
