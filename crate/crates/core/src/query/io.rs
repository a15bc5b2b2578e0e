//! `QSET` query-set files and ground-truth segments from label maps.

use crate::error::{Error, Result};
use crate::transport::io::{dim, put_u32, Reader};

use super::{GtPair, QuerySet};

const MAGIC: &[u8; 4] = b"QSET";

/// Magic, `u32` N, k, H, W, then per query `k+1` f64 scores and `H*W` f32
/// mask values, little-endian.
pub fn encode_query_set(z: &QuerySet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + z.queries() * ((z.classes() + 1) * 8 + z.pixels() * 4));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, dim(z.queries(), "queries")?);
    put_u32(&mut out, dim(z.classes(), "classes")?);
    put_u32(&mut out, dim(z.height(), "height")?);
    put_u32(&mut out, dim(z.width(), "width")?);
    for q in 0..z.queries() {
        for v in z.score(q) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &m in z.mask(q) {
            out.extend_from_slice(&(m as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_query_set(bytes: &[u8]) -> Result<QuerySet> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    if n == 0 || k == 0 || h == 0 || w == 0 {
        return Err(Error::parse(4, format!("zero extent in ({n}, {k}, {h}, {w})")));
    }
    let mut scores = Vec::with_capacity(n * (k + 1));
    let mut masks = Vec::with_capacity(n * h * w);
    for _ in 0..n {
        scores.extend(r.f64s(k + 1)?);
        for _ in 0..h * w {
            masks.push(f64::from(r.f32()?));
        }
    }
    r.finish()?;
    QuerySet::new(k, h, w, scores, masks)
}

/// Splits a label map into 4-connected segments per class.
///
/// Segments are ordered by class, then by the raster position of their first
/// pixel. Pixels equal to `ignore` belong to no segment.
pub fn gt_pairs_from_labels(
    labels: &[u8],
    height: usize,
    width: usize,
    classes: usize,
    ignore: u8,
) -> Result<Vec<GtPair>> {
    if labels.len() != height * width {
        return Err(Error::Shape(format!(
            "{} labels for a {height}x{width} map",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l != ignore && l as usize >= classes) {
        return Err(Error::Invalid(format!("label {l} outside 0..{classes}")));
    }
    let mut component = vec![usize::MAX; labels.len()];
    let mut segments: Vec<GtPair> = Vec::new();
    let mut stack = Vec::new();
    for class in 0..classes {
        for start in 0..labels.len() {
            if labels[start] as usize != class || labels[start] == ignore || component[start] != usize::MAX {
                continue;
            }
            let id = segments.len();
            let mut mask = vec![0.0; labels.len()];
            component[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                mask[i] = 1.0;
                let (y, x) = (i / width, i % width);
                let mut visit = |j: usize| {
                    if labels[j] == labels[start] && component[j] == usize::MAX {
                        component[j] = id;
                        stack.push(j);
                    }
                };
                if y > 0 {
                    visit(i - width);
                }
                if y + 1 < height {
                    visit(i + width);
                }
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < width {
                    visit(i + 1);
                }
            }
            segments.push(GtPair { class, mask });
        }
    }
    Ok(segments)
}
