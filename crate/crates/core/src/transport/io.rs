//! Binary and CSV formats for cost matrices and plans.
//!
//! `OTCM`: magic, u16 version (1), u32 n, u32 k, then `n*k` little-endian
//! f64 values row-major. `OTPL` uses the same layout followed by u32
//! iterations used and f64 final violation. CSV files start with a `n,k`
//! header row followed by one line per matrix row.
//!
//! `PTEN` stores a probability tensor: magic, u16 version (1), u32 batch,
//! classes, height, width, then the values as little-endian f64 in
//! `(batch, class, row, column)` order.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{CostMatrix, ProbTensor, TransportPlan};

pub const COST_MAGIC: &[u8; 4] = b"OTCM";
pub const PLAN_MAGIC: &[u8; 4] = b"OTPL";
pub const TENSOR_MAGIC: &[u8; 4] = b"PTEN";
pub const FORMAT_VERSION: u16 = 1;

/// Little-endian cursor that reports byte offsets on failure.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::parse(
                self.pos,
                format!("unexpected end of data reading {what}"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::parse(
                at,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.u16()?;
        if v != FORMAT_VERSION {
            return Err(Error::parse(at, format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, "u16")?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, "u32")?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, "f32")?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, "f64")?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let needed = count.checked_mul(8).unwrap_or(usize::MAX);
        if self.bytes.len() - self.pos < needed {
            return Err(Error::parse(
                self.pos,
                format!("expected {count} f64 values, data ends early"),
            ));
        }
        (0..count).map(|_| self.f64()).collect()
    }

    pub(crate) fn bytes(&mut self, len: usize) -> Result<&'a [u8]> {
        self.take(len, "bytes")
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(
                self.pos,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub(crate) fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Shape(format!("{what} = {v} does not fit in u32")))
}

fn encode_matrix(magic: &[u8; 4], m: &Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(14 + m.data().len() * 8);
    out.extend_from_slice(magic);
    put_u16(&mut out, FORMAT_VERSION);
    put_u32(&mut out, dim(m.rows(), "n")?);
    put_u32(&mut out, dim(m.cols(), "k")?);
    put_f64s(&mut out, m.data());
    Ok(out)
}

fn decode_matrix(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<Matrix> {
    r.magic(magic)?;
    r.version()?;
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    let data = r.f64s(n * k)?;
    Matrix::from_vec(n, k, data)
}

pub fn encode_cost(c: &CostMatrix) -> Result<Vec<u8>> {
    encode_matrix(COST_MAGIC, c.matrix())
}

pub fn decode_cost(bytes: &[u8]) -> Result<CostMatrix> {
    let mut r = Reader::new(bytes);
    let at = r.position();
    let m = decode_matrix(&mut r, COST_MAGIC)?;
    r.finish()?;
    CostMatrix::new(m).map_err(|e| Error::parse(at, e.to_string()))
}

pub fn encode_plan(plan: &TransportPlan) -> Result<Vec<u8>> {
    let mut out = encode_matrix(PLAN_MAGIC, &plan.data)?;
    put_u32(&mut out, dim(plan.iterations_used, "iterations")?);
    put_f64s(&mut out, &[plan.final_violation]);
    Ok(out)
}

/// Decodes an `OTPL` plan. Scalings are not stored; `converged` is
/// reconstructed against `tolerance`.
pub fn decode_plan(bytes: &[u8], tolerance: f64) -> Result<TransportPlan> {
    let mut r = Reader::new(bytes);
    let data = decode_matrix(&mut r, PLAN_MAGIC)?;
    let iterations_used = r.u32()? as usize;
    let final_violation = r.f64()?;
    r.finish()?;
    Ok(TransportPlan {
        data,
        scaling: None,
        iterations_used,
        final_violation,
        converged: final_violation <= tolerance,
    })
}

pub fn encode_prob_tensor(p: &ProbTensor) -> Result<Vec<u8>> {
    let (b, k, h, w) = p.shape();
    let mut out = Vec::with_capacity(22 + p.data().len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    put_u16(&mut out, FORMAT_VERSION);
    for (v, what) in [(b, "batch"), (k, "classes"), (h, "height"), (w, "width")] {
        put_u32(&mut out, dim(v, what)?);
    }
    put_f64s(&mut out, p.data());
    Ok(out)
}

/// Decodes `PTEN` bytes. Every pixel must lie on the simplex within
/// `tolerance`; accepted pixels are renormalized to sum to one exactly.
pub fn decode_prob_tensor(bytes: &[u8], tolerance: f64) -> Result<ProbTensor> {
    let mut r = Reader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    r.version()?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let [b, k, h, w] = dims;
    let at = r.position();
    let count = b
        .checked_mul(k)
        .and_then(|x| x.checked_mul(h))
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| Error::parse(at, "tensor extent overflows"))?;
    let mut data = r.f64s(count)?;
    r.finish()?;
    let t = ProbTensor::from_parts(b, k, h, w, data.clone()).map_err(|e| Error::parse(at, e.to_string()))?;
    t.validate(tolerance)?;
    let hw = h * w;
    for bi in 0..b {
        let base = bi * k * hw;
        for pix in 0..hw {
            let s: f64 = (0..k).map(|j| data[base + j * hw + pix]).sum();
            for j in 0..k {
                data[base + j * hw + pix] /= s;
            }
        }
    }
    ProbTensor::from_parts(b, k, h, w, data)
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut s = format!("{},{}\n", m.rows(), m.cols());
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Parses the CSV layout; errors carry the byte offset of the bad field.
pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n');
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(0, "missing `n,k` header"))?;
    let dims = parse_fields(header, offset)?;
    if dims.len() != 2 || dims.iter().any(|d| d.fract() != 0.0 || *d < 0.0) {
        return Err(Error::parse(0, "header must be `n,k`"));
    }
    let (n, k) = (dims[0] as usize, dims[1] as usize);
    offset += header.len();
    let mut data = Vec::with_capacity(n * k);
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            offset += line.len();
            continue;
        }
        let values = parse_fields(line, offset)?;
        if values.len() != k {
            return Err(Error::parse(
                offset,
                format!("row {rows} has {} fields, expected {k}", values.len()),
            ));
        }
        data.extend(values);
        rows += 1;
        offset += line.len();
    }
    if rows != n {
        return Err(Error::parse(offset, format!("expected {n} rows, found {rows}")));
    }
    Matrix::from_vec(n, k, data)
}

fn parse_fields(line: &str, offset: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut at = offset;
    for field in line.trim_end_matches(['\n', '\r']).split(',') {
        let v = field
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::parse(at, format!("cannot parse `{}` as a number", field.trim())))?;
        out.push(v);
        at += field.len() + 1;
    }
    Ok(out)
}

/// Reads a cost matrix from `OTCM` bytes or CSV text.
pub fn read_cost(bytes: &[u8]) -> Result<CostMatrix> {
    if bytes.starts_with(COST_MAGIC) {
        return decode_cost(bytes);
    }
    let text = std::str::from_utf8(bytes).map_err(|e| {
        Error::parse(e.valid_up_to(), "neither OTCM data nor UTF-8 CSV")
    })?;
    let m = matrix_from_csv(text)?;
    CostMatrix::new(m).map_err(|e| Error::parse(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_binary_layout() {
        let c = CostMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let bytes = encode_cost(&c).unwrap();
        assert_eq!(&bytes[..4], b"OTCM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes.len(), 4 + 2 + 4 + 4 + 16);
        assert_eq!(decode_cost(&bytes).unwrap(), c);
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let c = CostMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let bytes = encode_cost(&c).unwrap();
        match decode_cost(&bytes[..20]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_errors_name_the_byte_offset() {
        match matrix_from_csv("1,2\n0.5,abc\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matrix_from_csv("2,2\n0,0\n").is_err());
    }

    #[test]
    fn plan_trailer() {
        let plan = TransportPlan {
            data: Matrix::filled(2, 2, 0.25),
            scaling: None,
            iterations_used: 7,
            final_violation: 1e-9,
            converged: true,
        };
        let bytes = encode_plan(&plan).unwrap();
        assert_eq!(&bytes[..4], b"OTPL");
        let back = decode_plan(&bytes, 1e-6).unwrap();
        assert_eq!(back.iterations_used, 7);
        assert_eq!(back.final_violation, 1e-9);
        assert_eq!(back.data, plan.data);
    }
}
