use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};

/// Per-pixel class probabilities laid out as `(batch, classes, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTensor {
    batch: usize,
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbTensor {
    pub const SIMPLEX_TOL: f64 = 1e-6;

    pub fn new(
        batch: usize,
        classes: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let t = Self::from_parts(batch, classes, height, width, data)?;
        t.validate(Self::SIMPLEX_TOL)?;
        Ok(t)
    }

    /// Shape checks only; the simplex invariant is not verified.
    pub(crate) fn from_parts(
        batch: usize,
        classes: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if batch == 0 || classes == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "zero extent in shape ({batch}, {classes}, {height}, {width})"
            )));
        }
        let expected = batch * classes * height * width;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            classes,
            height,
            width,
            data,
        })
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if let Some(v) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("probability {v} outside [0, 1]")));
        }
        for b in 0..self.batch {
            for h in 0..self.height {
                for w in 0..self.width {
                    let s: f64 = (0..self.classes).map(|j| self.get(b, j, h, w)).sum();
                    if (s - 1.0).abs() > tol {
                        return Err(Error::Invalid(format!(
                            "pixel ({b}, {h}, {w}) sums to {s}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn offset(&self, b: usize, j: usize, h: usize, w: usize) -> usize {
        ((b * self.classes + j) * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, b: usize, j: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(b, j, h, w)]
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.classes, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn layout(&self) -> Layout {
        Layout {
            batch: self.batch,
            height: self.height,
            width: self.width,
        }
    }
}

/// Bijection between flattened rows and `(image, y, x)` pixel coordinates.
///
/// Row `b*H*W + h*W + w` holds pixel `(h, w)` of image `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl Layout {
    pub fn new(batch: usize, height: usize, width: usize) -> Result<Self> {
        if batch == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "zero extent in layout ({batch}, {height}, {width})"
            )));
        }
        Ok(Self {
            batch,
            height,
            width,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.batch * self.height * self.width
    }

    #[inline]
    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn row_index(&self, b: usize, h: usize, w: usize) -> usize {
        debug_assert!(b < self.batch && h < self.height && w < self.width);
        (b * self.height + h) * self.width + w
    }

    #[inline]
    pub fn coords(&self, row: usize) -> (usize, usize, usize) {
        let hw = self.height * self.width;
        let b = row / hw;
        let r = row % hw;
        (b, r / self.width, r % self.width)
    }
}

/// Flattens `(b, k, H, W)` probabilities to an `n x k` matrix with
/// `n = b*H*W`, one contiguous class vector per pixel.
pub fn flatten_predictions(p: &ProbTensor) -> Result<(ProbMatrix, Layout)> {
    let (b, k, h, w) = p.shape();
    let layout = Layout::new(b, h, w)?;
    let mut m = Matrix::zeros(layout.rows(), k);
    for bi in 0..b {
        for j in 0..k {
            let plane = &p.data[p.offset(bi, j, 0, 0)..p.offset(bi, j, 0, 0) + h * w];
            for (pix, &v) in plane.iter().enumerate() {
                m.set(bi * h * w + pix, j, v);
            }
        }
    }
    Ok((ProbMatrix::new(m)?, layout))
}

/// Inverse of [`flatten_predictions`].
pub fn unflatten_predictions(m: &ProbMatrix, layout: &Layout) -> Result<ProbTensor> {
    if m.rows() != layout.rows() {
        return Err(Error::Shape(format!(
            "{} rows do not match layout with {} pixels",
            m.rows(),
            layout.rows()
        )));
    }
    let k = m.cols();
    let (b, h, w) = (layout.batch, layout.height, layout.width);
    let mut data = vec![0.0; b * k * h * w];
    for row in 0..m.rows() {
        let (bi, hi, wi) = layout.coords(row);
        for j in 0..k {
            data[((bi * k + j) * h + hi) * w + wi] = m.get(row, j);
        }
    }
    ProbTensor::from_parts(b, k, h, w, data)
}
