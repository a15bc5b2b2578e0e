//! Small raster utilities: float RGB images, Gaussian blur, resizing.

use crate::error::{Error, Result};

/// Interleaved RGB with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    /// Rec. 601 luma.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .map(|p| to_u8(luma(p[0], p[1], p[2])))
            .collect()
    }

    pub fn gaussian_blur(&self, sigma: f32) -> Self {
        let mut out = self.clone();
        if sigma <= 0.0 {
            return out;
        }
        let kernel = gaussian_kernel(sigma);
        for c in 0..3 {
            let plane: Vec<f32> = self.data.iter().skip(c).step_by(3).copied().collect();
            let blurred = convolve_separable(&plane, self.width, self.height, &kernel);
            for (i, v) in blurred.into_iter().enumerate() {
                out.data[i * 3 + c] = v;
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(x, y, self.pixel(self.width - 1 - x, y));
            }
        }
        out
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let mut out = Self::new(width, height);
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f32;
                let (a, b, c, d) = (
                    self.pixel(x0, y0),
                    self.pixel(x1, y0),
                    self.pixel(x0, y1),
                    self.pixel(x1, y1),
                );
                let mut rgb = [0.0; 3];
                for ch in 0..3 {
                    let top = a[ch] + (b[ch] - a[ch]) * tx;
                    let bottom = c[ch] + (d[ch] - c[ch]) * tx;
                    rgb[ch] = top + (bottom - top) * ty;
                }
                out.set_pixel(x, y, rgb);
            }
        }
        out
    }
}

#[inline]
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

#[inline]
fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Nearest-neighbour resampling of a label plane, matching the sampling
/// grid of [`RgbImage::resize_bilinear`].
pub fn resize_nearest<T: Copy>(src: &[T], width: usize, height: usize, new_w: usize, new_h: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let sy = (((y as f64 + 0.5) * height as f64 / new_h as f64) as usize).min(height - 1);
        for x in 0..new_w {
            let sx = (((x as f64 + 0.5) * width as f64 / new_w as f64) as usize).min(width - 1);
            out.push(src[sy * width + sx]);
        }
    }
    out
}

/// Normalized Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i32;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Separable convolution of a single plane with edge clamping.
pub fn convolve_separable(plane: &[f32], width: usize, height: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let clampi = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * row[clampi(x as isize + t as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clampi(y as isize + t as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_keeps_constant_images() {
        let img = RgbImage::from_vec(4, 3, vec![0.25; 36]).unwrap();
        let b = img.gaussian_blur(1.5);
        assert!(b.data().iter().all(|v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn flip_is_involution() {
        let data: Vec<f32> = (0..36).map(|i| i as f32 / 36.0).collect();
        let img = RgbImage::from_vec(4, 3, data).unwrap();
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_ne!(img.flip_horizontal(), img);
    }

    #[test]
    fn resize_identity_and_nearest() {
        let data: Vec<f32> = (0..48).map(|i| i as f32 / 48.0).collect();
        let img = RgbImage::from_vec(4, 4, data).unwrap();
        assert_eq!(img.resize_bilinear(4, 4), img);
        let labels: Vec<u8> = (0..16).collect();
        assert_eq!(resize_nearest(&labels, 4, 4, 4, 4), labels);
        assert_eq!(resize_nearest(&labels, 4, 4, 2, 2), vec![5, 7, 13, 15]);
        assert_eq!(resize_nearest(&[7u8], 1, 1, 3, 2), vec![7; 6]);
    }

    #[test]
    fn luma_weights() {
        let img = RgbImage::from_vec(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(img.to_luma8(), vec![76]);
    }
}
