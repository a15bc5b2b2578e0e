//! Weak (geometric) and strong (photometric + CutMix) augmentation.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::imaging::{luma, resize_nearest, RgbImage};
use crate::pixel::IGNORE_LABEL;

use super::world::ShapesSample;

pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);
pub const FLIP_PROB: f64 = 0.5;
pub const JITTER_PROB: f64 = 0.8;
pub const GRAYSCALE_PROB: f64 = 0.2;
pub const BLUR_PROB: f64 = 0.5;
pub const CUTMIX_ALPHA: f64 = 1.0;

/// An augmented image with its labels; pixels outside the source image are
/// invalid and carry the ignore label.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub image: RgbImage,
    pub labels: Vec<u8>,
    pub valid: Vec<bool>,
}

impl View {
    pub fn from_sample(sample: &ShapesSample) -> Self {
        Self {
            image: sample.image.clone(),
            labels: sample.labels.labels.clone(),
            valid: vec![true; sample.labels.labels.len()],
        }
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn flip_horizontal(&self) -> Self {
        let (w, h) = (self.width(), self.height());
        let mut labels = self.labels.clone();
        let mut valid = self.valid.clone();
        for y in 0..h {
            labels[y * w..(y + 1) * w].reverse();
            valid[y * w..(y + 1) * w].reverse();
        }
        Self {
            image: self.image.flip_horizontal(),
            labels,
            valid,
        }
    }
}

/// Random rescale within [`SCALE_RANGE`], crop or pad back to the input
/// size, and a horizontal flip with probability `flip_prob`.
pub fn weak_augment_with(sample: &ShapesSample, rng: &mut impl Rng, flip_prob: f64) -> View {
    let base = View::from_sample(sample);
    let (w, h) = (base.width(), base.height());
    let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
    let nw = ((w as f64 * scale).round() as usize).max(1);
    let nh = ((h as f64 * scale).round() as usize).max(1);
    let image = base.image.resize_bilinear(nw, nh);
    let labels = resize_nearest(&base.labels, w, h, nw, nh);
    // Source offset when cropping, destination offset when padding.
    let (sx, dx) = if nw >= w { (rng.random_range(0..=nw - w), 0) } else { (0, rng.random_range(0..=w - nw)) };
    let (sy, dy) = if nh >= h { (rng.random_range(0..=nh - h), 0) } else { (0, rng.random_range(0..=h - nh)) };
    let mut out = View {
        image: RgbImage::new(w, h),
        labels: vec![IGNORE_LABEL; w * h],
        valid: vec![false; w * h],
    };
    for y in 0..h.min(nh) {
        for x in 0..w.min(nw) {
            let (srcx, srcy) = (x + sx, y + sy);
            let (dstx, dsty) = (x + dx, y + dy);
            out.image.set_pixel(dstx, dsty, image.pixel(srcx, srcy));
            out.labels[dsty * w + dstx] = labels[srcy * nw + srcx];
            out.valid[dsty * w + dstx] = true;
        }
    }
    if rng.random_bool(flip_prob) {
        out = out.flip_horizontal();
    }
    out
}

pub fn weak_augment(sample: &ShapesSample, rng: &mut impl Rng) -> View {
    weak_augment_with(sample, rng, FLIP_PROB)
}

/// Color jitter, random grayscale and Gaussian blur on top of a weak view.
pub fn strong_augment(view: &View, rng: &mut impl Rng) -> View {
    let mut img = view.image.clone();
    if rng.random_bool(JITTER_PROB) {
        let brightness: f32 = rng.random_range(0.75..1.25);
        let contrast: f32 = rng.random_range(0.75..1.25);
        let saturation: f32 = rng.random_range(0.75..1.25);
        let data = img.data_mut();
        let n = (data.len() / 3) as f32;
        let mean = data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).sum::<f32>() / n * brightness;
        for p in data.chunks_exact_mut(3) {
            for v in p.iter_mut() {
                *v = (*v * brightness - mean) * contrast + mean;
            }
            let y = luma(p[0], p[1], p[2]);
            for v in p.iter_mut() {
                *v = y + (*v - y) * saturation;
            }
        }
        img.clamp();
    }
    if rng.random_bool(GRAYSCALE_PROB) {
        for p in img.data_mut().chunks_exact_mut(3) {
            let y = luma(p[0], p[1], p[2]);
            p.fill(y);
        }
    }
    if rng.random_bool(BLUR_PROB) {
        let sigma = rng.random_range(0.1..2.0);
        img = img.gaussian_blur(sigma);
    }
    View {
        image: img,
        labels: view.labels.clone(),
        valid: view.valid.clone(),
    }
}

/// Half-open pixel box `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CutBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// `lambda ~ Beta(alpha, alpha)`; the box has side ratio `sqrt(1 - lambda)`
/// and a uniformly drawn centre, clipped to the image.
pub fn cutmix_box(rng: &mut impl Rng, width: usize, height: usize, alpha: f64) -> CutBox {
    let lambda = Beta::new(alpha, alpha).map(|b| b.sample(rng)).unwrap_or(0.5);
    let ratio = (1.0 - lambda).sqrt();
    let bw = (width as f64 * ratio) as usize;
    let bh = (height as f64 * ratio) as usize;
    let cx = rng.random_range(0..width);
    let cy = rng.random_range(0..height);
    CutBox {
        x0: cx.saturating_sub(bw / 2),
        y0: cy.saturating_sub(bh / 2),
        x1: (cx + bw / 2).min(width),
        y1: (cy + bh / 2).min(height),
    }
}

/// Copies the `stride`-sized per-pixel records inside `b` from `src` to `dst`.
pub fn paste_box<T: Copy>(dst: &mut [T], src: &[T], width: usize, stride: usize, b: CutBox) {
    for y in b.y0..b.y1 {
        let start = (y * width + b.x0) * stride;
        let end = (y * width + b.x1) * stride;
        dst[start..end].copy_from_slice(&src[start..end]);
    }
}
