use crate::imaging::RgbImage;

/// RGB, (x, y), 3x3 mean and 3x3 standard deviation per channel.
pub const FEATURE_DIM: usize = 11;

/// Row-major `pixels x FEATURE_DIM` per-pixel features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub pixels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    /// Stacks feature maps of several images.
    pub fn concat(maps: &[FeatureMap]) -> FeatureMap {
        FeatureMap {
            pixels: maps.iter().map(|m| m.pixels).sum(),
            data: maps.iter().flat_map(|m| m.data.iter().copied()).collect(),
        }
    }
}

/// Neighbourhoods are clamped at the image border.
pub fn compute_features(img: &RgbImage) -> FeatureMap {
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut data = Vec::with_capacity(w * h * FEATURE_DIM);
    let fx = if w > 1 { 1.0 / (w - 1) as f64 } else { 0.0 };
    let fy = if h > 1 { 1.0 / (h - 1) as f64 } else { 0.0 };
    for y in 0..h {
        let rows = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
        for x in 0..w {
            let cols = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
            let mut sum = [0.0f64; 3];
            let mut sq = [0.0f64; 3];
            for &yy in &rows {
                for &xx in &cols {
                    let i = (yy * w + xx) * 3;
                    for c in 0..3 {
                        let v = f64::from(src[i + c]);
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                }
            }
            let i = (y * w + x) * 3;
            for c in 0..3 {
                data.push(f64::from(src[i + c]));
            }
            data.push(x as f64 * fx);
            data.push(y as f64 * fy);
            for s in sum {
                data.push(s / 9.0);
            }
            for c in 0..3 {
                let mean = sum[c] / 9.0;
                data.push((sq[c] / 9.0 - mean * mean).max(0.0).sqrt());
            }
        }
    }
    FeatureMap {
        pixels: w * h,
        data,
    }
}
