//! Texture and compressibility statistics for ranking image corpora by
//! high-frequency content.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: usize = 32;
/// Pixel offsets `(dy, dx)` of the co-occurrence matrices.
pub const GLCM_OFFSETS: [(usize, usize); 2] = [(0, 1), (1, 0)];
pub const MIN_SIDE: usize = 8;
/// Identifies the metric definitions and codec settings in reports.
pub const METRICS_VERSION: &str = "glcm-contrast/levels=32/offsets=(0,1),(1,0)/norm=levels-1; png/deflate=best/filter=paeth/image-0.25";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_size(width, height, data.len(), 1)?;
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// An 8-bit raster, gray or interleaved RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Raster {
    Gray(GrayImage),
    Rgb {
        width: usize,
        height: usize,
        data: Vec<u8>,
    },
}

impl Raster {
    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_size(width, height, data.len(), 3)?;
        Ok(Self::Rgb {
            width,
            height,
            data,
        })
    }

    /// Gray images pass through; RGB goes through Rec. 601 luma.
    pub fn to_gray(&self) -> GrayImage {
        match self {
            Raster::Gray(g) => g.clone(),
            Raster::Rgb {
                width,
                height,
                data,
            } => GrayImage {
                width: *width,
                height: *height,
                data: data
                    .chunks_exact(3)
                    .map(|p| {
                        let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
                        y.round().clamp(0.0, 255.0) as u8
                    })
                    .collect(),
            },
        }
    }

    fn parts(&self) -> (usize, usize, &[u8], ExtendedColorType) {
        match self {
            Raster::Gray(g) => (g.width, g.height, &g.data, ExtendedColorType::L8),
            Raster::Rgb {
                width,
                height,
                data,
            } => (*width, *height, data, ExtendedColorType::Rgb8),
        }
    }
}

fn check_size(width: usize, height: usize, len: usize, channels: usize) -> Result<()> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::Shape(format!(
            "image is {width}x{height}, both sides must be at least {MIN_SIDE}"
        )));
    }
    if len != width * height * channels {
        return Err(Error::Shape(format!(
            "{len} bytes for a {width}x{height}x{channels} image"
        )));
    }
    Ok(())
}

/// Mean over the offsets of the symmetric normalized co-occurrence contrast,
/// divided by `levels - 1`. Constant images score 0.
pub fn glcm_score(img: &GrayImage, levels: usize) -> Result<f64> {
    if !(2..=256).contains(&levels) {
        return Err(Error::Invalid(format!("GLCM levels {levels} outside 2..=256")));
    }
    let q: Vec<usize> = img.data.iter().map(|&v| v as usize * levels / 256).collect();
    let (w, h) = (img.width, img.height);
    let mut total = 0.0;
    for (dy, dx) in GLCM_OFFSETS {
        let mut counts = vec![0u64; levels * levels];
        for y in 0..h - dy {
            for x in 0..w - dx {
                let a = q[y * w + x];
                let b = q[(y + dy) * w + x + dx];
                counts[a * levels + b] += 1;
                counts[b * levels + a] += 1;
            }
        }
        let pairs: u64 = counts.iter().sum();
        let mut contrast = 0.0;
        for a in 0..levels {
            for b in 0..levels {
                let c = counts[a * levels + b];
                if c > 0 {
                    let d = a as f64 - b as f64;
                    contrast += c as f64 * d * d;
                }
            }
        }
        total += contrast / pairs as f64;
    }
    Ok(total / GLCM_OFFSETS.len() as f64 / (levels - 1) as f64)
}

/// PNG bytes under the pinned encoder settings.
pub fn encode_png_pinned(img: &Raster) -> Result<Vec<u8>> {
    let (w, h, data, color) = img.parts();
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Best, FilterType::Paeth).write_image(
        data,
        w as u32,
        h as u32,
        color,
    )?;
    Ok(out)
}

/// Raw byte count over pinned PNG byte count. Higher means more compressible.
///
/// Incompressible content can land slightly below 1 because of container
/// overhead.
pub fn compression_ratio(img: &Raster) -> Result<f64> {
    let raw = img.parts().2.len();
    Ok(raw as f64 / encode_png_pinned(img)?.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricEntry {
    pub path: String,
    pub glcm_score: f64,
    pub compression_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub entries: Vec<MetricEntry>,
}

impl MetricReport {
    pub fn from_rasters<'a>(items: impl IntoIterator<Item = (String, &'a Raster)>) -> Result<Self> {
        let mut entries = Vec::new();
        for (path, raster) in items {
            entries.push(MetricEntry {
                path,
                glcm_score: glcm_score(&raster.to_gray(), DEFAULT_LEVELS)?,
                compression_ratio: compression_ratio(raster)?,
            });
        }
        Ok(Self { entries })
    }

    pub fn glcm_mean_std(&self) -> (f64, f64) {
        mean_std(self.entries.iter().map(|e| e.glcm_score))
    }

    pub fn ratio_mean_std(&self) -> (f64, f64) {
        mean_std(self.entries.iter().map(|e| e.compression_ratio))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,glcm_score,compression_ratio\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.path, e.glcm_score, e.compression_ratio);
        }
        s
    }

    pub fn summary(&self) -> String {
        let (gm, gs) = self.glcm_mean_std();
        let (rm, rs) = self.ratio_mean_std();
        format!(
            "images: {}\nglcm_score mean: {gm:.6} std: {gs:.6}\ncompression_ratio mean: {rm:.6} std: {rs:.6}\nmetrics: {METRICS_VERSION}\n",
            self.entries.len()
        )
    }
}

/// Population mean and standard deviation; zeros for an empty input.
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Decodes a PNG or PNM file; 16-bit and alpha inputs are reduced to 8-bit
/// gray or RGB.
pub fn load_raster(path: &Path) -> Result<Raster> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        Raster::rgb(w, h, img.into_rgb8().into_raw())
    } else {
        Ok(Raster::Gray(GrayImage::new(w, h, img.into_luma8().into_raw())?))
    }
}

/// Image files directly inside `dir` with a PNG or PNM extension, sorted.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm" | "pbm"))
                    .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}
