//! Procedural "shapes world": images of colored shapes with exact labels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::pixel::LabelGrid;
use crate::rng::stream_rng;
use crate::transport::Layout;

/// Class colors; index 0 is the background.
pub const PALETTE: [[f32; 3]; 8] = [
    [0.40, 0.40, 0.40],
    [0.85, 0.15, 0.15],
    [0.15, 0.70, 0.20],
    [0.15, 0.25, 0.85],
    [0.90, 0.75, 0.15],
    [0.15, 0.80, 0.80],
    [0.80, 0.20, 0.80],
    [0.95, 0.95, 0.95],
];

/// Which generator produces a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Clean rendering with long-tailed class frequencies.
    Real,
    /// Class-balanced periodic layout with texture noise and blurred edges.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub classes: usize,
    pub size: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub eval: usize,
    /// Frequent-to-rare shape ratio of the last class in the real domain.
    pub rare_ratio: f64,
    /// Per-instance color offset amplitude.
    pub instance_jitter: f32,
    /// Per-pixel texture amplitude of the real domain.
    pub texture: f32,
    pub synthetic_texture: f32,
    /// How far the rare class color sits toward class 1 in every domain.
    pub rare_proximity: f32,
    /// How much further the rare class color moves toward class 1 in the synthetic domain.
    pub synthetic_shift: f32,
    pub synthetic_blur: f32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            size: 64,
            labeled: 200,
            unlabeled: 1000,
            eval: 200,
            rare_ratio: 20.0,
            instance_jitter: 0.06,
            texture: 0.03,
            synthetic_texture: 0.08,
            rare_proximity: 0.5,
            synthetic_shift: 0.0,
            synthetic_blur: 1.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(3..=8).contains(&self.classes) {
            return Err(Error::Invalid(format!("classes {} outside 3..=8", self.classes)));
        }
        if self.size < 16 {
            return Err(Error::Invalid(format!("image size {} below 16", self.size)));
        }
        if !(self.rare_ratio >= 1.0) {
            return Err(Error::Invalid(format!("rare ratio {} below 1", self.rare_ratio)));
        }
        Ok(())
    }

    pub fn rare_class(&self) -> usize {
        self.classes - 1
    }

    /// Relative frequency of each object class in the real domain.
    pub fn class_weights(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| match c {
                0 => 0.0,
                c if c == self.rare_class() => 1.0 / self.rare_ratio,
                _ => 1.0,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapesSample {
    pub image: RgbImage,
    pub labels: LabelGrid,
    pub seed: u64,
    pub class_histogram: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rect { x0: f32, y0: f32, x1: f32, y1: f32 },
    Disk { cx: f32, cy: f32, r: f32 },
    Triangle { p: [(f32, f32); 3] },
}

impl Shape {
    fn contains(&self, x: f32, y: f32) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Triangle { p } => {
                let edge = |a: (f32, f32), b: (f32, f32)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let (e0, e1, e2) = (edge(p[0], p[1]), edge(p[1], p[2]), edge(p[2], p[0]));
                (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
            }
        }
    }
}

fn random_shape(rng: &mut impl Rng, size: f32) -> Shape {
    let s = size / 64.0;
    match rng.random_range(0..3) {
        0 => {
            let (w, h) = (rng.random_range(6.0..24.0) * s, rng.random_range(6.0..24.0) * s);
            let (x0, y0) = (rng.random_range(0.0..size - w), rng.random_range(0.0..size - h));
            Shape::Rect { x0, y0, x1: x0 + w, y1: y0 + h }
        }
        1 => {
            let r = rng.random_range(4.0..12.0) * s;
            Shape::Disk { cx: rng.random_range(r..size - r), cy: rng.random_range(r..size - r), r }
        }
        _ => {
            let span = rng.random_range(12.0..28.0) * s;
            let (ox, oy) = (rng.random_range(0.0..size - span), rng.random_range(0.0..size - span));
            // One vertex per third of the box keeps the triangle fat.
            let p = [
                (ox + rng.random_range(0.0..span / 3.0), oy + rng.random_range(2.0 * span / 3.0..span)),
                (ox + rng.random_range(2.0 * span / 3.0..span), oy + rng.random_range(2.0 * span / 3.0..span)),
                (ox + rng.random_range(span / 3.0..2.0 * span / 3.0), oy + rng.random_range(0.0..span / 3.0)),
            ];
            Shape::Triangle { p }
        }
    }
}

/// A shape covering roughly `area` pixels centred in a grid cell.
fn cell_shape(rng: &mut impl Rng, cell: (f32, f32, f32), area: f32) -> Shape {
    let (cx0, cy0, side) = cell;
    let area = area.min(0.9 * side * side);
    if rng.random_bool(0.5) {
        let aspect: f32 = rng.random_range(0.8..1.25);
        let w = (area * aspect).sqrt().min(side);
        let h = (area / w).min(side);
        let x0 = cx0 + rng.random_range(0.0..=side - w);
        let y0 = cy0 + rng.random_range(0.0..=side - h);
        Shape::Rect { x0, y0, x1: x0 + w, y1: y0 + h }
    } else {
        let r = (area / std::f32::consts::PI).sqrt().min(side / 2.0);
        Shape::Disk {
            cx: cx0 + rng.random_range(r..=side - r),
            cy: cy0 + rng.random_range(r..=side - r),
            r,
        }
    }
}

fn weighted_class(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random_range(0.0..total);
    for (c, &w) in weights.iter().enumerate() {
        if t < w {
            return c;
        }
        t -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Color of class `c` in the given domain, before instance jitter.
pub fn class_color(world: &WorldConfig, domain: Domain, c: usize) -> [f32; 3] {
    let toward = PALETTE[1];
    let lerp = |a: [f32; 3], t: f32| [0, 1, 2].map(|i| a[i] + t * (toward[i] - a[i]));
    if c != world.rare_class() {
        return PALETTE[c];
    }
    let base = lerp(PALETTE[c], world.rare_proximity);
    match domain {
        Domain::Real => base,
        Domain::Synthetic => lerp(base, world.synthetic_shift),
    }
}

/// Renders one sample; a pure function of `(world, domain, seed)`.
pub fn generate_shapes(world: &WorldConfig, domain: Domain, seed: u64) -> Result<ShapesSample> {
    world.validate()?;
    let mut rng = stream_rng(seed, domain as u64, 0);
    let n = world.size;
    let size = n as f32;
    let mut labels = vec![0u8; n * n];
    let mut shapes: Vec<(Shape, usize)> = Vec::new();
    match domain {
        Domain::Real => {
            let weights = world.class_weights();
            for _ in 0..rng.random_range(1..=6) {
                let class = weighted_class(&mut rng, &weights);
                shapes.push((random_shape(&mut rng, size), class));
            }
        }
        Domain::Synthetic => {
            // A periodic tiling: a `period x period` block of cells holds one
            // shape per object class, and the image shows two periods per
            // axis. Crops spanning whole periods stay class-balanced.
            let objects = world.classes - 1;
            let period = (objects as f64).sqrt().ceil() as usize;
            let cells = 2 * period;
            let side = size / cells as f32;
            let mut phases: Vec<Option<usize>> = (1..world.classes).map(Some).collect();
            phases.resize(period * period, None);
            for i in (1..phases.len()).rev() {
                phases.swap(i, rng.random_range(0..=i));
            }
            let area = (side * period as f32).powi(2) / world.classes as f32;
            for cy in 0..cells {
                for cx in 0..cells {
                    if let Some(class) = phases[(cy % period) * period + cx % period] {
                        let origin = (cx as f32 * side, cy as f32 * side, side);
                        shapes.push((cell_shape(&mut rng, origin, area), class));
                    }
                }
            }
        }
    }
    for (shape, class) in &shapes {
        for y in 0..n {
            for x in 0..n {
                if shape.contains(x as f32 + 0.5, y as f32 + 0.5) {
                    labels[y * n + x] = *class as u8;
                }
            }
        }
    }
    let (texture, jitter) = match domain {
        Domain::Real => (world.texture, world.instance_jitter),
        Domain::Synthetic => (world.synthetic_texture, world.instance_jitter),
    };
    // Instance colors: background plus one per drawn shape.
    let mut colors = vec![[0.0f32; 3]; shapes.len() + 1];
    let mut owner = vec![0usize; n * n];
    for (i, (shape, _)) in shapes.iter().enumerate() {
        for y in 0..n {
            for x in 0..n {
                if shape.contains(x as f32 + 0.5, y as f32 + 0.5) {
                    owner[y * n + x] = i + 1;
                }
            }
        }
    }
    for (i, color) in colors.iter_mut().enumerate() {
        let class = if i == 0 { 0 } else { shapes[i - 1].1 };
        let base = class_color(world, domain, class);
        *color = base.map(|v| v + rng.random_range(-jitter..=jitter));
    }
    let mut image = RgbImage::new(n, n);
    for y in 0..n {
        for x in 0..n {
            let c = colors[owner[y * n + x]];
            image.set_pixel(x, y, c.map(|v| v + rng.random_range(-texture..=texture)));
        }
    }
    if domain == Domain::Synthetic && world.synthetic_blur > 0.0 {
        image = image.gaussian_blur(world.synthetic_blur);
    }
    image.clamp();
    let mut class_histogram = vec![0; world.classes];
    for &l in &labels {
        class_histogram[l as usize] += 1;
    }
    Ok(ShapesSample {
        image,
        labels: LabelGrid::new(labels, Layout::new(1, n, n)?)?,
        seed,
        class_histogram,
    })
}

/// Class whose rendered color in `domain` is nearest to `rgb`.
pub fn nearest_class(world: &WorldConfig, domain: Domain, rgb: [f32; 3]) -> usize {
    let mut best = (f32::INFINITY, 0);
    for c in 0..world.classes {
        let p = class_color(world, domain, c);
        let d: f32 = (0..3).map(|i| (rgb[i] - p[i]).powi(2)).sum();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Labeled (real), unlabeled (synthetic) and evaluation (real) samples.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub world: WorldConfig,
    pub labeled: Vec<ShapesSample>,
    pub unlabeled: Vec<ShapesSample>,
    pub eval: Vec<ShapesSample>,
}

pub(crate) const STREAM_LABELED: u64 = 101;
pub(crate) const STREAM_UNLABELED: u64 = 102;
pub(crate) const STREAM_EVAL: u64 = 103;

impl Dataset {
    pub fn generate(world: &WorldConfig, seed: u64) -> Result<Self> {
        world.validate()?;
        let make = |stream: u64, count: usize, domain: Domain| -> Result<Vec<ShapesSample>> {
            (0..count as u64)
                .map(|i| generate_shapes(world, domain, crate::rng::derive_seed(seed, stream, i)))
                .collect()
        };
        Ok(Self {
            world: world.clone(),
            labeled: make(STREAM_LABELED, world.labeled, Domain::Real)?,
            unlabeled: make(STREAM_UNLABELED, world.unlabeled, Domain::Synthetic)?,
            eval: make(STREAM_EVAL, world.eval, Domain::Real)?,
        })
    }
}
