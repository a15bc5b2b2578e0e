//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use otassign::Matrix;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x`.
pub fn finite_difference(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = x.get(i, j);
            probe.set(i, j, orig + FD_STEP);
            let up = f(&probe);
            probe.set(i, j, orig - FD_STEP);
            let down = f(&probe);
            probe.set(i, j, orig);
            grad.set(i, j, (up - down) / (2.0 * FD_STEP));
        }
    }
    grad
}

/// Largest absolute deviation between an analytic gradient and finite
/// differences.
pub fn max_gradient_error(analytic: &Matrix, x: &Matrix, f: impl Fn(&Matrix) -> f64) -> f64 {
    let fd = finite_difference(x, f);
    analytic.max_abs_diff(&fd)
}

/// Entries whose deviation exceeds `rel * |fd| + abs_floor`.
pub fn relative_gradient_violations(
    analytic: &Matrix,
    x: &Matrix,
    f: impl Fn(&Matrix) -> f64,
    rel: f64,
    abs_floor: f64,
) -> usize {
    let fd = finite_difference(x, f);
    analytic
        .data()
        .iter()
        .zip(fd.data())
        .filter(|(a, d)| (*a - *d).abs() > rel * d.abs() + abs_floor)
        .count()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Enumerates all injective maps from `targets` items into `preds` slots,
/// returning the minimum of `cost(t, assigned[t])` summed.
pub fn brute_force_assignment(
    targets: usize,
    preds: usize,
    cost: &dyn Fn(usize, usize) -> f64,
) -> f64 {
    fn go(
        t: usize,
        targets: usize,
        preds: usize,
        used: &mut Vec<bool>,
        acc: f64,
        cost: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
    ) {
        if t == targets {
            *best = best.min(acc);
            return;
        }
        for p in 0..preds {
            if !used[p] {
                used[p] = true;
                go(t + 1, targets, preds, used, acc + cost(t, p), cost, best);
                used[p] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, targets, preds, &mut vec![false; preds], 0.0, cost, &mut best);
    best
}

/// A sharp procedural texture: blocky shapes over per-pixel noise.
pub fn sharp_texture(rng: &mut impl Rng, width: usize, height: usize) -> Vec<u8> {
    let mut img: Vec<f32> = (0..width * height).map(|_| rng.random_range(0.0..1.0)).collect();
    for _ in 0..4 {
        let (x0, y0) = (rng.random_range(0..width), rng.random_range(0..height));
        let (bw, bh) = (rng.random_range(4..=width / 2), rng.random_range(4..=height / 2));
        let level: f32 = rng.random_range(0.0..1.0);
        for y in y0..(y0 + bh).min(height) {
            for x in x0..(x0 + bw).min(width) {
                let v = &mut img[y * width + x];
                *v = 0.5 * *v + 0.5 * level;
            }
        }
    }
    img.iter().map(|v| (v * 255.0).round() as u8).collect()
}

/// Gaussian blur of an 8-bit plane, rounded back to 8 bits.
pub fn blur_gray(data: &[u8], width: usize, height: usize, sigma: f32) -> Vec<u8> {
    let plane: Vec<f32> = data.iter().map(|&v| f32::from(v)).collect();
    let kernel = otassign::imaging::gaussian_kernel(sigma);
    otassign::imaging::convolve_separable(&plane, width, height, &kernel)
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// 5x5 box blur with edge clamping.
pub fn box_blur5(data: &[u8], width: usize, height: usize) -> Vec<u8> {
    let plane: Vec<f32> = data.iter().map(|&v| f32::from(v)).collect();
    otassign::imaging::convolve_separable(&plane, width, height, &[0.2; 5])
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect()
}
