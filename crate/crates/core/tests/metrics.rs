mod common;

use common::{blur_gray, box_blur5, sharp_texture};
use otassign::metrics::{
    compression_ratio, glcm_score, list_images, load_raster, GrayImage, MetricReport, Raster,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: usize = 64;

fn gray(data: Vec<u8>) -> GrayImage {
    GrayImage::new(W, W, data).unwrap()
}

#[test]
fn noise_beats_box_blur_on_glcm() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<u8> = (0..W * W).map(|_| rng.random()).collect();
        let blurred = box_blur5(&noise, W, W);
        let a = glcm_score(&gray(noise), 32).unwrap();
        let b = glcm_score(&gray(blurred), 32).unwrap();
        assert!(a > b, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn noise_is_nearly_incompressible() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise: Vec<u8> = (0..256 * 256).map(|_| rng.random()).collect();
    let r = compression_ratio(&Raster::Gray(GrayImage::new(256, 256, noise).unwrap())).unwrap();
    assert!((0.95..1.05).contains(&r), "ratio {r}");
}

#[test]
fn blurring_is_monotone() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = sharp_texture(&mut rng, W, W);
        let g0 = glcm_score(&gray(base.clone()), 32).unwrap();
        let r0 = compression_ratio(&Raster::Gray(gray(base.clone()))).unwrap();
        for sigma in [1.0, 1.5, 2.5] {
            let b = blur_gray(&base, W, W, sigma);
            let g = glcm_score(&gray(b.clone()), 32).unwrap();
            let r = compression_ratio(&Raster::Gray(gray(b))).unwrap();
            assert!(g <= g0 + 1e-9, "seed {seed} sigma {sigma}: glcm {g} > {g0}");
            assert!(r >= r0 - 1e-9, "seed {seed} sigma {sigma}: ratio {r} < {r0}");
        }
    }
}

#[test]
fn rgb_uses_luma_and_stays_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<u8> = (0..W * W * 3).map(|_| rng.random()).collect();
    let rgb = Raster::rgb(W, W, data.clone()).unwrap();
    let luma: Vec<u8> = data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
        .collect();
    assert_eq!(rgb.to_gray().data(), &luma[..]);
    let a = MetricReport::from_rasters([("x".to_string(), &rgb)]).unwrap();
    let b = MetricReport::from_rasters([("x".to_string(), &rgb)]).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn loads_png_and_pnm_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = sharp_texture(&mut rng, W, W);
    image::GrayImage::from_raw(W as u32, W as u32, g.clone())
        .unwrap()
        .save(dir.path().join("b.png"))
        .unwrap();
    let rgb: Vec<u8> = (0..W * W * 3).map(|_| rng.random()).collect();
    image::RgbImage::from_raw(W as u32, W as u32, rgb.clone())
        .unwrap()
        .save(dir.path().join("a.ppm"))
        .unwrap();
    std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
    let paths = list_images(dir.path()).unwrap();
    let names: Vec<_> = paths.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, vec!["a.ppm", "b.png"]);
    assert_eq!(load_raster(&paths[0]).unwrap(), Raster::rgb(W, W, rgb).unwrap());
    assert_eq!(load_raster(&paths[1]).unwrap(), Raster::Gray(gray(g)));
}
