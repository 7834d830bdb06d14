#![allow(dead_code)]

use freqbar::compiler::{compile, AmplitudeLaw, CompileOptions, CrossbarProgram, Kernel};
use freqbar::device::ConductanceTable;
use freqbar::pipeline::{add_noise, Image};
use rand::Rng;

pub fn gaussian_program() -> CrossbarProgram {
    compile(
        &Kernel::gaussian3(),
        &ConductanceTable::builtin(),
        AmplitudeLaw::default(),
        CompileOptions::default(),
    )
    .expect("gaussian kernel compiles")
}

/// Random kernel with 1..=9 cells and weights in the representable 1..=5.
pub fn random_kernel(rng: &mut impl Rng) -> Kernel {
    let rows = rng.random_range(1..=3);
    let cols = rng.random_range(1..=3);
    let weights = (0..rows * cols).map(|_| rng.random_range(1..=5)).collect();
    Kernel::new(rows, cols, weights, rng.random_range(1..=32)).unwrap()
}

pub fn random_program(rng: &mut impl Rng) -> CrossbarProgram {
    compile(
        &random_kernel(rng),
        &ConductanceTable::builtin(),
        AmplitudeLaw::default(),
        CompileOptions::default(),
    )
    .unwrap()
}

pub fn random_patch(rng: &mut impl Rng, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(0..=255)).collect()
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize, channels: usize) -> Image {
    let px = (0..w * h * channels).map(|_| rng.random()).collect();
    Image::new(w, h, channels, px).unwrap()
}

/// Deterministic street-like RGB scene: sky gradient, road, and crossing
/// stripes, blended with uniform noise.
pub fn noisy_scene(size: usize, seed: u64) -> Image {
    let mut img = Image::filled(size, size, 3, 0).unwrap();
    for y in 0..size {
        for x in 0..size {
            let fy = y as f64 / size as f64;
            let fx = x as f64 / size as f64;
            let rgb = if fy < 0.35 {
                [90.0 + 120.0 * fy, 140.0 + 200.0 * fy, 230.0 - 40.0 * fx]
            } else if ((x + 2 * y) / 9) % 2 == 0 && fy > 0.6 {
                [235.0, 235.0, 230.0]
            } else {
                let shade = 40.0 + 60.0 * fx * (1.0 - fy);
                [shade, shade * 0.9, shade * 0.8]
            };
            for (c, v) in rgb.iter().enumerate() {
                img.set(x, y, c, v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    add_noise(&img, 0.5, seed).unwrap()
}
