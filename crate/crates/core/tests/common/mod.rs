#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smoe::{EdgeMask, Image, Kernel, SmoeModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_kernel<R: Rng>(rng: &mut R, width: usize, height: usize) -> Kernel {
    Kernel {
        mu: [
            rng.gen_range(-0.5..width as f64 - 0.5),
            rng.gen_range(-0.5..height as f64 - 0.5),
        ],
        chol: [
            rng.gen_range(0.15..0.7),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(0.15..0.7),
        ],
        expert: rng.gen_range(0.0..1.0),
        alpha: rng.gen_range(0.2..1.5),
    }
}

pub fn random_model<R: Rng>(rng: &mut R, k: usize, width: usize, height: usize) -> SmoeModel {
    let kernels = (0..k).map(|_| random_kernel(rng, width, height)).collect();
    SmoeModel::new(kernels, width, height).unwrap()
}

pub fn random_image<R: Rng>(rng: &mut R, width: usize, height: usize) -> Image {
    let data = (0..width * height)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    Image::new(width, height, data).unwrap()
}

pub fn random_mask<R: Rng>(rng: &mut R, width: usize, height: usize, density: f64) -> EdgeMask {
    let bits = (0..width * height).map(|_| rng.gen_bool(density)).collect();
    EdgeMask::new(width, height, bits).unwrap()
}

/// White disk of `radius` centered in the frame, on black.
pub fn disk(size: usize, radius: f64) -> Image {
    let c = (size as f64 - 1.0) / 2.0;
    Image::from_fn(size, size, |x, y| {
        let d = (x as f64 - c).hypot(y as f64 - c);
        if d <= radius {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

pub fn step_edge(size: usize) -> Image {
    Image::from_fn(size, size, |x, _| if x >= size / 2 { 0.85 } else { 0.15 }).unwrap()
}

/// Left half a horizontal ramp, right half a flat tone.
pub fn two_tone_gradient(size: usize) -> Image {
    Image::from_fn(size, size, |x, y| {
        if x < size / 2 {
            0.1 + 0.5 * y as f64 / size as f64
        } else {
            0.9
        }
    })
    .unwrap()
}

/// A horizontal and a vertical bar crossing at the center.
pub fn crossing_bars(size: usize) -> Image {
    let lo = size * 3 / 8;
    let hi = size * 5 / 8;
    Image::from_fn(size, size, |x, y| {
        let in_h = (lo..hi).contains(&y);
        let in_v = (lo..hi).contains(&x);
        match (in_h, in_v) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.7,
            _ => 0.1,
        }
    })
    .unwrap()
}

/// Coarse checkerboard whose lower-left triangle is inverted.
pub fn checker_diagonal(size: usize) -> Image {
    let cell = size / 4;
    Image::from_fn(size, size, |x, y| {
        let mut on = (x / cell + y / cell) % 2 == 0;
        if y > x {
            on = !on;
        }
        if on {
            0.8
        } else {
            0.2
        }
    })
    .unwrap()
}

/// Loss recomputed from first principles: per-pixel softmax over
/// `ln(alpha) - |A^T (x - mu)|^2`, nearest center when every alpha is zero.
pub fn brute_loss(model: &SmoeModel, target: &Image, reg_weight: f64) -> f64 {
    let mut sse = 0.0;
    for y in 0..target.height() {
        for x in 0..target.width() {
            let v = brute_eval(model.kernels(), [x as f64, y as f64]);
            let e = v - target.get(x, y);
            sse += e * e;
        }
    }
    let alpha_sum: f64 = model.kernels().iter().map(|k| k.alpha).sum();
    sse / target.len() as f64 + reg_weight * alpha_sum * alpha_sum
}

pub fn brute_eval(kernels: &[Kernel], x: [f64; 2]) -> f64 {
    let logs: Vec<f64> = kernels
        .iter()
        .map(|k| {
            let (dx, dy) = (x[0] - k.mu[0], x[1] - k.mu[1]);
            let u1 = k.chol[0] * dx + k.chol[1] * dy;
            let u2 = k.chol[2] * dy;
            k.alpha.ln() - (u1 * u1 + u2 * u2)
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        let nearest = kernels
            .iter()
            .min_by(|a, b| {
                let da = (a.mu[0] - x[0]).hypot(a.mu[1] - x[1]);
                let db = (b.mu[0] - x[0]).hypot(b.mu[1] - x[1]);
                da.total_cmp(&db)
            })
            .unwrap();
        return nearest.expert;
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    kernels
        .iter()
        .zip(&weights)
        .map(|(k, w)| k.expert * w / total)
        .sum()
}

/// Every line of pixels along `step`, as coordinate lists in scan order.
pub fn lines(width: usize, height: usize, step: (isize, isize)) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (width as isize, height as isize);
    let starts: Vec<(isize, isize)> = match step {
        (1, 0) => (0..h).map(|y| (0, y)).collect(),
        (0, 1) => (0..w).map(|x| (x, 0)).collect(),
        (1, 1) => (0..h)
            .rev()
            .map(|y| (0, y))
            .chain((1..w).map(|x| (x, 0)))
            .collect(),
        (1, -1) => (0..h)
            .map(|y| (0, y))
            .chain((1..w).map(|x| (x, h - 1)))
            .collect(),
        _ => unreachable!(),
    };
    starts
        .into_iter()
        .map(|(mut x, mut y)| {
            let mut line = Vec::new();
            while x >= 0 && y >= 0 && x < w && y < h {
                line.push((x as usize, y as usize));
                x += step.0;
                y += step.1;
            }
            line
        })
        .collect()
}
