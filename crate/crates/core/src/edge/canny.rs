//! Canny edge detection on `[0, 1]` images.
//!
//! Gaussian smoothing (truncated at 4 sigma, reflected borders), Sobel
//! gradients, non-maximum suppression along the quantized gradient direction
//! and double-threshold hysteresis with 8-connected linking. Thresholds are
//! fractions of the largest gradient magnitude in the image.

use std::collections::VecDeque;

use super::EdgeMask;
use crate::error::{Error, Result};
use crate::image::Image;

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

fn gaussian_blur(image: &Image, sigma: f64) -> Vec<f64> {
    let (w, h) = image.dimensions();
    if sigma == 0.0 {
        return image.data().to_vec();
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let src = image.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, k) in taps.iter().zip(-r..=r) {
                acc += t * src[y * w + reflect(x as isize + k, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, k) in taps.iter().zip(-r..=r) {
                acc += t * tmp[reflect(y as isize + k, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Sobel response of the smoothed image.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl GradientField {
    pub fn max_magnitude(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0, f64::max)
    }
}

pub fn gradient_field(image: &Image, sigma: f64) -> GradientField {
    let (w, h) = image.dimensions();
    let s = gaussian_blur(image, sigma);
    let at = |x: isize, y: isize| s[reflect(y, h) * w + reflect(x, w)];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut magnitude = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            magnitude[i] = dx.hypot(dy);
        }
    }
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    }
}

/// Neighbour offsets `(behind, ahead)` along the quantized gradient.
fn gradient_neighbours(gx: f64, gy: f64) -> ((isize, isize), (isize, isize)) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        ((-1, 0), (1, 0))
    } else if angle < 67.5 {
        ((-1, -1), (1, 1))
    } else if angle < 112.5 {
        ((0, -1), (0, 1))
    } else {
        ((1, -1), (-1, 1))
    }
}

fn non_max_suppression(field: &GradientField) -> Vec<bool> {
    let (w, h) = (field.width, field.height);
    let mag = |x: isize, y: isize| {
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            0.0
        } else {
            field.magnitude[y as usize * w + x as usize]
        }
    };
    let mut keep = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = field.magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let ((bx, by), (ax, ay)) = gradient_neighbours(field.gx[i], field.gy[i]);
            // ties along a plateau go to the pixel furthest along the gradient
            keep[i] = m >= mag(x + bx, y + by) && m > mag(x + ax, y + ay);
        }
    }
    keep
}

/// Binary Canny edge mask. `low` and `high` are fractions of the maximum
/// gradient magnitude and must satisfy `0 < low < high`.
pub fn canny_edges(image: &Image, sigma: f64, low: f64, high: f64) -> Result<EdgeMask> {
    if !(low > 0.0 && low < high) {
        return Err(Error::InvalidThresholds { low, high });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "canny sigma must be finite and non-negative, got {sigma}"
        )));
    }
    let (w, h) = image.dimensions();
    let field = gradient_field(image, sigma);
    let peak = field.max_magnitude();
    let mut mask = EdgeMask::empty(w, h);
    if peak <= 0.0 {
        return Ok(mask);
    }
    let thin = non_max_suppression(&field);
    let low_t = low * peak;
    let high_t = high * peak;
    let weak = |i: usize| thin[i] && field.magnitude[i] >= low_t;

    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if thin[i] && field.magnitude[i] >= high_t && !mask.bits[i] {
            mask.bits[i] = true;
            queue.push_back(i);
            while let Some(j) = queue.pop_front() {
                let (x, y) = ((j % w) as isize, (j / w) as isize);
                for ny in y - 1..=y + 1 {
                    for nx in x - 1..=x + 1 {
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if !mask.bits[k] && weak(k) {
                            mask.bits[k] = true;
                            queue.push_back(k);
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}
