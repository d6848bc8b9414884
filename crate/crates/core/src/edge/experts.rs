//! Gradient-free expert estimation.
//!
//! Experts start as image samples at their (rounded) centers and are then
//! nudged toward the target by the residual of the model evaluated at those
//! center pixels. Gates never change during this phase, so the center
//! weights are computed once and each refinement step is a sparse
//! matrix-vector product.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{gating_weights, SmoeModel};

/// Weights below this are dropped from the center-weight rows.
const WEIGHT_FLOOR: f64 = 1e-17;

/// Nearest pixel to `mu` (halves round toward +inf); `None` outside the
/// frame.
pub(crate) fn sample_pixel(mu: [f64; 2], width: usize, height: usize) -> Option<(usize, usize)> {
    let x = (mu[0] + 0.5).floor();
    let y = (mu[1] + 0.5).floor();
    if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
        return None;
    }
    Some((x as usize, y as usize))
}

/// Result of [`init_experts_traced`].
#[derive(Debug, Clone)]
pub struct ExpertInit {
    pub model: SmoeModel,
    /// Center-pixel MSE at iteration 0 and after every accepted update.
    pub mse_trace: Vec<f64>,
}

pub fn init_experts(
    model: &SmoeModel,
    image: &Image,
    eta: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SmoeModel> {
    init_experts_traced(model, image, eta, max_iters, tol, false).map(|r| r.model)
}

fn predict(rows: &[Vec<(usize, f64)>], experts: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|row| row.iter().map(|&(k, w)| w * experts[k]).sum())
        .collect()
}

fn center_mse(pred: &[f64], targets: &[f64]) -> f64 {
    pred.iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

/// Samples experts at the kernel centers, then repeats
/// `m += eta * (target - prediction)` at the center pixels until
/// `max_iters` is reached or the center-pixel MSE improves by less than
/// `tol`. A step that would raise the MSE is discarded and ends the loop, so
/// the returned experts never do worse than the initial samples.
///
/// With `bounded`, every step is projected back onto the `[0, 1]` intensity
/// range.
pub fn init_experts_traced(
    model: &SmoeModel,
    image: &Image,
    eta: f64,
    max_iters: usize,
    tol: f64,
    bounded: bool,
) -> Result<ExpertInit> {
    model.ensure_non_empty()?;
    if image.dimensions() != model.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: model.dimensions(),
            actual: image.dimensions(),
        });
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eta must be positive, got {eta}"
        )));
    }
    let (w, h) = image.dimensions();
    let mut pixels = Vec::with_capacity(model.len());
    for (index, k) in model.kernels().iter().enumerate() {
        let p = sample_pixel(k.mu, w, h).ok_or(Error::CenterOutOfBounds {
            index,
            x: k.mu[0],
            y: k.mu[1],
        })?;
        pixels.push(p);
    }
    let targets: Vec<f64> = pixels.iter().map(|&(x, y)| image.get(x, y)).collect();
    let rows: Vec<Vec<(usize, f64)>> = pixels
        .iter()
        .map(|&(x, y)| {
            let weights = gating_weights(model, [x as f64, y as f64])?;
            Ok(weights
                .into_iter()
                .enumerate()
                .filter(|&(_, w)| w > WEIGHT_FLOOR)
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut experts = targets.clone();
    let mut pred = predict(&rows, &experts);
    let mut mse = center_mse(&pred, &targets);
    let mut trace = vec![mse];
    for _ in 0..max_iters {
        if mse == 0.0 {
            break;
        }
        let next: Vec<f64> = experts
            .iter()
            .zip(targets.iter().zip(&pred))
            .map(|(m, (t, p))| {
                let v = m + eta * (t - p);
                if bounded {
                    v.clamp(0.0, 1.0)
                } else {
                    v
                }
            })
            .collect();
        let next_pred = predict(&rows, &next);
        let next_mse = center_mse(&next_pred, &targets);
        if next_mse > mse {
            break;
        }
        let improvement = mse - next_mse;
        experts = next;
        pred = next_pred;
        mse = next_mse;
        trace.push(mse);
        if improvement < tol {
            break;
        }
    }

    let kernels = model
        .kernels()
        .iter()
        .zip(&experts)
        .map(|(k, &m)| crate::Kernel { expert: m, ..*k })
        .collect();
    Ok(ExpertInit {
        model: model.with_kernels(kernels)?,
        mse_trace: trace,
    })
}
