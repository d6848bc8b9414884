//! Dense evaluation over the pixel grid: reconstruction, loss and gradients.
//!
//! The grid is processed in square blocks. For each block, kernels whose
//! log-gate is provably more than [`LOG_CUTOFF`] below the block's best
//! kernel at every pixel are skipped; their gating weight is below
//! `exp(-LOG_CUTOFF)`, far under f64 resolution of the weights that remain.
//! Blocks are independent and run in parallel; per-block partial results are
//! reduced in block order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::{nearest_center, Kernel, SmoeModel, PARAMS_PER_KERNEL};
use crate::error::Result;
use crate::image::Image;

const BLOCK: usize = 16;
const LOG_CUTOFF: f64 = 46.0;

#[derive(Clone, Copy)]
struct Block {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn blocks(width: usize, height: usize) -> Vec<Block> {
    let mut out = Vec::new();
    for y0 in (0..height).step_by(BLOCK) {
        for x0 in (0..width).step_by(BLOCK) {
            out.push(Block {
                x0,
                y0,
                x1: (x0 + BLOCK).min(width) - 1,
                y1: (y0 + BLOCK).min(height) - 1,
            });
        }
    }
    out
}

/// Per-kernel quantities needed for the block bounds.
struct Bounds {
    log_alpha: f64,
    lam_min: f64,
    lam_max: f64,
}

impl Bounds {
    fn new(k: &Kernel) -> Self {
        let [s11, s12, s22] = k.steering();
        let mean = 0.5 * (s11 + s22);
        let rad = (0.25 * (s11 - s22) * (s11 - s22) + s12 * s12).sqrt();
        Self {
            log_alpha: k.alpha.ln(),
            lam_min: (mean - rad).max(0.0),
            lam_max: mean + rad,
        }
    }
}

/// Kernels that can carry non-negligible weight somewhere in `block`.
/// Empty only when every alpha is zero.
fn active_set(kernels: &[Kernel], bounds: &[Bounds], block: Block) -> Vec<usize> {
    let (x0, x1) = (block.x0 as f64, block.x1 as f64);
    let (y0, y1) = (block.y0 as f64, block.y1 as f64);
    let mut upper = Vec::with_capacity(kernels.len());
    let mut floor = f64::NEG_INFINITY;
    for (k, b) in kernels.iter().zip(bounds) {
        let [mx, my] = k.mu;
        let nx = (x0 - mx).max(mx - x1).max(0.0);
        let ny = (y0 - my).max(my - y1).max(0.0);
        let fx = (x0 - mx).abs().max((x1 - mx).abs());
        let fy = (y0 - my).abs().max((y1 - my).abs());
        upper.push(b.log_alpha - b.lam_min * (nx * nx + ny * ny));
        floor = floor.max(b.log_alpha - b.lam_max * (fx * fx + fy * fy));
    }
    if floor == f64::NEG_INFINITY {
        return Vec::new();
    }
    let threshold = floor - LOG_CUTOFF;
    upper
        .iter()
        .enumerate()
        .filter(|(_, &u)| u >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Scratch buffers for one pixel's softmax over the active kernels.
struct Gate {
    weights: Vec<f64>,
}

impl Gate {
    fn new() -> Self {
        Self {
            weights: Vec::new(),
        }
    }

    /// Fills normalized weights for `active` at `x` and returns the output.
    #[inline]
    fn eval(&mut self, kernels: &[Kernel], active: &[usize], x: [f64; 2]) -> f64 {
        self.weights.clear();
        let mut shift = f64::NEG_INFINITY;
        let mut lead = active[0];
        for &i in active {
            let l = kernels[i].log_gate(x);
            if l > shift {
                shift = l;
                lead = i;
            }
            self.weights.push(l);
        }
        let mut total = 0.0;
        for w in &mut self.weights {
            *w = (*w - shift).exp();
            total += *w;
        }
        // offsets from the dominant expert, so equal experts give it exactly
        let base = kernels[lead].expert;
        let mut out = 0.0;
        for (w, &i) in self.weights.iter_mut().zip(active) {
            *w /= total;
            out += (kernels[i].expert - base) * *w;
        }
        base + out
    }
}

fn render_block(kernels: &[Kernel], bounds: &[Bounds], block: Block) -> Vec<f64> {
    let active = active_set(kernels, bounds, block);
    let mut gate = Gate::new();
    let mut out = Vec::with_capacity((block.x1 - block.x0 + 1) * (block.y1 - block.y0 + 1));
    for y in block.y0..=block.y1 {
        for x in block.x0..=block.x1 {
            let p = [x as f64, y as f64];
            out.push(if active.is_empty() {
                kernels[nearest_center(kernels, p)].expert
            } else {
                gate.eval(kernels, &active, p)
            });
        }
    }
    out
}

/// Unclamped model output at every integer pixel, row-major.
pub(crate) fn render(model: &SmoeModel) -> Result<Vec<f64>> {
    model.ensure_non_empty()?;
    let (w, h) = model.dimensions();
    let kernels = model.kernels();
    let bounds: Vec<Bounds> = kernels.iter().map(Bounds::new).collect();
    let blocks = blocks(w, h);
    let parts: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|&b| render_block(kernels, &bounds, b))
        .collect();
    let mut data = vec![0.0; w * h];
    for (b, part) in blocks.iter().zip(parts) {
        let bw = b.x1 - b.x0 + 1;
        for (row, chunk) in part.chunks(bw).enumerate() {
            let start = (b.y0 + row) * w + b.x0;
            data[start..start + bw].copy_from_slice(chunk);
        }
    }
    Ok(data)
}

/// Samples the model at every integer pixel and clamps to `[0, 1]`.
pub fn reconstruct(model: &SmoeModel) -> Result<Image> {
    let mut data = render(model)?;
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(model.width(), model.height(), data)
}

/// Mean squared error between the unclamped model output and `target`.
pub fn mse_loss(model: &SmoeModel, target: &Image) -> Result<f64> {
    check_dims(model, target)?;
    let rendered = render(model)?;
    let sse: f64 = rendered
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / target.len() as f64)
}

fn check_dims(model: &SmoeModel, target: &Image) -> Result<()> {
    if model.dimensions() != target.dimensions() {
        return Err(crate::Error::DimensionMismatch {
            expected: model.dimensions(),
            actual: target.dimensions(),
        });
    }
    Ok(())
}

/// Objective value and its gradient for every kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    /// Mean squared error term.
    pub mse: f64,
    /// `reg_weight * (sum_i alpha_i)^2`.
    pub regularization: f64,
    /// Per-kernel gradient of `mse + regularization`, in the parameter order
    /// of [`Kernel::params`]: `[mu_x, mu_y, a11, a21, a22, m, alpha]`.
    pub kernels: Vec<[f64; PARAMS_PER_KERNEL]>,
}

impl LossGradients {
    pub fn loss(&self) -> f64 {
        self.mse + self.regularization
    }
}

struct BlockGrad {
    sse: f64,
    active: Vec<usize>,
    grads: Vec<[f64; PARAMS_PER_KERNEL]>,
}

fn gradient_block(
    kernels: &[Kernel],
    bounds: &[Bounds],
    target: &Image,
    block: Block,
    scale: f64,
) -> BlockGrad {
    let active = active_set(kernels, bounds, block);
    let mut grads = vec![[0.0; PARAMS_PER_KERNEL]; active.len()];
    let mut sse = 0.0;
    let mut fallback: Vec<(usize, f64)> = Vec::new();
    let mut gate = Gate::new();
    for y in block.y0..=block.y1 {
        for x in block.x0..=block.x1 {
            let p = [x as f64, y as f64];
            if active.is_empty() {
                // every alpha is zero: the nearest expert is the output and
                // the only parameter with a non-zero derivative
                let i = nearest_center(kernels, p);
                let r = kernels[i].expert - target.get(x, y);
                sse += r * r;
                fallback.push((i, scale * r));
                continue;
            }
            let f = gate.eval(kernels, &active, p);
            let r = f - target.get(x, y);
            sse += r * r;
            let coef = scale * r;
            for ((g, &i), &w) in grads.iter_mut().zip(&active).zip(&gate.weights) {
                let k = &kernels[i];
                let [a11, a21, a22] = k.chol;
                let dx = p[0] - k.mu[0];
                let dy = p[1] - k.mu[1];
                let u1 = a11 * dx + a21 * dy;
                let u2 = a22 * dy;
                let dl = coef * w * (k.expert - f);
                g[0] += dl * 2.0 * a11 * u1;
                g[1] += dl * 2.0 * (a21 * u1 + a22 * u2);
                g[2] -= dl * 2.0 * u1 * dx;
                g[3] -= dl * 2.0 * u1 * dy;
                g[4] -= dl * 2.0 * u2 * dy;
                g[5] += coef * w;
                g[6] += dl / k.alpha;
            }
        }
    }
    let (active, grads) = if active.is_empty() {
        let mut idx = Vec::new();
        let mut g = Vec::new();
        for (i, d) in fallback {
            idx.push(i);
            let mut row = [0.0; PARAMS_PER_KERNEL];
            row[5] = d;
            g.push(row);
        }
        (idx, g)
    } else {
        (active, grads)
    };
    BlockGrad { sse, active, grads }
}

/// Exact gradients of `mse + reg_weight * (sum_i alpha_i)^2` with respect
/// to every kernel parameter, using unclamped model values.
pub fn loss_gradients(model: &SmoeModel, target: &Image, reg_weight: f64) -> Result<LossGradients> {
    model.ensure_non_empty()?;
    check_dims(model, target)?;
    let kernels = model.kernels();
    let bounds: Vec<Bounds> = kernels.iter().map(Bounds::new).collect();
    let n = target.len() as f64;
    let scale = 2.0 / n;
    let parts: Vec<BlockGrad> = blocks(model.width(), model.height())
        .into_par_iter()
        .map(|b| gradient_block(kernels, &bounds, target, b, scale))
        .collect();

    let mut grads = vec![[0.0; PARAMS_PER_KERNEL]; kernels.len()];
    let mut sse = 0.0;
    for part in parts {
        sse += part.sse;
        for (&i, g) in part.active.iter().zip(&part.grads) {
            for (acc, v) in grads[i].iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
    let alpha_sum: f64 = kernels.iter().map(|k| k.alpha).sum();
    for g in &mut grads {
        g[6] += 2.0 * reg_weight * alpha_sum;
    }
    Ok(LossGradients {
        mse: sse / n,
        regularization: reg_weight * alpha_sum * alpha_sum,
        kernels: grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::evaluate;

    fn unit(mu: [f64; 2], expert: f64) -> Kernel {
        Kernel::isotropic(mu, 1.0, expert)
    }

    #[test]
    fn single_kernel_reconstructs_constant() {
        let m = SmoeModel::new(vec![unit([1.3, 2.2], 0.7)], 4, 4).unwrap();
        let img = reconstruct(&m).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn empty_model_errors() {
        let m = SmoeModel::new(vec![], 4, 4).unwrap();
        assert!(matches!(reconstruct(&m), Err(crate::Error::ModelEmpty)));
    }

    #[test]
    fn symmetric_pair_row() {
        // 1x5 row centred between kernels at x=0 and x=4
        let m = SmoeModel::new(vec![unit([0.0, 0.0], 1.0), unit([4.0, 0.0], 0.0)], 5, 1).unwrap();
        let row = reconstruct(&m).unwrap();
        let d = row.data();
        assert!((d[2] - 0.5).abs() < 1e-15);
        for i in 0..5 {
            assert!((d[i] + d[4 - i] - 1.0).abs() < 1e-12);
        }
        assert!((d[1] - 0.999665).abs() < 1e-6);
        assert!((d[3] - 0.000335).abs() < 1e-6);
        assert!(d[0] > 0.9999);
    }

    #[test]
    fn grid_matches_pointwise_evaluation() {
        let kernels = vec![
            Kernel {
                mu: [3.2, 7.9],
                chol: [0.3, -0.1, 0.25],
                expert: 0.2,
                alpha: 0.8,
            },
            Kernel {
                mu: [30.0, 4.0],
                chol: [0.05, 0.02, 0.4],
                expert: 0.9,
                alpha: 1.3,
            },
            Kernel {
                mu: [12.5, 36.0],
                chol: [0.9, 0.0, 0.9],
                expert: 0.5,
                alpha: 0.01,
            },
        ];
        let m = SmoeModel::new(kernels, 40, 40).unwrap();
        let raw = render(&m).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                let e = evaluate(&m, [x as f64, y as f64]).unwrap();
                assert!((raw[y * 40 + x] - e).abs() < 1e-14, "({x},{y})");
            }
        }
    }

    #[test]
    fn mse_examples() {
        let m = SmoeModel::new(vec![unit([0.0, 0.0], 0.6)], 3, 3).unwrap();
        let t = Image::filled(3, 3, 0.5).unwrap();
        assert!((mse_loss(&m, &t).unwrap() - 0.01).abs() < 1e-15);
        let same = Image::filled(3, 3, 0.6).unwrap();
        assert_eq!(mse_loss(&m, &same).unwrap(), 0.0);
        let wrong = Image::filled(4, 3, 0.6).unwrap();
        assert!(matches!(
            mse_loss(&m, &wrong),
            Err(crate::Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_residual_gradients() {
        let m = SmoeModel::new(vec![unit([2.0, 2.0], 0.4)], 6, 6).unwrap();
        let t = Image::filled(6, 6, 0.4).unwrap();
        let g = loss_gradients(&m, &t, 0.0).unwrap();
        assert_eq!(g.mse, 0.0);
        assert!(g.kernels[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn regularizer_gradient_on_zero_residual() {
        // all experts equal the constant target, so only the regularizer acts
        let kernels = vec![
            Kernel {
                alpha: 0.5,
                ..unit([1.0, 1.0], 0.3)
            },
            Kernel {
                alpha: 2.0,
                ..unit([5.0, 4.0], 0.3)
            },
        ];
        let m = SmoeModel::new(kernels, 8, 8).unwrap();
        let t = Image::filled(8, 8, 0.3).unwrap();
        let beta = 0.25;
        let g = loss_gradients(&m, &t, beta).unwrap();
        for row in &g.kernels {
            assert!((row[6] - 2.0 * beta * 2.5).abs() < 1e-15);
        }
        assert!((g.regularization - beta * 6.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_gating_gradient_only_touches_nearest_expert() {
        let mut a = unit([0.0, 0.0], 0.0);
        let mut b = unit([7.0, 0.0], 1.0);
        a.alpha = 0.0;
        b.alpha = 0.0;
        let m = SmoeModel::new(vec![a, b], 8, 1).unwrap();
        let t = Image::filled(8, 1, 0.5).unwrap();
        let g = loss_gradients(&m, &t, 0.0).unwrap();
        // pixels 0..=3 pick kernel a (residual -0.5), 4..=7 pick b (+0.5)
        assert!((g.kernels[0][5] - 2.0 / 8.0 * 4.0 * -0.5).abs() < 1e-15);
        assert!((g.kernels[1][5] - 2.0 / 8.0 * 4.0 * 0.5).abs() < 1e-15);
        assert!((g.mse - 0.25).abs() < 1e-15);
    }
}
