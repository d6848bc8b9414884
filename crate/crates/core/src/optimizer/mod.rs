//! Regularized training, pruning and the tiled fitting pipeline.

mod pipeline;
mod tiles;

pub use self::pipeline::{fit_pipeline, fit_pipeline_with, FitReport, InitMode, TileReport};
pub use self::tiles::{merge_models, split_tiles, TileSpec};

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{loss_gradients, Kernel, SmoeModel, PARAMS_PER_KERNEL};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Weight of the `(sum_i alpha_i)^2` penalty.
    pub reg_weight: f64,
    /// Kernels with `alpha` below this are removed; `0` disables pruning.
    pub prune_threshold: f64,
    /// Stop once the loss improved by less than this fraction over the last
    /// `convergence_window` iterations; `0` disables early stopping.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            max_iters: 2000,
            reg_weight: 1e-7,
            prune_threshold: 1e-3,
            convergence_tol: 1e-7,
            convergence_window: 50,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be non-negative, got {v}"
                )))
            }
        };
        positive("learning rate", self.learning_rate)?;
        positive("adam eps", self.adam_eps)?;
        non_negative("regularization weight", self.reg_weight)?;
        non_negative("prune threshold", self.prune_threshold)?;
        non_negative("convergence tolerance", self.convergence_tol)?;
        for (name, b) in [
            ("adam beta1", self.adam_beta1),
            ("adam beta2", self.adam_beta2),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1), got {b}"
                )));
            }
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidConfig(
                "convergence window must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Same schedule without regularization or pruning.
    pub fn fine_tune(&self) -> Self {
        Self {
            reg_weight: 0.0,
            prune_threshold: 0.0,
            ..self.clone()
        }
    }
}

/// Outcome of one [`train`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations_run: usize,
    /// Objective (MSE plus regularization) of the returned model.
    pub final_loss: f64,
    pub pruned_count: usize,
    pub wall_time: Duration,
    /// Objective at the start of every iteration.
    pub loss_trace: Vec<f64>,
}

/// First- and second-moment state, one row per kernel.
struct Adam {
    first: Vec<[f64; PARAMS_PER_KERNEL]>,
    second: Vec<[f64; PARAMS_PER_KERNEL]>,
    step: i32,
}

impl Adam {
    fn new(kernels: usize) -> Self {
        Self {
            first: vec![[0.0; PARAMS_PER_KERNEL]; kernels],
            second: vec![[0.0; PARAMS_PER_KERNEL]; kernels],
            step: 0,
        }
    }

    fn update(
        &mut self,
        cfg: &TrainConfig,
        kernels: &mut [Kernel],
        grads: &[[f64; PARAMS_PER_KERNEL]],
    ) {
        self.step += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.step);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.step);
        for (((k, g), m), v) in kernels
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let mut p = k.params();
            for j in 0..PARAMS_PER_KERNEL {
                m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
                v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
                p[j] -= cfg.learning_rate * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.adam_eps);
            }
            *k = Kernel::from_params(p);
        }
    }

    fn retain(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.first.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.second.retain(|_| *it.next().unwrap());
    }
}

/// Which kernels survive a prune at `tau`; at least one always does.
fn survivors(kernels: &[Kernel], tau: f64) -> Vec<bool> {
    let mut keep: Vec<bool> = kernels.iter().map(|k| k.alpha >= tau).collect();
    if !keep.iter().any(|&k| k) && !kernels.is_empty() {
        let mut best = 0;
        for (i, k) in kernels.iter().enumerate() {
            if k.alpha > kernels[best].alpha {
                best = i;
            }
        }
        keep[best] = true;
    }
    keep
}

/// Removes kernels with `alpha < tau`, preserving order. If that would
/// leave nothing, the kernel with the largest alpha is kept.
pub fn prune(model: &SmoeModel, tau: f64) -> Result<(SmoeModel, usize)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "prune threshold must be positive, got {tau}"
        )));
    }
    let keep = survivors(model.kernels(), tau);
    let kernels: Vec<Kernel> = model
        .kernels()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(k, _)| *k)
        .collect();
    let removed = model.len() - kernels.len();
    Ok((model.with_kernels(kernels)?, removed))
}

/// True once the best loss of the last `convergence_window` iterations beats
/// the best loss before them by less than `convergence_tol` (relative).
fn converged(trace: &[f64], cfg: &TrainConfig) -> bool {
    if cfg.convergence_tol <= 0.0 || trace.len() <= cfg.convergence_window {
        return false;
    }
    let split = trace.len() - cfg.convergence_window;
    let best = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    let before = best(&trace[..split]);
    let recent = best(&trace[split..]);
    before - recent <= cfg.convergence_tol * before.abs()
}

/// Full-batch Adam on `mse + reg_weight * (sum alpha)^2` over every kernel
/// parameter.
///
/// After each step alphas are clamped at zero and, when pruning is enabled,
/// kernels below the threshold are dropped together with their moment state.
/// Stops after `max_iters` or when the relative improvement over the
/// convergence window falls below `convergence_tol`.
pub fn train(
    model: &SmoeModel,
    target: &Image,
    cfg: &TrainConfig,
) -> Result<(SmoeModel, TrainReport)> {
    cfg.validate()?;
    model.ensure_non_empty()?;
    if model.dimensions() != target.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: model.dimensions(),
            actual: target.dimensions(),
        });
    }
    let start = Instant::now();
    let mut current = model.clone();
    let mut adam = Adam::new(current.len());
    let mut trace = Vec::new();
    let mut pruned_count = 0;

    for iteration in 0..cfg.max_iters {
        let grads = loss_gradients(&current, target, cfg.reg_weight)?;
        let loss = grads.loss();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        trace.push(loss);
        if converged(&trace, cfg) {
            break;
        }
        let kernels = current.kernels_mut();
        adam.update(cfg, kernels, &grads.kernels);
        if kernels
            .iter()
            .any(|k| k.params().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteLoss { iteration });
        }
        for k in kernels.iter_mut() {
            k.alpha = k.alpha.max(0.0);
        }
        if cfg.prune_threshold > 0.0 {
            let keep = survivors(kernels, cfg.prune_threshold);
            let before = kernels.len();
            let mut it = keep.iter();
            kernels.retain(|_| *it.next().unwrap());
            pruned_count += before - kernels.len();
            adam.retain(&keep);
        }
    }

    let last = loss_gradients(&current, target, cfg.reg_weight)?;
    let final_loss = last.loss();
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: trace.len(),
        });
    }
    // parameters were updated in place; re-validate before handing back
    let current = SmoeModel::new(current.into_kernels(), model.width(), model.height())?;
    Ok((
        current,
        TrainReport {
            iterations_run: trace.len(),
            final_loss,
            pruned_count,
            wall_time: start.elapsed(),
            loss_trace: trace,
        },
    ))
}
