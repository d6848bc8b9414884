//! The SMoE regression function.
//!
//! Each kernel contributes a gate `alpha * exp(-(x - mu)^T A A^T (x - mu))`.
//! Gates are normalized across kernels (a softmax over log-gates) and the
//! model output is the gate-weighted sum of the scalar experts.

mod grid;
mod io;

pub use self::grid::{loss_gradients, mse_loss, reconstruct, LossGradients};
pub use self::io::{load_model, parse_model, save_model, write_model};

use crate::error::{Error, Result};

/// Number of trainable scalars per kernel.
pub const PARAMS_PER_KERNEL: usize = 7;

/// One steered Gaussian expert.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    /// Center in pixel coordinates.
    pub mu: [f64; 2],
    /// Lower-triangular steering factor `A`, stored as `[a11, a21, a22]`.
    pub chol: [f64; 3],
    /// Expert intensity.
    pub expert: f64,
    /// Gating amplitude, kept non-negative.
    pub alpha: f64,
}

impl Kernel {
    /// Isotropic kernel with `Sigma = scale^2 * I`.
    pub fn isotropic(mu: [f64; 2], scale: f64, expert: f64) -> Self {
        Self {
            mu,
            chol: [scale, 0.0, scale],
            expert,
            alpha: 1.0,
        }
    }

    /// Steering matrix `Sigma = A A^T` as `[s11, s12, s22]`.
    pub fn steering(&self) -> [f64; 3] {
        let [a11, a21, a22] = self.chol;
        [a11 * a11, a11 * a21, a21 * a21 + a22 * a22]
    }

    /// `(x - mu)^T Sigma (x - mu)`, evaluated as `|A^T (x - mu)|^2`.
    #[inline]
    pub fn quad_form(&self, x: [f64; 2]) -> f64 {
        let [a11, a21, a22] = self.chol;
        let dx = x[0] - self.mu[0];
        let dy = x[1] - self.mu[1];
        let u1 = a11 * dx + a21 * dy;
        let u2 = a22 * dy;
        u1 * u1 + u2 * u2
    }

    /// `ln(alpha) - quad_form(x)`; `-inf` when `alpha == 0`.
    #[inline]
    pub fn log_gate(&self, x: [f64; 2]) -> f64 {
        self.alpha.ln() - self.quad_form(x)
    }

    /// Flattened parameters `[mu_x, mu_y, a11, a21, a22, m, alpha]`.
    pub fn params(&self) -> [f64; PARAMS_PER_KERNEL] {
        [
            self.mu[0],
            self.mu[1],
            self.chol[0],
            self.chol[1],
            self.chol[2],
            self.expert,
            self.alpha,
        ]
    }

    pub fn from_params(p: [f64; PARAMS_PER_KERNEL]) -> Self {
        Self {
            mu: [p[0], p[1]],
            chol: [p[2], p[3], p[4]],
            expert: p[5],
            alpha: p[6],
        }
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Unnormalized gate value `alpha * exp(-(x - mu)^T Sigma (x - mu))`.
pub fn kernel_value(kernel: &Kernel, x: [f64; 2]) -> f64 {
    kernel.alpha * (-kernel.quad_form(x)).exp()
}

/// A set of kernels over a `width x height` pixel domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoeModel {
    kernels: Vec<Kernel>,
    width: usize,
    height: usize,
}

impl SmoeModel {
    /// Validates dimensions and parameter finiteness. An empty kernel list is
    /// accepted here; evaluation entry points reject it with
    /// [`Error::ModelEmpty`].
    pub fn new(kernels: Vec<Kernel>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidModel(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if let Some(i) = kernels.iter().position(|k| !k.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "kernel {i} has a non-finite parameter"
            )));
        }
        if let Some(i) = kernels.iter().position(|k| k.alpha < 0.0) {
            return Err(Error::InvalidModel(format!(
                "kernel {i} has negative alpha"
            )));
        }
        Ok(Self {
            kernels,
            width,
            height,
        })
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn into_kernels(self) -> Vec<Kernel> {
        self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Replaces the kernel list, keeping the domain.
    pub fn with_kernels(&self, kernels: Vec<Kernel>) -> Result<Self> {
        Self::new(kernels, self.width, self.height)
    }

    pub(crate) fn kernels_mut(&mut self) -> &mut Vec<Kernel> {
        &mut self.kernels
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.kernels.is_empty() {
            Err(Error::ModelEmpty)
        } else {
            Ok(())
        }
    }
}

/// Normalized gating weights `w_i(x)` for every kernel.
///
/// Log-gates are shifted by their maximum before exponentiation, so the
/// weights cannot all underflow. If every `alpha` is zero the nearest kernel
/// center takes the full weight.
pub fn gating_weights(model: &SmoeModel, x: [f64; 2]) -> Result<Vec<f64>> {
    model.ensure_non_empty()?;
    let logs: Vec<f64> = model.kernels.iter().map(|k| k.log_gate(x)).collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        let mut w = vec![0.0; logs.len()];
        w[nearest_center(&model.kernels, x)] = 1.0;
        return Ok(w);
    }
    let mut w: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Model output `sum_i m_i w_i(x)` at a continuous position.
pub fn evaluate(model: &SmoeModel, x: [f64; 2]) -> Result<f64> {
    let w = gating_weights(model, x)?;
    let mut lead = 0;
    for (i, v) in w.iter().enumerate() {
        if *v > w[lead] {
            lead = i;
        }
    }
    let base = model.kernels[lead].expert;
    let offset: f64 = model
        .kernels
        .iter()
        .zip(&w)
        .map(|(k, w)| (k.expert - base) * w)
        .sum();
    Ok(base + offset)
}

/// Index of the kernel whose center is closest to `x` (lowest index on ties).
pub(crate) fn nearest_center(kernels: &[Kernel], x: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, k) in kernels.iter().enumerate() {
        let d = (x[0] - k.mu[0]).powi(2) + (x[1] - k.mu[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(mu: [f64; 2], expert: f64) -> Kernel {
        Kernel::isotropic(mu, 1.0, expert)
    }

    #[test]
    fn kernel_value_examples() {
        let k = unit([0.0, 0.0], 0.0);
        assert_eq!(kernel_value(&k, [0.0, 0.0]), 1.0);
        assert!((kernel_value(&k, [1.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((kernel_value(&k, [1.0, 0.0]) - 0.367879).abs() < 1e-6);
        let zero = Kernel { alpha: 0.0, ..k };
        assert_eq!(kernel_value(&zero, [3.0, -2.0]), 0.0);
    }

    #[test]
    fn evaluate_examples() {
        let single = SmoeModel::new(vec![unit([3.0, 1.0], 0.5)], 8, 8).unwrap();
        assert_eq!(evaluate(&single, [100.0, -40.0]).unwrap(), 0.5);

        let pair =
            SmoeModel::new(vec![unit([0.0, 0.0], 1.0), unit([4.0, 0.0], 0.0)], 8, 8).unwrap();
        assert!((evaluate(&pair, [2.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let expected = (-1.0f64).exp() / ((-1.0f64).exp() + (-9.0f64).exp());
        let got = evaluate(&pair, [1.0, 0.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.999665).abs() < 1e-6);
    }

    #[test]
    fn far_away_point_does_not_underflow() {
        let pair =
            SmoeModel::new(vec![unit([0.0, 0.0], 1.0), unit([4.0, 0.0], 0.0)], 8, 8).unwrap();
        // exp(-1e6) underflows; the shifted form still selects the closer kernel.
        let v = evaluate(&pair, [-1000.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn all_zero_alpha_falls_back_to_nearest_center() {
        let mut a = unit([0.0, 0.0], 0.2);
        let mut b = unit([10.0, 0.0], 0.9);
        a.alpha = 0.0;
        b.alpha = 0.0;
        let m = SmoeModel::new(vec![a, b], 16, 16).unwrap();
        assert_eq!(evaluate(&m, [7.0, 0.0]).unwrap(), 0.9);
        assert_eq!(evaluate(&m, [2.0, 0.0]).unwrap(), 0.2);
    }

    #[test]
    fn empty_model_is_rejected_at_evaluation() {
        let m = SmoeModel::new(vec![], 4, 4).unwrap();
        assert!(matches!(evaluate(&m, [0.0, 0.0]), Err(Error::ModelEmpty)));
    }

    #[test]
    fn steering_is_psd() {
        let k = Kernel {
            mu: [0.0, 0.0],
            chol: [-0.3, 2.5, 0.01],
            expert: 0.0,
            alpha: 1.0,
        };
        let [s11, s12, s22] = k.steering();
        let mean = 0.5 * (s11 + s22);
        let rad = (0.25 * (s11 - s22).powi(2) + s12 * s12).sqrt();
        assert!(mean - rad >= -1e-12);
    }

    #[test]
    fn params_round_trip() {
        let k = Kernel {
            mu: [1.5, 2.5],
            chol: [0.1, 0.2, 0.3],
            expert: 0.4,
            alpha: 0.9,
        };
        assert_eq!(Kernel::from_params(k.params()), k);
    }
}
