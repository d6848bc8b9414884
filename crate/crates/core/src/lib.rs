//! Steered Mixture of Experts (SMoE) image regression.
//!
//! A grayscale image is modelled as a softmax-gated mixture of steered 2-D
//! Gaussian kernels, each carrying a scalar expert intensity. The crate
//! provides:
//!
//! - [`model`]: the regression function, reconstruction, MSE loss and its
//!   analytic gradients, plus the `SMOE v1` model file format.
//! - [`edge`]: deterministic, gradient-free initialization from image
//!   structure (Canny mask, directional line segments, importance-scored
//!   reduction, orthogonal kernel pairs, expert refinement) and a uniform
//!   grid baseline.
//! - [`optimizer`]: regularized Adam training with pruning, and the tile
//!   split / train / merge / fine-tune pipeline.
//! - [`imaging`]: PGM (and PNG) I/O and the PSNR / SSIM metrics.

pub mod edge;
pub mod error;
pub mod image;
pub mod imaging;
pub mod model;
pub mod optimizer;

pub use crate::edge::{
    edge_init_pipeline, grid_init, EdgeMask, EdgeSegment, InitConfig, Orientation,
};
pub use crate::error::{Error, Result};
pub use crate::image::Image;
pub use crate::model::{Kernel, SmoeModel};
pub use crate::optimizer::{fit_pipeline, train, FitReport, TileSpec, TrainConfig, TrainReport};
