//! Image I/O and quality metrics.

mod metrics;
mod pgm;

pub use self::metrics::{evaluate_metrics, mse, psnr, ssim, MetricReport};
pub use self::pgm::{decode_pgm, encode_pgm, load_image, save_image};
