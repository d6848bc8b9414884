//! Deterministic kernel initialization from image structure.
//!
//! The edge pipeline runs a Canny detector, parses the mask into straight
//! runs along four canonical directions, reduces the run set to a budget with
//! importance scores and DBSCAN, places an orthogonal kernel pair per
//! surviving segment and finally estimates the experts without gradients.
//! [`grid_init`] provides the uniform-lattice baseline.

mod canny;
mod dbscan;
mod experts;
mod placement;
mod reduce;
mod segments;

pub use self::canny::{canny_edges, gradient_field, GradientField};
pub use self::dbscan::dbscan;
pub use self::experts::{init_experts, init_experts_traced, ExpertInit};
pub use self::placement::place_kernels;
pub use self::reduce::{importance_scores, reduce_segments};
pub use self::segments::extract_segments;

use std::io::Write;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Kernel, SmoeModel};

/// Binary edge mask, row-major, same size as its source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl EdgeMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask needs {} bits for {width}x{height}, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Mask value at `(x, y)`; `false` outside the frame.
    #[inline]
    pub fn get(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return false;
        }
        self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// 0 / 1 image, convenient for PGM export (1 maps to 255).
    pub fn to_image(&self) -> Image {
        let data = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Image::new(self.width, self.height, data).expect("mask dimensions are valid")
    }
}

/// Canonical segment orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    /// 0 deg, runs along `(1, 0)`.
    Horizontal,
    /// 90 deg, runs along `(0, 1)`.
    Vertical,
    /// 45 deg, runs along `(1, 1)`.
    Diagonal,
    /// -45 deg, runs along `(1, -1)`.
    AntiDiagonal,
}

impl Orientation {
    /// All orientations in canonical order (also the tie-break order).
    pub const ALL: [Orientation; 4] = [
        Orientation::Horizontal,
        Orientation::Vertical,
        Orientation::Diagonal,
        Orientation::AntiDiagonal,
    ];

    pub fn degrees(self) -> f64 {
        match self {
            Orientation::Horizontal => 0.0,
            Orientation::Vertical => 90.0,
            Orientation::Diagonal => 45.0,
            Orientation::AntiDiagonal => -45.0,
        }
    }

    /// Pixel step along the run.
    pub fn step(self) -> (isize, isize) {
        match self {
            Orientation::Horizontal => (1, 0),
            Orientation::Vertical => (0, 1),
            Orientation::Diagonal => (1, 1),
            Orientation::AntiDiagonal => (1, -1),
        }
    }

    /// Unit normal used for kernel pair placement.
    pub fn normal(self) -> [f64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Orientation::Horizontal => [0.0, 1.0],
            Orientation::Vertical => [1.0, 0.0],
            Orientation::Diagonal => [-h, h],
            Orientation::AntiDiagonal => [h, h],
        }
    }
}

/// Oriented straight run of edge pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSegment {
    pub center: [f64; 2],
    pub orientation: Orientation,
    /// Number of pixels in the run, at least 2.
    pub length: usize,
}

/// Initialization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub canny_sigma: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub lambda: f64,
    /// Segment budget; the model gets at most two kernels per segment.
    pub max_pts: usize,
    pub delta_mu: f64,
    pub eta: f64,
    pub expert_iters: usize,
    pub expert_tol: f64,
    /// Project refined experts onto `[0, 1]`.
    pub bounded_experts: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            canny_sigma: 1.4,
            canny_low: 0.1,
            canny_high: 0.2,
            lambda: 0.1,
            max_pts: 128,
            delta_mu: 4.0,
            eta: 0.1,
            expert_iters: 100,
            expert_tol: 1e-6,
            bounded_experts: true,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.canny_low > 0.0 && self.canny_low < self.canny_high) {
            return Err(Error::InvalidThresholds {
                low: self.canny_low,
                high: self.canny_high,
            });
        }
        if !(self.canny_sigma >= 0.0 && self.canny_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "canny sigma must be finite and non-negative, got {}",
                self.canny_sigma
            )));
        }
        if self.max_pts == 0 {
            return Err(Error::InvalidConfig("max_pts must be positive".into()));
        }
        if !(self.delta_mu > 0.0 && self.delta_mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta_mu must be positive, got {}",
                self.delta_mu
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Every intermediate product of the edge pipeline.
#[derive(Debug, Clone)]
pub struct EdgeInitStages {
    pub mask: EdgeMask,
    /// Candidate set: all extracted segments.
    pub candidates: Vec<EdgeSegment>,
    pub reduced: Vec<EdgeSegment>,
    pub model: SmoeModel,
    /// Center-pixel MSE per accepted expert refinement step.
    pub expert_trace: Vec<f64>,
    pub elapsed: Duration,
}

/// Runs the full edge pipeline and keeps the intermediate results.
pub fn edge_init_stages(image: &Image, cfg: &InitConfig) -> Result<EdgeInitStages> {
    cfg.validate()?;
    let start = Instant::now();
    let mask = canny_edges(image, cfg.canny_sigma, cfg.canny_low, cfg.canny_high)?;
    let candidates = extract_segments(&mask);
    if candidates.is_empty() {
        return Err(Error::EmptyEdgeMask);
    }
    let reduced = reduce_segments(&candidates, cfg.max_pts, cfg.lambda, image.diagonal())?;
    let kernels = place_kernels(&reduced, cfg.delta_mu, image.width(), image.height());
    let placed = SmoeModel::new(kernels, image.width(), image.height())?;
    let ExpertInit { model, mse_trace } = init_experts_traced(
        &placed,
        image,
        cfg.eta,
        cfg.expert_iters,
        cfg.expert_tol,
        cfg.bounded_experts,
    )?;
    Ok(EdgeInitStages {
        mask,
        candidates,
        reduced,
        model,
        expert_trace: mse_trace,
        elapsed: start.elapsed(),
    })
}

/// Canny mask, segment extraction, reduction, kernel placement and expert
/// initialization. Fails with [`Error::EmptyEdgeMask`] when the image has no
/// usable edges.
pub fn edge_init_pipeline(image: &Image, cfg: &InitConfig) -> Result<SmoeModel> {
    edge_init_stages(image, cfg).map(|s| s.model)
}

/// Uniform `per_axis x per_axis` lattice baseline.
pub fn grid_init(image: &Image, per_axis: usize) -> Result<SmoeModel> {
    grid_init_lattice(image, per_axis, per_axis)
}

/// Uniform `nx x ny` lattice; kernels sit at the cell centers, the isotropic
/// scale uses the smaller lattice pitch as the pair distance and experts are
/// sampled from the image.
pub fn grid_init_lattice(image: &Image, nx: usize, ny: usize) -> Result<SmoeModel> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidConfig(format!(
            "grid needs at least one kernel per axis, got {nx}x{ny}"
        )));
    }
    let (w, h) = image.dimensions();
    let pitch_x = w as f64 / nx as f64;
    let pitch_y = h as f64 / ny as f64;
    let scale = placement::isotropic_scale(pitch_x.min(pitch_y));
    let mut kernels = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let mu = [(i as f64 + 0.5) * pitch_x, (j as f64 + 0.5) * pitch_y];
            let (px, py) = experts::sample_pixel(mu, w, h).expect("lattice centers lie inside");
            kernels.push(Kernel::isotropic(mu, scale, image.get(px, py)));
        }
    }
    SmoeModel::new(kernels, w, h)
}

/// Writes `center_x,center_y,theta_deg,length,score` rows with a header.
pub fn write_segments_csv<W: Write>(
    segments: &[EdgeSegment],
    scores: &[f64],
    mut out: W,
) -> Result<()> {
    writeln!(out, "center_x,center_y,theta_deg,length,score")?;
    for (s, score) in segments.iter().zip(scores) {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.center[0],
            s.center[1],
            s.orientation.degrees(),
            s.length,
            score
        )?;
    }
    Ok(())
}
