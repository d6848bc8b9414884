//! Image tiling and merging of per-tile models.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Kernel, SmoeModel};

pub const MIN_TILE: usize = 8;

/// Rectangle of the global frame covered by one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    /// Top-left corner `(x, y)` in global pixels.
    pub origin: [usize; 2],
    pub width: usize,
    pub height: usize,
}

/// Row-major tiling with square `tile_size` tiles; the last column and row
/// are truncated to the image border.
pub fn split_tiles(image: &Image, tile_size: usize) -> Result<Vec<(TileSpec, Image)>> {
    if tile_size < MIN_TILE {
        return Err(Error::TileTooSmall(tile_size));
    }
    let (w, h) = image.dimensions();
    let mut out = Vec::new();
    for y0 in (0..h).step_by(tile_size) {
        for x0 in (0..w).step_by(tile_size) {
            let spec = TileSpec {
                origin: [x0, y0],
                width: tile_size.min(w - x0),
                height: tile_size.min(h - y0),
            };
            out.push((spec, image.crop(x0, y0, spec.width, spec.height)?));
        }
    }
    Ok(out)
}

/// Joins tile models into one model of the full frame by translating every
/// kernel center by its tile origin. Kernel order follows tile order, then
/// within-tile order. The tiles must cover the frame exactly once.
pub fn merge_models(
    tiles: &[(TileSpec, SmoeModel)],
    width: usize,
    height: usize,
) -> Result<SmoeModel> {
    let mut coverage = vec![0u32; width * height];
    for (i, (spec, model)) in tiles.iter().enumerate() {
        let [x0, y0] = spec.origin;
        if x0 + spec.width > width || y0 + spec.height > height {
            return Err(Error::CoverageGap(format!(
                "tile {i} extends beyond the frame"
            )));
        }
        if model.dimensions() != (spec.width, spec.height) {
            return Err(Error::DimensionMismatch {
                expected: (spec.width, spec.height),
                actual: model.dimensions(),
            });
        }
        for y in y0..y0 + spec.height {
            for c in &mut coverage[y * width + x0..y * width + x0 + spec.width] {
                *c += 1;
            }
        }
    }
    if let Some(pos) = coverage.iter().position(|&c| c != 1) {
        let kind = if coverage[pos] == 0 {
            "uncovered"
        } else {
            "overlapping"
        };
        return Err(Error::CoverageGap(format!(
            "pixel ({}, {}) is {kind}",
            pos % width,
            pos / width
        )));
    }
    let kernels: Vec<Kernel> = tiles
        .iter()
        .flat_map(|(spec, model)| {
            let [ox, oy] = spec.origin;
            model.kernels().iter().map(move |k| Kernel {
                mu: [k.mu[0] + ox as f64, k.mu[1] + oy as f64],
                ..*k
            })
        })
        .collect();
    SmoeModel::new(kernels, width, height)
}
