//! Split, per-tile initialization and training, merge and fine-tune.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::tiles::{merge_models, split_tiles, TileSpec};
use super::{train, TrainConfig, TrainReport};
use crate::edge::{edge_init_pipeline, grid_init, InitConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{mse_loss, SmoeModel};

/// Smallest lattice pitch used by the grid fallback.
const MIN_FALLBACK_PITCH: usize = 4;

/// How each tile's starting model is built.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Edge-aligned initialization, falling back to a lattice on tiles
    /// without edges.
    Edge(InitConfig),
    /// Uniform `per_axis x per_axis` lattice on every tile.
    Grid { per_axis: usize },
}

#[derive(Debug, Clone)]
pub struct TileReport {
    pub tile_id: usize,
    pub spec: TileSpec,
    /// The tile had no edges and was initialized on a lattice.
    pub fallback: bool,
    pub initial_kernels: usize,
    pub init_time: Duration,
    pub train: TrainReport,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub tiles: Vec<TileReport>,
    pub merge_time: Duration,
    pub merged_kernels: usize,
    /// Objective of the merged model before fine-tuning.
    pub merged_loss: f64,
    pub fine_tune: TrainReport,
}

impl FitReport {
    /// Sum of per-tile init and training, merge and fine-tune time.
    pub fn total_time(&self) -> Duration {
        self.tiles
            .iter()
            .map(|t| t.init_time + t.train.wall_time)
            .sum::<Duration>()
            + self.merge_time
            + self.fine_tune.wall_time
    }

    /// `phase,tile_id,iterations,final_loss,pruned,seconds`, one row per
    /// tile followed by `merge` and `finetune` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "phase,tile_id,iterations,final_loss,pruned,seconds")?;
        for t in &self.tiles {
            writeln!(
                out,
                "tile,{},{},{:e},{},{}",
                t.tile_id,
                t.train.iterations_run,
                t.train.final_loss,
                t.train.pruned_count,
                (t.init_time + t.train.wall_time).as_secs_f64()
            )?;
        }
        writeln!(
            out,
            "merge,-,0,{:e},0,{}",
            self.merged_loss,
            self.merge_time.as_secs_f64()
        )?;
        let f = &self.fine_tune;
        writeln!(
            out,
            "finetune,-,{},{:e},{},{}",
            f.iterations_run,
            f.final_loss,
            f.pruned_count,
            f.wall_time.as_secs_f64()
        )?;
        Ok(())
    }

    /// Per-iteration losses as `phase,tile_id,iteration,loss`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "phase,tile_id,iteration,loss")?;
        for t in &self.tiles {
            for (i, l) in t.train.loss_trace.iter().enumerate() {
                writeln!(out, "tile,{},{i},{l:e}", t.tile_id)?;
            }
        }
        for (i, l) in self.fine_tune.loss_trace.iter().enumerate() {
            writeln!(out, "finetune,-,{i},{l:e}")?;
        }
        Ok(())
    }
}

/// Lattice size used when a tile has no edges: about `max_pts` kernels,
/// with at least `MIN_FALLBACK_PITCH` pixels between centers.
fn fallback_per_axis(tile: &Image, max_pts: usize) -> usize {
    let wanted = (max_pts as f64).sqrt().ceil() as usize;
    let short_side = tile.width().min(tile.height());
    wanted.min(short_side / MIN_FALLBACK_PITCH).max(1)
}

fn init_tile(tile: &Image, mode: &InitMode) -> Result<(SmoeModel, bool)> {
    match mode {
        InitMode::Edge(cfg) => match edge_init_pipeline(tile, cfg) {
            Ok(m) => Ok((m, false)),
            Err(Error::EmptyEdgeMask) => {
                Ok((grid_init(tile, fallback_per_axis(tile, cfg.max_pts))?, true))
            }
            Err(e) => Err(e),
        },
        InitMode::Grid { per_axis } => Ok((grid_init(tile, *per_axis)?, false)),
    }
}

/// Edge-initialized tiled fit; see [`fit_pipeline_with`].
pub fn fit_pipeline(
    image: &Image,
    init_cfg: &InitConfig,
    train_cfg: &TrainConfig,
    tile_size: usize,
) -> Result<(SmoeModel, FitReport)> {
    fit_pipeline_with(
        image,
        &InitMode::Edge(init_cfg.clone()),
        train_cfg,
        tile_size,
    )
}

/// Splits the image into tiles, initializes and trains one model per tile
/// (tiles run concurrently), merges them into a single model of the full
/// frame and fine-tunes it with [`TrainConfig::fine_tune`].
pub fn fit_pipeline_with(
    image: &Image,
    mode: &InitMode,
    train_cfg: &TrainConfig,
    tile_size: usize,
) -> Result<(SmoeModel, FitReport)> {
    train_cfg.validate()?;
    if let InitMode::Edge(cfg) = mode {
        cfg.validate()?;
    }
    let tiles = split_tiles(image, tile_size)?;
    let fitted: Vec<(TileSpec, SmoeModel, TileReport)> = tiles
        .par_iter()
        .enumerate()
        .map(|(tile_id, (spec, tile))| {
            let start = Instant::now();
            let (initial, fallback) = init_tile(tile, mode)?;
            let init_time = start.elapsed();
            if fallback {
                log::info!("tile {tile_id} has no edges; using a lattice");
            }
            let (model, report) = train(&initial, tile, train_cfg)?;
            Ok((
                *spec,
                model,
                TileReport {
                    tile_id,
                    spec: *spec,
                    fallback,
                    initial_kernels: initial.len(),
                    init_time,
                    train: report,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let start = Instant::now();
    let mut parts = Vec::with_capacity(fitted.len());
    let mut reports = Vec::with_capacity(fitted.len());
    for (spec, model, report) in fitted {
        parts.push((spec, model));
        reports.push(report);
    }
    let merged = merge_models(&parts, image.width(), image.height())?;
    let merge_time = start.elapsed();
    let merged_loss = mse_loss(&merged, image)?;

    let (model, fine_tune) = train(&merged, image, &train_cfg.fine_tune())?;
    let report = FitReport {
        tiles: reports,
        merge_time,
        merged_kernels: merged.len(),
        merged_loss,
        fine_tune,
    };
    Ok((model, report))
}
