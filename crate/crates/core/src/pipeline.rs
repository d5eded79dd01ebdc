//! Whole-raster prediction and the simulation-vs-surrogate benchmark.

use crate::dataset::grid_locations;
use crate::error::Result;
use crate::evaluate::{benchmark, BenchReport};
use crate::net::train::predict_with;
use crate::net::{Checkpoint, Network};
use crate::postprocess::{aggregate, AggregationMethod};
use crate::rainfall::Hyetograph;
use crate::raster::Grid;
use crate::simulator::{run, SimConfig};
use crate::terrain::{build_terrain_image_with, TerrainImage};

/// Grid spacing used when none is given: half the patch.
pub fn default_grid(patch: usize) -> usize {
    (patch / 2).max(1)
}

/// Predicts the maximum-depth raster for one storm.
pub fn predict_raster(
    net: &Network<f32>,
    checkpoint: &Checkpoint,
    terrain: &TerrainImage,
    h: &Hyetograph,
    grid: usize,
    method: AggregationMethod,
) -> Result<Grid> {
    let geom = *terrain.geometry();
    let locs = grid_locations(&geom, net.config().patch_size, grid)?;
    let patches = predict_with(net, &checkpoint.norm_stats, terrain, h, &locs)?;
    aggregate(&patches, &locs, method, &geom, &terrain.mask()?)
}

/// Times simulation, prediction (patches + aggregation) and terrain
/// preprocessing on `dem`.
pub fn benchmark_pipeline(
    dem: &Grid,
    h: &Hyetograph,
    checkpoint: &Checkpoint,
    sim: &SimConfig,
    grid: usize,
    method: AggregationMethod,
    repeats: usize,
) -> Result<BenchReport> {
    let net = checkpoint.network()?;
    let terrain = build_terrain_image_with(dem, Some(&checkpoint.norm_stats))?;
    benchmark(
        repeats,
        || run(dem, h, sim),
        || predict_raster(&net, checkpoint, &terrain, h, grid, method),
        || build_terrain_image_with(dem, Some(&checkpoint.norm_stats)),
    )
}
