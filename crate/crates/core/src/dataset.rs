//! Patch sampling and (terrain, rain, depth) sample assembly.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rainfall::{normalize_rain, Hyetograph, N_BINS};
use crate::raster::{Geometry, Grid};
use crate::terrain::TerrainImage;

/// Top-left anchored square window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchLocation {
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

impl PatchLocation {
    pub fn check(&self, geom: &Geometry) -> Result<()> {
        geom.window(self.row0, self.col0, self.size).map(|_| ())
    }
}

/// One training example. The terrain patch is shared by every hyetograph
/// sampled at the same location.
#[derive(Debug, Clone)]
pub struct Sample {
    /// size x size x 5, interleaved channels.
    pub terrain: Arc<Vec<f32>>,
    /// Intensities divided by the reference rate.
    pub rain: [f32; N_BINS],
    /// size x size maximum depth in metres; 0 outside the catchment.
    pub target: Vec<f32>,
    /// True where the target is a catchment cell.
    pub valid: Arc<Vec<bool>>,
    pub loc: PatchLocation,
    pub hyetograph: String,
    pub is_test: bool,
}

fn check_fits(geom: &Geometry, patch: usize) -> Result<()> {
    if patch == 0 {
        return invalid("patch size must be positive");
    }
    if geom.rows < patch || geom.cols < patch {
        return invalid(format!("{}x{} raster is smaller than a {patch}-cell patch", geom.rows, geom.cols));
    }
    Ok(())
}

/// `n` uniformly random in-bounds windows; duplicates are kept.
pub fn sample_locations(geom: &Geometry, patch: usize, n: usize, seed: u64) -> Result<Vec<PatchLocation>> {
    check_fits(geom, patch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nr, nc) = (geom.rows - patch + 1, geom.cols - patch + 1);
    Ok((0..n)
        .map(|_| PatchLocation { row0: rng.random_range(0..nr), col0: rng.random_range(0..nc), size: patch })
        .collect())
}

fn axis_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut out: BTreeSet<usize> = (0..=last).step_by(stride).collect();
    out.insert(last);
    out.into_iter().collect()
}

/// Windows on an orthogonal grid with spacing `grid` cells. The last window
/// on each axis is moved inward so that it ends on the raster edge.
pub fn grid_locations(geom: &Geometry, patch: usize, grid: usize) -> Result<Vec<PatchLocation>> {
    check_fits(geom, patch)?;
    if grid == 0 || grid > patch {
        return invalid(format!("grid size {grid} must lie in 1..={patch} (the patch size)"));
    }
    let rows = axis_positions(geom.rows, patch, grid);
    let cols = axis_positions(geom.cols, patch, grid);
    Ok(rows
        .iter()
        .flat_map(|&row0| cols.iter().map(move |&col0| PatchLocation { row0, col0, size: patch }))
        .collect())
}

fn window_f32(g: &Grid, loc: &PatchLocation) -> Vec<f32> {
    let cols = g.cols();
    let mut out = Vec::with_capacity(loc.size * loc.size);
    for r in loc.row0..loc.row0 + loc.size {
        for &v in &g.values()[r * cols + loc.col0..r * cols + loc.col0 + loc.size] {
            out.push(if g.is_nodata_value(v) { 0.0 } else { v as f32 });
        }
    }
    out
}

/// Depth raster of one hyetograph's simulation.
#[derive(Debug, Clone)]
pub struct Simulated<'a> {
    pub hyetograph: &'a Hyetograph,
    pub max_depth: &'a Grid,
}

/// Cartesian product of locations and simulations, location-major.
pub fn make_samples(
    terrain: &TerrainImage,
    sims: &[Simulated<'_>],
    locs: &[PatchLocation],
    r_ref: f64,
) -> Result<Vec<Sample>> {
    let geom = *terrain.geometry();
    for s in sims {
        geom.check_same(s.max_depth.geometry(), &format!("simulation `{}`", s.hyetograph.name))?;
    }
    for loc in locs {
        loc.check(&geom)?;
    }
    let mask = terrain.mask()?;
    let rains: Vec<[f32; N_BINS]> = sims
        .iter()
        .map(|s| normalize_rain(s.hyetograph, r_ref).map(|r| r.map(|v| v as f32)))
        .collect::<Result<_>>()?;

    let per_loc: Vec<Result<Vec<Sample>>> = locs
        .par_iter()
        .map(|loc| {
            let terrain_patch = Arc::new(terrain.patch_hwc(loc.row0, loc.col0, loc.size)?);
            let valid = Arc::new(mask.extract_window(loc.row0, loc.col0, loc.size)?.flags().to_vec());
            Ok(sims
                .iter()
                .zip(&rains)
                .map(|(s, rain)| Sample {
                    terrain: Arc::clone(&terrain_patch),
                    rain: *rain,
                    target: window_f32(s.max_depth, loc),
                    valid: Arc::clone(&valid),
                    loc: *loc,
                    hyetograph: s.hyetograph.name.clone(),
                    is_test: s.hyetograph.is_test,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(locs.len() * sims.len());
    for chunk in per_loc {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Partitions samples by their hyetograph's test flag.
pub fn split(samples: Vec<Sample>) -> (Vec<Sample>, Vec<Sample>) {
    samples.into_iter().partition(|s| !s.is_test)
}
