//! On-disk layouts of terrain images and training datasets.
//!
//! A terrain directory holds one `.asc` raster per channel plus
//! `norm_stats.json`. A dataset directory holds `dataset.json` and raw
//! little-endian shards: `terrain.f32` (locations x size x size x 5),
//! `valid.u8` (locations x size x size, 0/1) and one
//! `targets/<hyetograph>.f32` (locations x size x size) per simulation.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{PatchLocation, Sample, Simulated};
use crate::error::{invalid, Error, Result};
use crate::rainfall::{normalize_rain, Hyetograph};
use crate::raster::{load_grid, save_grid};
use crate::terrain::{NormStats, TerrainImage, CHANNEL_NAMES};

pub const NORM_STATS_FILE: &str = "norm_stats.json";
pub const DATASET_FILE: &str = "dataset.json";

/// Writes the channels and normalisation ranges; returns the files written.
pub fn save_terrain_dir(dir: impl AsRef<Path>, t: &TerrainImage) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (name, ch) in CHANNEL_NAMES.iter().zip(&t.channels) {
        let p = dir.join(format!("{name}.asc"));
        save_grid(&p, ch)?;
        out.push(p);
    }
    let p = dir.join(NORM_STATS_FILE);
    fs::write(&p, serde_json::to_string_pretty(&t.norm_stats)?)?;
    out.push(p);
    Ok(out)
}

pub fn terrain_dir_files(dir: impl AsRef<Path>) -> Vec<PathBuf> {
    let dir = dir.as_ref();
    let mut v: Vec<PathBuf> = CHANNEL_NAMES.iter().map(|n| dir.join(format!("{n}.asc"))).collect();
    v.push(dir.join(NORM_STATS_FILE));
    v
}

pub fn load_terrain_dir(dir: impl AsRef<Path>) -> Result<TerrainImage> {
    let dir = dir.as_ref();
    let mut channels = Vec::with_capacity(5);
    for name in CHANNEL_NAMES {
        channels.push(load_grid(dir.join(format!("{name}.asc")))?);
    }
    let stats: NormStats = serde_json::from_str(&fs::read_to_string(dir.join(NORM_STATS_FILE))?)?;
    let channels: [_; 5] = channels.try_into().expect("five channels");
    TerrainImage::from_channels(channels, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub patch_size: usize,
    pub r_ref: f64,
    pub seed: u64,
    pub norm_stats: NormStats,
    pub locations: Vec<PatchLocation>,
    /// Simulated storms in target-file order; `is_test` decides the split.
    pub hyetographs: Vec<Hyetograph>,
    pub terrain_file: String,
    pub valid_file: String,
    pub target_files: Vec<String>,
}

fn f32_bytes(v: impl IntoIterator<Item = f32>) -> Vec<u8> {
    v.into_iter().flat_map(f32::to_le_bytes).collect()
}

fn read_f32(path: &Path, expect: usize) -> Result<Vec<f32>> {
    let b = fs::read(path)?;
    if b.len() != expect * 4 {
        return invalid(format!("{}: {} bytes, expected {}", path.display(), b.len(), expect * 4));
    }
    Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}

fn safe_name(name: &str) -> Result<&str> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || name.starts_with('.') {
        return invalid(format!("hyetograph name `{name}` is not usable as a file name"));
    }
    Ok(name)
}

/// Writes a dataset built from `terrain` and `sims` at `locations`; returns the
/// manifest and every file written.
pub fn save_dataset(
    dir: impl AsRef<Path>,
    terrain: &TerrainImage,
    sims: &[Simulated<'_>],
    locations: &[PatchLocation],
    r_ref: f64,
    seed: u64,
) -> Result<(DatasetManifest, Vec<PathBuf>)> {
    let dir = dir.as_ref();
    let Some(first) = locations.first() else {
        return invalid("dataset needs at least one location");
    };
    let size = first.size;
    if locations.iter().any(|l| l.size != size) {
        return invalid("all dataset windows must share one size");
    }
    let geom = *terrain.geometry();
    for l in locations {
        l.check(&geom)?;
    }
    fs::create_dir_all(dir.join("targets"))?;
    let mut written = Vec::new();

    let mut terrain_bytes = Vec::with_capacity(locations.len() * size * size * 20);
    let mut valid_bytes = Vec::with_capacity(locations.len() * size * size);
    let mask = terrain.mask()?;
    for l in locations {
        terrain_bytes.extend(f32_bytes(terrain.patch_hwc(l.row0, l.col0, l.size)?));
        valid_bytes.extend(mask.extract_window(l.row0, l.col0, l.size)?.flags().iter().map(|&b| b as u8));
    }
    let terrain_file = "terrain.f32".to_string();
    let valid_file = "valid.u8".to_string();
    fs::write(dir.join(&terrain_file), terrain_bytes)?;
    fs::write(dir.join(&valid_file), valid_bytes)?;
    written.push(dir.join(&terrain_file));
    written.push(dir.join(&valid_file));

    let mut target_files = Vec::new();
    for s in sims {
        geom.check_same(s.max_depth.geometry(), &format!("simulation `{}`", s.hyetograph.name))?;
        let name = format!("targets/{}.f32", safe_name(&s.hyetograph.name)?);
        let mut bytes = Vec::with_capacity(locations.len() * size * size * 4);
        for l in locations {
            let w = s.max_depth.extract_window(l.row0, l.col0, l.size)?;
            // nodata outside the catchment becomes 0, as in make_samples
            bytes.extend(f32_bytes(w.values().iter().map(|&v| if w.is_nodata_value(v) { 0.0 } else { v as f32 })));
        }
        fs::write(dir.join(&name), bytes)?;
        written.push(dir.join(&name));
        target_files.push(name);
    }
    let manifest = DatasetManifest {
        patch_size: size,
        r_ref,
        seed,
        norm_stats: terrain.norm_stats,
        locations: locations.to_vec(),
        hyetographs: sims.iter().map(|s| s.hyetograph.clone()).collect(),
        terrain_file,
        valid_file,
        target_files,
    };
    fs::write(dir.join(DATASET_FILE), serde_json::to_string_pretty(&manifest)?)?;
    written.push(dir.join(DATASET_FILE));
    Ok((manifest, written))
}

pub fn load_dataset_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.as_ref().join(DATASET_FILE))?)?)
}

/// Samples in location-major order, matching [`crate::dataset::make_samples`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<Sample>)> {
    let dir = dir.as_ref();
    let m = load_dataset_manifest(dir)?;
    if m.hyetographs.len() != m.target_files.len() {
        return Err(Error::Invalid("dataset manifest lists mismatched hyetographs and target files".into()));
    }
    let n = m.locations.len();
    let cells = m.patch_size * m.patch_size;
    let terrain = read_f32(&dir.join(&m.terrain_file), n * cells * 5)?;
    let valid_bytes = fs::read(dir.join(&m.valid_file))?;
    if valid_bytes.len() != n * cells {
        return invalid(format!("{}: wrong size", m.valid_file));
    }
    let targets: Vec<Vec<f32>> =
        m.target_files.iter().map(|f| read_f32(&dir.join(f), n * cells)).collect::<Result<_>>()?;
    let rains: Vec<_> = m
        .hyetographs
        .iter()
        .map(|h| normalize_rain(h, m.r_ref).map(|r| r.map(|v| v as f32)))
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(n * targets.len());
    for (k, loc) in m.locations.iter().enumerate() {
        let t = Arc::new(terrain[k * cells * 5..(k + 1) * cells * 5].to_vec());
        let v = Arc::new(valid_bytes[k * cells..(k + 1) * cells].iter().map(|&b| b != 0).collect::<Vec<bool>>());
        for ((h, target), rain) in m.hyetographs.iter().zip(&targets).zip(&rains) {
            samples.push(Sample {
                terrain: Arc::clone(&t),
                rain: *rain,
                target: target[k * cells..(k + 1) * cells].to_vec(),
                valid: Arc::clone(&v),
                loc: *loc,
                hyetograph: h.name.clone(),
                is_test: h.is_test,
            });
        }
    }
    Ok((m, samples))
}
