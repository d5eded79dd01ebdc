use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use floodcast::dataset::{sample_locations, split, Simulated};
use floodcast::evaluate::{
    error_grid, error_histogram, grid_pgm, hist2d, hist2d_pgm, high_error_report, mae, relative_error, DEPTH_BIN, DEPTH_CAP,
    REL_ERROR_MIN_DEPTH,
};
use floodcast::manifest::{manifest_path, RunManifest};
use floodcast::net::train::{history_csv, train_with_progress};
use floodcast::net::{load_checkpoint, save_checkpoint, ModelConfig, TrainConfig};
use floodcast::pipeline::{benchmark_pipeline, default_grid, predict_raster};
use floodcast::postprocess::AggregationMethod;
use floodcast::rainfall::{find, load_hyetographs, Hyetograph, DEFAULT_R_REF};
use floodcast::raster::{build_mask, load_grid, save_grid, MaskGrid};
use floodcast::simulator::{run, MassLedger, SimConfig};
use floodcast::store::{load_dataset, load_terrain_dir, save_dataset, save_terrain_dir, terrain_dir_files, DATASET_FILE};
use floodcast::terrain::{build_terrain_image, gen_synthetic_dem, DemParams};
use floodcast::{Error, Result};

#[derive(Parser)]
#[command(name = "floodcast", version, about = "Flood depth simulation and CNN surrogate")]
struct Cli {
    /// Single-threaded execution with fixed reduction order.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic fractal DEM.
    GenDem(GenDemArgs),
    /// Terrain channels and normalisation ranges of a DEM.
    Features(FeaturesArgs),
    /// Run the cellular-automata flood model.
    Simulate(SimulateArgs),
    /// Sample patches and write training shards.
    Dataset(DatasetArgs),
    /// Train the surrogate.
    Train(TrainArgs),
    /// Predict a maximum-depth raster.
    Predict(PredictArgs),
    /// Compare a prediction with a simulation.
    Evaluate(EvaluateArgs),
    /// Time simulation against prediction.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Serialize)]
struct GenDemArgs {
    #[arg(long, default_value_t = 257)]
    size: usize,
    #[arg(long, default_value_t = 0.55)]
    roughness: f64,
    #[arg(long, default_value_t = 8)]
    pits: usize,
    /// Elevation range of the fractal surface, metres.
    #[arg(long, default_value_t = 12.0)]
    relief: f64,
    #[arg(long, default_value_t = 1.0)]
    cellsize: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct FeaturesArgs {
    #[arg(long)]
    dem: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SimArgs {
    /// Time step, seconds.
    #[arg(long, default_value_t = 5.0)]
    dt: f64,
    /// Drainage time after the storm, seconds.
    #[arg(long, default_value_t = 1800.0)]
    drain: f64,
    /// Fraction of the steepest head drop released per step.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Depth below which a cell does not release water, metres.
    #[arg(long, default_value_t = 1e-4)]
    min_depth: f64,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig { dt: self.dt, drain_time: self.drain, alpha: self.alpha, min_depth: self.min_depth }
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    dem: PathBuf,
    /// Hyetograph table, optionally `table.csv:name`. Without a name every
    /// storm is simulated and the output is a directory.
    #[arg(long)]
    rain: String,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct DatasetArgs {
    /// Directory written by `features`.
    #[arg(long)]
    terrain: PathBuf,
    /// Directory of `<hyetograph>.asc` depth rasters written by `simulate`.
    #[arg(long)]
    sims: PathBuf,
    /// Hyetograph table; every listed storm is used.
    #[arg(long)]
    rain: PathBuf,
    #[arg(long, default_value_t = 256)]
    patch: usize,
    #[arg(long, default_value_t = 10_000)]
    n_locs: usize,
    #[arg(long, default_value_t = DEFAULT_R_REF)]
    r_ref: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Directory written by `dataset`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Conv widths per encoder stage.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128, 128])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    leaky_slope: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    loss_c: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory written by `features`.
    #[arg(long)]
    terrain: PathBuf,
    /// `table.csv:name`
    #[arg(long)]
    rain: String,
    /// Patch spacing; defaults to half the patch.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value = "mean")]
    agg: String,
    /// Must match the model when given.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    sim: PathBuf,
    #[arg(long, default_value_t = DEPTH_BIN)]
    bin_width: f64,
    #[arg(long, default_value_t = DEPTH_CAP)]
    cap: f64,
    /// Half-width of the error histogram, metres.
    #[arg(long, default_value_t = 10.0)]
    error_range: f64,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchmarkArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dem: PathBuf,
    /// `table.csv:name`
    #[arg(long)]
    rain: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value = "mean")]
    agg: String,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(short, long)]
    output: PathBuf,
}

/// Splits `table.csv:name` into the table path and optional storm name.
fn rain_spec(spec: &str) -> (PathBuf, Option<String>) {
    match spec.rsplit_once(':') {
        Some((path, name)) if !name.is_empty() && !name.contains(['/', '\\']) => (PathBuf::from(path), Some(name.to_string())),
        _ => (PathBuf::from(spec), None),
    }
}

fn one_storm(spec: &str, m: &mut RunManifest) -> Result<Hyetograph> {
    let (path, name) = rain_spec(spec);
    let Some(name) = name else {
        return Err(Error::Invalid(format!("`{spec}` must name a storm as table.csv:name")));
    };
    m.input(&path)?;
    Ok(find(&load_hyetographs(&path)?, &name)?.clone())
}

fn parent_dir(p: &Path) -> Result<()> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    Ok(())
}

fn finish(mut m: RunManifest, outputs: &[PathBuf], anchor: &Path) -> Result<()> {
    for o in outputs {
        m.output(o)?;
    }
    m.save(manifest_path(anchor))
}

fn gen_dem(a: &GenDemArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("gen-dem", a, Some(a.seed), det)?;
    let p = DemParams { size: a.size, cellsize: a.cellsize, roughness: a.roughness, n_pits: a.pits, relief: a.relief, seed: a.seed };
    let dem = m.time("generate", || gen_synthetic_dem(&p))?;
    parent_dir(&a.output)?;
    save_grid(&a.output, &dem)?;
    finish(m, std::slice::from_ref(&a.output), &a.output)
}

fn features(a: &FeaturesArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("features", a, None, det)?;
    m.input(&a.dem)?;
    let dem = load_grid(&a.dem)?;
    let image = m.time("features", || build_terrain_image(&dem))?;
    let files = save_terrain_dir(&a.output, &image)?;
    finish(m, &files, &a.output)
}

fn simulate(a: &SimulateArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("simulate", a, None, det)?;
    m.input(&a.dem)?;
    let dem = load_grid(&a.dem)?;
    let (table, name) = rain_spec(&a.rain);
    m.input(&table)?;
    let storms = load_hyetographs(&table)?;
    let cfg = a.sim.config();
    let mut outputs = Vec::new();
    let mut write = |h: &Hyetograph, depth: &Path, m: &mut RunManifest| -> Result<()> {
        let r = m.time(&format!("simulate {}", h.name), || run(&dem, h, &cfg))?;
        save_grid(depth, &r.max_depth)?;
        let ledger = depth.with_extension("ledger.json");
        fs::write(&ledger, serde_json::to_string_pretty(&MassLedger::new(h, &cfg, &r))?)?;
        outputs.push(depth.to_path_buf());
        outputs.push(ledger);
        Ok(())
    };
    match name {
        Some(name) => {
            parent_dir(&a.output)?;
            write(find(&storms, &name)?, &a.output, &mut m)?;
        }
        None => {
            fs::create_dir_all(&a.output)?;
            for h in &storms {
                write(h, &a.output.join(format!("{}.asc", h.name)), &mut m)?;
            }
        }
    }
    finish(m, &outputs, &a.output)
}

fn dataset(a: &DatasetArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("dataset", a, Some(a.seed), det)?;
    for f in terrain_dir_files(&a.terrain) {
        m.input(f)?;
    }
    let terrain = load_terrain_dir(&a.terrain)?;
    m.input(&a.rain)?;
    let storms = load_hyetographs(&a.rain)?;
    let mut depths = Vec::with_capacity(storms.len());
    for h in &storms {
        let p = a.sims.join(format!("{}.asc", h.name));
        m.input(&p)?;
        depths.push(load_grid(&p)?);
    }
    let sims: Vec<Simulated> = storms.iter().zip(&depths).map(|(h, d)| Simulated { hyetograph: h, max_depth: d }).collect();
    let locs = sample_locations(terrain.geometry(), a.patch, a.n_locs, a.seed)?;
    let (_, files) = m.time("write shards", || save_dataset(&a.output, &terrain, &sims, &locs, a.r_ref, a.seed))?;
    finish(m, &files, &a.output)
}

fn train(a: &TrainArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("train", a, Some(a.seed), det)?;
    let (manifest, samples) = m.time("load", || load_dataset(&a.data))?;
    m.input(a.data.join(DATASET_FILE))?;
    let (train_set, test_set) = split(samples);
    let config = ModelConfig {
        patch_size: manifest.patch_size,
        widths: a.widths.clone(),
        leaky_slope: a.leaky_slope,
        loss_c: a.loss_c,
        r_ref: manifest.r_ref,
        ..ModelConfig::default()
    };
    let tc = TrainConfig { epochs: a.epochs, batch: a.batch, lr: a.lr, seed: a.seed, deterministic: det };
    eprintln!("training on {} samples, testing on {}", train_set.len(), test_set.len());
    let out = m.time("train", || {
        train_with_progress(&config, manifest.norm_stats, &train_set, &test_set, &tc, &mut |e| {
            eprintln!("epoch {:>4}  train {:.6}  test {:.6}", e.epoch, e.train_loss, e.test_loss);
        })
    })?;
    parent_dir(&a.output)?;
    save_checkpoint(&a.output, &out.checkpoint)?;
    let history = a.output.with_extension("loss.csv");
    fs::write(&history, history_csv(&out.history))?;
    finish(m, &[a.output.clone(), history], &a.output)
}

fn predict(a: &PredictArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("predict", a, None, det)?;
    m.input(&a.model)?;
    let ck = load_checkpoint(&a.model)?;
    let net = ck.network()?;
    let patch = ck.config.patch_size;
    if let Some(p) = a.patch.filter(|&p| p != patch) {
        return Err(Error::Invalid(format!("--patch {p} does not match the model's patch size {patch}")));
    }
    for f in terrain_dir_files(&a.terrain) {
        m.input(f)?;
    }
    let terrain = load_terrain_dir(&a.terrain)?;
    let h = one_storm(&a.rain, &mut m)?;
    let method: AggregationMethod = a.agg.parse()?;
    let grid = a.grid.unwrap_or_else(|| default_grid(patch));
    let depth = m.time("predict", || predict_raster(&net, &ck, &terrain, &h, grid, method))?;
    parent_dir(&a.output)?;
    save_grid(&a.output, &depth)?;
    finish(m, std::slice::from_ref(&a.output), &a.output)
}

fn evaluate(a: &EvaluateArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("evaluate", a, None, det)?;
    m.input(&a.pred)?;
    m.input(&a.sim)?;
    let pred = load_grid(&a.pred)?;
    let sim = load_grid(&a.sim)?;
    let sim_mask = build_mask(&sim);
    let pred_mask = build_mask(&pred);
    sim.geometry().check_same(pred.geometry(), "prediction vs simulation")?;
    let flags = sim_mask.flags().iter().zip(pred_mask.flags()).map(|(&a, &b)| a && b).collect();
    let mask = MaskGrid::from_flags(*sim.geometry(), flags)?;

    let out = &a.output;
    fs::create_dir_all(out)?;
    let h2 = hist2d(&pred, &sim, &mask, a.bin_width, a.cap)?;
    let eh = error_histogram(&pred, &sim, &mask, a.bin_width, a.error_range)?;
    let err = error_grid(&pred, &sim, &mask)?;
    let rel = relative_error(&pred, &sim, &mask, REL_ERROR_MIN_DEPTH)?;
    let metrics = serde_json::json!({
        "mae": mae(&pred, &sim, &mask)?,
        "cells": mask.count_data(),
        "high_error": high_error_report(&pred, &sim, &mask)?,
    });
    let files = [
        ("metrics.json", serde_json::to_string_pretty(&metrics)?.into_bytes()),
        ("hist2d.csv", h2.to_csv().into_bytes()),
        ("error_hist.csv", eh.to_csv().into_bytes()),
        ("hist2d.pgm", hist2d_pgm(&h2)),
        ("error.pgm", grid_pgm(&err, -1.0, 1.0)),
    ];
    let mut outputs = Vec::new();
    for (name, bytes) in files {
        fs::write(out.join(name), bytes)?;
        outputs.push(out.join(name));
    }
    for (name, g) in [("error.asc", &err), ("relative_error.asc", &rel)] {
        save_grid(out.join(name), g)?;
        outputs.push(out.join(name));
    }
    finish(m, &outputs, out)
}

fn benchmark(a: &BenchmarkArgs, det: bool) -> Result<()> {
    let mut m = RunManifest::new("benchmark", a, None, det)?;
    m.input(&a.model)?;
    m.input(&a.dem)?;
    let ck = load_checkpoint(&a.model)?;
    let dem = load_grid(&a.dem)?;
    let h = one_storm(&a.rain, &mut m)?;
    let method: AggregationMethod = a.agg.parse()?;
    let grid = a.grid.unwrap_or_else(|| default_grid(ck.config.patch_size));
    let report = benchmark_pipeline(&dem, &h, &ck, &a.sim.config(), grid, method, a.repeats)?;
    eprintln!(
        "simulate {:.3}s  predict {:.3}s  preprocess {:.3}s  ratio {:.4}",
        report.simulate.mean, report.predict.mean, report.preprocess.mean, report.ratio
    );
    parent_dir(&a.output)?;
    fs::write(&a.output, serde_json::to_string_pretty(&report)?)?;
    finish(m, std::slice::from_ref(&a.output), &a.output)
}

fn threads(deterministic: bool) -> Result<usize> {
    if deterministic {
        return Ok(1);
    }
    match std::env::var("FLOODCAST_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Invalid(format!("FLOODCAST_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let det = cli.deterministic;
    let result = threads(det).and_then(|n| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Invalid(e.to_string()))?;
        match &cli.cmd {
            Cmd::GenDem(a) => gen_dem(a, det),
            Cmd::Features(a) => features(a, det),
            Cmd::Simulate(a) => simulate(a, det),
            Cmd::Dataset(a) => dataset(a, det),
            Cmd::Train(a) => train(a, det),
            Cmd::Predict(a) => predict(a, det),
            Cmd::Evaluate(a) => evaluate(a, det),
            Cmd::Benchmark(a) => benchmark(a, det),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
