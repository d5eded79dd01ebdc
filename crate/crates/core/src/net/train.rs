//! Minibatch training, loss/MAE evaluation and patch prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{PatchLocation, Sample};
use crate::error::{invalid, Error, Result};
use crate::rainfall::{normalize_rain, Hyetograph};
use crate::terrain::{NormStats, TerrainImage};

use super::adam::{Adam, AdamConfig};
use super::checkpoint::Checkpoint;
use super::loss::weighted_se_sum;
use super::model::{Grads, Network};
use super::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Run per-sample work on the calling thread only.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, batch: 32, lr: 1e-4, seed: 0, deterministic: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLoss>,
}

/// `epoch,train_loss,test_loss` rows.
pub fn history_csv(history: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,train_loss,test_loss\n");
    for h in history {
        s.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.test_loss));
    }
    s
}

fn check_sample(cfg: &ModelConfig, s: &Sample) -> Result<()> {
    let p = cfg.patch_size;
    if s.terrain.len() != p * p * cfg.in_channels || s.target.len() != p * p || s.valid.len() != p * p {
        return invalid(format!(
            "sample at ({}, {}) does not match patch size {p}",
            s.loc.row0, s.loc.col0
        ));
    }
    Ok(())
}

/// Maps `f` over `items` in order, in parallel unless `serial`.
fn map_ordered<I: Sync, R: Send>(items: &[I], serial: bool, f: impl Fn(&I) -> R + Sync + Send) -> Vec<R> {
    if serial {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

/// Weighted squared-error sum of one sample and its gradient, scaled by `scale`.
fn sample_grad(net: &Network<f32>, s: &Sample, scale: f64) -> Result<(f64, Grads<f32>)> {
    let tape = net.forward(&s.terrain, &s.rain)?;
    let (sum, dy, _) = weighted_se_sum(&s.target, tape.output(), &s.valid, net.config().loss_c, scale);
    let mut g = net.zero_grads();
    net.backward(&tape, &dy, &mut g)?;
    Ok((sum, g))
}

/// Mean weighted loss over every valid cell of `samples`; NaN when empty.
pub fn dataset_loss(net: &Network<f32>, samples: &[Sample], deterministic: bool) -> Result<f64> {
    let parts = map_ordered(samples, deterministic, |s| -> Result<(f64, usize)> {
        check_sample(net.config(), s)?;
        let y = net.predict(&s.terrain, &s.rain)?;
        let (sum, _, n) = weighted_se_sum(&s.target, &y, &s.valid, net.config().loss_c, 0.0);
        Ok((sum, n))
    });
    let (mut sum, mut n) = (0.0, 0usize);
    for p in parts {
        let (s, k) = p?;
        sum += s;
        n += k;
    }
    Ok(if n == 0 { f64::NAN } else { sum / n as f64 })
}

/// Patch-level mean absolute error against the targets, with predictions
/// clamped at zero as in assembled rasters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub mae: f64,
    /// MAE of predicting zero depth everywhere.
    pub zero_baseline: f64,
    pub cells: usize,
}

pub fn dataset_mae(net: &Network<f32>, samples: &[Sample], deterministic: bool) -> Result<MaeReport> {
    let parts = map_ordered(samples, deterministic, |s| -> Result<(f64, f64, usize)> {
        check_sample(net.config(), s)?;
        let y = net.predict(&s.terrain, &s.rain)?;
        let (mut err, mut base, mut n) = (0.0, 0.0, 0);
        for ((&t, &p), &ok) in s.target.iter().zip(&y).zip(s.valid.iter()) {
            if ok {
                err += (f64::from(p.max(0.0)) - f64::from(t)).abs();
                base += f64::from(t).abs();
                n += 1;
            }
        }
        Ok((err, base, n))
    });
    let (mut err, mut base, mut n) = (0.0, 0.0, 0usize);
    for p in parts {
        let (e, b, k) = p?;
        err += e;
        base += b;
        n += k;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(MaeReport { mae: err / n as f64, zero_baseline: base / n as f64, cells: n })
}

/// Runs `tc.epochs` epochs of Adam over `train`, reporting each epoch to
/// `progress` as it finishes.
pub fn fit(
    net: &mut Network<f32>,
    adam: &mut Adam<f32>,
    train: &[Sample],
    test: &[Sample],
    tc: &TrainConfig,
    progress: &mut dyn FnMut(&EpochLoss),
) -> Result<Vec<EpochLoss>> {
    if train.is_empty() {
        return invalid("training set is empty");
    }
    if tc.batch == 0 {
        return invalid("batch size must be positive");
    }
    for s in train.iter().chain(test) {
        check_sample(net.config(), s)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        for idx in order.chunks(tc.batch) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let n_valid: usize = batch.iter().map(|s| s.valid.iter().filter(|&&v| v).count()).sum();
            if n_valid == 0 {
                continue;
            }
            let scale = 1.0 / n_valid as f64;
            let parts = map_ordered(&batch, tc.deterministic, |s| sample_grad(net, s, scale));
            let mut total: Option<Grads<f32>> = None;
            for p in parts {
                let (sum, g) = p?;
                loss_sum += sum;
                match total.as_mut() {
                    None => total = Some(g),
                    Some(t) => {
                        for (a, b) in t.iter_mut().zip(&g) {
                            for (x, y) in a.iter_mut().zip(b) {
                                *x += *y;
                            }
                        }
                    }
                }
            }
            loss_n += n_valid;
            let total = total.expect("nonempty batch");
            if !loss_sum.is_finite() || total.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite loss or gradient in epoch {epoch}")));
            }
            adam.update(net.params_mut().iter_mut().map(|p| p.value.data_mut()), &total)?;
        }
        let record = EpochLoss {
            epoch,
            train_loss: if loss_n == 0 { f64::NAN } else { loss_sum / loss_n as f64 },
            test_loss: dataset_loss(net, test, tc.deterministic)?,
        };
        progress(&record);
        history.push(record);
    }
    Ok(history)
}

/// Trains a freshly initialised network; weights are seeded from `tc.seed`.
pub fn train(
    config: &ModelConfig,
    norm_stats: NormStats,
    train: &[Sample],
    test: &[Sample],
    tc: &TrainConfig,
) -> Result<TrainOutput> {
    train_with_progress(config, norm_stats, train, test, tc, &mut |_| {})
}

pub fn train_with_progress(
    config: &ModelConfig,
    norm_stats: NormStats,
    train: &[Sample],
    test: &[Sample],
    tc: &TrainConfig,
    progress: &mut dyn FnMut(&EpochLoss),
) -> Result<TrainOutput> {
    let mut net = Network::<f32>::init(config, tc.seed)?;
    let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
    let mut adam = Adam::new(AdamConfig { lr: tc.lr, ..AdamConfig::default() }, &sizes);
    let history = fit(&mut net, &mut adam, train, test, tc, progress)?;
    Ok(TrainOutput { checkpoint: Checkpoint::new(&net, &adam, norm_stats), history })
}

/// One depth patch per location, in order. Terrain normalised with other
/// ranges is re-expressed in the checkpoint's ranges first.
pub fn predict(
    checkpoint: &Checkpoint,
    terrain: &TerrainImage,
    h: &Hyetograph,
    locations: &[PatchLocation],
) -> Result<Vec<Vec<f32>>> {
    let net = checkpoint.network()?;
    predict_with(&net, &checkpoint.norm_stats, terrain, h, locations)
}

pub fn predict_with(
    net: &Network<f32>,
    norm_stats: &NormStats,
    terrain: &TerrainImage,
    h: &Hyetograph,
    locations: &[PatchLocation],
) -> Result<Vec<Vec<f32>>> {
    let cfg = net.config();
    let geom = *terrain.geometry();
    if geom.rows < cfg.patch_size || geom.cols < cfg.patch_size {
        return invalid(format!("{}x{} raster is smaller than the {}-cell patch", geom.rows, geom.cols, cfg.patch_size));
    }
    for loc in locations {
        if loc.size != cfg.patch_size {
            return invalid(format!("location size {} differs from the model's patch {}", loc.size, cfg.patch_size));
        }
        loc.check(&geom)?;
    }
    let terrain = terrain.renormalize(norm_stats)?;
    let rain: Vec<f32> = normalize_rain(h, cfg.r_ref)?.iter().map(|&v| v as f32).collect();
    locations
        .par_iter()
        .map(|loc| net.predict(&terrain.patch_hwc(loc.row0, loc.col0, loc.size)?, &rain))
        .collect()
}
