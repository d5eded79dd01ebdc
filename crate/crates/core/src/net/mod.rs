//! Encoder/decoder surrogate with a rainfall subnetwork, trained by
//! hand-written reverse-mode differentiation and Adam.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rainfall::DEFAULT_R_REF;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use loss::{cell_loss, weighted_mse};
pub use model::{Network, Param};
pub use tensor::{Scalar, Tensor};
pub use train::{predict, train, EpochLoss, TrainConfig, TrainOutput};

/// Spatial size of the latent layer.
pub const LATENT: usize = 16;
/// Channels contributed by the reshaped rain embedding.
pub const RAIN_CHANNELS: usize = 16;
/// Width of the rain embedding (16 x 16 x 16).
pub const RAIN_EMBED: usize = LATENT * LATENT * RAIN_CHANNELS;
pub const IN_CHANNELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub in_channels: usize,
    /// Conv widths per encoder stage; the decoder mirrors them. Only the
    /// first `enc_stages()` entries are used.
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
    pub loss_c: f64,
    /// Rain normalisation rate in mm/h.
    pub r_ref: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch_size: 256,
            in_channels: IN_CHANNELS,
            widths: vec![32, 64, 128, 128],
            leaky_slope: 0.2,
            loss_c: -1.0,
            r_ref: DEFAULT_R_REF,
        }
    }
}

impl ModelConfig {
    pub fn with_patch(patch_size: usize) -> Self {
        ModelConfig { patch_size, ..Default::default() }
    }

    /// log2(patch_size / 16).
    pub fn enc_stages(&self) -> usize {
        (self.patch_size / LATENT).trailing_zeros() as usize
    }

    /// Widths actually used, one per stage.
    pub fn stage_widths(&self) -> &[usize] {
        &self.widths[..self.enc_stages().min(self.widths.len())]
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.patch_size;
        if p < 2 * LATENT || !p.is_multiple_of(LATENT) || !(p / LATENT).is_power_of_two() {
            return invalid(format!("patch size {p} is not 16 * 2^k with k >= 1"));
        }
        if self.in_channels != IN_CHANNELS {
            return invalid(format!("expected {IN_CHANNELS} input channels, got {}", self.in_channels));
        }
        if self.widths.len() < self.enc_stages() {
            return invalid(format!(
                "{} encoder stages need {} widths, got {}",
                self.enc_stages(),
                self.enc_stages(),
                self.widths.len()
            ));
        }
        if self.stage_widths().contains(&0) {
            return invalid("conv widths must be positive");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return invalid(format!("leaky slope {} outside (0, 1)", self.leaky_slope));
        }
        if !self.loss_c.is_finite() {
            return invalid("loss constant must be finite");
        }
        if !(self.r_ref.is_finite() && self.r_ref > 0.0) {
            return invalid(format!("r_ref must be positive, got {}", self.r_ref));
        }
        Ok(())
    }
}
