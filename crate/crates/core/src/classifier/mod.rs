//! Baseline image classifier trained from scratch by mini-batch SGD, and the
//! predictions file shared with externally trained models.

mod network;
mod predictions;
mod train;

pub use network::{
    argmax, cross_entropy, gradient_check, softmax, ConvLayer, DenseLayer, Model, Parameters,
    Tensor, CONV_BIAS_INIT, GRADIENT_CHECK_STEP,
};
pub use predictions::{Prediction, PredictionSet, SCORE_SUM_TOLERANCE};
pub use train::{
    accuracy, epoch_sweep, load_samples, predict, predict_manifest, train, EpochAccuracy,
    EpochSweep, IterationLoss, LossTrace, Sample,
};

use crate::imgcore::{to_grayscale, RasterImage};
use crate::rng::DEFAULT_SEED;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub input_channels: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub num_classes: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            input_width: 224,
            input_height: 224,
            input_channels: 3,
            epochs: 5,
            batch_size: 2,
            learning_rate: 0.02,
            seed: DEFAULT_SEED,
            num_classes: 2,
            conv1_filters: 16,
            conv2_filters: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_width < 4 || self.input_height < 4 {
            return fail(format!(
                "input must be at least 4x4, got {}x{}",
                self.input_width, self.input_height
            ));
        }
        if self.input_channels != 1 && self.input_channels != 3 {
            return fail(format!(
                "input_channels must be 1 or 3, got {}",
                self.input_channels
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 {
            return fail("filter counts must be positive".into());
        }
        Ok(())
    }
}

fn bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dw * dh);
    // Pixel centres aligned: source coordinate (d + 0.5)·s/d − 0.5, clamped.
    let coord = |d: usize, dn: usize, sn: usize| {
        let s = ((d as f64 + 0.5) * sn as f64 / dn as f64 - 0.5).clamp(0.0, (sn - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(sn - 1);
        (lo, hi, s - lo as f64)
    };
    for y in 0..dh {
        let (y0, y1, fy) = coord(y, dh, sh);
        for x in 0..dw {
            let (x0, x1, fx) = coord(x, dw, sw);
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bottom = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Bilinear resample to the configured input size with intensities scaled
/// to `[0, 1]`. RGB is reduced to luma first when the network takes one
/// channel; gray is replicated when it takes three.
pub fn resize_normalize(img: &RasterImage, cfg: &TrainConfig) -> Result<Tensor> {
    let source = match (cfg.input_channels, img.channels()) {
        (1, 3) => to_grayscale(img)?,
        _ => img.clone(),
    };
    let (sw, sh, sc) = (source.width(), source.height(), source.channels() as usize);
    let (dw, dh) = (cfg.input_width, cfg.input_height);
    let mut out = Tensor::zeros(cfg.input_channels, dh, dw);
    for c in 0..cfg.input_channels {
        let sc_idx = if sc == 1 { 0 } else { c };
        let plane: Vec<f64> = source
            .pixels()
            .iter()
            .skip(sc_idx)
            .step_by(sc)
            .map(|&v| v as f64 / 255.0)
            .collect();
        let resized = if (sw, sh) == (dw, dh) {
            plane
        } else {
            bilinear(&plane, sw, sh, dw, dh)
        };
        out.data[c * dw * dh..(c + 1) * dw * dh].copy_from_slice(&resized);
    }
    Ok(out)
}
