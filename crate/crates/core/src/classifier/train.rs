use std::io::Write;
use std::path::Path;

use super::network::{argmax, softmax, Model, Tensor};
use super::{resize_normalize, Prediction, PredictionSet, TrainConfig};
use crate::dataset::DatasetManifest;
use crate::imgcore::{read_image, RasterImage};
use crate::rng::XorShift64Star;
use crate::{Error, Result};

/// Network-ready input with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLoss {
    pub epoch: usize,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochAccuracy {
    pub epoch: usize,
    pub val_accuracy: f64,
}

/// Mean batch loss per iteration and validation accuracy per epoch.
/// Epochs and iterations are numbered from 1; iterations run on across
/// epochs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub iterations: Vec<IterationLoss>,
    pub epochs: Vec<EpochAccuracy>,
}

impl LossTrace {
    /// Mean of the per-iteration losses recorded in `epoch`.
    pub fn epoch_mean_loss(&self, epoch: usize) -> Option<f64> {
        let losses: Vec<f64> = self
            .iterations
            .iter()
            .filter(|i| i.epoch == epoch)
            .map(|i| i.loss)
            .collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,iteration,loss")?;
        for i in &self.iterations {
            writeln!(w, "{},{},{}", i.epoch, i.iteration, i.loss)?;
        }
        Ok(())
    }

    pub fn write_accuracy_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,val_accuracy")?;
        for e in &self.epochs {
            writeln!(w, "{},{}", e.epoch, e.val_accuracy)?;
        }
        Ok(())
    }
}

/// Decodes and preprocesses every image in `manifest`, mapping labels
/// through `class_names`.
pub fn load_samples(
    manifest: &DatasetManifest,
    base_dir: &Path,
    cfg: &TrainConfig,
    class_names: &[String],
) -> Result<Vec<Sample>> {
    manifest
        .records()
        .iter()
        .map(|r| {
            let label = class_names
                .iter()
                .position(|c| c == &r.label)
                .ok_or_else(|| Error::UnknownLabel(r.label.clone()))?;
            let img = read_image(base_dir.join(&r.image_path))?;
            Ok(Sample {
                input: resize_normalize(&img, cfg)?,
                label,
            })
        })
        .collect()
}

fn check_samples(samples: &[Sample], cfg: &TrainConfig, which: &'static str) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySet(which));
    }
    for s in samples {
        if s.label >= cfg.num_classes {
            return Err(Error::UnknownLabel(format!("class index {}", s.label)));
        }
        let t = &s.input;
        if (t.channels, t.height, t.width)
            != (cfg.input_channels, cfg.input_height, cfg.input_width)
        {
            return Err(Error::Config(format!(
                "{which} sample is {}x{}x{}, config expects {}x{}x{}",
                t.width,
                t.height,
                t.channels,
                cfg.input_width,
                cfg.input_height,
                cfg.input_channels
            )));
        }
    }
    Ok(())
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySet("evaluation"));
    }
    let mut correct = 0usize;
    for s in samples {
        if argmax(&model.logits(&s.input)?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Mini-batch SGD on mean cross-entropy.
///
/// One generator seeded with `cfg.seed` first initialises the weights (see
/// [`Model::initialize`]) and then shuffles the sample order at the start
/// of every epoch. Each batch averages per-sample gradients, summed in
/// batch order, and takes one step of size `learning_rate`.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    class_names: &[String],
) -> Result<(Model, LossTrace)> {
    cfg.validate()?;
    check_samples(train_set, cfg, "training")?;
    check_samples(val_set, cfg, "validation")?;

    let mut rng = XorShift64Star::new(cfg.seed);
    let mut model = Model::initialize(cfg, class_names, &mut rng)?;
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut iteration = 0;

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.params.zeros_like();
            let mut loss = 0.0;
            for &i in batch {
                let s = &train_set[i];
                loss += model.accumulate_gradient(&s.input, s.label, &mut grad)?;
            }
            let n = batch.len() as f64;
            model.params.add_scaled(&grad, -cfg.learning_rate / n);
            iteration += 1;
            trace.iterations.push(IterationLoss {
                epoch,
                iteration,
                loss: loss / n,
            });
        }
        trace.epochs.push(EpochAccuracy {
            epoch,
            val_accuracy: accuracy(&model, val_set)?,
        });
    }
    Ok((model, trace))
}

/// Label (argmax of the softmax, ties to the lowest class index) and the
/// full score vector.
pub fn predict(model: &Model, img: &RasterImage) -> Result<(String, Vec<f64>)> {
    let cfg = TrainConfig {
        input_width: model.input_width,
        input_height: model.input_height,
        input_channels: model.input_channels,
        ..TrainConfig::default()
    };
    let scores = softmax(&model.logits(&resize_normalize(img, &cfg)?)?);
    Ok((model.class_names[argmax(&scores)].clone(), scores))
}

/// Predicts every image of `manifest`, in manifest order.
pub fn predict_manifest(
    model: &Model,
    manifest: &DatasetManifest,
    base_dir: &Path,
) -> Result<PredictionSet> {
    let mut predictions = Vec::with_capacity(manifest.len());
    for r in manifest.records() {
        let img = read_image(base_dir.join(&r.image_path))?;
        let (label, scores) = predict(model, &img)?;
        predictions.push(Prediction {
            image_path: r.image_path.clone(),
            predicted_label: label,
            scores: Some(scores),
        });
    }
    PredictionSet::new(model.class_names.clone(), predictions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSweep {
    /// `(epochs, final validation accuracy)` in the requested order.
    pub rows: Vec<(usize, f64)>,
    pub recommended: usize,
}

/// Accuracy gap, in absolute fraction, within which an epoch count counts
/// as matching the sweep maximum.
pub const SWEEP_TOLERANCE: f64 = 0.005;

/// Trains one model per epoch count, each from the same seed, and
/// recommends the smallest count whose validation accuracy is within
/// half a percentage point of the best.
pub fn epoch_sweep(
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    class_names: &[String],
    epoch_values: &[usize],
) -> Result<EpochSweep> {
    if epoch_values.is_empty() {
        return Err(Error::Config("epoch sweep needs at least one value".into()));
    }
    if epoch_values.contains(&0) {
        return Err(Error::Config("epoch values must be at least 1".into()));
    }
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = epoch_values
            .iter()
            .map(|&epochs| {
                let run_cfg = TrainConfig {
                    epochs,
                    ..cfg.clone()
                };
                scope.spawn(move || {
                    let (_, trace) = train(train_set, val_set, &run_cfg, class_names)?;
                    Ok(trace
                        .epochs
                        .last()
                        .expect("at least one epoch")
                        .val_accuracy)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let rows: Vec<(usize, f64)> = epoch_values
        .iter()
        .copied()
        .zip(results)
        .map(|(e, r)| r.map(|acc| (e, acc)))
        .collect::<Result<_>>()?;
    Ok(EpochSweep {
        recommended: recommend_epochs(&rows),
        rows,
    })
}

pub(crate) fn recommend_epochs(rows: &[(usize, f64)]) -> usize {
    let best = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    rows.iter()
        .filter(|(_, acc)| *acc >= best - SWEEP_TOLERANCE - 1e-12)
        .map(|(e, _)| *e)
        .min()
        .expect("rows are non-empty")
}
