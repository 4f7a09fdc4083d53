//! Two-stage convolutional network: (conv 3×3 same-padding → ReLU →
//! 2×2 max-pool) twice, then a dense layer to class logits and a softmax.
//!
//! All arithmetic is `f64`. Parameters are laid out as
//! `conv[out][in][ky][kx]` and `dense[class][feature]`, with activations
//! stored channel-major (`[channel][y][x]`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::rng::XorShift64Star;
use crate::{Error, Result};

const K: usize = 3;

/// Initial value of every convolution bias.
pub const CONV_BIAS_INIT: f64 = 0.01;

/// Channel-major activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvLayer {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * K * K],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * K + ky) * K + kx
    }

    fn forward(&self, input: &Tensor) -> Tensor {
        let (h, w) = (input.height, input.width);
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for o in 0..self.out_channels {
            let plane = &mut out.data[o * h * w..(o + 1) * h * w];
            plane.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let src = &input.data[i * h * w..(i + 1) * h * w];
                for ky in 0..K {
                    for kx in 0..K {
                        let wt = self.weights[self.w(o, i, ky, kx)];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                            let dst_row = &mut plane[y * w..(y + 1) * w];
                            let (x0, x1) = match kx {
                                0 => (1, w),
                                1 => (0, w),
                                _ => (0, w - 1),
                            };
                            for x in x0..x1 {
                                dst_row[x] += wt * src_row[x + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad`; returns the input
    /// gradient when `want_input` is set.
    fn backward(
        &self,
        input: &Tensor,
        grad_out: &Tensor,
        grad: &mut ConvLayer,
        want_input: bool,
    ) -> Option<Tensor> {
        let (h, w) = (input.height, input.width);
        let mut grad_in = want_input.then(|| Tensor::zeros(self.in_channels, h, w));
        for o in 0..self.out_channels {
            let g = &grad_out.data[o * h * w..(o + 1) * h * w];
            grad.bias[o] += g.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let src = &input.data[i * h * w..(i + 1) * h * w];
                for ky in 0..K {
                    for kx in 0..K {
                        let wi = self.w(o, i, ky, kx);
                        let wt = self.weights[wi];
                        let (x0, x1) = match kx {
                            0 => (1, w),
                            1 => (0, w),
                            _ => (0, w - 1),
                        };
                        let mut acc = 0.0;
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let sy = sy as usize;
                            let g_row = &g[y * w..(y + 1) * w];
                            let src_row = &src[sy * w..(sy + 1) * w];
                            for x in x0..x1 {
                                acc += g_row[x] * src_row[x + kx - 1];
                            }
                            if let Some(gi) = grad_in.as_mut() {
                                let base = (i * h + sy) * w;
                                let dst = &mut gi.data[base..base + w];
                                for x in x0..x1 {
                                    dst[x + kx - 1] += g_row[x] * wt;
                                }
                            }
                        }
                        grad.weights[wi] += acc;
                    }
                }
            }
        }
        grad_in
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

fn relu(t: &Tensor) -> Tensor {
    Tensor {
        data: t.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*t
    }
}

/// 2×2 max-pool with stride 2 (odd trailing rows/columns dropped). Returns
/// the pooled volume and, per output cell, the flat index of the winning
/// input cell (first maximum in row-major window order).
fn max_pool(t: &Tensor) -> (Tensor, Vec<usize>) {
    let (oh, ow) = (t.height / 2, t.width / 2);
    let mut out = Tensor::zeros(t.channels, oh, ow);
    let mut arg = vec![0; out.data.len()];
    for c in 0..t.channels {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = t.idx(c, 2 * y, 2 * x);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = t.idx(c, 2 * y + dy, 2 * x + dx);
                    if t.data[j] > t.data[best] {
                        best = j;
                    }
                }
                let o = out.idx(c, y, x);
                out.data[o] = t.data[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

fn unpool(grad: &Tensor, arg: &[usize], like: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(like.channels, like.height, like.width);
    for (g, &j) in grad.data.iter().zip(arg) {
        out.data[j] += g;
    }
    out
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `label` under softmax(`logits`), via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Every trainable parameter of the network. Also used for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub dense: DenseLayer,
}

impl Parameters {
    pub fn zeros_like(&self) -> Self {
        Parameters {
            conv1: ConvLayer::zeros(self.conv1.in_channels, self.conv1.out_channels),
            conv2: ConvLayer::zeros(self.conv2.in_channels, self.conv2.out_channels),
            dense: DenseLayer::zeros(self.dense.inputs, self.dense.outputs),
        }
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            &self.conv1.weights,
            &self.conv1.bias,
            &self.conv2.weights,
            &self.conv2.bias,
            &self.dense.weights,
            &self.dense.bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.dense.weights,
            &mut self.dense.bias,
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

/// Intermediate values kept from the forward pass for backpropagation.
struct Activations {
    input: Tensor,
    conv1: Tensor,
    relu1: Tensor,
    pool1: Tensor,
    arg1: Vec<usize>,
    conv2: Tensor,
    relu2: Tensor,
    pool2: Tensor,
    arg2: Vec<usize>,
    logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub input_width: usize,
    pub input_height: usize,
    pub input_channels: usize,
    pub class_names: Vec<String>,
    pub params: Parameters,
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(cfg: &TrainConfig, class_names: &[String]) -> Result<Self> {
        cfg.validate()?;
        if class_names.len() != cfg.num_classes {
            return Err(Error::Config(format!(
                "{} class names for num_classes = {}",
                class_names.len(),
                cfg.num_classes
            )));
        }
        let flat = cfg.conv2_filters * (cfg.input_height / 4) * (cfg.input_width / 4);
        Ok(Model {
            input_width: cfg.input_width,
            input_height: cfg.input_height,
            input_channels: cfg.input_channels,
            class_names: class_names.to_vec(),
            params: Parameters {
                conv1: ConvLayer::zeros(cfg.input_channels, cfg.conv1_filters),
                conv2: ConvLayer::zeros(cfg.conv1_filters, cfg.conv2_filters),
                dense: DenseLayer::zeros(flat, cfg.num_classes),
            },
        })
    }

    /// Fan-in scaled uniform initialisation: every weight is drawn from
    /// `U(-√(6/fan_in), √(6/fan_in))` in the order conv1, conv2, dense.
    /// Convolution biases start at [`CONV_BIAS_INIT`], dense biases at zero.
    pub fn initialize(
        cfg: &TrainConfig,
        class_names: &[String],
        rng: &mut XorShift64Star,
    ) -> Result<Self> {
        let mut model = Self::zeros(cfg, class_names)?;
        let p = &mut model.params;
        // A zero bias puts every unit fed only by dead ReLUs exactly on the
        // kink, where the loss is not differentiable.
        p.conv1.bias.fill(CONV_BIAS_INIT);
        p.conv2.bias.fill(CONV_BIAS_INIT);
        let fans = [
            p.conv1.in_channels * K * K,
            p.conv2.in_channels * K * K,
            p.dense.inputs,
        ];
        for (weights, fan_in) in [
            &mut p.conv1.weights,
            &mut p.conv2.weights,
            &mut p.dense.weights,
        ]
        .into_iter()
        .zip(fans)
        {
            let limit = (6.0 / fan_in as f64).sqrt();
            weights
                .iter_mut()
                .for_each(|w| *w = rng.uniform(-limit, limit));
        }
        Ok(model)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Parses a model and checks that every layer fits the declared input
    /// shape and class list.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Model = serde_json::from_str(text)?;
        let p = &model.params;
        let cfg = TrainConfig {
            input_width: model.input_width,
            input_height: model.input_height,
            input_channels: model.input_channels,
            num_classes: model.class_names.len(),
            conv1_filters: p.conv1.out_channels,
            conv2_filters: p.conv2.out_channels,
            ..TrainConfig::default()
        };
        let expected = Self::zeros(&cfg, &model.class_names)?;
        let shape = |m: &Model| {
            let q = &m.params;
            (
                (q.conv1.in_channels, q.conv2.in_channels),
                (q.dense.inputs, q.dense.outputs),
                q.slices().map(<[f64]>::len),
            )
        };
        if shape(&model) != shape(&expected) {
            return Err(Error::Config(
                "model layers do not match its input shape".into(),
            ));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if (input.channels, input.height, input.width)
            != (self.input_channels, self.input_height, self.input_width)
        {
            return Err(Error::Config(format!(
                "input is {}x{}x{}, model expects {}x{}x{}",
                input.width,
                input.height,
                input.channels,
                self.input_width,
                self.input_height,
                self.input_channels
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, input: &Tensor) -> Activations {
        let p = &self.params;
        let conv1 = p.conv1.forward(input);
        let relu1 = relu(&conv1);
        let (pool1, arg1) = max_pool(&relu1);
        let conv2 = p.conv2.forward(&pool1);
        let relu2 = relu(&conv2);
        let (pool2, arg2) = max_pool(&relu2);
        let logits = (0..p.dense.outputs)
            .map(|k| {
                let row = &p.dense.weights[k * p.dense.inputs..(k + 1) * p.dense.inputs];
                p.dense.bias[k] + row.iter().zip(&pool2.data).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        Activations {
            input: input.clone(),
            conv1,
            relu1,
            pool1,
            arg1,
            conv2,
            relu2,
            pool2,
            arg2,
            logits,
        }
    }

    /// Pre-softmax class scores.
    pub fn logits(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_cached(input).logits)
    }

    pub fn probabilities(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(input)?))
    }

    pub fn loss(&self, input: &Tensor, label: usize) -> Result<f64> {
        Ok(cross_entropy(&self.logits(input)?, label))
    }

    /// Cross-entropy loss for one sample, adding its parameter gradient
    /// into `grad`.
    pub fn accumulate_gradient(
        &self,
        input: &Tensor,
        label: usize,
        grad: &mut Parameters,
    ) -> Result<f64> {
        self.check_input(input)?;
        if label >= self.num_classes() {
            return Err(Error::UnknownLabel(format!("class index {label}")));
        }
        let a = self.forward_cached(input);
        let p = &self.params;
        let mut d_logits = softmax(&a.logits);
        d_logits[label] -= 1.0;

        let n_in = p.dense.inputs;
        let mut d_pool2 = Tensor {
            data: vec![0.0; n_in],
            ..a.pool2
        };
        for (k, &dk) in d_logits.iter().enumerate() {
            grad.dense.bias[k] += dk;
            let g_row = &mut grad.dense.weights[k * n_in..(k + 1) * n_in];
            for (g, x) in g_row.iter_mut().zip(&a.pool2.data) {
                *g += dk * x;
            }
            let w_row = &p.dense.weights[k * n_in..(k + 1) * n_in];
            for (d, w) in d_pool2.data.iter_mut().zip(w_row) {
                *d += dk * w;
            }
        }

        let mut d_conv2 = unpool(&d_pool2, &a.arg2, &a.relu2);
        for (d, z) in d_conv2.data.iter_mut().zip(&a.conv2.data) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let d_pool1 = p
            .conv2
            .backward(&a.pool1, &d_conv2, &mut grad.conv2, true)
            .expect("input gradient requested");
        let mut d_conv1 = unpool(&d_pool1, &a.arg1, &a.relu1);
        for (d, z) in d_conv1.data.iter_mut().zip(&a.conv1.data) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        p.conv1.backward(&a.input, &d_conv1, &mut grad.conv1, false);
        Ok(cross_entropy(&a.logits, label))
    }

    pub fn gradient(&self, input: &Tensor, label: usize) -> Result<Parameters> {
        let mut grad = self.params.zeros_like();
        self.accumulate_gradient(input, label, &mut grad)?;
        Ok(grad)
    }
}

/// Finite-difference step used by [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-4;

/// Largest relative disagreement between the backpropagated gradient and
/// central finite differences over every parameter. The relative error
/// of one parameter is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check(model: &Model, input: &Tensor, label: usize) -> Result<f64> {
    let analytic = model.gradient(input, label)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for group in 0..6 {
        for i in 0..analytic.slices()[group].len() {
            let original = probe.params.slices()[group][i];
            probe.params.slices_mut()[group][i] = original + GRADIENT_CHECK_STEP;
            let plus = probe.loss(input, label)?;
            probe.params.slices_mut()[group][i] = original - GRADIENT_CHECK_STEP;
            let minus = probe.loss(input, label)?;
            probe.params.slices_mut()[group][i] = original;

            let numeric = (plus - minus) / (2.0 * GRADIENT_CHECK_STEP);
            let a = analytic.slices()[group][i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
