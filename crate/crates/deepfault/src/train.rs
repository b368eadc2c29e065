//! Mini-batch SGD training of dense leaky-ReLU classifiers.
//!
//! Training is deterministic: weights are initialized from a seeded
//! generator, the per-epoch shuffle order comes from the same generator, and
//! the update loop is single-threaded. Two runs with the same data and config
//! produce bit-identical networks.

use crate::error::{Error, Result};
use crate::network::{LabeledInput, Matrix, Network};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trainer settings. The output layer width is the largest label plus one;
/// the input width comes from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden layer widths, shallowest first.
    pub hidden_widths: Vec<usize>,
    /// Leaky-ReLU slope of the trained network.
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.06,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            hidden_widths: vec![20; 8],
            alpha: 0.01,
        }
    }
}

fn validate(data: &[LabeledInput], cfg: &TrainConfig) -> Result<(usize, usize)> {
    if cfg.learning_rate <= 0.0 || cfg.learning_rate.is_nan() {
        return Err(Error::Argument(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Argument("epoch count must be at least 1".into()));
    }
    if cfg.hidden_widths.is_empty() || cfg.hidden_widths.contains(&0) {
        return Err(Error::Argument(
            "architecture needs at least one non-empty hidden layer".into(),
        ));
    }
    let Some(first) = data.first() else {
        return Err(Error::Argument("training data is empty".into()));
    };
    let input_width = first.features.len();
    if input_width == 0 {
        return Err(Error::Argument("inputs must have at least one feature".into()));
    }
    for (i, sample) in data.iter().enumerate() {
        if sample.features.len() != input_width {
            return Err(Error::Dimension {
                context: "training input",
                expected: input_width,
                actual: sample.features.len(),
            });
        }
        let _ = i;
    }
    let classes = data.iter().map(|s| s.label).max().unwrap() + 1;
    if classes < 2 {
        return Err(Error::Argument(
            "training data must contain at least two classes".into(),
        ));
    }
    Ok((input_width, classes))
}

/// Uniform init in `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`.
fn init_weights(
    rng: &mut ChaCha8Rng,
    widths: &[usize],
) -> (Vec<Matrix>, Vec<Vec<f64>>) {
    let mut weights = Vec::with_capacity(widths.len() - 1);
    let mut biases = Vec::with_capacity(widths.len() - 1);
    for i in 0..widths.len() - 1 {
        let (fan_in, fan_out) = (widths[i], widths[i + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut m = Matrix::zeros(fan_out, fan_in);
        for w in m.data_mut() {
            let r: f64 = rng.random();
            *w = (2.0 * r - 1.0) * limit;
        }
        weights.push(m);
        biases.push(vec![0.0; fan_out]);
    }
    (weights, biases)
}

struct Workspace {
    pre: Vec<Vec<f64>>,   // hidden pre-activations
    post: Vec<Vec<f64>>,  // hidden post-activations
    logits: Vec<f64>,
    probs: Vec<f64>,
    deltas: Vec<Vec<f64>>, // per trainable layer, length = layer output width
}

impl Workspace {
    fn new(widths: &[usize]) -> Self {
        let hidden = widths.len() - 2;
        Self {
            pre: widths[1..=hidden].iter().map(|&w| vec![0.0; w]).collect(),
            post: widths[1..=hidden].iter().map(|&w| vec![0.0; w]).collect(),
            logits: vec![0.0; widths[widths.len() - 1]],
            probs: vec![0.0; widths[widths.len() - 1]],
            deltas: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

/// One forward/backward pass; gradients are accumulated into `grad_w`/`grad_b`.
#[allow(clippy::too_many_arguments)]
fn accumulate_gradients(
    weights: &[Matrix],
    biases: &[Vec<f64>],
    alpha: f64,
    sample: &LabeledInput,
    ws: &mut Workspace,
    grad_w: &mut [Matrix],
    grad_b: &mut [Vec<f64>],
) {
    let layers = weights.len();
    let hidden = layers - 1;

    // forward
    for i in 0..hidden {
        let (done, rest) = ws.post.split_at_mut(i);
        let current: &[f64] = if i == 0 { &sample.features } else { &done[i - 1] };
        let pre = &mut ws.pre[i];
        weights[i].matvec(current, pre);
        for (z, b) in pre.iter_mut().zip(&biases[i]) {
            *z += b;
        }
        for (p, &z) in rest[0].iter_mut().zip(pre.iter()) {
            *p = if z > 0.0 { z } else { alpha * z };
        }
    }
    let last_post: &[f64] = if hidden == 0 {
        &sample.features
    } else {
        &ws.post[hidden - 1]
    };
    weights[hidden].matvec(last_post, &mut ws.logits);
    for (l, b) in ws.logits.iter_mut().zip(&biases[hidden]) {
        *l += b;
    }
    let max = ws.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &l) in ws.probs.iter_mut().zip(ws.logits.iter()) {
        *p = (l - max).exp();
        sum += *p;
    }
    for p in ws.probs.iter_mut() {
        *p /= sum;
    }

    // backward: softmax cross-entropy delta at the output
    for (i, d) in ws.deltas[hidden].iter_mut().enumerate() {
        *d = ws.probs[i] - if i == sample.label { 1.0 } else { 0.0 };
    }
    for layer in (0..layers).rev() {
        let upstream: &[f64] = if layer == 0 {
            &sample.features
        } else {
            &ws.post[layer - 1]
        };
        {
            let delta = &ws.deltas[layer];
            let gw = grad_w[layer].data_mut();
            let cols = upstream.len();
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * cols..(r + 1) * cols];
                for (g, &u) in row.iter_mut().zip(upstream) {
                    *g += d * u;
                }
            }
            for (g, &d) in grad_b[layer].iter_mut().zip(delta) {
                *g += d;
            }
        }
        if layer > 0 {
            let (head, tail) = ws.deltas.split_at_mut(layer);
            let prev = &mut head[layer - 1];
            weights[layer].matvec_transpose(&tail[0], prev);
            for (d, &z) in prev.iter_mut().zip(&ws.pre[layer - 1]) {
                *d *= if z > 0.0 { 1.0 } else { alpha };
            }
        }
    }
}

fn run_training(
    data: &[LabeledInput],
    cfg: &TrainConfig,
    mut after_epoch: impl FnMut(&[Matrix], &[Vec<f64>]),
) -> Result<(Vec<Matrix>, Vec<Vec<f64>>)> {
    let (input_width, classes) = validate(data, cfg)?;
    let mut widths = vec![input_width];
    widths.extend_from_slice(&cfg.hidden_widths);
    widths.push(classes);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut weights, mut biases) = init_weights(&mut rng, &widths);
    let mut grad_w: Vec<Matrix> = weights
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut grad_b: Vec<Vec<f64>> = biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut ws = Workspace::new(&widths);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            for g in grad_w.iter_mut() {
                g.data_mut().fill(0.0);
            }
            for g in grad_b.iter_mut() {
                g.fill(0.0);
            }
            for &idx in batch {
                accumulate_gradients(
                    &weights,
                    &biases,
                    cfg.alpha,
                    &data[idx],
                    &mut ws,
                    &mut grad_w,
                    &mut grad_b,
                );
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (w, g) in weights.iter_mut().zip(&grad_w) {
                for (wi, gi) in w.data_mut().iter_mut().zip(g.data()) {
                    *wi -= scale * gi;
                }
            }
            for (b, g) in biases.iter_mut().zip(&grad_b) {
                for (bi, gi) in b.iter_mut().zip(g) {
                    *bi -= scale * gi;
                }
            }
        }
        after_epoch(&weights, &biases);
    }
    Ok((weights, biases))
}

/// Trains a classifier on `data`. Deterministic given the seed.
pub fn train(data: &[LabeledInput], cfg: &TrainConfig) -> Result<Network> {
    let (weights, biases) = run_training(data, cfg, |_, _| {})?;
    Network::new(weights, biases, cfg.alpha)
}

/// Like [`train`], also returning the full-training-set cross-entropy after
/// each epoch.
pub fn train_with_epoch_loss(
    data: &[LabeledInput],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut failed = None;
    let (weights, biases) = run_training(data, cfg, |w, b| {
        match Network::new(w.to_vec(), b.to_vec(), cfg.alpha)
            .and_then(|net| net.cross_entropy_loss(data))
        {
            Ok(loss) => losses.push(loss),
            Err(e) => failed = Some(e),
        }
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    Ok((Network::new(weights, biases, cfg.alpha)?, losses))
}

/// Fraction of inputs whose predicted class equals the label.
pub fn evaluate_accuracy(net: &Network, data: &[LabeledInput]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("accuracy over an empty data set".into()));
    }
    let mut correct = 0usize;
    for sample in data {
        if net.forward(&sample.features)?.matches(sample.label) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
