//! Dense feed-forward classifiers with full activation tracing and exact
//! input-gradient computation.
//!
//! A [`Network`] is a stack of fully connected layers: leaky-ReLU activations
//! on every hidden layer and a softmax on the output layer. Layers are
//! numbered 1-based, counting the input layer, so a network with `h` hidden
//! layers has layers `1..=h+2` and its hidden layers are `2..=h+1`.
//!
//! All arithmetic is 64-bit and loop order is fixed, so identical inputs
//! produce bit-identical results.

use crate::error::{Error, Result};
use std::fmt;

/// Address of a hidden neuron: 1-based layer (input layer is 1) and 1-based
/// position within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId {
    pub layer: usize,
    pub neuron: usize,
}

impl NeuronId {
    pub fn new(layer: usize, neuron: usize) -> Self {
        Self { layer, neuron }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer, self.neuron)
    }
}

/// Row-major dense matrix, shape `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row vectors. All rows must have equal length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    context: "matrix row",
                    expected: c,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
    }

    /// `out = self^T * x`.
    pub fn matvec_transpose(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (&xr, row) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if xr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xr;
            }
        }
    }
}

/// A feature vector with its ground-truth class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInput {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledInput {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Per-neuron post-activation values recorded during one forward pass,
/// together with the softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    hidden: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    predicted_class: usize,
}

impl ForwardTrace {
    /// Post-activation value of a hidden neuron.
    pub fn neuron_value(&self, id: NeuronId) -> Result<f64> {
        let slot = hidden_slot(&self.widths_view(), id)?;
        Ok(self.hidden[slot.0][slot.1])
    }

    /// Post-activation values of one hidden layer, `layer` 1-based.
    pub fn hidden_layer(&self, layer: usize) -> Option<&[f64]> {
        if layer < 2 || layer > self.hidden.len() + 1 {
            return None;
        }
        Some(&self.hidden[layer - 2])
    }

    /// All hidden activations in address order (ascending layer, then neuron).
    pub fn hidden_activations(&self) -> impl Iterator<Item = (NeuronId, f64)> + '_ {
        self.hidden.iter().enumerate().flat_map(|(li, layer)| {
            layer
                .iter()
                .enumerate()
                .map(move |(j, &v)| (NeuronId::new(li + 2, j + 1), v))
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn predicted_class(&self) -> usize {
        self.predicted_class
    }

    /// Whether the prediction matches the given ground-truth label.
    pub fn matches(&self, label: usize) -> bool {
        self.predicted_class == label
    }

    fn widths_view(&self) -> Vec<usize> {
        // Input/output widths are irrelevant for hidden addressing; only the
        // hidden widths matter here.
        let mut w = vec![0];
        w.extend(self.hidden.iter().map(Vec::len));
        w.push(self.probabilities.len());
        w
    }
}

/// Resolves a 1-based hidden-neuron address to 0-based (hidden layer, neuron)
/// indices, given the full width list (input first, output last).
fn hidden_slot(widths: &[usize], id: NeuronId) -> Result<(usize, usize)> {
    let layers = widths.len();
    if id.layer < 2 || id.layer + 1 > layers {
        return Err(Error::Address {
            id,
            reason: format!(
                "layer must address a hidden layer (2..={})",
                layers.saturating_sub(1)
            ),
        });
    }
    let width = widths[id.layer - 1];
    if id.neuron == 0 || id.neuron > width {
        return Err(Error::Address {
            id,
            reason: format!("neuron must be in 1..={width}"),
        });
    }
    Ok((id.layer - 2, id.neuron - 1))
}

/// Layered dense classifier: per-layer weights and biases, leaky-ReLU hidden
/// activations with slope `alpha`, softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layer_widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    alpha: f64,
}

impl Network {
    /// Builds a network from per-layer weights (shape `out x in`) and biases.
    /// There must be at least two trainable layers (one hidden layer), shapes
    /// must chain, and `alpha` must be positive.
    pub fn new(weights: Vec<Matrix>, biases: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || alpha.is_nan() {
            return Err(Error::Argument(format!(
                "activation slope must be positive, got {alpha}"
            )));
        }
        if weights.len() < 2 {
            return Err(Error::Argument(
                "network needs at least one hidden layer (two trainable layers)".into(),
            ));
        }
        if weights.len() != biases.len() {
            return Err(Error::Dimension {
                context: "bias list",
                expected: weights.len(),
                actual: biases.len(),
            });
        }
        let mut widths = Vec::with_capacity(weights.len() + 1);
        widths.push(weights[0].cols());
        for (i, w) in weights.iter().enumerate() {
            if w.cols() != widths[i] {
                return Err(Error::Dimension {
                    context: "weight matrix input width",
                    expected: widths[i],
                    actual: w.cols(),
                });
            }
            if biases[i].len() != w.rows() {
                return Err(Error::Dimension {
                    context: "bias vector",
                    expected: w.rows(),
                    actual: biases[i].len(),
                });
            }
            widths.push(w.rows());
        }
        if widths.contains(&0) {
            return Err(Error::Argument("zero-width layer".into()));
        }
        Ok(Self {
            layer_widths: widths,
            weights,
            biases,
            alpha,
        })
    }

    /// Widths of every layer, input first and output last.
    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    /// Total number of layers, counting input and output.
    pub fn layer_count(&self) -> usize {
        self.layer_widths.len()
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Hidden neuron addresses in ascending (layer, neuron) order.
    pub fn hidden_neurons(&self) -> Vec<NeuronId> {
        let mut out = Vec::with_capacity(self.hidden_neuron_count());
        for (li, &w) in self.layer_widths[1..self.layer_count() - 1].iter().enumerate() {
            for j in 1..=w {
                out.push(NeuronId::new(li + 2, j));
            }
        }
        out
    }

    pub fn hidden_neuron_count(&self) -> usize {
        self.layer_widths[1..self.layer_count() - 1].iter().sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::Dimension {
                context: "input vector",
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn activate(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.alpha * z
        }
    }

    /// Derivative of the hidden activation. At the kink (z exactly 0) the
    /// slope `alpha` is used.
    #[inline]
    fn activate_deriv(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.alpha
        }
    }

    /// Runs the network on `input`, recording every hidden neuron's
    /// post-activation value and the softmax output.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let (_, hidden, logits) = self.forward_internal(input);
        let probabilities = softmax(&logits);
        let predicted_class = argmax(&probabilities);
        Ok(ForwardTrace {
            hidden,
            probabilities,
            predicted_class,
        })
    }

    /// Forward pass keeping hidden pre-activations (needed for gradients).
    /// Returns (pre-activations, post-activations, output logits).
    fn forward_internal(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let hidden_layers = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(hidden_layers);
        let mut post = Vec::with_capacity(hidden_layers);
        let mut current = input;
        let mut buf: Vec<f64>;
        for i in 0..hidden_layers {
            let mut z = vec![0.0; self.weights[i].rows()];
            self.weights[i].matvec(current, &mut z);
            for (zj, b) in z.iter_mut().zip(&self.biases[i]) {
                *zj += b;
            }
            buf = z.iter().map(|&zj| self.activate(zj)).collect();
            pre.push(z);
            post.push(buf);
            current = post.last().unwrap();
        }
        let last = self.weights.len() - 1;
        let mut logits = vec![0.0; self.weights[last].rows()];
        self.weights[last].matvec(current, &mut logits);
        for (lj, b) in logits.iter_mut().zip(&self.biases[last]) {
            *lj += b;
        }
        (pre, post, logits)
    }

    /// Gradient of a hidden neuron's post-activation value with respect to the
    /// input, by reverse-mode differentiation through the leaky-ReLU layers up
    /// to and including the addressed neuron.
    pub fn input_gradient(&self, input: &[f64], id: NeuronId) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let (hl, j) = hidden_slot(&self.layer_widths, id)?;
        let (pre, _, _) = self.forward_internal(input);

        // Seed at the addressed neuron, then walk back layer by layer.
        let mut delta = vec![0.0; self.layer_widths[hl + 1]];
        delta[j] = self.activate_deriv(pre[hl][j]);
        for i in (1..=hl).rev() {
            let mut prev = vec![0.0; self.layer_widths[i]];
            self.weights[i].matvec_transpose(&delta, &mut prev);
            for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                *p *= self.activate_deriv(*z);
            }
            delta = prev;
        }
        let mut grad = vec![0.0; self.input_width()];
        self.weights[0].matvec_transpose(&delta, &mut grad);
        Ok(grad)
    }

    /// Mean cross-entropy of the softmax output against the true labels.
    /// Probabilities are floored at 1e-12 before the log.
    pub fn cross_entropy_loss(&self, inputs: &[LabeledInput]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::Argument(
                "cross-entropy loss over an empty input list".into(),
            ));
        }
        let mut total = 0.0;
        for sample in inputs {
            self.check_input(&sample.features)?;
            if sample.label >= self.output_width() {
                return Err(Error::Argument(format!(
                    "label {} out of range for {} classes",
                    sample.label,
                    self.output_width()
                )));
            }
            let trace = self.forward(&sample.features)?;
            let p = trace.probabilities[sample.label].max(1e-12);
            total -= p.ln();
        }
        Ok(total / inputs.len() as f64)
    }
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the largest element; first index wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
