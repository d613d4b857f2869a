//! Dense feedforward classifiers with exact manual backpropagation.
//!
//! A [`Network`] is a stack of hidden [`Layer`]s producing the penultimate
//! activation `a ∈ R^d`, followed by the final layer `W ∈ R^{d×c}` whose
//! columns are the class prototypes. Logits are `Wᵀa`; the final bias is
//! absent unless explicitly requested.

mod checkpoint;
mod loss;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::directional::norm;
use crate::error::{Error, Result};
use crate::SeededRng;

pub use checkpoint::{checkpoint_hash, load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use loss::{cross_entropy_loss, log_softmax, softmax, soft_cross_entropy, Target};
pub(crate) use loss::soft_cross_entropy_with_grad;
pub use train::{
    accuracy, train, train_with_callback, BatchContext, BatchLoss, EpochMetrics, LabelObjective, Objective,
    OptimizerKind, TrainConfig, TrainOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiply `grad` by the derivative, given pre-activation `z` and output `h`.
    fn backprop(self, grad: &mut Array2<f64>, z: &Array2<f64>, h: &Array2<f64>) {
        match self {
            Activation::Relu => grad.zip_mut_with(z, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.zip_mut_with(h, |g, &h| *g *= 1.0 - h * h),
            Activation::Identity => {}
        }
    }
}

/// Hidden layer `h = act(x W + b)` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// How parameters were initialized; recorded in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub scheme: String,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec { scheme: "manual".into(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    hidden: Vec<Layer>,
    final_weights: Array2<f64>,
    final_bias: Option<Array1<f64>>,
    init: InitSpec,
}

/// Output of [`Network::forward`] for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub penultimate: Vec<f64>,
}

impl Prediction {
    /// Build from logits alone (no penultimate activation available).
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        Prediction { logits, probabilities, penultimate: Vec::new() }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Batched forward pass with everything backprop needs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Inputs to each hidden layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    pub penultimate: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Gradients with the same layout as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: Vec<(Array2<f64>, Array1<f64>)>,
    pub final_weights: Array2<f64>,
    pub final_bias: Option<Array1<f64>>,
}

impl Gradients {
    /// Flattened in [`Network::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.hidden {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.final_weights.iter());
        if let Some(b) = &self.final_bias {
            out.extend(b.iter());
        }
        out
    }
}

impl Network {
    /// Assemble a network from explicit parameters.
    pub fn from_parts(hidden: Vec<Layer>, final_weights: Array2<f64>, final_bias: Option<Array1<f64>>) -> Result<Self> {
        let net = Network { hidden, final_weights, final_bias, init: InitSpec::default() };
        net.validate()?;
        Ok(net)
    }

    /// Random network with layer sizes `[input, hidden..., d, c]`.
    ///
    /// Every weight is drawn from `U(−1/√fan_in, 1/√fan_in)`; biases start at zero.
    pub fn random(layer_sizes: &[usize], activation: Activation, final_bias: bool, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument("need at least input and class sizes".into()));
        }
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let n = layer_sizes.len();
        let hidden = layer_sizes[..n - 1]
            .windows(2)
            .map(|w| Layer { weights: uniform(w[0], w[1]), bias: Array1::zeros(w[1]), activation })
            .collect();
        let final_weights = uniform(layer_sizes[n - 2], layer_sizes[n - 1]);
        let bias = final_bias.then(|| Array1::zeros(layer_sizes[n - 1]));
        let mut net = Network::from_parts(hidden, final_weights, bias)?;
        net.init = InitSpec { scheme: "uniform_fan_in".into(), seed };
        Ok(net)
    }

    /// Replace the activation of the last hidden layer, e.g. `Identity` so a
    /// low-dimensional penultimate space is not confined to one orthant.
    pub fn with_penultimate_activation(mut self, activation: Activation) -> Self {
        if let Some(last) = self.hidden.last_mut() {
            last.activation = activation;
        }
        self
    }

    fn validate(&self) -> Result<()> {
        let mut width = None;
        for (i, layer) in self.hidden.iter().enumerate() {
            let (rows, cols) = layer.weights.dim();
            if let Some(w) = width {
                if w != rows {
                    return Err(Error::DimensionMismatch { expected: w, actual: rows });
                }
            }
            if layer.bias.len() != cols {
                return Err(Error::InvalidArgument(format!("layer {i} bias has length {}, expected {cols}", layer.bias.len())));
            }
            width = Some(cols);
        }
        let (d, c) = self.final_weights.dim();
        if let Some(w) = width {
            if w != d {
                return Err(Error::DimensionMismatch { expected: w, actual: d });
            }
        }
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if c < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {c}")));
        }
        if let Some(b) = &self.final_bias {
            if b.len() != c {
                return Err(Error::DimensionMismatch { expected: c, actual: b.len() });
            }
        }
        if !self.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map_or(self.final_weights.nrows(), |l| l.weights.nrows())
    }

    /// Penultimate dimension `d`.
    pub fn penultimate_dim(&self) -> usize {
        self.final_weights.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.final_weights.ncols()
    }

    /// `[input, hidden..., d, c]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.hidden.iter().map(|l| l.weights.ncols()));
        sizes.push(self.class_count());
        sizes
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.hidden
    }

    /// `W`, shape `d × c`; column `i` is the prototype of class `i`.
    pub fn final_weights(&self) -> &Array2<f64> {
        &self.final_weights
    }

    pub fn final_bias(&self) -> Option<&Array1<f64>> {
        self.final_bias.as_ref()
    }

    pub fn init_spec(&self) -> &InitSpec {
        &self.init
    }

    pub(crate) fn set_init_spec(&mut self, init: InitSpec) {
        self.init = init;
    }

    /// Prototype column norms `‖w_i‖`.
    pub fn prototype_norms(&self) -> Vec<f64> {
        self.final_weights.columns().into_iter().map(|c| norm(&c.to_vec())).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.hidden.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>()
            + self.final_weights.len()
            + self.final_bias.as_ref().map_or(0, |b| b.len())
    }

    /// All parameters flattened (row-major, layer by layer, final layer last).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.hidden {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out.extend(self.final_weights.iter());
        if let Some(b) = &self.final_bias {
            out.extend(b.iter());
        }
        out
    }

    /// Mutable views of every parameter tensor, in [`Network::parameters`] order.
    /// The flag marks weight matrices (as opposed to biases).
    pub(crate) fn parameter_tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut out: Vec<(&mut [f64], bool)> = Vec::new();
        for l in &mut self.hidden {
            out.push((l.weights.as_slice_mut().expect("standard layout"), true));
            out.push((l.bias.as_slice_mut().expect("standard layout"), false));
        }
        out.push((self.final_weights.as_slice_mut().expect("standard layout"), true));
        if let Some(b) = &mut self.final_bias {
            out.push((b.as_slice_mut().expect("standard layout"), false));
        }
        out
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for (tensor, _) in self.parameter_tensors_mut() {
            if offset < tensor.len() {
                tensor[offset] = value;
                return;
            }
            offset -= tensor.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Forward pass for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Prediction> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let out = self.forward_batch(batch)?;
        let logits = out.logits.row(0).to_vec();
        let probabilities = softmax(&logits);
        Ok(Prediction { logits, probabilities, penultimate: out.penultimate.row(0).to_vec() })
    }

    /// Forward pass for a batch (one example per row).
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: inputs.ncols() });
        }
        let mut layer_inputs = Vec::with_capacity(self.hidden.len());
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut h = inputs.to_owned();
        for layer in &self.hidden {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            let mut out = z.clone();
            layer.activation.apply(&mut out);
            layer_inputs.push(h);
            pre.push(z);
            h = out;
        }
        let logits = self.logits_from_penultimate(h.view());
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward pass logits".into()));
        }
        Ok(ForwardCache { inputs: layer_inputs, pre_activations: pre, penultimate: h, logits })
    }

    /// `Wᵀa (+ b)` for a batch of penultimate activations (one per row).
    pub fn logits_from_penultimate(&self, penultimate: ArrayView2<f64>) -> Array2<f64> {
        let mut logits = penultimate.dot(&self.final_weights);
        if let Some(b) = &self.final_bias {
            logits += b;
        }
        logits
    }

    /// Batch logits only.
    pub fn logits_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(inputs)?.logits)
    }

    /// Backpropagate `∂L/∂logits` (one row per example) to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: ArrayView2<f64>) -> Gradients {
        let final_weights = cache.penultimate.t().dot(&grad_logits);
        let final_bias = self.final_bias.as_ref().map(|_| grad_logits.sum_axis(Axis(0)));
        let mut grad = grad_logits.dot(&self.final_weights.t());
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (l, layer) in self.hidden.iter().enumerate().rev() {
            let z = &cache.pre_activations[l];
            let h = if l + 1 < self.hidden.len() { &cache.inputs[l + 1] } else { &cache.penultimate };
            layer.activation.backprop(&mut grad, z, h);
            let gw = cache.inputs[l].t().dot(&grad);
            let gb = grad.sum_axis(Axis(0));
            if l > 0 {
                grad = grad.dot(&layer.weights.t());
            }
            hidden.push((gw, gb));
        }
        hidden.reverse();
        Gradients { hidden, final_weights, final_bias }
    }

    /// Mean loss over a batch and its exact gradient with respect to every parameter.
    pub fn loss_gradients(&self, inputs: ArrayView2<f64>, targets: &[Target]) -> Result<(f64, Gradients)> {
        if inputs.nrows() == 0 || inputs.nrows() != targets.len() {
            return Err(Error::InvalidArgument("batch must be nonempty with one target per input".into()));
        }
        let cache = self.forward_batch(inputs)?;
        let n = inputs.nrows() as f64;
        let c = self.class_count();
        let mut grad = Array2::zeros((inputs.nrows(), c));
        let mut total = 0.0;
        for (i, target) in targets.iter().enumerate() {
            let row = cache.logits.row(i);
            let (l, g) = loss::soft_cross_entropy_with_grad(row, target, 1.0)?;
            total += l;
            grad.row_mut(i).assign(&(g / n));
        }
        Ok((total / n, self.backward(&cache, grad.view())))
    }

    /// Forward with both `a` and every `w_i` projected to the unit sphere:
    /// logits are `w̄_iᵀā`, bias dropped.
    pub fn normalized_forward(&self, x: &[f64]) -> Result<Prediction> {
        let pred = self.forward(x)?;
        let a_norm = norm(&pred.penultimate);
        if a_norm == 0.0 {
            return Err(Error::ZeroActivation);
        }
        let w_norms = self.prototype_norms();
        if let Some(i) = w_norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroPrototype(i));
        }
        let a = Array1::from_iter(pred.penultimate.iter().map(|v| v / a_norm));
        let logits: Vec<f64> = self
            .final_weights
            .columns()
            .into_iter()
            .zip(&w_norms)
            .map(|(col, n)| col.dot(&a) / n)
            .collect();
        let probabilities = softmax(&logits);
        Ok(Prediction { logits, probabilities, penultimate: pred.penultimate })
    }

    /// Fraction of examples whose argmax logit equals the label.
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        accuracy(self, ds)
    }

    /// Accuracy of the normalized classifier `argmax_i w̄_iᵀā`.
    pub fn normalized_accuracy(&self, ds: &Dataset) -> Result<f64> {
        let penult = self.penultimate_batch(ds.features.view())?;
        let w_norms = self.prototype_norms();
        if let Some(i) = w_norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroPrototype(i));
        }
        let scores = penult.dot(&self.final_weights);
        let mut correct = 0usize;
        for (i, row) in scores.rows().into_iter().enumerate() {
            // ‖a‖ is a positive common factor per row and does not change the argmax.
            let scaled: Vec<f64> = row.iter().zip(&w_norms).map(|(s, n)| s / n).collect();
            if argmax(&scaled) == ds.labels[i] {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.len() as f64)
    }

    /// Penultimate activations for a batch.
    pub fn penultimate_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(inputs)?.penultimate)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<'a>(values: impl IntoIterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub(crate) fn row_argmax(row: ArrayView1<f64>) -> usize {
    argmax(row.iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_net() -> Network {
        let hidden = vec![Layer { weights: Array2::eye(2), bias: Array1::zeros(2), activation: Activation::Identity }];
        Network::from_parts(hidden, Array2::eye(2), None).unwrap()
    }

    #[test]
    fn identity_forward_example() {
        let p = identity_net().forward(&[1.0, 0.0]).unwrap();
        assert_eq!(p.logits, vec![1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((p.probabilities[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p.probabilities[0] - 0.7311).abs() < 1e-4);
        assert!((p.probabilities[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn forward_matches_plain_matrix_arithmetic() {
        let net = Network::random(&[5, 4, 3, 4], Activation::Tanh, true, 9).unwrap();
        let x = [0.3, -0.2, 0.9, 0.0, 0.5];
        let got = net.forward(&x).unwrap();
        // Independent triple-loop evaluation.
        let mut h = x.to_vec();
        for layer in net.hidden_layers() {
            let (rows, cols) = layer.weights.dim();
            let mut next = vec![0.0; cols];
            for j in 0..cols {
                let mut s = layer.bias[j];
                for i in 0..rows {
                    s += h[i] * layer.weights[[i, j]];
                }
                next[j] = s.tanh();
            }
            h = next;
        }
        let w = net.final_weights();
        for k in 0..net.class_count() {
            let mut s = net.final_bias().unwrap()[k];
            for i in 0..w.nrows() {
                s += h[i] * w[[i, k]];
            }
            assert!((s - got.logits[k]).abs() < 1e-14);
        }
        assert!((got.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_and_shape_validation() {
        let net = identity_net();
        assert!(matches!(net.forward(&[1.0, 2.0, 3.0]), Err(Error::DimensionMismatch { .. })));
        let bad = Network::from_parts(
            vec![Layer { weights: Array2::zeros((3, 4)), bias: Array1::zeros(4), activation: Activation::Relu }],
            Array2::zeros((5, 2)),
            None,
        );
        assert!(bad.is_err());
        assert!(Network::from_parts(vec![], Array2::zeros((2, 1)), None).is_err());
        assert!(Network::from_parts(vec![], array![[f64::NAN, 0.0], [0.0, 1.0]], None).is_err());
    }

    #[test]
    fn non_finite_logits_are_reported() {
        let net = Network::from_parts(vec![], array![[1e300, 0.0], [0.0, 1.0]], None).unwrap();
        assert!(matches!(net.forward(&[1e300, 0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn normalized_forward_matches_argmax_for_equal_norms() {
        let w = array![[2.0, 0.0, -2.0f64.sqrt()], [0.0, 2.0, -2.0f64.sqrt()]];
        let net = Network::from_parts(
            vec![Layer { weights: array![[1.0, -0.5], [0.3, 0.8]], bias: array![0.1, 0.0], activation: Activation::Tanh }],
            w,
            None,
        )
        .unwrap();
        for x in [[0.2, 0.9], [-1.0, 0.3], [0.5, -0.5]] {
            let p = net.forward(&x).unwrap();
            let q = net.normalized_forward(&x).unwrap();
            assert_eq!(p.argmax(), q.argmax());
            let a = norm(&p.penultimate);
            for (l, n) in p.logits.iter().zip(&q.logits) {
                assert!((l / (2.0 * a) - n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_forward_errors() {
        let net = Network::from_parts(vec![], array![[1.0, 0.0], [0.0, 0.0]], None).unwrap();
        assert!(matches!(net.normalized_forward(&[1.0, 1.0]), Err(Error::ZeroPrototype(1))));
        let net = identity_net();
        assert!(matches!(net.normalized_forward(&[0.0, 0.0]), Err(Error::ZeroActivation)));
    }

    #[test]
    fn zero_weight_final_gradient_columns_sum_to_zero() {
        let net = Network::from_parts(
            vec![Layer { weights: Array2::zeros((2, 3)), bias: array![0.5, -0.2, 1.0], activation: Activation::Identity }],
            Array2::zeros((3, 4)),
            None,
        )
        .unwrap();
        let x = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let targets = [Target::Hard(0), Target::Hard(1), Target::Hard(2), Target::Hard(3)];
        let (_, g) = net.loss_gradients(x.view(), &targets).unwrap();
        for row in g.final_weights.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
