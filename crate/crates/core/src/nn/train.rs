use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::SeededRng;

use super::loss::soft_cross_entropy_with_grad;
use super::{row_argmax, Gradients, Network, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { optimizer: OptimizerKind::Adam, learning_rate: 1e-3, batch_size: 64, epochs: 10, seed: 0, weight_decay: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// One minibatch as seen by an [`Objective`].
pub struct BatchContext<'a> {
    /// Row indices into the training set.
    pub indices: &'a [usize],
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

/// Mean batch loss, its gradient with respect to the logits, and named parts.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub grad_logits: Array2<f64>,
    pub terms: Vec<(&'static str, f64)>,
}

/// A training loss expressed on the student's logits.
pub trait Objective {
    fn evaluate(&self, batch: &BatchContext<'_>, logits: ArrayView2<'_, f64>) -> Result<BatchLoss>;
}

/// Plain cross-entropy against the hard labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelObjective;

impl Objective for LabelObjective {
    fn evaluate(&self, batch: &BatchContext<'_>, logits: ArrayView2<'_, f64>) -> Result<BatchLoss> {
        let n = logits.nrows() as f64;
        let mut grad = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for (i, (row, &label)) in logits.rows().into_iter().zip(batch.labels).enumerate() {
            let (l, g) = soft_cross_entropy_with_grad(row, &Target::Hard(label), 1.0)?;
            total += l;
            grad.row_mut(i).assign(&(g / n));
        }
        Ok(BatchLoss { loss: total / n, grad_logits: grad, terms: vec![("xent", total / n)] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub metrics: Vec<EpochMetrics>,
}

/// Train `net` on `ds` under `objective`. Deterministic given `cfg.seed`.
pub fn train(net: Network, ds: &Dataset, cfg: &TrainConfig, objective: &dyn Objective) -> Result<TrainOutcome> {
    train_with_callback(net, ds, cfg, objective, |_, _| Ok(()))
}

/// [`train`] with a hook called after every epoch.
pub fn train_with_callback<F>(
    mut net: Network,
    ds: &Dataset,
    cfg: &TrainConfig,
    objective: &dyn Objective,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&Network, &EpochMetrics) -> Result<()>,
{
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if ds.feature_dim() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), actual: ds.feature_dim() });
    }
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg, &net);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let inputs = ds.features.select(Axis(0), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
            let cache = net.forward_batch(inputs.view()).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { epoch, batch: b, loss: f64::NAN },
                other => other,
            })?;
            let ctx = BatchContext { indices: chunk, inputs: inputs.view(), labels: &labels };
            let out = objective.evaluate(&ctx, cache.logits.view())?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss: out.loss });
            }
            loss_sum += out.loss * chunk.len() as f64;
            correct += cache.logits.rows().into_iter().zip(&labels).filter(|(r, &l)| row_argmax(r.view()) == l).count();
            let grads = net.backward(&cache, out.grad_logits.view());
            optimizer.step(&mut net, &grads);
        }
        let m = EpochMetrics { epoch, train_loss: loss_sum / ds.len() as f64, train_accuracy: correct as f64 / ds.len() as f64 };
        on_epoch(&net, &m)?;
        metrics.push(m);
    }
    Ok(TrainOutcome { network: net, metrics })
}

/// Top-1 accuracy; ties go to the lowest class index.
pub fn accuracy(net: &Network, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let mut correct = 0usize;
    // Chunked to bound memory on large evaluation sets.
    for start in (0..ds.len()).step_by(1024) {
        let end = (start + 1024).min(ds.len());
        let logits = net.logits_batch(ds.features.slice(ndarray::s![start..end, ..]))?;
        correct += logits.rows().into_iter().zip(&ds.labels[start..end]).filter(|(r, &l)| row_argmax(r.view()) == l).count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    fn new(cfg: &TrainConfig, net: &Network) -> Self {
        let mut probe = net.clone();
        let shapes: Vec<usize> = probe.parameter_tensors_mut().iter().map(|(t, _)| t.len()).collect();
        let zeros = |_: ()| shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let (m, v) = match cfg.optimizer {
            OptimizerKind::Adam => (zeros(()), zeros(())),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Optimizer { kind: cfg.optimizer, lr: cfg.learning_rate, weight_decay: cfg.weight_decay, step: 0, m, v }
    }

    fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let grad_tensors = grad_slices(grads);
        let (bc1, bc2) = (1.0 - ADAM_BETA1.powi(self.step), 1.0 - ADAM_BETA2.powi(self.step));
        for (k, ((param, is_weight), grad)) in net.parameter_tensors_mut().into_iter().zip(grad_tensors).enumerate() {
            let wd = if is_weight { self.weight_decay } else { 0.0 };
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in param.iter_mut().zip(grad) {
                        *p -= self.lr * (g + wd * *p);
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (((p, g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = g + wd * *p;
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

fn grad_slices(g: &Gradients) -> Vec<&[f64]> {
    let mut out = Vec::new();
    for (w, b) in &g.hidden {
        out.push(w.as_slice().expect("standard layout"));
        out.push(b.as_slice().expect("standard layout"));
    }
    out.push(g.final_weights.as_slice().expect("standard layout"));
    if let Some(b) = &g.final_bias {
        out.push(b.as_slice().expect("standard layout"));
    }
    out
}
