//! Data-wise (KD) and class-wise (CKD) distillation objectives, input shifts
//! and the shifted-training experiment protocol.

mod experiment;
mod shift;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::activation_model::ClassRelationMatrix;
use crate::error::{Error, Result};
use crate::nn::{
    soft_cross_entropy, softmax, BatchContext, BatchLoss, Gradients, Network, Objective, Prediction, Target,
};

pub use experiment::{
    run_experiment, summarize, write_metrics_csv, write_runs_csv, write_summary_csv, EpochRecord, Experiment, RunReport,
    SummaryRow,
};
pub use shift::{apply_shift, ShiftConfig, ShiftKind, PHOTOMETRIC_PRESETS};

pub const DEFAULT_TEMPERATURE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    Label,
    Kd,
    Ckd,
    CkdPlusKd,
}

impl DistillMode {
    pub const ALL: [DistillMode; 4] = [DistillMode::Label, DistillMode::Kd, DistillMode::Ckd, DistillMode::CkdPlusKd];

    pub fn name(self) -> &'static str {
        match self {
            DistillMode::Label => "label",
            DistillMode::Kd => "kd",
            DistillMode::Ckd => "ckd",
            DistillMode::CkdPlusKd => "ckd_plus_kd",
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, DistillMode::Kd | DistillMode::CkdPlusKd)
    }

    pub fn needs_relations(self) -> bool {
        matches!(self, DistillMode::Ckd | DistillMode::CkdPlusKd)
    }

    /// Hard-label mixing weight used when none is configured.
    pub fn default_alpha(self) -> f64 {
        match self {
            DistillMode::Label => 0.0,
            DistillMode::Kd | DistillMode::Ckd => 0.5,
            DistillMode::CkdPlusKd => 2.0 / 3.0,
        }
    }
}

impl fmt::Display for DistillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistillMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistillMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown distillation mode `{s}`")))
    }
}

/// Everything a student objective needs besides the data.
#[derive(Debug, Clone)]
pub struct DistillSpec {
    pub mode: DistillMode,
    pub temperature: f64,
    /// Weight of the distillation part; `1 − alpha` goes to hard-label cross-entropy.
    pub alpha: f64,
    /// Multiply soft-target terms by `temperature²`.
    pub scale_by_t2: bool,
    pub relations: Option<ClassRelationMatrix>,
    pub teacher: Option<Network>,
}

impl DistillSpec {
    pub fn new(mode: DistillMode) -> Self {
        DistillSpec {
            mode,
            temperature: DEFAULT_TEMPERATURE,
            alpha: mode.default_alpha(),
            scale_by_t2: true,
            relations: None,
            teacher: None,
        }
    }

    pub fn with_teacher(mut self, teacher: Network) -> Self {
        self.teacher = Some(teacher);
        self
    }

    pub fn with_relations(mut self, relations: ClassRelationMatrix) -> Self {
        self.relations = Some(relations);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.mode.needs_teacher() && self.teacher.is_none() {
            return Err(Error::InvalidArgument(format!("mode `{}` requires a teacher network", self.mode)));
        }
        if self.mode.needs_relations() {
            match &self.relations {
                None => return Err(Error::InvalidArgument(format!("mode `{}` requires a class relation matrix", self.mode))),
                Some(r) => r.validate(1e-6)?,
            }
        }
        Ok(())
    }

    fn soft_scale(&self) -> f64 {
        if self.scale_by_t2 {
            self.temperature * self.temperature
        } else {
            1.0
        }
    }

    /// Coefficients of (xent, kd, ckd) in the composite.
    fn weights(&self) -> (f64, f64, f64) {
        let a = self.alpha;
        match self.mode {
            DistillMode::Label => (1.0, 0.0, 0.0),
            DistillMode::Kd => (1.0 - a, a, 0.0),
            DistillMode::Ckd => (1.0 - a, 0.0, a),
            DistillMode::CkdPlusKd => (1.0 - a, a / 2.0, a / 2.0),
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

/// Hinton's KD loss: cross-entropy of `softmax(s/τ)` against `softmax(t/τ)`, times `τ²`.
pub fn kd_loss(student: &Prediction, teacher: &Prediction, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    if student.logits.len() != teacher.logits.len() {
        return Err(Error::DimensionMismatch { expected: teacher.logits.len(), actual: student.logits.len() });
    }
    let q = tempered(&teacher.logits, temperature);
    Ok(temperature * temperature * soft_cross_entropy(&student.logits, &Target::Soft(q), temperature)?)
}

/// Class-wise KD loss: cross-entropy of `softmax(s/τ)` against the fixed row
/// `relations[label]`. No teacher is involved.
pub fn ckd_loss(student: &Prediction, label: usize, relations: &ClassRelationMatrix, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let c = relations.class_count();
    if label >= c {
        return Err(Error::InvalidClass { index: label, classes: c });
    }
    if student.logits.len() != c {
        return Err(Error::DimensionMismatch { expected: c, actual: student.logits.len() });
    }
    soft_cross_entropy(&student.logits, &Target::Soft(relations.row(label)?), temperature)
}

fn tempered(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    softmax(&scaled)
}

/// Mean composite loss over a batch, with each part reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
}

/// Composite loss of `student` on `(inputs, labels)` under `spec`.
pub fn composite_loss(spec: &DistillSpec, student: &Network, inputs: ArrayView2<f64>, labels: &[usize]) -> Result<CompositeLoss> {
    let (out, _) = composite_gradients(spec, student, inputs, labels)?;
    Ok(CompositeLoss { total: out.loss, terms: out.terms })
}

/// Composite loss together with its parameter gradients.
pub fn composite_gradients(
    spec: &DistillSpec,
    student: &Network,
    inputs: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(BatchLoss, Gradients)> {
    let objective = DistillObjective::new(spec)?;
    let cache = student.forward_batch(inputs)?;
    let indices: Vec<usize> = (0..labels.len()).collect();
    let ctx = BatchContext { indices: &indices, inputs, labels };
    let out = objective.evaluate(&ctx, cache.logits.view())?;
    let grads = student.backward(&cache, out.grad_logits.view());
    Ok((out, grads))
}

/// Training objective built from a validated [`DistillSpec`].
pub struct DistillObjective<'a> {
    spec: &'a DistillSpec,
}

impl<'a> DistillObjective<'a> {
    pub fn new(spec: &'a DistillSpec) -> Result<Self> {
        spec.validate()?;
        Ok(DistillObjective { spec })
    }
}

impl Objective for DistillObjective<'_> {
    fn evaluate(&self, batch: &BatchContext<'_>, logits: ArrayView2<'_, f64>) -> Result<BatchLoss> {
        let spec = self.spec;
        let n = logits.nrows();
        if batch.labels.len() != n {
            return Err(Error::CountMismatch { images: n, labels: batch.labels.len() });
        }
        let (w_x, w_kd, w_ckd) = spec.weights();
        let tau = spec.temperature;
        let scale = spec.soft_scale();
        let teacher_logits = match (&spec.teacher, w_kd > 0.0 || spec.mode.needs_teacher()) {
            (Some(t), true) => Some(t.logits_batch(batch.inputs)?),
            _ => None,
        };

        let mut grad = Array2::zeros(logits.raw_dim());
        let (mut sum_x, mut sum_kd, mut sum_ckd) = (0.0, 0.0, 0.0);
        for (i, row) in logits.rows().into_iter().enumerate() {
            let label = batch.labels[i];
            let mut g = grad.row_mut(i);
            let (l, gx) = soft_ce(row, &Target::Hard(label), 1.0)?;
            sum_x += l;
            g.scaled_add(w_x, &gx);
            if let Some(t) = &teacher_logits {
                let q = tempered(t.row(i).as_slice().expect("row-major logits"), tau);
                let (l, gk) = soft_ce(row, &Target::Soft(q), tau)?;
                sum_kd += scale * l;
                g.scaled_add(w_kd * scale, &gk);
            }
            if spec.mode.needs_relations() {
                let rel = spec.relations.as_ref().expect("validated");
                let (l, gc) = soft_ce(row, &Target::Soft(rel.row(label)?), tau)?;
                sum_ckd += scale * l;
                g.scaled_add(w_ckd * scale, &gc);
            }
        }
        grad /= n as f64;
        let nf = n as f64;
        let (mx, mkd, mckd) = (sum_x / nf, sum_kd / nf, sum_ckd / nf);
        let mut terms = vec![("xent", mx)];
        if teacher_logits.is_some() {
            terms.push(("kd", mkd));
        }
        if spec.mode.needs_relations() {
            terms.push(("ckd", mckd));
        }
        Ok(BatchLoss { loss: w_x * mx + w_kd * mkd + w_ckd * mckd, grad_logits: grad, terms })
    }
}

fn soft_ce(row: ArrayView1<f64>, target: &Target, tau: f64) -> Result<(f64, ndarray::Array1<f64>)> {
    crate::nn::soft_cross_entropy_with_grad(row, target, tau)
}
