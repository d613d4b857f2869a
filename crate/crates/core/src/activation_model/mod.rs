//! Generative model of normalized penultimate activations.
//!
//! Class `i` is modeled as `vMF(w̄_i, κ_i)` where `w̄_i` is the normalized
//! prototype column of the final layer. With a uniform class prior the
//! induced posterior `q(i|ā)` is a softmax over `log C(κ_i) + κ_i w̄_iᵀā`;
//! when every `κ_i` is equal the normalizers cancel and it coincides with
//! the classifier's own softmax over `κ w̄_iᵀā`.

mod prior;
mod relations;

use ndarray::{Array2, ArrayView2};

use crate::data::Dataset;
use crate::directional::{norm, normalize, UnitVector, VmfDistribution};
use crate::error::{Error, Result};
use crate::nn::{log_softmax, softmax, Network};

pub use prior::{export_prior, import_prior, PRIOR_FORMAT_VERSION};
pub use relations::{
    metadata_path,
    class_relations, class_relations_from_weights, load_relations_csv, save_relations_csv, ClassRelationMatrix, RelationMetadata,
    DEFAULT_SAMPLES_PER_CLASS,
};

/// Per-class vMF components derived from a final weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassActivationModel {
    class_directions: Vec<UnitVector>,
    kappa: f64,
    per_class_kappa: Option<Vec<f64>>,
    source_norms: Vec<f64>,
}

impl ClassActivationModel {
    pub(crate) fn from_raw(
        class_directions: Vec<UnitVector>,
        kappa: f64,
        per_class_kappa: Option<Vec<f64>>,
        source_norms: Vec<f64>,
    ) -> Result<Self> {
        if class_directions.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {}", class_directions.len())));
        }
        let d = class_directions[0].dim();
        if let Some(bad) = class_directions.iter().find(|u| u.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, actual: bad.dim() });
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidConcentration(kappa));
        }
        let c = class_directions.len();
        if source_norms.len() != c {
            return Err(Error::DimensionMismatch { expected: c, actual: source_norms.len() });
        }
        if let Some(k) = &per_class_kappa {
            if k.len() != c {
                return Err(Error::DimensionMismatch { expected: c, actual: k.len() });
            }
            if let Some(&bad) = k.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidConcentration(bad));
            }
        }
        Ok(ClassActivationModel { class_directions, kappa, per_class_kappa, source_norms })
    }

    pub fn class_count(&self) -> usize {
        self.class_directions.len()
    }

    pub fn dim(&self) -> usize {
        self.class_directions[0].dim()
    }

    pub fn class_directions(&self) -> &[UnitVector] {
        &self.class_directions
    }

    /// Shared concentration hyperparameter.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn per_class_kappa(&self) -> Option<&[f64]> {
        self.per_class_kappa.as_deref()
    }

    /// Raw prototype norms `‖w_i‖`.
    pub fn source_norms(&self) -> &[f64] {
        &self.source_norms
    }

    /// Effective concentration of every component.
    pub fn concentrations(&self) -> Vec<f64> {
        match &self.per_class_kappa {
            Some(k) => k.clone(),
            None => vec![self.kappa; self.class_count()],
        }
    }

    /// `q(ā | i)`.
    pub fn component(&self, class: usize) -> Result<VmfDistribution> {
        let dir = self.class_directions.get(class).ok_or(Error::InvalidClass { index: class, classes: self.class_count() })?;
        VmfDistribution::new(dir.clone(), self.concentrations()[class])
    }

    /// Copy of the model with a different shared concentration (per-class
    /// scaling, if present, is rescaled proportionally).
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        let per = self.per_class_kappa.as_ref().map(|k| k.iter().map(|v| v * kappa / self.kappa).collect());
        Self::from_raw(self.class_directions.clone(), kappa, per, self.source_norms.clone())
    }

    /// `q(i | ā)`, evaluated in log space.
    pub fn posterior(&self, a_bar: &UnitVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.log_joint(a_bar)?))
    }

    /// `log vMF(ā; w̄_i, κ_i)` for every class (the uniform prior is a constant).
    fn log_joint(&self, a_bar: &UnitVector) -> Result<Vec<f64>> {
        if a_bar.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: a_bar.dim() });
        }
        let kappas = self.concentrations();
        self.class_directions
            .iter()
            .zip(&kappas)
            .map(|(w, &k)| Ok(crate::directional::log_norm_const(self.dim(), k)? + k * w.dot(a_bar)?))
            .collect()
    }
}

/// Derive `q(ā|i) = vMF(w̄_i, κ_i)` from the columns of `W` (`d × c`).
///
/// With `per_class_scaling`, `κ_i = κ·‖w_i‖ / mean_j ‖w_j‖`; otherwise `κ_i = κ`.
pub fn derive_model(final_weights: ArrayView2<f64>, kappa: f64, per_class_scaling: bool) -> Result<ClassActivationModel> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidConcentration(kappa));
    }
    let mut directions = Vec::with_capacity(final_weights.ncols());
    let mut norms = Vec::with_capacity(final_weights.ncols());
    for (i, col) in final_weights.columns().into_iter().enumerate() {
        let v = col.to_vec();
        let n = norm(&v);
        let dir = normalize(&v).map_err(|e| match e {
            Error::ZeroVector => Error::ZeroPrototype(i),
            other => other,
        })?;
        directions.push(dir);
        norms.push(n);
    }
    let per_class = per_class_scaling.then(|| {
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        norms.iter().map(|n| kappa * n / mean).collect()
    });
    ClassActivationModel::from_raw(directions, kappa, per_class, norms)
}

/// [`derive_model`] on a network's final layer (the bias, if any, is ignored).
pub fn derive_from_network(net: &Network, kappa: f64, per_class_scaling: bool) -> Result<ClassActivationModel> {
    derive_model(net.final_weights().view(), kappa, per_class_scaling)
}

/// Relation-matrix temperature that treats sampled unit directions as
/// activations of typical norm `κ / mean‖w‖`, i.e. `τ · mean‖w‖ / κ`.
///
/// Softmax over `Wᵀā / folded_temperature(m, τ)` equals softmax over
/// `Wᵀ(‖a‖ā) / τ` with `‖a‖ = κ / mean‖w‖`.
pub fn folded_temperature(model: &ClassActivationModel, temperature: f64) -> f64 {
    let norms = model.source_norms();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    temperature * mean / model.kappa()
}

/// Free-function form of [`ClassActivationModel::posterior`].
pub fn posterior_from_model(model: &ClassActivationModel, a_bar: &UnitVector) -> Result<Vec<f64>> {
    model.posterior(a_bar)
}

/// Which concentrations the generative side of [`gen_disc_gap`] uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapConcentration {
    /// The model's own `κ_i`.
    Model,
    /// `κ_i = ‖w_i‖·‖a‖` for each sample.
    PerSampleNorms,
}

/// Summary statistics of a positive quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dispersion {
    pub mean: f64,
    pub std: f64,
}

impl Dispersion {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Dispersion::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Dispersion { mean, std: var.sqrt() }
    }

    /// Coefficient of variation `std / mean`.
    pub fn cv(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.std / self.mean
        }
    }
}

/// How far the classifier's predictive distribution is from the posterior
/// of the generative model, plus the quantities whose spread breaks the
/// identity between them.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// Mean over the dataset of `KL(softmax(Wᵀa) ‖ q(·|ā))`.
    pub mean_kl: f64,
    /// `‖a‖` statistics per labeled class.
    pub activation_norms: Vec<Dispersion>,
    /// `‖a‖` over the whole dataset.
    pub activation_norm_overall: Dispersion,
    /// Spread of `‖w_i‖` across classes.
    pub prototype_norms: Dispersion,
}

/// Compare `softmax(Wᵀa)` with the generative posterior over a dataset.
pub fn gen_disc_gap(teacher: &Network, model: &ClassActivationModel, ds: &Dataset, mode: GapConcentration) -> Result<GapReport> {
    if teacher.penultimate_dim() != model.dim() || teacher.class_count() != model.class_count() {
        return Err(Error::DimensionMismatch { expected: model.dim(), actual: teacher.penultimate_dim() });
    }
    let c = model.class_count();
    let d = model.dim();
    let w_norms = teacher.prototype_norms();
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); ds.class_count.max(c)];
    let mut all_norms = Vec::with_capacity(ds.len());
    let mut kl_sum = 0.0;
    let mut counted = 0usize;
    for start in (0..ds.len()).step_by(1024) {
        let end = (start + 1024).min(ds.len());
        let cache = teacher.forward_batch(ds.features.slice(ndarray::s![start..end, ..]))?;
        for (k, (a, z)) in cache.penultimate.rows().into_iter().zip(cache.logits.rows()).enumerate() {
            let a_vec = a.to_vec();
            let a_norm = norm(&a_vec);
            per_class[ds.labels[start + k]].push(a_norm);
            all_norms.push(a_norm);
            if a_norm == 0.0 {
                // ā undefined; both sides degenerate to prototype-free predictions.
                continue;
            }
            let a_bar = UnitVector::new_unchecked(a_vec.iter().map(|v| v / a_norm).collect());
            let log_q = match mode {
                GapConcentration::Model => log_softmax(&model.log_joint(&a_bar)?),
                GapConcentration::PerSampleNorms => {
                    let logits: Vec<f64> = model
                        .class_directions
                        .iter()
                        .zip(&w_norms)
                        .map(|(w, wn)| {
                            let k = wn * a_norm;
                            Ok(crate::directional::log_norm_const(d, k)? + k * w.dot(&a_bar)?)
                        })
                        .collect::<Result<_>>()?;
                    log_softmax(&logits)
                }
            };
            // Discriminative side: the network's own logits, bias excluded.
            let z_vec: Vec<f64> = match teacher.final_bias() {
                None => z.to_vec(),
                Some(b) => z.iter().zip(b).map(|(zi, bi)| zi - bi).collect(),
            };
            let log_p = log_softmax(&z_vec);
            kl_sum += log_p.iter().zip(&log_q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum::<f64>();
            counted += 1;
        }
    }
    Ok(GapReport {
        mean_kl: if counted == 0 { 0.0 } else { kl_sum / counted as f64 },
        activation_norms: per_class.iter().take(c).map(|v| Dispersion::of(v)).collect(),
        activation_norm_overall: Dispersion::of(&all_norms),
        prototype_norms: Dispersion::of(&w_norms),
    })
}

/// `mean ‖a‖ · mean ‖w_i‖` over a dataset: a data-driven reference value for κ.
pub fn kappa_inspection(net: &Network, ds: &Dataset) -> Result<f64> {
    let penult: Array2<f64> = net.penultimate_batch(ds.features.view())?;
    let mean_a = penult.rows().into_iter().map(|r| norm(&r.to_vec())).sum::<f64>() / ds.len() as f64;
    let norms = net.prototype_norms();
    Ok(mean_a * norms.iter().sum::<f64>() / norms.len() as f64)
}
