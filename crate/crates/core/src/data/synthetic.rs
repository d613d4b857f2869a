use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Gaussian clusters. Means are `3·e_i` when `input_dim ≥ c`, otherwise
    /// evenly spaced on a radius-3 circle in the first two coordinates.
    Blobs,
    /// Points on an annulus; class `i` owns the `i`-th of `c` equal angular
    /// sectors (central 80% of it).
    Ring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub classes: usize,
    pub n_per_class: usize,
    pub input_dim: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

/// Exactly `n_per_class` examples per class, shuffled.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n_per_class == 0 || spec.classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes and 1 example per class".into()));
    }
    if !(spec.noise_scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_scale must be nonnegative, got {}", spec.noise_scale)));
    }
    if spec.input_dim < 2 {
        return Err(Error::DimensionTooSmall(spec.input_dim));
    }
    let mut rng = SeededRng::seed_from_u64(spec.seed);
    let (c, m) = (spec.classes, spec.input_dim);
    let n = c * spec.n_per_class;
    let mut features = Array2::zeros((n, m));
    let mut labels = Vec::with_capacity(n);
    let gauss = |rng: &mut SeededRng| -> f64 { StandardNormal.sample(rng) };
    for class in 0..c {
        for k in 0..spec.n_per_class {
            let row = class * spec.n_per_class + k;
            match spec.kind {
                SyntheticKind::Blobs => {
                    for j in 0..m {
                        features[[row, j]] = spec.noise_scale * gauss(&mut rng);
                    }
                    if m >= c {
                        features[[row, class]] += 3.0;
                    } else {
                        let theta = 2.0 * PI * class as f64 / c as f64;
                        features[[row, 0]] += 3.0 * theta.cos();
                        features[[row, 1]] += 3.0 * theta.sin();
                    }
                }
                SyntheticKind::Ring => {
                    let width = 2.0 * PI / c as f64;
                    let theta = width * (class as f64 + 0.5) + 0.8 * width * (rng.random::<f64>() - 0.5);
                    let r = (1.0 + 0.1 * spec.noise_scale * gauss(&mut rng)).abs();
                    features[[row, 0]] = r * theta.cos();
                    features[[row, 1]] = r * theta.sin();
                    for j in 2..m {
                        features[[row, j]] = spec.noise_scale * gauss(&mut rng);
                    }
                }
            }
            labels.push(class);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let ds = Dataset::new(features, labels, c, Split::Train)?;
    Ok(ds.select(&order))
}
