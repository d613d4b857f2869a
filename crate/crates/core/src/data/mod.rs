//! Datasets: MNIST IDX ingestion, synthetic sets, subsampling and exports.

mod idx;
mod synthetic;
mod viz;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SeededRng;

pub use idx::{load_idx, write_idx};
pub use synthetic::{make_synthetic, SyntheticKind, SyntheticSpec};
pub use viz::{class_alignment_gaps, viz_export, VizFiles, VIZ_DENSITY_ANGLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Labeled examples, one per row of `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
    /// Side length when every row is a square grayscale image.
    pub image_side: Option<usize>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize, split: Split) -> Result<Self> {
        let ds = Dataset { features, labels, class_count, split, image_side: None };
        ds.validate()?;
        Ok(ds)
    }

    /// Mark rows as `side × side` images; pixel values must lie in `[0, 1]`.
    pub fn with_image_side(mut self, side: usize) -> Result<Self> {
        if side * side != self.feature_dim() {
            return Err(Error::InvalidArgument(format!("{} features are not a {side}x{side} image", self.feature_dim())));
        }
        if self.features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("image pixels must lie in [0, 1]".into()));
        }
        self.image_side = Some(side);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one example".into()));
        }
        if self.labels.len() != self.features.nrows() {
            return Err(Error::CountMismatch { images: self.features.nrows(), labels: self.labels.len() });
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_count) {
            return Err(Error::InvalidClass { index: bad, classes: self.class_count });
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            split: self.split,
            image_side: self.image_side,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Per-class relative deviation from the balanced count `n / c`.
    pub fn balance_report(&self) -> BalanceReport {
        let counts = self.class_counts();
        let expected = self.len() as f64 / self.class_count as f64;
        let relative_deviation = counts.iter().map(|&c| (c as f64 - expected) / expected).collect();
        BalanceReport { counts, expected, relative_deviation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub counts: Vec<usize>,
    pub expected: f64,
    pub relative_deviation: Vec<f64>,
}

impl BalanceReport {
    pub fn max_abs_deviation(&self) -> f64 {
        self.relative_deviation.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Draw `n` examples without replacement.
///
/// With `stratified`, each class receives `⌊n·n_c/N⌋` items plus at most one
/// more (largest remainders first), so proportions hold within ±1 item.
pub fn subsample(ds: &Dataset, n: usize, seed: u64, stratified: bool) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::InvalidArgument(format!("cannot draw {n} examples from {}", ds.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("subsample size must be at least 1".into()));
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
        for (i, &l) in ds.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let total = ds.len() as f64;
        let exact: Vec<f64> = by_class.iter().map(|v| n as f64 * v.len() as f64 / total).collect();
        let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = n - quota.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..ds.class_count).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        for c in order {
            if remaining == 0 {
                break;
            }
            if quota[c] < by_class[c].len() {
                quota[c] += 1;
                remaining -= 1;
            }
        }
        let mut out = Vec::with_capacity(n);
        for (members, q) in by_class.iter_mut().zip(&quota) {
            members.shuffle(&mut rng);
            out.extend_from_slice(&members[..*q]);
        }
        out
    } else {
        let mut all: Vec<usize> = (0..ds.len()).collect();
        all.shuffle(&mut rng);
        all.truncate(n);
        all
    };
    chosen.shuffle(&mut rng);
    Ok(ds.select(&chosen))
}
