//! Monte Carlo estimate of the teacher's average prediction per class,
//! `p_T(y|i) ≈ (1/N) Σ_j softmax(Wᵀā_j / τ)` with `ā_j ~ vMF(w̄_i, κ_i)`.
//!
//! Sampled directions go straight into the final layer; hidden layers and
//! any final bias are not involved.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::ClassActivationModel;
use crate::directional::sample;
use crate::error::{Error, Result};
use crate::nn::{softmax, Network};
use crate::SeededRng;

pub const DEFAULT_SAMPLES_PER_CLASS: usize = 4096;
const CHUNK: usize = 4096;
const KIND: &str = "relation matrix";

/// Row-stochastic `c × c` matrix; row `i` estimates `p_T(y | i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRelationMatrix {
    pub entries: Array2<f64>,
    pub sample_count: usize,
    pub kappa_used: f64,
    pub temperature_used: f64,
}

impl ClassRelationMatrix {
    pub fn class_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn row(&self, class: usize) -> Result<Vec<f64>> {
        if class >= self.class_count() {
            return Err(Error::InvalidClass { index: class, classes: self.class_count() });
        }
        Ok(self.entries.row(class).to_vec())
    }

    /// Argmax of every row (ties to the lowest index).
    pub fn row_argmax(&self) -> Vec<usize> {
        self.entries.rows().into_iter().map(crate::nn::row_argmax).collect()
    }

    /// Check that the matrix is square, nonnegative and row-stochastic within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (r, c) = self.entries.dim();
        if r != c || r < 2 {
            return Err(Error::InvalidArgument(format!("relation matrix must be square with c ≥ 2, got {r}x{c}")));
        }
        for (i, row) in self.entries.rows().into_iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative or NaN entry")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Identity relations (every class maps to itself with probability 1).
    pub fn identity(c: usize) -> Self {
        ClassRelationMatrix { entries: Array2::eye(c), sample_count: 0, kappa_used: f64::INFINITY, temperature_used: 1.0 }
    }
}

/// Estimate class relations from a teacher's final layer.
pub fn class_relations(
    teacher: &Network,
    model: &ClassActivationModel,
    n_samples: usize,
    temperature: f64,
    seed: u64,
) -> Result<ClassRelationMatrix> {
    class_relations_from_weights(teacher.final_weights().view(), model, n_samples, temperature, seed)
}

/// Class `i` draws from its own ChaCha stream `i` under `seed`, so rows are
/// independent of evaluation order.
pub fn class_relations_from_weights(
    final_weights: ArrayView2<f64>,
    model: &ClassActivationModel,
    n_samples: usize,
    temperature: f64,
    seed: u64,
) -> Result<ClassRelationMatrix> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let (d, c) = final_weights.dim();
    if d != model.dim() || c != model.class_count() {
        return Err(Error::DimensionMismatch { expected: model.dim() * model.class_count(), actual: d * c });
    }
    let mut entries = Array2::zeros((c, c));
    for class in 0..c {
        let dist = model.component(class)?;
        let mut rng = SeededRng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        let mut acc = vec![0.0; c];
        let mut remaining = n_samples;
        while remaining > 0 {
            let m = remaining.min(CHUNK);
            remaining -= m;
            let draws = sample(&dist, m, &mut rng);
            let mut batch = Array2::zeros((m, d));
            for (mut row, s) in batch.axis_iter_mut(Axis(0)).zip(&draws) {
                row.assign(&ndarray::ArrayView1::from(s.as_slice()));
            }
            let logits = batch.dot(&final_weights);
            for row in logits.rows() {
                let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
                for (a, p) in acc.iter_mut().zip(softmax(&scaled)) {
                    *a += p;
                }
            }
        }
        for (y, a) in acc.into_iter().enumerate() {
            entries[[class, y]] = a / n_samples as f64;
        }
    }
    Ok(ClassRelationMatrix { entries, sample_count: n_samples, kappa_used: model.kappa(), temperature_used: temperature })
}

/// Provenance stored next to a relation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetadata {
    pub format_version: u32,
    pub classes: usize,
    pub samples_per_class: usize,
    pub kappa: f64,
    pub temperature: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_checkpoint_sha256: Option<String>,
}

/// Sidecar path: `<csv>.meta.toml`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

/// Write the matrix as CSV (header of class ids, then one row per class)
/// plus a TOML sidecar with its provenance.
pub fn save_relations_csv(
    m: &ClassRelationMatrix,
    seed: u64,
    teacher_checkpoint_sha256: Option<String>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let c = m.class_count();
    let mut out = String::new();
    out.push_str(&(0..c).map(|i| i.to_string()).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in m.entries.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let meta = RelationMetadata {
        format_version: 1,
        classes: c,
        samples_per_class: m.sample_count,
        kappa: m.kappa_used,
        temperature: m.temperature_used,
        seed,
        teacher_checkpoint_sha256,
    };
    let meta_path = metadata_path(path);
    let text = toml::to_string(&meta).map_err(|e| Error::format(KIND, &meta_path, e.to_string()))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

/// Load a relation CSV and its sidecar.
pub fn load_relations_csv(path: impl AsRef<Path>) -> Result<(ClassRelationMatrix, RelationMetadata)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(KIND, path, "empty file"))?;
    let c = header.split(',').count();
    for (i, h) in header.split(',').enumerate() {
        if h.trim() != i.to_string() {
            return Err(Error::format(KIND, path, format!("header column {i} is `{h}`")));
        }
    }
    let mut data = Vec::with_capacity(c * c);
    for (r, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            data.push(tok.trim().parse::<f64>().map_err(|_| Error::format(KIND, path, format!("row {r}: bad number `{tok}`")))?);
        }
        if data.len() - before != c {
            return Err(Error::format(KIND, path, format!("row {r} has {} columns, expected {c}", data.len() - before)));
        }
    }
    if data.len() != c * c {
        return Err(Error::format(KIND, path, format!("expected {c} rows")));
    }
    let meta_path = metadata_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: RelationMetadata = toml::from_str(&meta_text).map_err(|e| Error::format(KIND, &meta_path, e.to_string()))?;
    if meta.classes != c {
        return Err(Error::format(KIND, &meta_path, format!("metadata says {} classes, CSV has {c}", meta.classes)));
    }
    let m = ClassRelationMatrix {
        entries: Array2::from_shape_vec((c, c), data).expect("shape checked"),
        sample_count: meta.samples_per_class,
        kappa_used: meta.kappa,
        temperature_used: meta.temperature,
    };
    m.validate(1e-6).map_err(|e| Error::format(KIND, path, e.to_string()))?;
    Ok((m, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation_model::derive_model;

    fn circle_weights(c: usize, radius: f64) -> Array2<f64> {
        Array2::from_shape_fn((2, c), |(r, i)| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / c as f64 + 0.1;
            radius * if r == 0 { t.cos() } else { t.sin() }
        })
    }

    #[test]
    fn rows_are_stochastic_and_diagonal_dominant() {
        let w = circle_weights(5, 3.0);
        let model = derive_model(w.view(), 80.0, false).unwrap();
        let m = class_relations_from_weights(w.view(), &model, 2000, 4.0, 1).unwrap();
        m.validate(1e-9).unwrap();
        assert_eq!(m.row_argmax(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn orthogonal_prototypes_near_zero_kappa_are_uniform() {
        let w = Array2::<f64>::eye(4) * 2.0;
        let model = derive_model(w.view(), 1e-9, false).unwrap();
        let m = class_relations_from_weights(w.view(), &model, 20_000, 1.0, 3).unwrap();
        for v in m.entries.iter() {
            assert!((v - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn seeded_and_bitwise_reproducible() {
        let w = circle_weights(3, 1.0);
        let model = derive_model(w.view(), 20.0, false).unwrap();
        let a = class_relations_from_weights(w.view(), &model, 777, 2.0, 9).unwrap();
        let b = class_relations_from_weights(w.view(), &model, 777, 2.0, 9).unwrap();
        assert!(a.entries.iter().zip(b.entries.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = class_relations_from_weights(w.view(), &model, 777, 2.0, 10).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn rejects_bad_arguments() {
        let w = circle_weights(3, 1.0);
        let model = derive_model(w.view(), 20.0, false).unwrap();
        assert!(matches!(class_relations_from_weights(w.view(), &model, 10, 0.0, 0), Err(Error::InvalidTemperature(_))));
        assert!(class_relations_from_weights(w.view(), &model, 0, 1.0, 0).is_err());
        let other = circle_weights(4, 1.0);
        assert!(class_relations_from_weights(other.view(), &model, 10, 1.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rel.csv");
        let w = circle_weights(4, 2.0);
        let model = derive_model(w.view(), 80.0, false).unwrap();
        let m = class_relations_from_weights(w.view(), &model, 500, 4.0, 5).unwrap();
        save_relations_csv(&m, 5, Some("abc".into()), &path).unwrap();
        let (back, meta) = load_relations_csv(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta.seed, 5);
        assert_eq!(meta.teacher_checkpoint_sha256.as_deref(), Some("abc"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("0,1,2,3\n"));
        fs::remove_file(metadata_path(&path)).unwrap();
        assert!(matches!(load_relations_csv(&path), Err(Error::Io { .. })));
    }
}
