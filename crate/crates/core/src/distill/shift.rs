//! Synthetic domain shifts for square grayscale images in `[0, 1]`.

use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::SeededRng;

pub const PHOTOMETRIC_PRESETS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    None,
    Photometric,
    Downsample,
}

impl ShiftKind {
    pub fn name(self) -> &'static str {
        match self {
            ShiftKind::None => "none",
            ShiftKind::Photometric => "photometric",
            ShiftKind::Downsample => "downsample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub kind: ShiftKind,
    /// Photometric amplitude: brightness offset in `±degree`, contrast in `1 ± degree`.
    pub degree: f64,
    /// Downsampling rate; the image is reduced to `⌊factor·side⌋` pixels a side.
    pub factor: f64,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig { kind: ShiftKind::None, degree: 0.0, factor: 1.0, seed: 0 }
    }
}

impl ShiftConfig {
    pub fn none() -> Self {
        ShiftConfig::default()
    }

    pub fn photometric(degree: f64, seed: u64) -> Self {
        ShiftConfig { kind: ShiftKind::Photometric, degree, seed, ..Default::default() }
    }

    pub fn downsample(factor: f64) -> Self {
        ShiftConfig { kind: ShiftKind::Downsample, factor, ..Default::default() }
    }

    /// The knob that matters for `kind`: degree, factor, or 0.
    pub fn param(&self) -> f64 {
        match self.kind {
            ShiftKind::None => 0.0,
            ShiftKind::Photometric => self.degree,
            ShiftKind::Downsample => self.factor,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self.kind {
            ShiftKind::None => true,
            ShiftKind::Photometric => self.degree == 0.0,
            ShiftKind::Downsample => self.factor == 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ShiftKind::Photometric if !(self.degree >= 0.0 && self.degree.is_finite()) => {
                Err(Error::InvalidArgument(format!("photometric degree must be nonnegative, got {}", self.degree)))
            }
            ShiftKind::Downsample if !(self.factor > 0.0 && self.factor <= 1.0) => {
                Err(Error::InvalidArgument(format!("downsample factor must lie in (0, 1], got {}", self.factor)))
            }
            _ => Ok(()),
        }
    }
}

/// Shifted copy of `ds`. Identity presets return an exact clone.
pub fn apply_shift(ds: &Dataset, cfg: &ShiftConfig) -> Result<Dataset> {
    cfg.validate()?;
    let side = ds
        .image_side
        .ok_or_else(|| Error::InvalidArgument("domain shifts need an image dataset (square grayscale rows)".into()))?;
    if cfg.is_identity() {
        return Ok(ds.clone());
    }
    let mut out = ds.clone();
    match cfg.kind {
        ShiftKind::None => {}
        ShiftKind::Photometric => {
            let d = cfg.degree;
            let mut rng = SeededRng::seed_from_u64(cfg.seed);
            for mut row in out.features.rows_mut() {
                let b: f64 = rng.random_range(-d..d);
                let s: f64 = rng.random_range(1.0 - d..1.0 + d);
                row.mapv_inplace(|x| (s * (x - 0.5) + 0.5 + b).clamp(0.0, 1.0));
            }
        }
        ShiftKind::Downsample => {
            let small = ((cfg.factor * side as f64).floor() as usize).max(1);
            let shrink: Vec<usize> = (0..small).map(|i| i * side / small).collect();
            let expand: Vec<usize> = (0..side).map(|i| shrink[i * small / side]).collect();
            for mut row in out.features.rows_mut() {
                let src = row.to_vec();
                for r in 0..side {
                    for c in 0..side {
                        row[r * side + c] = src[expand[r] * side + expand[c]];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use ndarray::Array2;

    fn images(n: usize, side: usize) -> Dataset {
        let f = Array2::from_shape_fn((n, side * side), |(i, j)| ((i * 31 + j * 17) % 256) as f64 / 255.0);
        Dataset::new(f, vec![0; n], 1, Split::Train).unwrap().with_image_side(side).unwrap()
    }

    #[test]
    fn identity_presets_are_exact() {
        let ds = images(5, 28);
        for cfg in [ShiftConfig::none(), ShiftConfig::photometric(0.0, 3), ShiftConfig::downsample(1.0)] {
            assert_eq!(apply_shift(&ds, &cfg).unwrap(), ds);
        }
    }

    #[test]
    fn photometric_stays_in_range_and_moves() {
        let ds = images(50, 28);
        let s = apply_shift(&ds, &ShiftConfig::photometric(0.8, 1)).unwrap();
        assert!(s.features.iter().all(|v| (0.0..=1.0).contains(v)));
        let mad = (&s.features - &ds.features).mapv(f64::abs).mean().unwrap();
        assert!(mad > 0.0);
        assert_eq!(s, apply_shift(&ds, &ShiftConfig::photometric(0.8, 1)).unwrap());
        assert_ne!(s, apply_shift(&ds, &ShiftConfig::photometric(0.8, 2)).unwrap());
    }

    #[test]
    fn half_downsample_gives_two_by_two_blocks() {
        let ds = images(2, 28);
        let s = apply_shift(&ds, &ShiftConfig::downsample(0.5)).unwrap();
        let row = s.features.row(1);
        let orig = ds.features.row(1);
        for r in 0..28 {
            for c in 0..28 {
                assert_eq!(row[r * 28 + c], orig[(r / 2 * 2) * 28 + c / 2 * 2]);
            }
        }
        let distinct: std::collections::BTreeSet<u64> = row.iter().map(|v| v.to_bits()).collect();
        assert!(distinct.len() <= 14 * 14);
    }

    #[test]
    fn quarter_downsample_is_seven_by_seven() {
        let ds = images(1, 28);
        let s = apply_shift(&ds, &ShiftConfig::downsample(0.25)).unwrap();
        let row = s.features.row(0);
        for r in 0..28 {
            for c in 0..28 {
                assert_eq!(row[r * 28 + c], row[(r / 4 * 4) * 28 + c / 4 * 4]);
            }
        }
    }

    #[test]
    fn rejects_non_images_and_bad_params() {
        let plain = Dataset::new(Array2::zeros((2, 5)), vec![0, 0], 1, Split::Train).unwrap();
        assert!(apply_shift(&plain, &ShiftConfig::photometric(0.2, 0)).is_err());
        let ds = images(1, 4);
        assert!(apply_shift(&ds, &ShiftConfig::downsample(0.0)).is_err());
        assert!(apply_shift(&ds, &ShiftConfig::downsample(1.5)).is_err());
        assert!(apply_shift(&ds, &ShiftConfig::photometric(-0.1, 0)).is_err());
    }
}
