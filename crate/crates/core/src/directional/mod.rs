//! von Mises–Fisher distributions on the unit hypersphere `S^{d-1}`.
//!
//! The density is `C_d(κ) exp(κ μᵀx)` with
//! `log C_d(κ) = (d/2 − 1) log κ − (d/2) log 2π − log I_{d/2−1}(κ)`.
//! All normalizers are computed in log space; `κ = 0` is the uniform
//! distribution and is handled as its own branch.

pub mod bessel;
mod quadrature;
mod sample;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use quadrature::SphereQuadrature;
pub use sample::{sample, sample_seeded};

/// Tolerance on `‖v‖ − 1` accepted by [`UnitVector::from_unit`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A point on `S^{d-1}`, `d ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wrap components that are already unit norm (within [`UNIT_TOLERANCE`]).
    pub fn from_unit(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::DimensionTooSmall(components.len()));
        }
        let norm = norm(&components);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidArgument(format!("vector norm {norm} is not 1")));
        }
        Ok(UnitVector(components))
    }

    /// `e_axis` in `d` dimensions.
    pub fn basis(d: usize, axis: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if axis >= d {
            return Err(Error::DimensionMismatch { expected: d, actual: axis + 1 });
        }
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        Ok(UnitVector(v))
    }

    /// Point on the circle at angle `theta` (radians).
    pub fn from_angle(theta: f64) -> Self {
        UnitVector(vec![theta.cos(), theta.sin()])
    }

    pub(crate) fn new_unchecked(components: Vec<f64>) -> Self {
        UnitVector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    /// Angle on the circle, `atan2(y, x)`; only meaningful for `d = 2`.
    pub fn angle(&self) -> f64 {
        self.0[1].atan2(self.0[0])
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::from_unit(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Project `v` onto the unit sphere.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.len() < 2 {
        return Err(Error::DimensionTooSmall(v.len()));
    }
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    if !n.is_finite() {
        return Err(Error::NonFinite("normalize".into()));
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// von Mises–Fisher distribution `vMF(μ, κ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfDistribution {
    mu: UnitVector,
    kappa: f64,
    log_c: f64,
}

impl VmfDistribution {
    pub fn new(mu: UnitVector, kappa: f64) -> Result<Self> {
        let log_c = log_norm_const(mu.dim(), kappa)?;
        Ok(VmfDistribution { mu, kappa, log_c })
    }

    pub fn mean_direction(&self) -> &UnitVector {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    /// `log C_d(κ)`, cached at construction.
    pub fn log_norm_const(&self) -> f64 {
        self.log_c
    }

    /// `log C_d(κ) + κ μᵀx`.
    pub fn log_density(&self, x: &UnitVector) -> Result<f64> {
        Ok(self.log_c + self.kappa * self.mu.dot(x)?)
    }

    /// Expected resultant length `A_d(κ)`.
    pub fn mean_resultant_length(&self) -> f64 {
        mean_resultant_length(self.dim(), self.kappa)
    }
}

/// Free-function form of [`VmfDistribution::log_density`].
pub fn log_density(dist: &VmfDistribution, x: &UnitVector) -> Result<f64> {
    dist.log_density(x)
}

/// Surface area of `S^{d-1}` in log form: `log(2 π^{d/2} / Γ(d/2))`.
pub fn log_sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    (2.0f64).ln() + half * PI.ln() - libm::lgamma(half)
}

/// `log C_d(κ)`, the log normalizer of `vMF` on `S^{d-1}`.
pub fn log_norm_const(d: usize, kappa: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidConcentration(kappa));
    }
    if kappa == 0.0 {
        return Ok(-log_sphere_area(d));
    }
    let nu = d as f64 / 2.0 - 1.0;
    let log_i = bessel::log_bessel_i(nu, kappa);
    Ok(nu * kappa.ln() - (d as f64 / 2.0) * (2.0 * PI).ln() - log_i)
}

/// `A_d(κ) = I_{d/2}(κ) / I_{d/2−1}(κ)`, the mean resultant length of `vMF(·, κ)`.
pub fn mean_resultant_length(d: usize, kappa: f64) -> f64 {
    if kappa <= 0.0 {
        return 0.0;
    }
    bessel::bessel_ratio(d as f64 / 2.0 - 1.0, kappa)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    // Scale first so squares of large entries cannot overflow.
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
