//! Exact rejection samplers for `vMF(μ, κ)`.
//!
//! `d = 2` draws the angle with the Best–Fisher wrapped-Cauchy envelope.
//! `d ≥ 3` uses Wood's scheme: the cosine `w = μᵀx` comes from a
//! beta-envelope rejection step, the tangent part is uniform on `S^{d-2}`,
//! and a Householder reflection carries `e₁` onto `μ`.

use std::f64::consts::PI;

use rand::{Rng, RngExt, SeedableRng};
use rand_distr::{Beta, Distribution, StandardNormal};

use super::{norm, UnitVector, VmfDistribution};
use crate::SeededRng;

/// Draw `n` i.i.d. samples using the caller's generator.
pub fn sample<R: Rng + ?Sized>(dist: &VmfDistribution, n: usize, rng: &mut R) -> Vec<UnitVector> {
    let d = dist.dim();
    let kappa = dist.kappa();
    let mu = dist.mean_direction().as_slice();
    if d == 2 {
        let base = mu[1].atan2(mu[0]);
        (0..n).map(|_| UnitVector::from_angle(base + von_mises_angle(kappa, rng))).collect()
    } else {
        let wood = WoodSampler::new(d, kappa);
        (0..n)
            .map(|_| {
                let w = wood.cosine(rng);
                let tangent = uniform_sphere(d - 1, rng);
                let r = (1.0 - w * w).max(0.0).sqrt();
                let mut x = Vec::with_capacity(d);
                x.push(w);
                x.extend(tangent.iter().map(|t| r * t));
                householder_from_e1(mu, &mut x);
                let n = norm(&x);
                x.iter_mut().for_each(|v| *v /= n);
                UnitVector::new_unchecked(x)
            })
            .collect()
    }
}

/// [`sample`] with a fresh generator seeded from `seed`.
pub fn sample_seeded(dist: &VmfDistribution, n: usize, seed: u64) -> Vec<UnitVector> {
    let mut rng = SeededRng::seed_from_u64(seed);
    sample(dist, n, &mut rng)
}

fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Uniform on `(0, 1]`, safe to take a log of.
fn uniform_open0<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Angle offset from the mean for the von Mises distribution (Best & Fisher, 1979).
fn von_mises_angle<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa == 0.0 {
        return PI * (2.0 * uniform01(rng) - 1.0);
    }
    let root = (1.0 + 4.0 * kappa * kappa).sqrt();
    let tau = 1.0 + root;
    // ρ = (τ − √(2τ)) / 2κ, rearranged to avoid cancellation for small κ.
    let rho = tau * 2.0 * kappa / ((tau + (2.0 * tau).sqrt()) * (root + 1.0));
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let z = (PI * uniform01(rng)).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        let u2 = uniform_open0(rng);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = f.clamp(-1.0, 1.0).acos();
            return if uniform01(rng) < 0.5 { -theta } else { theta };
        }
    }
}

struct WoodSampler {
    kappa: f64,
    dm1: f64,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
}

impl WoodSampler {
    fn new(d: usize, kappa: f64) -> Self {
        let dm1 = (d - 1) as f64;
        // b = (−2κ + √(4κ² + (d−1)²)) / (d−1), in cancellation-free form.
        let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
        let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("beta shape parameters are positive");
        WoodSampler { kappa, dm1, b, x0, c, beta }
    }

    fn cosine<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u = uniform_open0(rng);
            if self.kappa * w + self.dm1 * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w;
            }
        }
    }
}

fn uniform_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Apply the reflection that maps `e₁` to `mu` to `x` in place.
fn householder_from_e1(mu: &[f64], x: &mut [f64]) {
    // u = e₁ − μ,  uᵀu = 2(1 − μ₁)
    let uu = 2.0 * (1.0 - mu[0]);
    if uu < 1e-300 {
        return;
    }
    let ux = x[0] - super::dot(mu, x);
    let scale = 2.0 * ux / uu;
    x[0] -= scale;
    for (xi, mi) in x.iter_mut().zip(mu) {
        *xi += scale * mi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directional::{mean_resultant_length, normalize};

    fn resultant(samples: &[UnitVector]) -> Vec<f64> {
        let d = samples[0].dim();
        let mut m = vec![0.0; d];
        for s in samples {
            for (a, b) in m.iter_mut().zip(s.as_slice()) {
                *a += b;
            }
        }
        m.iter().map(|x| x / samples.len() as f64).collect()
    }

    #[test]
    fn householder_maps_e1_to_mu() {
        let mu = normalize(&[0.2, -0.5, 0.7, 0.1]).unwrap();
        let mut x = vec![1.0, 0.0, 0.0, 0.0];
        householder_from_e1(mu.as_slice(), &mut x);
        for (a, b) in x.iter().zip(mu.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
        let anti = [-1.0, 0.0, 0.0];
        let mut y = vec![1.0, 0.0, 0.0];
        householder_from_e1(&anti, &mut y);
        assert!((y[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn samples_are_unit_and_deterministic() {
        for d in [2, 3, 5, 50] {
            let dist = VmfDistribution::new(UnitVector::basis(d, 1).unwrap(), 7.5).unwrap();
            let a = sample_seeded(&dist, 500, 11);
            let b = sample_seeded(&dist, 500, 11);
            assert_eq!(a, b);
            for s in &a {
                assert!((norm(s.as_slice()) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_sphere_resultant_vanishes() {
        let dist = VmfDistribution::new(UnitVector::basis(3, 0).unwrap(), 0.0).unwrap();
        let s = sample_seeded(&dist, 100_000, 3);
        assert!(norm(&resultant(&s)) < 0.02);
    }

    #[test]
    fn small_kappa_circle_is_stable() {
        let dist = VmfDistribution::new(UnitVector::basis(2, 0).unwrap(), 1e-9).unwrap();
        let s = sample_seeded(&dist, 50_000, 5);
        assert!(norm(&resultant(&s)) < 0.02);
    }

    #[test]
    fn circle_resultant_matches_bessel_ratio() {
        let mu = UnitVector::basis(2, 0).unwrap();
        let dist = VmfDistribution::new(mu, 80.0).unwrap();
        let s = sample_seeded(&dist, 100_000, 1);
        let r = norm(&resultant(&s));
        assert!((r - mean_resultant_length(2, 80.0)).abs() < 0.01);
    }

    #[test]
    fn high_dim_resultant_matches_bessel_ratio() {
        let mu = normalize(&[1.0, 2.0, -1.0, 0.5, 0.0, 3.0, 1.0, -2.0, 0.3, 0.7]).unwrap();
        let dist = VmfDistribution::new(mu.clone(), 20.0).unwrap();
        let s = sample_seeded(&dist, 100_000, 2);
        let m = resultant(&s);
        let r = norm(&m);
        assert!((r - mean_resultant_length(10, 20.0)).abs() < 0.01);
        assert!(crate::directional::dot(&m, mu.as_slice()) / r > 0.999);
    }
}
