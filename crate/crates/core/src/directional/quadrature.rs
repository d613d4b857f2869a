use std::f64::consts::PI;

use super::UnitVector;
use crate::error::{Error, Result};

pub const DEFAULT_CIRCLE_NODES: usize = 4096;
pub const DEFAULT_POLAR_NODES: usize = 256;
pub const DEFAULT_AZIMUTH_NODES: usize = 512;

/// Quadrature rule on `S^1` or `S^2`. Weights sum to the surface area.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    nodes: Vec<UnitVector>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    /// Uniform angular grid on the circle (periodic trapezoid rule).
    pub fn circle(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("circle quadrature needs at least one node".into()));
        }
        let h = 2.0 * PI / n as f64;
        let nodes = (0..n).map(|k| UnitVector::from_angle(k as f64 * h)).collect();
        Ok(SphereQuadrature { nodes, weights: vec![h; n] })
    }

    /// Product grid on `S^2`: Gauss–Legendre in `cos θ`, uniform in `φ`.
    pub fn sphere(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar == 0 || n_azimuth == 0 {
            return Err(Error::InvalidArgument("sphere quadrature needs nodes in both directions".into()));
        }
        let (zs, ws) = gauss_legendre(n_polar);
        let h = 2.0 * PI / n_azimuth as f64;
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (z, w) in zs.iter().zip(&ws) {
            let r = (1.0 - z * z).sqrt();
            for k in 0..n_azimuth {
                let phi = k as f64 * h;
                nodes.push(UnitVector::new_unchecked(vec![r * phi.cos(), r * phi.sin(), *z]));
                weights.push(w * h);
            }
        }
        Ok(SphereQuadrature { nodes, weights })
    }

    /// Default rule for `d ∈ {2, 3}`.
    pub fn for_dimension(d: usize) -> Result<Self> {
        match d {
            2 => Self::circle(DEFAULT_CIRCLE_NODES),
            3 => Self::sphere(DEFAULT_POLAR_NODES, DEFAULT_AZIMUTH_NODES),
            _ => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn nodes(&self) -> &[UnitVector] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn integrate<F: FnMut(&UnitVector) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directional::{log_sphere_area, normalize, VmfDistribution};

    #[test]
    fn weights_sum_to_area() {
        let c = SphereQuadrature::for_dimension(2).unwrap();
        let s: f64 = c.weights().iter().sum();
        assert!((s / log_sphere_area(2).exp() - 1.0).abs() < 1e-12);
        let q = SphereQuadrature::for_dimension(3).unwrap();
        let s: f64 = q.weights().iter().sum();
        assert!((s / (4.0 * PI) - 1.0).abs() < 1e-12);
        assert!(SphereQuadrature::for_dimension(4).is_err());
    }

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        let (x, w) = gauss_legendre(7);
        for p in 0..14 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((got - exact).abs() < 1e-14, "p={p}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for d in [2usize, 3] {
            let q = SphereQuadrature::for_dimension(d).unwrap();
            let mu = if d == 2 { normalize(&[0.3, -1.0]).unwrap() } else { normalize(&[0.3, -1.0, 0.4]).unwrap() };
            for kappa in [0.0, 0.5, 2.0, 20.0, 80.0] {
                let dist = VmfDistribution::new(mu.clone(), kappa).unwrap();
                let total = q.integrate(|x| dist.log_density(x).unwrap().exp());
                assert!((total - 1.0).abs() < 1e-6, "d={d} kappa={kappa} total={total}");
            }
        }
    }

    #[test]
    fn density_peaks_at_nearest_node() {
        let q = SphereQuadrature::sphere(32, 64).unwrap();
        let mu = normalize(&[0.5, 0.2, -0.8]).unwrap();
        let dist = VmfDistribution::new(mu.clone(), 3.0).unwrap();
        let best = q
            .nodes()
            .iter()
            .max_by(|a, b| dist.log_density(a).unwrap().total_cmp(&dist.log_density(b).unwrap()))
            .unwrap();
        let closest = q
            .nodes()
            .iter()
            .max_by(|a, b| a.dot(&mu).unwrap().total_cmp(&b.dot(&mu).unwrap()))
            .unwrap();
        assert_eq!(best, closest);
    }
}
