//! Modified Bessel function of the first kind, evaluated in log space.
//!
//! Two regimes:
//!
//! * `x < max(12, ν)`: the power series
//!   `I_ν(x) = (x/2)^ν Σ_k (x²/4)^k / (k! Γ(k+ν+1))`. Every term is positive,
//!   so the sum is summed outward from its largest term with all magnitudes
//!   taken relative to that term. Nothing overflows for any `x`.
//! * otherwise: the uniform (Debye) asymptotic expansion written in terms of
//!   `s = √(ν² + x²)`, `t = ν/s`:
//!   `ln I_ν(x) ≈ s + ν ln(x/(ν+s)) − ½ ln(2πs) + ln Σ_k ũ_k(t) / s^k`,
//!   where `ũ_k(t) = u_k(t) / t^k` are the Debye polynomials with the leading
//!   power of `t` divided out. This form stays finite at `ν = 0`, where it
//!   reduces to the Hankel large-argument series.

use std::sync::OnceLock;

/// Number of Debye terms. With `s ≥ 12` the truncation error is below 1e-11.
const DEBYE_TERMS: usize = 20;

/// Series/asymptotic switchover: the series is used for `x < max(SERIES_CUTOFF, ν)`.
pub const SERIES_CUTOFF: f64 = 12.0;

/// `ln I_ν(x)` for `ν ≥ 0`, `x ≥ 0`. Returns `-∞` for `I_ν(0) = 0` (`ν > 0`).
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x >= 0.0);
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x < SERIES_CUTOFF.max(nu) {
        log_bessel_i_series(nu, x)
    } else {
        log_bessel_i_debye(nu, x)
    }
}

/// Bessel ratio `I_{ν+1}(x) / I_ν(x)`.
pub fn bessel_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (log_bessel_i(nu + 1.0, x) - log_bessel_i(nu, x)).exp()
}

pub(crate) fn log_bessel_i_series(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let ln_q = q.ln();
    // Index of the largest term: ratio q / (k (k+ν)) crosses 1.
    let k_star = (0.5 * ((nu * nu + x * x).sqrt() - nu)).floor().max(0.0);
    let ln_peak = k_star * ln_q - libm::lgamma(k_star + 1.0) - libm::lgamma(k_star + nu + 1.0);

    let mut sum = 1.0;
    // Forward from the peak.
    let mut term = 1.0;
    let mut k = k_star;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term < f64::EPSILON * 1e-2 * sum {
            break;
        }
    }
    // Backward from the peak.
    let mut term = 1.0;
    let mut k = k_star;
    while k > 0.0 {
        term *= k * (k + nu) / q;
        sum += term;
        if term < f64::EPSILON * 1e-2 * sum {
            break;
        }
        k -= 1.0;
    }
    nu * (0.5 * x).ln() + ln_peak + sum.ln()
}

pub(crate) fn log_bessel_i_debye(nu: f64, x: f64) -> f64 {
    let s = (nu * nu + x * x).sqrt();
    let t = nu / s;
    let coeffs = debye_coefficients();
    let mut series = 0.0;
    let mut inv_s_pow = 1.0;
    for poly in coeffs.iter() {
        series += inv_s_pow * eval_reduced(poly, t);
        inv_s_pow /= s;
    }
    // ν ln(x/(ν+s)) is 0·ln(1) at ν = 0.
    let log_ratio = if nu == 0.0 { 0.0 } else { nu * (x / (nu + s)).ln() };
    s + log_ratio - 0.5 * (2.0 * std::f64::consts::PI * s).ln() + series.ln()
}

/// Evaluate `u_k(t) / t^k` from the coefficients of `u_k` (index = power of t).
fn eval_reduced(poly: &[f64], t: f64) -> f64 {
    let k = poly.iter().position(|&c| c != 0.0).unwrap_or(0);
    poly[k..].iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Coefficients of the Debye polynomials `u_0 .. u_{K-1}`, built once from
/// `u_{k+1}(t) = ½ t² (1 − t²) u_k'(t) + ⅛ ∫₀ᵗ (1 − 5τ²) u_k(τ) dτ`.
fn debye_coefficients() -> &'static Vec<Vec<f64>> {
    static COEFFS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let mut all: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 0..DEBYE_TERMS - 1 {
            let u = &all[k];
            let mut next = vec![0.0; 3 * (k + 1) + 1];
            // ½ t²(1 − t²) u'(t)
            for (j, &c) in u.iter().enumerate().skip(1) {
                let d = c * j as f64;
                next[j + 1] += 0.5 * d;
                next[j + 3] -= 0.5 * d;
            }
            // ⅛ ∫ (1 − 5τ²) u(τ)
            for (j, &c) in u.iter().enumerate() {
                next[j + 1] += 0.125 * c / (j + 1) as f64;
                next[j + 3] -= 0.125 * 5.0 * c / (j + 3) as f64;
            }
            all.push(next);
        }
        all
    })
}
