use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

use super::Prediction;

/// Classification target: a class index or a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Hard(usize),
    Soft(Vec<f64>),
}

impl Target {
    fn validate(&self, classes: usize) -> Result<()> {
        match self {
            Target::Hard(i) if *i >= classes => Err(Error::InvalidClass { index: *i, classes }),
            Target::Hard(_) => Ok(()),
            Target::Soft(q) => {
                if q.len() != classes {
                    return Err(Error::DimensionMismatch { expected: classes, actual: q.len() });
                }
                let sum: f64 = q.iter().sum();
                if q.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!("soft target must be a probability vector (sum {sum})")));
                }
                Ok(())
            }
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `−Σ_y target_y log softmax(logits)_y`.
pub fn cross_entropy_loss(pred: &Prediction, target: &Target) -> Result<f64> {
    soft_cross_entropy(&pred.logits, target, 1.0)
}

/// Cross-entropy of `softmax(logits / temperature)` against `target`.
pub fn soft_cross_entropy(logits: &[f64], target: &Target, temperature: f64) -> Result<f64> {
    Ok(soft_cross_entropy_with_grad(ArrayView1::from(logits), target, temperature)?.0)
}

/// Loss and its gradient with respect to the (untempered) logits:
/// `∂/∂z = (softmax(z/τ) − q) / τ`.
pub(crate) fn soft_cross_entropy_with_grad(
    logits: ArrayView1<f64>,
    target: &Target,
    temperature: f64,
) -> Result<(f64, Array1<f64>)> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidTemperature(temperature));
    }
    target.validate(logits.len())?;
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let logp = log_softmax(&scaled);
    let mut grad: Array1<f64> = logp.iter().map(|l| l.exp() / temperature).collect();
    let loss = match target {
        Target::Hard(i) => {
            grad[*i] -= 1.0 / temperature;
            -logp[*i]
        }
        Target::Soft(q) => {
            for (g, qi) in grad.iter_mut().zip(q) {
                *g -= qi / temperature;
            }
            // 0·log 0 terms contribute nothing.
            -q.iter().zip(&logp).filter(|(qi, _)| **qi > 0.0).map(|(qi, l)| qi * l).sum::<f64>()
        }
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        let l = cross_entropy_loss(&Prediction::from_logits(vec![0.0, 0.0]), &Target::Hard(0)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let l = cross_entropy_loss(&Prediction::from_logits(vec![1.0, 0.0]), &Target::Hard(0)).unwrap();
        let e = std::f64::consts::E;
        assert!((l + (e / (e + 1.0)).ln()).abs() < 1e-15);
        assert!((l - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn invalid_targets() {
        let p = Prediction::from_logits(vec![0.0, 1.0]);
        assert!(matches!(cross_entropy_loss(&p, &Target::Hard(2)), Err(Error::InvalidClass { index: 2, classes: 2 })));
        assert!(cross_entropy_loss(&p, &Target::Soft(vec![0.5, 0.6])).is_err());
        assert!(cross_entropy_loss(&p, &Target::Soft(vec![1.5, -0.5])).is_err());
        assert!(soft_cross_entropy(&[0.0, 1.0], &Target::Hard(0), 0.0).is_err());
    }

    #[test]
    fn softmax_extreme_logits() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert_eq!(p[0], 1.0);
        assert!(p.iter().all(|v| v.is_finite()));
        let l = log_softmax(&[1000.0, 0.0]);
        assert!((l[1] + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn hard_equals_one_hot() {
        let z = [0.3, -1.2, 2.0, 0.1];
        let a = soft_cross_entropy(&z, &Target::Hard(2), 1.7).unwrap();
        let b = soft_cross_entropy(&z, &Target::Soft(vec![0.0, 0.0, 1.0, 0.0]), 1.7).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
