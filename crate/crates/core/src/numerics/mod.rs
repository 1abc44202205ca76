//! Small deterministic numeric kernel: dense matrices, softmax, Adam, a
//! seeded generator and a central-difference gradient oracle.

mod adam;
mod gradcheck;
mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState, ParamSet};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use rng::SeededRng;
pub use tensor::Tensor2;

use crate::error::{Error, Result};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// `ln Σ exp(v_i)`, shifted by the maximum.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform() {
        let b = softmax(&[0.0; 4]).unwrap();
        assert_eq!(b, vec![0.25; 4]);
    }

    #[test]
    fn softmax_of_logs_recovers_ratios() {
        let b = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
        for (got, want) in b.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_large_inputs_do_not_overflow() {
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_empty_and_nan() {
        assert!(softmax(&[]).is_err());
        assert!(softmax(&[0.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_properties(v in prop::collection::vec(-10.0f64..10.0, 1..32), c in -100.0f64..100.0) {
            let b = softmax(&v).unwrap();
            let sum: f64 = b.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().all(|&x| x > 0.0 && x < 1.0 || v.len() == 1));
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let bs = softmax(&shifted).unwrap();
            for (x, y) in b.iter().zip(&bs) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let argmax = |xs: &[f64]| xs.iter().enumerate().fold(0, |best, (i, x)| if *x > xs[best] { i } else { best });
            prop_assert_eq!(argmax(&v), argmax(&b));
        }
    }
}
