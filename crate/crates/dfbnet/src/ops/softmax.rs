//! Softmax cross-entropy with max-subtraction for numerical stability.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct XentOut<T> {
    pub loss: T,
    /// Softmax probabilities, saved for the backward rule.
    pub softmax: Vec<T>,
}

pub fn forward<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<XentOut<T>> {
    if logits.rank() != 1 {
        return Err(Error::shape(
            "softmax_xent",
            format!("expected rank-1 logits, got {:?}", logits.shape()),
        ));
    }
    let c = logits.len();
    if label >= c {
        return Err(Error::invalid(
            "softmax_xent",
            format!("label {label} out of range for {c} classes"),
        ));
    }
    let d = logits.data();
    let m = d.iter().cloned().fold(d[0], T::max);
    let exps: Vec<T> = d.iter().map(|&v| (v - m).exp()).collect();
    let z = exps.iter().fold(T::zero(), |a, &v| a + v);
    let softmax: Vec<T> = exps.iter().map(|&e| e / z).collect();
    // -log softmax[label] = log(sum exp(x - m)) - (x_label - m)
    let loss = z.ln() - (d[label] - m);
    Ok(XentOut { loss, softmax })
}

pub fn backward<T: Scalar>(softmax: &[T], label: usize, gy: T) -> Tensor<T> {
    let data = softmax
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let target = if i == label { T::one() } else { T::zero() };
            gy * (p - target)
        })
        .collect();
    Tensor::new(vec![softmax.len()], data).expect("softmax length is nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::<f64>::zeros(vec![4]).unwrap();
        let out = forward(&logits, 2).unwrap();
        assert!((out.loss - 4.0f64.ln()).abs() < 1e-12);
        assert!((out.loss - 1.3862944).abs() < 1e-6);
    }

    #[test]
    fn saturated_correct_is_near_zero() {
        let logits = Tensor::new(vec![2], vec![20.0, -20.0]).unwrap();
        let out = forward(&logits, 0).unwrap();
        assert!(out.loss < 1e-8, "loss {}", out.loss);
    }

    #[test]
    fn label_out_of_range_errors() {
        let logits = Tensor::<f64>::zeros(vec![3]).unwrap();
        assert!(forward(&logits, 3).is_err());
    }

    // Direct-formula oracle with compensated (Kahan) summation.
    #[test]
    fn matches_compensated_direct_formula() {
        let rng = Rng::new(30);
        for trial in 0..50 {
            let mut r = rng.stream(trial);
            let c = 2 + r.below(9);
            let logits: Tensor<f64> = r.normal_tensor(&[c], 0.0, 5.0).unwrap();
            let label = r.below(c);
            let out = forward(&logits, label).unwrap();

            // oracle: loss = -log(exp(x_l) / sum exp(x_i)) without max subtraction,
            // summed with Kahan compensation
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for &v in logits.data() {
                let y = v.exp() - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            let want = -(logits.data()[label].exp() / sum).ln();
            assert!(
                (out.loss - want).abs() <= 1e-12 * want.abs().max(1.0),
                "trial {trial}: got {} want {want}",
                out.loss
            );
        }
    }

    #[test]
    fn gradient_sums_to_zero() {
        let mut rng = Rng::new(31);
        let logits: Tensor<f64> = rng.normal_tensor(&[7], 0.0, 3.0).unwrap();
        let out = forward(&logits, 4).unwrap();
        let grad = backward(&out.softmax, 4, 1.0);
        let total: f64 = grad.data().iter().sum();
        assert!(total.abs() < 1e-12);
    }
}
