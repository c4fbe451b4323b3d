//! Fully connected product `y = x W + b`.
//!
//! `x` may be `[B, F]` or a bare `[F]` vector (treated as one row, returning
//! a vector).

use crate::error::{Error, Result};
use crate::ops::dot;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn rows_features(x: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match x.shape() {
        [f] => Ok((1, *f)),
        [b, f] => Ok((*b, *f)),
        other => Err(Error::shape(
            "dense",
            format!("expected rank 1 or 2 input, got {other:?}"),
        )),
    }
}

pub fn forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, features) = rows_features(x)?;
    let [wf, out_units] = w.shape() else {
        return Err(Error::shape(
            "dense",
            format!("weight must be rank 2, got {:?}", w.shape()),
        ));
    };
    let (wf, out_units) = (*wf, *out_units);
    if wf != features {
        return Err(Error::shape(
            "dense",
            format!("input features {features} vs weight rows {wf}"),
        ));
    }
    if b.shape() != [out_units] {
        return Err(Error::shape(
            "dense",
            format!("bias shape {:?} vs output units {out_units}", b.shape()),
        ));
    }
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = Vec::with_capacity(rows * out_units);
    for r in 0..rows {
        let xrow = &xd[r * features..(r + 1) * features];
        for o in 0..out_units {
            let mut acc = bd[o];
            for (k, &xv) in xrow.iter().enumerate() {
                acc = acc + xv * wd[k * out_units + o];
            }
            out.push(acc);
        }
    }
    let shape = if x.rank() == 1 {
        vec![out_units]
    } else {
        vec![rows, out_units]
    };
    Tensor::new(shape, out)
}

pub struct DenseGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, gy: &Tensor<T>) -> Result<DenseGrads<T>> {
    let (rows, features) = rows_features(x)?;
    let out_units = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let gd = gy.data();
    debug_assert_eq!(gd.len(), rows * out_units);

    let mut dx = vec![T::zero(); rows * features];
    let mut dw = vec![T::zero(); features * out_units];
    let mut db = vec![T::zero(); out_units];

    for r in 0..rows {
        let grow = &gd[r * out_units..(r + 1) * out_units];
        let xrow = &xd[r * features..(r + 1) * features];
        for (o, &g) in grow.iter().enumerate() {
            db[o] = db[o] + g;
        }
        for k in 0..features {
            let wrow = &wd[k * out_units..(k + 1) * out_units];
            dx[r * features + k] = dx[r * features + k] + dot(grow, wrow);
            let dwrow = &mut dw[k * out_units..(k + 1) * out_units];
            for (o, &g) in grow.iter().enumerate() {
                dwrow[o] = dwrow[o] + xrow[k] * g;
            }
        }
    }

    Ok(DenseGrads {
        dx: Tensor::new(x.shape().to_vec(), dx)?,
        dw: Tensor::new(w.shape().to_vec(), dw)?,
        db: Tensor::new(vec![out_units], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identity_weights() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(vec![2]).unwrap();
        let y = forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn bias_applies() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(vec![2], vec![5.0, 5.0]).unwrap();
        let y = forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[6.0, 6.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = Rng::new(40);
        let x: Tensor<f64> = rng.normal_tensor(&[3, 4], 0.0, 1.0).unwrap();
        let w: Tensor<f64> = rng.normal_tensor(&[4, 2], 0.0, 1.0).unwrap();
        let b: Tensor<f64> = rng.normal_tensor(&[2], 0.0, 1.0).unwrap();
        let y = forward(&x, &w, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut want = b.data()[j];
                for k in 0..4 {
                    want += x.get(&[i, k]) * w.get(&[k, j]);
                }
                assert!((y.get(&[i, j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity_with_zero_bias() {
        let mut rng = Rng::new(41);
        let x: Tensor<f64> = rng.normal_tensor(&[2, 5], 0.0, 1.0).unwrap();
        let y: Tensor<f64> = rng.normal_tensor(&[2, 5], 0.0, 1.0).unwrap();
        let w: Tensor<f64> = rng.normal_tensor(&[5, 3], 0.0, 1.0).unwrap();
        let b = Tensor::zeros(vec![3]).unwrap();
        let (alpha, beta) = (0.3, -1.7);
        let lhs = forward(&x.scale(alpha).add(&y.scale(beta)).unwrap(), &w, &b).unwrap();
        let rhs = forward(&x, &w, &b)
            .unwrap()
            .scale(alpha)
            .add(&forward(&y, &w, &b).unwrap().scale(beta))
            .unwrap();
        for (a, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - r).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_input_gives_vector_output() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::zeros(vec![2]).unwrap();
        let y = forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2]);
        assert_eq!(y.data(), &[4.0, 5.0]);
    }

    #[test]
    fn extent_mismatch_errors() {
        let x = Tensor::<f64>::zeros(vec![1, 3]).unwrap();
        let w = Tensor::<f64>::zeros(vec![4, 2]).unwrap();
        let b = Tensor::<f64>::zeros(vec![2]).unwrap();
        assert!(forward(&x, &w, &b).is_err());
    }
}
