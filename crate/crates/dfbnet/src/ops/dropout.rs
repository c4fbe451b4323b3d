//! Inverted dropout: zero with probability `p` at train time and scale
//! survivors by `1/(1-p)`, identity at eval time, replayable from a supplied
//! mask for gradient checking.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub enum DropoutMode<'a> {
    Train { p: f64, rng: &'a mut Rng },
    Eval,
    FixedMask { p: f64, mask: &'a [bool] },
}

pub struct DropoutOut<T> {
    pub y: Tensor<T>,
    /// Survival mask and survivor scale; `None` means identity (eval).
    pub mask: Option<(Vec<bool>, T)>,
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(
            "dropout",
            format!("p must be in [0, 1), got {p}"),
        ));
    }
    Ok(())
}

fn apply<T: Scalar>(x: &Tensor<T>, mask: Vec<bool>, p: f64) -> Result<DropoutOut<T>> {
    let scale = T::from_f64(1.0 / (1.0 - p));
    let data = x
        .data()
        .iter()
        .zip(&mask)
        .map(|(&v, &keep)| if keep { v * scale } else { T::zero() })
        .collect();
    Ok(DropoutOut {
        y: Tensor::new(x.shape().to_vec(), data)?,
        mask: Some((mask, scale)),
    })
}

pub fn forward<T: Scalar>(x: &Tensor<T>, mode: DropoutMode<'_>) -> Result<DropoutOut<T>> {
    match mode {
        DropoutMode::Eval => Ok(DropoutOut {
            y: x.clone(),
            mask: None,
        }),
        DropoutMode::Train { p, rng } => {
            check_p(p)?;
            let mask: Vec<bool> = (0..x.len()).map(|_| rng.uniform() >= p).collect();
            apply(x, mask, p)
        }
        DropoutMode::FixedMask { p, mask } => {
            check_p(p)?;
            if mask.len() != x.len() {
                return Err(Error::shape(
                    "dropout",
                    format!("mask has {} entries, input has {}", mask.len(), x.len()),
                ));
            }
            apply(x, mask.to_vec(), p)
        }
    }
}

pub fn backward<T: Scalar>(
    x_shape: &[usize],
    mask: Option<&(Vec<bool>, T)>,
    gy: &Tensor<T>,
) -> Result<Tensor<T>> {
    match mask {
        None => Ok(gy.clone()),
        Some((mask, scale)) => {
            let data = gy
                .data()
                .iter()
                .zip(mask)
                .map(|(&g, &keep)| if keep { g * *scale } else { T::zero() })
                .collect();
            Tensor::new(x_shape.to_vec(), data)
        }
    }
}
