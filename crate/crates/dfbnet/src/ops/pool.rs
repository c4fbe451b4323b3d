//! Global pooling over feature volumes, and cross-channel block pooling of
//! filter-bank max responses.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel pooled values plus, for max pooling, the flat argmax offset
/// inside each channel's volume. Ties break toward the lowest flat index.
#[derive(Debug, Clone)]
pub struct PoolResult<T> {
    pub values: Tensor<T>,
    pub argmax: Vec<usize>,
}

fn channel_volume(shape: &[usize]) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape(
            "global pool",
            format!("need a channel axis plus a volume, got {shape:?}"),
        ));
    }
    let c = shape[0];
    let volume: usize = shape[1..].iter().product();
    Ok((c, volume))
}

pub fn global_avg_pool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, volume) = channel_volume(x.shape())?;
    let inv = T::from_f64(1.0 / volume as f64);
    let data = x
        .data()
        .chunks_exact(volume)
        .map(|chunk| chunk.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    Tensor::new(vec![c], data)
}

pub fn global_avg_pool_backward<T: Scalar>(x_shape: &[usize], gy: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, volume) = channel_volume(x_shape)?;
    debug_assert_eq!(gy.len(), c);
    let inv = T::from_f64(1.0 / volume as f64);
    let mut dx = vec![T::zero(); c * volume];
    for (ch, chunk) in dx.chunks_exact_mut(volume).enumerate() {
        let g = gy.data()[ch] * inv;
        for v in chunk.iter_mut() {
            *v = g;
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}

pub fn global_max_pool_forward<T: Scalar>(x: &Tensor<T>) -> Result<PoolResult<T>> {
    let (c, volume) = channel_volume(x.shape())?;
    let mut values = Vec::with_capacity(c);
    let mut argmax = Vec::with_capacity(c);
    for chunk in x.data().chunks_exact(volume) {
        let mut best = chunk[0];
        let mut best_i = 0usize;
        for (i, &v) in chunk.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                best_i = i;
            }
        }
        values.push(best);
        argmax.push(best_i);
    }
    Ok(PoolResult {
        values: Tensor::new(vec![c], values)?,
        argmax,
    })
}

/// Routes each channel's upstream gradient entirely to its recorded argmax.
pub fn global_max_pool_backward<T: Scalar>(
    x_shape: &[usize],
    argmax: &[usize],
    gy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (c, volume) = channel_volume(x_shape)?;
    debug_assert_eq!(gy.len(), c);
    debug_assert_eq!(argmax.len(), c);
    let mut dx = vec![T::zero(); c * volume];
    for ch in 0..c {
        dx[ch * volume + argmax[ch]] = gy.data()[ch];
    }
    Tensor::new(x_shape.to_vec(), dx)
}

/// Averages max responses in contiguous blocks of `n` per class:
/// `out[c] = mean(maxvec[c*n .. (c+1)*n])`.
pub fn cross_channel_pool_forward<T: Scalar>(
    maxvec: &Tensor<T>,
    n: usize,
    classes: usize,
) -> Result<Tensor<T>> {
    if maxvec.shape() != [n * classes] {
        return Err(Error::shape(
            "cross_channel_pool",
            format!(
                "expected [{}] (n={n} x classes={classes}), got {:?}",
                n * classes,
                maxvec.shape()
            ),
        ));
    }
    let inv = T::from_f64(1.0 / n as f64);
    let data = maxvec
        .data()
        .chunks_exact(n)
        .map(|block| block.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    Tensor::new(vec![classes], data)
}

pub fn cross_channel_pool_backward<T: Scalar>(
    n: usize,
    classes: usize,
    gy: &Tensor<T>,
) -> Result<Tensor<T>> {
    debug_assert_eq!(gy.len(), classes);
    let inv = T::from_f64(1.0 / n as f64);
    let mut dx = Vec::with_capacity(n * classes);
    for c in 0..classes {
        let g = gy.data()[c] * inv;
        dx.extend(std::iter::repeat(g).take(n));
    }
    Tensor::new(vec![n * classes], dx)
}
