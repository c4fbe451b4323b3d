//! Dense row-major tensor value type.
//!
//! Shapes are immutable after creation; values are only mutated through the
//! optimizer's in-place update. No broadcasting beyond scalar-with-tensor,
//! all other shape alignment is explicit.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::invalid(
                "tensor.new",
                format!("zero extent in shape {shape:?}"),
            ));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::shape(
                "tensor.new",
                format!("shape {shape:?} implies {count} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::invalid(
                "tensor.filled",
                format!("zero extent in shape {shape:?}"),
            ));
        }
        let count = shape.iter().product();
        Ok(Tensor {
            shape,
            data: vec![value; count],
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    /// Rank-1 scalar tensor of shape `[1]`.
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access for the optimizer update path.
    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn item(&self) -> T {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Flat offset of `coords` under row-major layout.
    pub fn flat_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.shape.len());
        let mut idx = 0;
        for (c, e) in coords.iter().zip(&self.shape) {
            debug_assert!(c < e);
            idx = idx * e + c;
        }
        idx
    }

    /// Inverse of `flat_index`.
    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            out[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
        out
    }

    pub fn get(&self, coords: &[usize]) -> T {
        self.data[self.flat_index(coords)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Tensor<T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        // Scalar-with-tensor broadcast is the only allowed shape relaxation.
        if other.is_scalar() && !self.is_scalar() {
            let s = other.data[0];
            return Ok(self.map(|v| f(v, s)));
        }
        if self.is_scalar() && !other.is_scalar() {
            let s = self.data[0];
            return Ok(other.map(|v| f(s, v)));
        }
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn scale(&self, alpha: T) -> Tensor<T> {
        self.map(|v| v * alpha)
    }

    /// Same data viewed under a different shape with equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor<T>> {
        let count: usize = shape.iter().product();
        if count != self.data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(
                "reshape",
                format!("{:?} ({} values) -> {shape:?}", self.shape, self.data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Lossless-where-possible dtype conversion (exact for f32 -> f64).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.into_f64())).collect(),
        }
    }
}
