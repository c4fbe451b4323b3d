//! Differentiable neural operations: convolution, pooling, bilinear
//! upsampling, dropout, dense products and softmax cross-entropy.
//!
//! Each op is a pair of pure functions (forward, backward) over [`Tensor`]s;
//! the tape in [`crate::tape`] records which to call and with what saved
//! auxiliaries. Backward rules are verified against central finite
//! differences by the gradcheck harness.
//!
//! [`Tensor`]: crate::tensor::Tensor

pub mod conv;
pub mod dense;
pub mod dropout;
pub mod pool;
pub mod softmax;
pub mod upsample;

pub use conv::ConvSpec;
pub use pool::PoolResult;

use crate::scalar::Scalar;

/// Dot product with a fixed 32-lane accumulation order: wide enough for
/// several independent SIMD chains, deterministic because the lane
/// structure never changes.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 32;
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        let pa = &a[i * LANES..(i + 1) * LANES];
        let pb = &b[i * LANES..(i + 1) * LANES];
        for l in 0..LANES {
            acc[l] = acc[l] + pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..a.len() {
        tail = tail + a[i] * b[i];
    }
    let mut total = T::zero();
    for l in 0..LANES {
        total = total + acc[l];
    }
    total + tail
}

/// `y += alpha * x` over equal-length slices.
pub(crate) fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}
