//! Spatial bilinear 2x upsampling with half-pixel-center semantics.
//!
//! Destination index `d` maps to source coordinate `s = (d + 0.5)/2 - 0.5`,
//! clamped to `[0, extent - 1]`; the output blends the four spatial
//! neighbors. The temporal axis is untouched.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-destination interpolation taps along one axis: low/high source index
/// and the weight of the high tap (`w0 = 1 - w1`).
#[derive(Debug, Clone)]
pub struct AxisTaps<T> {
    pub i0: Vec<usize>,
    pub i1: Vec<usize>,
    pub w1: Vec<T>,
}

pub fn axis_taps<T: Scalar>(in_extent: usize) -> AxisTaps<T> {
    let out_extent = in_extent * 2;
    let mut i0 = Vec::with_capacity(out_extent);
    let mut i1 = Vec::with_capacity(out_extent);
    let mut w1 = Vec::with_capacity(out_extent);
    for d in 0..out_extent {
        // exact in binary floating point: d/2 - 1/4
        let s = (d as f64 + 0.5) / 2.0 - 0.5;
        let s = s.clamp(0.0, (in_extent - 1) as f64);
        let lo = s.floor();
        let frac = s - lo;
        let lo = lo as usize;
        i0.push(lo);
        i1.push((lo + 1).min(in_extent - 1));
        w1.push(T::from_f64(frac));
    }
    AxisTaps { i0, i1, w1 }
}

fn unpack(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, 1, *h, *w)),
        [c, t, h, w] => Ok((*c, *t, *h, *w)),
        other => Err(Error::shape(
            "upsample_bilinear2x",
            format!("expected rank 3 or 4 input, got {other:?}"),
        )),
    }
}

pub fn forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, t, h, w) = unpack(x.shape())?;
    let ty = axis_taps::<T>(h);
    let tx = axis_taps::<T>(w);
    let (h2, w2) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * t * h2 * w2);
    for ct in 0..c * t {
        let plane = &xd[ct * h * w..(ct + 1) * h * w];
        for dy in 0..h2 {
            let (y0, y1, fy) = (ty.i0[dy], ty.i1[dy], ty.w1[dy]);
            let gy = T::one() - fy;
            let row0 = &plane[y0 * w..y0 * w + w];
            let row1 = &plane[y1 * w..y1 * w + w];
            for dx in 0..w2 {
                let (x0, x1, fx) = (tx.i0[dx], tx.i1[dx], tx.w1[dx]);
                let gx = T::one() - fx;
                out.push(
                    gy * gx * row0[x0]
                        + gy * fx * row0[x1]
                        + fy * gx * row1[x0]
                        + fy * fx * row1[x1],
                );
            }
        }
    }
    let out_shape = if x.rank() == 4 {
        vec![c, t, h2, w2]
    } else {
        vec![c, h2, w2]
    };
    Tensor::new(out_shape, out)
}

pub fn backward<T: Scalar>(x_shape: &[usize], gy: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, t, h, w) = unpack(x_shape)?;
    let ty = axis_taps::<T>(h);
    let tx = axis_taps::<T>(w);
    let (h2, w2) = (2 * h, 2 * w);
    let gd = gy.data();
    let mut dx = vec![T::zero(); c * t * h * w];
    for ct in 0..c * t {
        let plane = &mut dx[ct * h * w..(ct + 1) * h * w];
        let gplane = &gd[ct * h2 * w2..(ct + 1) * h2 * w2];
        for dy in 0..h2 {
            let (y0, y1, fy) = (ty.i0[dy], ty.i1[dy], ty.w1[dy]);
            let gyw = T::one() - fy;
            for dx_i in 0..w2 {
                let (x0, x1, fx) = (tx.i0[dx_i], tx.i1[dx_i], tx.w1[dx_i]);
                let gxw = T::one() - fx;
                let g = gplane[dy * w2 + dx_i];
                plane[y0 * w + x0] += gyw * gxw * g;
                plane[y0 * w + x1] += gyw * fx * g;
                plane[y1 * w + x0] += fy * gxw * g;
                plane[y1 * w + x1] += fy * fx * g;
            }
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}
