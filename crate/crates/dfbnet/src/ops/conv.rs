//! Direct cross-correlation with zero padding, in spatial (2D) and
//! spatio-temporal (3D) form.
//!
//! Inputs are `[C, H, W]` or `[C, T, H, W]`; weights are always rank-5
//! `[C_out, C_in, kt, kh, kw]` with `kt = 1` in 2D mode. Two forward paths
//! exist: `forward_direct` is the oracle-grade nested loop, `forward` is a
//! row-blocked variant that must match it to 1e-12.

use crate::error::{Error, Result};
use crate::ops::{axpy, dot};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    /// Kernel extents (kt, kh, kw); kt = 1 in 2D mode.
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

impl ConvSpec {
    /// 3x3 (or 3x3x3) same-padding convolution with the given strides.
    pub fn k3(c_in: usize, c_out: usize, temporal: bool, stride: (usize, usize, usize)) -> Self {
        ConvSpec {
            c_in,
            c_out,
            kernel: if temporal { (3, 3, 3) } else { (1, 3, 3) },
            stride,
            pad: if temporal { (1, 1, 1) } else { (0, 1, 1) },
        }
    }

    /// 1x1x1 channel-mixing convolution.
    pub fn pointwise(c_in: usize, c_out: usize) -> Self {
        ConvSpec {
            c_in,
            c_out,
            kernel: (1, 1, 1),
            stride: (1, 1, 1),
            pad: (0, 0, 0),
        }
    }

    pub fn out_extent(in_extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
        let padded = in_extent + 2 * pad;
        if padded < k {
            return Err(Error::invalid(
                "conv",
                format!("kernel {k} exceeds padded extent {padded}"),
            ));
        }
        let out = (padded - k) / stride + 1;
        debug_assert!(out >= 1);
        Ok(out)
    }

    /// Output shape for an input of this rank, or an error when the spec is
    /// inconsistent with the input/weight shapes.
    pub fn output_shape(&self, x_shape: &[usize]) -> Result<Vec<usize>> {
        let (c, t, h, w) = unpack_input(x_shape)?;
        if c != self.c_in {
            return Err(Error::shape(
                "conv",
                format!("input has {c} channels, spec expects {}", self.c_in),
            ));
        }
        let (kt, kh, kw) = self.kernel;
        let (st, sh, sw) = self.stride;
        let (pt, ph, pw) = self.pad;
        let t_out = Self::out_extent(t, kt, st, pt)?;
        let h_out = Self::out_extent(h, kh, sh, ph)?;
        let w_out = Self::out_extent(w, kw, sw, pw)?;
        Ok(if x_shape.len() == 4 {
            vec![self.c_out, t_out, h_out, w_out]
        } else {
            vec![self.c_out, h_out, w_out]
        })
    }
}

/// Splits an input shape into (C, T, H, W), with T = 1 for rank-3 inputs.
fn unpack_input(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, 1, *h, *w)),
        [c, t, h, w] => Ok((*c, *t, *h, *w)),
        other => Err(Error::shape(
            "conv",
            format!("expected rank 3 or 4 input, got {other:?}"),
        )),
    }
}

fn check_weights<T: Scalar>(spec: &ConvSpec, w: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    let (kt, kh, kw) = spec.kernel;
    let expect = [spec.c_out, spec.c_in, kt, kh, kw];
    if w.shape() != expect {
        return Err(Error::shape(
            "conv",
            format!("weight shape {:?}, spec needs {expect:?}", w.shape()),
        ));
    }
    if b.shape() != [spec.c_out] {
        return Err(Error::shape(
            "conv",
            format!("bias shape {:?}, spec needs [{}]", b.shape(), spec.c_out),
        ));
    }
    Ok(())
}

/// Oracle-grade direct loop. Quadruple-checked readability over speed.
pub fn forward_direct<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    check_weights(spec, w, b)?;
    let out_shape = spec.output_shape(x.shape())?;
    let (_, t_in, h_in, w_in) = unpack_input(x.shape())?;
    let (c_out_e, t_out, h_out, w_out) = unpack_input(&out_shape)?;
    let (kt, kh, kw) = spec.kernel;
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.pad;

    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = vec![T::zero(); c_out_e * t_out * h_out * w_out];

    for co in 0..c_out_e {
        for to in 0..t_out {
            for ho in 0..h_out {
                for wo in 0..w_out {
                    let mut acc = bd[co];
                    for ci in 0..spec.c_in {
                        for dt in 0..kt {
                            let ti = (to * st + dt) as isize - pt as isize;
                            if ti < 0 || ti >= t_in as isize {
                                continue;
                            }
                            for dh in 0..kh {
                                let hi = (ho * sh + dh) as isize - ph as isize;
                                if hi < 0 || hi >= h_in as isize {
                                    continue;
                                }
                                for dw in 0..kw {
                                    let wi = (wo * sw + dw) as isize - pw as isize;
                                    if wi < 0 || wi >= w_in as isize {
                                        continue;
                                    }
                                    let xi = ((ci * t_in + ti as usize) * h_in + hi as usize)
                                        * w_in
                                        + wi as usize;
                                    let ki = (((co * spec.c_in + ci) * kt + dt) * kh + dh) * kw
                                        + dw;
                                    acc = acc + xd[xi] * wd[ki];
                                }
                            }
                        }
                    }
                    out[((co * t_out + to) * h_out + ho) * w_out + wo] = acc;
                }
            }
        }
    }
    Tensor::new(out_shape, out)
}

/// Lowered patch matrix: one row of length `c_in*kt*kh*kw` per output
/// position, zero-filled where the kernel hangs over the padding. All three
/// conv passes then run contiguous inner loops over the patch axis.
struct PatchMatrix<T> {
    rows: usize,
    k: usize,
    data: Vec<T>,
}

fn lower_patches<T: Scalar>(
    xd: &[T],
    (t_in, h_in, w_in): (usize, usize, usize),
    (t_out, h_out, w_out): (usize, usize, usize),
    spec: &ConvSpec,
) -> PatchMatrix<T> {
    let (kt, kh, kw) = spec.kernel;
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.pad;
    let k = spec.c_in * kt * kh * kw;
    let rows = t_out * h_out * w_out;
    let mut data = vec![T::zero(); rows * k];

    let mut row = 0usize;
    for to in 0..t_out {
        for ho in 0..h_out {
            for wo in 0..w_out {
                let dst = &mut data[row * k..(row + 1) * k];
                let w_src0 = (wo * sw) as isize - pw as isize;
                // columns of the patch that land inside the input
                let dw_lo = (-w_src0).max(0) as usize;
                let dw_hi = (w_in as isize - w_src0).clamp(0, kw as isize) as usize;
                for ci in 0..spec.c_in {
                    for dt in 0..kt {
                        let ti = (to * st + dt) as isize - pt as isize;
                        if ti < 0 || ti >= t_in as isize {
                            continue;
                        }
                        for dh in 0..kh {
                            let hi = (ho * sh + dh) as isize - ph as isize;
                            if hi < 0 || hi >= h_in as isize {
                                continue;
                            }
                            if dw_lo >= dw_hi {
                                continue;
                            }
                            let src_base =
                                ((ci * t_in + ti as usize) * h_in + hi as usize) * w_in;
                            let src_lo = (w_src0 + dw_lo as isize) as usize;
                            let dst_base = ((ci * kt + dt) * kh + dh) * kw;
                            dst[dst_base + dw_lo..dst_base + dw_hi].copy_from_slice(
                                &xd[src_base + src_lo..src_base + src_lo + (dw_hi - dw_lo)],
                            );
                        }
                    }
                }
                row += 1;
            }
        }
    }
    PatchMatrix { rows, k, data }
}

/// Scatter-adds a patch-matrix gradient back onto the input volume
/// (transpose of `lower_patches`).
fn scatter_patches<T: Scalar>(
    patches: &PatchMatrix<T>,
    dx: &mut [T],
    (t_in, h_in, w_in): (usize, usize, usize),
    (t_out, h_out, w_out): (usize, usize, usize),
    spec: &ConvSpec,
) {
    let (kt, kh, kw) = spec.kernel;
    let (st, sh, sw) = spec.stride;
    let (pt, ph, pw) = spec.pad;
    let k = patches.k;

    let mut row = 0usize;
    for to in 0..t_out {
        for ho in 0..h_out {
            for wo in 0..w_out {
                let src = &patches.data[row * k..(row + 1) * k];
                let w_src0 = (wo * sw) as isize - pw as isize;
                let dw_lo = (-w_src0).max(0) as usize;
                let dw_hi = (w_in as isize - w_src0).clamp(0, kw as isize) as usize;
                for ci in 0..spec.c_in {
                    for dt in 0..kt {
                        let ti = (to * st + dt) as isize - pt as isize;
                        if ti < 0 || ti >= t_in as isize {
                            continue;
                        }
                        for dh in 0..kh {
                            let hi = (ho * sh + dh) as isize - ph as isize;
                            if hi < 0 || hi >= h_in as isize {
                                continue;
                            }
                            if dw_lo >= dw_hi {
                                continue;
                            }
                            let dst_base =
                                ((ci * t_in + ti as usize) * h_in + hi as usize) * w_in;
                            let dst_lo = (w_src0 + dw_lo as isize) as usize;
                            let src_base = ((ci * kt + dt) * kh + dh) * kw;
                            let dst_row = &mut dx[dst_base + dst_lo..dst_base + dst_lo + (dw_hi - dw_lo)];
                            let src_row = &src[src_base + dw_lo..src_base + dw_hi];
                            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                                *d = *d + s;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Wide stride-1 rows go through shifted-slice axpys directly; the patch
/// matrix pays off once rows get short or strided.
fn use_row_path(spec: &ConvSpec, w_out: usize) -> bool {
    spec.stride.2 == 1 && w_out >= 24
}

/// Output range `[lo, hi]` for one width-axis kernel tap under stride 1.
fn tap_range(w_out: usize, w_in: usize, kw_off: usize, pad: usize) -> Option<(usize, usize, isize)> {
    let shift = kw_off as isize - pad as isize; // src = o + shift
    let lo = (-shift).max(0) as usize;
    let hi_src = w_in as isize - 1 - shift;
    if hi_src < 0 {
        return None;
    }
    let hi = (hi_src as usize).min(w_out - 1);
    if lo > hi {
        return None;
    }
    Some((lo, hi, shift))
}

fn forward_rows<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
    out_shape: Vec<usize>,
) -> Result<Tensor<T>> {
    let (_, t_in, h_in, w_in) = unpack_input(x.shape())?;
    let (c_out_e, t_out, h_out, w_out) = unpack_input(&out_shape)?;
    let (kt, kh, kw) = spec.kernel;
    let (st, sh, _) = spec.stride;
    let (pt, ph, pw) = spec.pad;

    let taps: Vec<Option<(usize, usize, isize)>> =
        (0..kw).map(|dw| tap_range(w_out, w_in, dw, pw)).collect();
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = vec![T::zero(); c_out_e * t_out * h_out * w_out];

    for co in 0..c_out_e {
        for to in 0..t_out {
            for ho in 0..h_out {
                let base = ((co * t_out + to) * h_out + ho) * w_out;
                let orow = &mut out[base..base + w_out];
                for v in orow.iter_mut() {
                    *v = bd[co];
                }
                for ci in 0..spec.c_in {
                    for dt in 0..kt {
                        let ti = (to * st + dt) as isize - pt as isize;
                        if ti < 0 || ti >= t_in as isize {
                            continue;
                        }
                        for dh in 0..kh {
                            let hi = (ho * sh + dh) as isize - ph as isize;
                            if hi < 0 || hi >= h_in as isize {
                                continue;
                            }
                            let xbase = ((ci * t_in + ti as usize) * h_in + hi as usize) * w_in;
                            let xrow = &xd[xbase..xbase + w_in];
                            let wbase = (((co * spec.c_in + ci) * kt + dt) * kh + dh) * kw;
                            for (dw, tap) in taps.iter().enumerate() {
                                let Some((lo, hi_o, shift)) = *tap else { continue };
                                let n = hi_o - lo + 1;
                                let src0 = (lo as isize + shift) as usize;
                                axpy(&mut orow[lo..lo + n], wd[wbase + dw], &xrow[src0..src0 + n]);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(out_shape, out)
}

fn backward_rows<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (_, t_in, h_in, w_in) = unpack_input(x.shape())?;
    let (c_out_e, t_out, h_out, w_out) = unpack_input(gy.shape())?;
    let (kt, kh, kw) = spec.kernel;
    let (st, sh, _) = spec.stride;
    let (pt, ph, pw) = spec.pad;

    let taps: Vec<Option<(usize, usize, isize)>> =
        (0..kw).map(|dw| tap_range(w_out, w_in, dw, pw)).collect();
    let xd = x.data();
    let wd = w.data();
    let gd = gy.data();
    let mut dx = vec![T::zero(); xd.len()];
    let mut dw_acc = vec![T::zero(); wd.len()];
    let mut db = vec![T::zero(); spec.c_out];

    for co in 0..c_out_e {
        for to in 0..t_out {
            for ho in 0..h_out {
                let base = ((co * t_out + to) * h_out + ho) * w_out;
                let grow = &gd[base..base + w_out];
                db[co] = db[co] + grow.iter().fold(T::zero(), |a, &v| a + v);
                for ci in 0..spec.c_in {
                    for dt in 0..kt {
                        let ti = (to * st + dt) as isize - pt as isize;
                        if ti < 0 || ti >= t_in as isize {
                            continue;
                        }
                        for dh in 0..kh {
                            let hi = (ho * sh + dh) as isize - ph as isize;
                            if hi < 0 || hi >= h_in as isize {
                                continue;
                            }
                            let rbase = ((ci * t_in + ti as usize) * h_in + hi as usize) * w_in;
                            let wbase = (((co * spec.c_in + ci) * kt + dt) * kh + dh) * kw;
                            for (dwk, tap) in taps.iter().enumerate() {
                                let Some((lo, hi_o, shift)) = *tap else { continue };
                                let n = hi_o - lo + 1;
                                let src0 = (lo as isize + shift) as usize;
                                axpy(
                                    &mut dx[rbase + src0..rbase + src0 + n],
                                    wd[wbase + dwk],
                                    &grow[lo..lo + n],
                                );
                                dw_acc[wbase + dwk] = dw_acc[wbase + dwk]
                                    + dot(&grow[lo..lo + n], &xd[rbase + src0..rbase + src0 + n]);
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        dx: Tensor::new(x.shape().to_vec(), dx)?,
        dw: Tensor::new(w.shape().to_vec(), dw_acc)?,
        db: Tensor::new(vec![spec.c_out], db)?,
    })
}

/// Blocked forward; matches `forward_direct` to 1e-12.
pub fn forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    check_weights(spec, w, b)?;
    let out_shape = spec.output_shape(x.shape())?;
    let (_, t_in, h_in, w_in) = unpack_input(x.shape())?;
    let (c_out_e, t_out, h_out, w_out) = unpack_input(&out_shape)?;
    if use_row_path(spec, w_out) {
        return forward_rows(x, w, b, spec, out_shape);
    }

    let patches = lower_patches(x.data(), (t_in, h_in, w_in), (t_out, h_out, w_out), spec);
    let wd = w.data();
    let bd = b.data();
    let k = patches.k;
    let rows = patches.rows;
    // row-major sweep keeps each patch row cache-hot for every channel
    let mut out = vec![T::zero(); c_out_e * rows];
    for row in 0..rows {
        let patch = &patches.data[row * k..(row + 1) * k];
        for co in 0..c_out_e {
            out[co * rows + row] = bd[co] + dot(&wd[co * k..(co + 1) * k], patch);
        }
    }
    Tensor::new(out_shape, out)
}

pub struct ConvGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (_, t_in, h_in, w_in) = unpack_input(x.shape())?;
    let (c_out_e, t_out, h_out, w_out) = unpack_input(gy.shape())?;
    debug_assert_eq!(c_out_e, spec.c_out);
    if use_row_path(spec, w_out) {
        return backward_rows(x, w, gy, spec);
    }

    let patches = lower_patches(x.data(), (t_in, h_in, w_in), (t_out, h_out, w_out), spec);
    let k = patches.k;
    let rows = patches.rows;
    let wd = w.data();
    let gd = gy.data();

    let mut dw = vec![T::zero(); wd.len()];
    let mut db = vec![T::zero(); spec.c_out];
    let mut dpatches = PatchMatrix {
        rows,
        k,
        data: vec![T::zero(); rows * k],
    };

    for co in 0..c_out_e {
        let grow = &gd[co * rows..(co + 1) * rows];
        db[co] = db[co] + grow.iter().fold(T::zero(), |a, &v| a + v);
    }
    for row in 0..rows {
        let patch = &patches.data[row * k..(row + 1) * k];
        let dpatch = &mut dpatches.data[row * k..(row + 1) * k];
        for co in 0..c_out_e {
            let g = gd[co * rows + row];
            if g == T::zero() {
                continue;
            }
            axpy(&mut dw[co * k..(co + 1) * k], g, patch);
            axpy(dpatch, g, &wd[co * k..(co + 1) * k]);
        }
    }

    let mut dx = vec![T::zero(); x.len()];
    scatter_patches(&dpatches, &mut dx, (t_in, h_in, w_in), (t_out, h_out, w_out), spec);

    Ok(ConvGrads {
        dx: Tensor::new(x.shape().to_vec(), dx)?,
        dw: Tensor::new(w.shape().to_vec(), dw)?,
        db: Tensor::new(vec![spec.c_out], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn rand_t(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        rng.normal_tensor(shape, 0.0, 1.0).unwrap()
    }

    #[test]
    fn pointwise_equals_channel_mixing() {
        let mut rng = Rng::new(1);
        let x = rand_t(&mut rng, &[3, 2, 4, 4]);
        let spec = ConvSpec::pointwise(3, 5);
        let w = rand_t(&mut rng, &[5, 3, 1, 1, 1]);
        let b = rand_t(&mut rng, &[5]);
        let y = forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y.shape(), &[5, 2, 4, 4]);
        // dense over channels at each position
        for t in 0..2 {
            for h in 0..4 {
                for wi in 0..4 {
                    for co in 0..5 {
                        let mut want = b.data()[co];
                        for ci in 0..3 {
                            want += x.get(&[ci, t, h, wi]) * w.get(&[co, ci, 0, 0, 0]);
                        }
                        let got = y.get(&[co, t, h, wi]);
                        assert!((got - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = Rng::new(2);
        let x = rand_t(&mut rng, &[1, 3, 5, 5]);
        let spec = ConvSpec::k3(1, 1, true, (1, 1, 1));
        let mut wdata = vec![0.0; 27];
        wdata[13] = 1.0; // center tap of the 3x3x3 kernel
        let w = Tensor::new(vec![1, 1, 3, 3, 3], wdata).unwrap();
        let b = Tensor::zeros(vec![1]).unwrap();
        let y = forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernel_gives_all_bias() {
        let mut rng = Rng::new(3);
        let x = rand_t(&mut rng, &[2, 4, 4]);
        let spec = ConvSpec::k3(2, 3, false, (1, 1, 1));
        let w = Tensor::zeros(vec![3, 2, 1, 3, 3]).unwrap();
        let b = Tensor::new(vec![3], vec![1.5, -2.0, 0.25]).unwrap();
        let y = forward(&x, &w, &b, &spec).unwrap();
        for co in 0..3 {
            for h in 0..4 {
                for wi in 0..4 {
                    assert_eq!(y.get(&[co, h, wi]), b.data()[co]);
                }
            }
        }
    }

    #[test]
    fn fast_matches_direct_on_random_specs() {
        let rng = Rng::new(4);
        for trial in 0..60 {
            let mut r = rng.stream(trial);
            let c_in = 1 + r.below(3);
            let c_out = 1 + r.below(3);
            let temporal = r.below(2) == 1;
            let t = if temporal { 2 + r.below(3) } else { 1 };
            let h = 3 + r.below(4);
            let wx = 3 + r.below(4);
            let stride = 1 + r.below(2);
            let spec = ConvSpec {
                c_in,
                c_out,
                kernel: if temporal { (3, 3, 3) } else { (1, 3, 3) },
                stride: (if temporal { stride } else { 1 }, stride, stride),
                pad: if temporal { (1, 1, 1) } else { (0, 1, 1) },
            };
            let shape: Vec<usize> = if temporal {
                vec![c_in, t, h, wx]
            } else {
                vec![c_in, h, wx]
            };
            let x = rand_t(&mut r, &shape);
            let w = rand_t(&mut r, &[c_out, c_in, spec.kernel.0, 3, 3]);
            let b = rand_t(&mut r, &[c_out]);
            let fast = forward(&x, &w, &b, &spec).unwrap();
            let direct = forward_direct(&x, &w, &b, &spec).unwrap();
            assert_eq!(fast.shape(), direct.shape());
            for (a, o) in fast.data().iter().zip(direct.data()) {
                assert!((a - o).abs() <= 1e-12 * o.abs().max(1.0), "trial {trial}");
            }
        }
    }

    #[test]
    fn row_path_matches_direct_on_wide_inputs() {
        // W >= 24 with stride 1 exercises the shifted-row path
        let rng = Rng::new(9);
        for trial in 0..10 {
            let mut r = rng.stream(trial);
            let c_in = 1 + r.below(3);
            let c_out = 1 + r.below(3);
            let spec = ConvSpec::k3(c_in, c_out, true, (1, 1, 1));
            let wide = 24 + r.below(10);
            let x = rand_t(&mut r, &[c_in, 2, 3, wide]);
            let w = rand_t(&mut r, &[c_out, c_in, 3, 3, 3]);
            let b = rand_t(&mut r, &[c_out]);
            let fast = forward(&x, &w, &b, &spec).unwrap();
            let direct = forward_direct(&x, &w, &b, &spec).unwrap();
            for (a, o) in fast.data().iter().zip(direct.data()) {
                assert!((a - o).abs() <= 1e-12 * o.abs().max(1.0), "trial {trial}");
            }
        }
    }

    #[test]
    fn output_extent_underflow_is_error() {
        let spec = ConvSpec {
            c_in: 1,
            c_out: 1,
            kernel: (1, 5, 5),
            stride: (1, 1, 1),
            pad: (0, 0, 0),
        };
        assert!(spec.output_shape(&[1, 3, 3]).is_err());
    }

    #[test]
    fn stride_arithmetic() {
        // floor((in + 2p - k)/s) + 1
        assert_eq!(ConvSpec::out_extent(8, 3, 2, 1).unwrap(), 4);
        assert_eq!(ConvSpec::out_extent(4, 3, 2, 1).unwrap(), 2);
        assert_eq!(ConvSpec::out_extent(32, 3, 1, 1).unwrap(), 32);
    }
}
