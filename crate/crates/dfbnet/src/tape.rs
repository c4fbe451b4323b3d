//! Reverse-mode differentiation over a define-by-run tape.
//!
//! Forward execution appends one [`Node`] per produced tensor; inputs always
//! precede their consumers, so one reverse sweep visits every node exactly
//! once. Data-dependent auxiliaries (argmax offsets, dropout masks,
//! interpolation taps, softmax probabilities) are recorded at forward time so
//! backward never re-runs forward and never mutates forward values.

use crate::error::{Error, Result};
use crate::ops::conv::{self, ConvSpec};
use crate::ops::dense;
use crate::ops::dropout::{self, DropoutMode};
use crate::ops::pool;
use crate::ops::softmax;
use crate::ops::upsample::{self, AxisTaps};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a tensor produced on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Node<T: Scalar> {
    Leaf,
    Add(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, T),
    Relu(ValueId),
    Sum(ValueId),
    Reshape(ValueId),
    Dense {
        x: ValueId,
        w: ValueId,
        b: ValueId,
    },
    Conv {
        x: ValueId,
        w: ValueId,
        b: ValueId,
        spec: ConvSpec,
    },
    GlobalAvgPool(ValueId),
    GlobalMaxPool {
        x: ValueId,
        argmax: Vec<usize>,
    },
    UpsampleBilinear2x {
        x: ValueId,
        taps_h: AxisTaps<T>,
        taps_w: AxisTaps<T>,
    },
    Dropout {
        x: ValueId,
        mask: Option<(Vec<bool>, T)>,
    },
    SoftmaxXent {
        logits: ValueId,
        label: usize,
        softmax: Vec<T>,
    },
    CrossChannelPool {
        x: ValueId,
        n: usize,
        classes: usize,
    },
}

pub struct Tape<T: Scalar> {
    values: Vec<Tensor<T>>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.values[id.0]
    }

    fn push(&mut self, value: Tensor<T>, node: Node<T>) -> ValueId {
        self.values.push(value);
        self.nodes.push(node);
        ValueId(self.values.len() - 1)
    }

    /// Registers an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor<T>) -> ValueId {
        self.push(value, Node::Leaf)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Node::Add(a, b)))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Node::Mul(a, b)))
    }

    pub fn scale(&mut self, x: ValueId, alpha: T) -> ValueId {
        let v = self.value(x).scale(alpha);
        self.push(v, Node::Scale(x, alpha))
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x).relu();
        self.push(v, Node::Relu(x))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let total = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v);
        self.push(Tensor::scalar(total), Node::Sum(x))
    }

    pub fn reshape(&mut self, x: ValueId, shape: Vec<usize>) -> Result<ValueId> {
        let v = self.value(x).reshaped(shape)?;
        Ok(self.push(v, Node::Reshape(x)))
    }

    pub fn dense(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId> {
        let v = dense::forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(v, Node::Dense { x, w, b }))
    }

    pub fn conv(&mut self, x: ValueId, w: ValueId, b: ValueId, spec: ConvSpec) -> Result<ValueId> {
        let v = conv::forward(self.value(x), self.value(w), self.value(b), &spec)?;
        Ok(self.push(v, Node::Conv { x, w, b, spec }))
    }

    pub fn global_avg_pool(&mut self, x: ValueId) -> Result<ValueId> {
        let v = pool::global_avg_pool_forward(self.value(x))?;
        Ok(self.push(v, Node::GlobalAvgPool(x)))
    }

    pub fn global_max_pool(&mut self, x: ValueId) -> Result<ValueId> {
        let r = pool::global_max_pool_forward(self.value(x))?;
        Ok(self.push(
            r.values,
            Node::GlobalMaxPool {
                x,
                argmax: r.argmax,
            },
        ))
    }

    /// Saved per-channel argmax offsets of a `global_max_pool` output.
    pub fn max_argmax(&self, id: ValueId) -> Option<&[usize]> {
        match &self.nodes[id.0] {
            Node::GlobalMaxPool { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Smallest |pre-activation| across every relu input on the tape.
    /// Finite-difference probes are only trustworthy when this clears the
    /// probe step by a safe factor.
    pub fn min_relu_input_abs(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Relu(x) => self.values[x.0]
                    .data()
                    .iter()
                    .map(|v| v.into_f64().abs())
                    .fold(None, |acc: Option<f64>, v| {
                        Some(acc.map_or(v, |a| a.min(v)))
                    }),
                _ => None,
            })
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }

    /// Smallest gap between a channel's maximum and runner-up across every
    /// global max pool on the tape (None when volumes have a single cell).
    pub fn min_maxpool_margin(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for node in &self.nodes {
            let Node::GlobalMaxPool { x, argmax } = node else {
                continue;
            };
            let input = &self.values[x.0];
            let volume: usize = input.shape()[1..].iter().product();
            if volume < 2 {
                continue;
            }
            for (c, chunk) in input.data().chunks_exact(volume).enumerate() {
                let top = chunk[argmax[c]].into_f64();
                let mut second = f64::NEG_INFINITY;
                for (i, v) in chunk.iter().enumerate() {
                    if i != argmax[c] {
                        second = second.max(v.into_f64());
                    }
                }
                let margin = top - second;
                best = Some(best.map_or(margin, |b| b.min(margin)));
            }
        }
        best
    }

    pub fn upsample_bilinear2x(&mut self, x: ValueId) -> Result<ValueId> {
        let shape = self.value(x).shape();
        let (h, w) = match shape {
            [_, h, w] | [_, _, h, w] => (*h, *w),
            other => {
                return Err(Error::shape(
                    "upsample_bilinear2x",
                    format!("expected rank 3 or 4 input, got {other:?}"),
                ))
            }
        };
        let taps_h = upsample::axis_taps::<T>(h);
        let taps_w = upsample::axis_taps::<T>(w);
        let v = upsample::forward(self.value(x))?;
        Ok(self.push(v, Node::UpsampleBilinear2x { x, taps_h, taps_w }))
    }

    pub fn dropout(&mut self, x: ValueId, mode: DropoutMode<'_>) -> Result<ValueId> {
        let out = dropout::forward(self.value(x), mode)?;
        Ok(self.push(out.y, Node::Dropout { x, mask: out.mask }))
    }

    pub fn softmax_xent(&mut self, logits: ValueId, label: usize) -> Result<ValueId> {
        let out = softmax::forward(self.value(logits), label)?;
        Ok(self.push(
            Tensor::scalar(out.loss),
            Node::SoftmaxXent {
                logits,
                label,
                softmax: out.softmax,
            },
        ))
    }

    pub fn cross_channel_pool(&mut self, x: ValueId, n: usize, classes: usize) -> Result<ValueId> {
        let v = pool::cross_channel_pool_forward(self.value(x), n, classes)?;
        Ok(self.push(v, Node::CrossChannelPool { x, n, classes }))
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate by summation
    /// when a tensor feeds multiple nodes; accumulation order is tape order,
    /// so runs are bit-reproducible.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients<T>> {
        if loss.0 >= self.values.len() {
            return Err(Error::invalid(
                "backward",
                format!("loss id {} is not on this tape (len {})", loss.0, self.values.len()),
            ));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::invalid(
                "backward",
                format!("loss must be scalar, has shape {:?}", self.value(loss).shape()),
            ));
        }

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx] {
                Node::Leaf => {
                    grads[idx] = Some(gy);
                    continue;
                }
                Node::Add(a, b) => {
                    self.accumulate(&mut grads, *a, self.reduce_for(*a, &gy)?)?;
                    self.accumulate(&mut grads, *b, self.reduce_for(*b, &gy)?)?;
                }
                Node::Mul(a, b) => {
                    let da = gy.mul(self.value(*b))?;
                    let db = gy.mul(self.value(*a))?;
                    self.accumulate(&mut grads, *a, self.reduce_for(*a, &da)?)?;
                    self.accumulate(&mut grads, *b, self.reduce_for(*b, &db)?)?;
                }
                Node::Scale(x, alpha) => {
                    self.accumulate(&mut grads, *x, gy.scale(*alpha))?;
                }
                Node::Relu(x) => {
                    let mask = self.value(*x);
                    let data = gy
                        .data()
                        .iter()
                        .zip(mask.data())
                        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                        .collect();
                    self.accumulate(&mut grads, *x, Tensor::new(mask.shape().to_vec(), data)?)?;
                }
                Node::Sum(x) => {
                    let g = gy.item();
                    self.accumulate(
                        &mut grads,
                        *x,
                        Tensor::filled(self.value(*x).shape().to_vec(), g)?,
                    )?;
                }
                Node::Reshape(x) => {
                    self.accumulate(
                        &mut grads,
                        *x,
                        gy.reshaped(self.value(*x).shape().to_vec())?,
                    )?;
                }
                Node::Dense { x, w, b } => {
                    let g = dense::backward(self.value(*x), self.value(*w), &gy)?;
                    self.accumulate(&mut grads, *x, g.dx)?;
                    self.accumulate(&mut grads, *w, g.dw)?;
                    self.accumulate(&mut grads, *b, g.db)?;
                }
                Node::Conv { x, w, b, spec } => {
                    let g = conv::backward(self.value(*x), self.value(*w), &gy, spec)?;
                    self.accumulate(&mut grads, *x, g.dx)?;
                    self.accumulate(&mut grads, *w, g.dw)?;
                    self.accumulate(&mut grads, *b, g.db)?;
                }
                Node::GlobalAvgPool(x) => {
                    let dx = pool::global_avg_pool_backward(self.value(*x).shape(), &gy)?;
                    self.accumulate(&mut grads, *x, dx)?;
                }
                Node::GlobalMaxPool { x, argmax } => {
                    let dx = pool::global_max_pool_backward(self.value(*x).shape(), argmax, &gy)?;
                    self.accumulate(&mut grads, *x, dx)?;
                }
                Node::UpsampleBilinear2x { x, taps_h, taps_w } => {
                    let dx =
                        upsample_backward_with_taps(self.value(*x).shape(), taps_h, taps_w, &gy)?;
                    self.accumulate(&mut grads, *x, dx)?;
                }
                Node::Dropout { x, mask } => {
                    let dx = dropout::backward(self.value(*x).shape(), mask.as_ref(), &gy)?;
                    self.accumulate(&mut grads, *x, dx)?;
                }
                Node::SoftmaxXent {
                    logits,
                    label,
                    softmax: probs,
                } => {
                    let dl = softmax::backward(probs, *label, gy.item());
                    self.accumulate(&mut grads, *logits, dl)?;
                }
                Node::CrossChannelPool { x, n, classes } => {
                    let dx = pool::cross_channel_pool_backward(*n, *classes, &gy)?;
                    self.accumulate(&mut grads, *x, dx)?;
                }
            }
        }

        Ok(Gradients { grads })
    }

    /// Collapses a broadcast gradient back to a scalar operand when needed.
    fn reduce_for(&self, operand: ValueId, gy: &Tensor<T>) -> Result<Tensor<T>> {
        if self.value(operand).is_scalar() && !gy.is_scalar() {
            let total = gy.data().iter().fold(T::zero(), |a, &v| a + v);
            Ok(Tensor::scalar(total))
        } else {
            Ok(gy.clone())
        }
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor<T>>],
        id: ValueId,
        contribution: Tensor<T>,
    ) -> Result<()> {
        grads[id.0] = Some(match grads[id.0].take() {
            None => contribution,
            Some(existing) => existing.add(&contribution)?,
        });
        Ok(())
    }
}

fn upsample_backward_with_taps<T: Scalar>(
    x_shape: &[usize],
    taps_h: &AxisTaps<T>,
    taps_w: &AxisTaps<T>,
    gy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (c, t, h, w) = match x_shape {
        [c, h, w] => (*c, 1usize, *h, *w),
        [c, t, h, w] => (*c, *t, *h, *w),
        other => {
            return Err(Error::shape(
                "upsample_bilinear2x",
                format!("bad input shape {other:?}"),
            ))
        }
    };
    let (h2, w2) = (2 * h, 2 * w);
    let gd = gy.data();
    let mut dx = vec![T::zero(); c * t * h * w];
    for ct in 0..c * t {
        let plane = &mut dx[ct * h * w..(ct + 1) * h * w];
        let gplane = &gd[ct * h2 * w2..(ct + 1) * h2 * w2];
        for dy in 0..h2 {
            let (y0, y1, fy) = (taps_h.i0[dy], taps_h.i1[dy], taps_h.w1[dy]);
            let gyw = T::one() - fy;
            for dxi in 0..w2 {
                let (x0, x1, fx) = (taps_w.i0[dxi], taps_w.i1[dxi], taps_w.w1[dxi]);
                let gxw = T::one() - fx;
                let g = gplane[dy * w2 + dxi];
                plane[y0 * w + x0] += gyw * gxw * g;
                plane[y0 * w + x1] += gyw * fx * g;
                plane[y1 * w + x0] += fy * gxw * g;
                plane[y1 * w + x1] += fy * fx * g;
            }
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}

/// Gradient map keyed by tape value id.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, id: ValueId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: ValueId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}
