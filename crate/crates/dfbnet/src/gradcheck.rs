//! Finite-difference gradient checking, the crate's core verification
//! instrument.
//!
//! Central differences `(f(p+e) - f(p-e)) / 2e` per coordinate, compared to
//! the tape's analytic gradient with relative error
//! `|a - n| / max(|a|, |n|, 1e-8)`. Runs in 64-bit only; 32-bit steps drown
//! in rounding error.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

const EPS_ABS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradReportEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub entries: Vec<GradReportEntry>,
    pub step: f64,
    pub tol: f64,
}

impl GradReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>13} {:>8} {:>14} {:>14}  result",
            "parameter", "max rel err", "worst", "analytic", "numeric"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:<28} {:>13.3e} {:>8} {:>14.6e} {:>14.6e}  {}",
                e.name,
                e.max_rel_err,
                e.worst_index,
                e.analytic_at_worst,
                e.numeric_at_worst,
                if e.pass { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "overall: {} (max rel err {:.3e}, tol {:.1e}, step {:.1e})",
            if self.pass() { "pass" } else { "FAIL" },
            self.max_rel_err(),
            self.tol,
            self.step
        );
        out
    }

    /// Machine-readable key-value lines for CI.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "step={}", self.step);
        let _ = writeln!(out, "tol={}", self.tol);
        for e in &self.entries {
            let _ = writeln!(out, "param.{}.max_rel_err={}", e.name, e.max_rel_err);
            let _ = writeln!(out, "param.{}.worst_index={}", e.name, e.worst_index);
            let _ = writeln!(out, "param.{}.pass={}", e.name, e.pass);
        }
        let _ = writeln!(out, "max_rel_err={}", self.max_rel_err());
        let _ = writeln!(out, "pass={}", self.pass());
        out
    }
}

/// Checks the analytic gradient of a forward-graph constructor against
/// central finite differences.
///
/// `build` receives a fresh tape and the parameter leaves (same order as
/// `params`) and returns the scalar loss id. It must be deterministic;
/// dropout has to run in fixed-mask mode.
pub fn gradcheck<F>(
    build: F,
    params: &[(String, Tensor<f64>)],
    step: f64,
    tol: f64,
) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[ValueId]) -> Result<ValueId>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        if !tape.value(loss).is_scalar() {
            return Err(Error::GradCheck(format!(
                "loss must be scalar, got shape {:?}",
                tape.value(loss).shape()
            )));
        }
        Ok(tape.value(loss).item())
    };

    let base: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();

    // determinism check: two builds must produce bit-identical losses
    let f0 = eval(&base)?;
    let f0_again = eval(&base)?;
    if f0.to_bits() != f0_again.to_bits() {
        return Err(Error::GradCheck(format!(
            "non-deterministic forward: losses {f0} and {f0_again} differ between identical runs \
             (is dropout in fixed-mask mode?)"
        )));
    }

    // analytic gradients
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = base.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let grads = tape.backward(loss)?;

    let mut entries = Vec::with_capacity(params.len());
    for (p, (name, tensor)) in params.iter().enumerate() {
        let analytic: Vec<f64> = match grads.wrt(ids[p]) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; tensor.len()],
        };
        let mut worst = GradReportEntry {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic_at_worst: analytic.first().copied().unwrap_or(0.0),
            numeric_at_worst: 0.0,
            pass: true,
        };
        for i in 0..tensor.len() {
            let mut plus = base.clone();
            let mut data = plus[p].data().to_vec();
            data[i] += step;
            plus[p] = Tensor::new(tensor.shape().to_vec(), data)?;

            let mut minus = base.clone();
            let mut data = minus[p].data().to_vec();
            data[i] -= step;
            minus[p] = Tensor::new(tensor.shape().to_vec(), data)?;

            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(EPS_ABS);
            if rel > worst.max_rel_err {
                worst.max_rel_err = rel;
                worst.worst_index = i;
                worst.analytic_at_worst = a;
                worst.numeric_at_worst = numeric;
            }
        }
        worst.pass = worst.max_rel_err < tol;
        entries.push(worst);
    }

    Ok(GradReport { entries, step, tol })
}

/// Names accepted by [`check_op`].
pub const OP_NAMES: &[&str] = &[
    "conv",
    "pointwise-conv",
    "avg-pool",
    "max-pool",
    "upsample",
    "dense",
    "softmax-xent",
    "cross-channel-pool",
    "dropout",
];

const OP_STEP: f64 = 1e-5;
pub const OP_TOL: f64 = 1e-6;
pub const FULL_HEAD_TOL: f64 = 1e-5;

fn named_tensor(rng: &mut crate::rng::Rng, name: &str, shape: &[usize]) -> (String, Tensor<f64>) {
    (name.to_string(), rng.normal_tensor(shape, 0.0, 1.0).unwrap())
}

/// Pushes each channel's maximum well clear of the runner-up so a +-1e-5
/// probe cannot flip the argmax.
fn separate_maxima(t: &Tensor<f64>) -> Tensor<f64> {
    let volume: usize = t.shape()[1..].iter().product();
    let mut data = t.data().to_vec();
    for chunk in data.chunks_exact_mut(volume) {
        let mut best = 0usize;
        for (i, &v) in chunk.iter().enumerate() {
            if v > chunk[best] {
                best = i;
            }
        }
        chunk[best] += 0.5;
    }
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// Finite-difference check of one named operation at tolerance `OP_TOL`.
pub fn check_op(name: &str, seed: u64) -> Result<GradReport> {
    let mut rng = crate::rng::Rng::new(seed);
    match name {
        "conv" => {
            let spec = crate::ops::conv::ConvSpec::k3(2, 3, true, (1, 2, 2));
            let params = vec![
                named_tensor(&mut rng, "x", &[2, 3, 4, 4]),
                named_tensor(&mut rng, "w", &[3, 2, 3, 3, 3]),
                named_tensor(&mut rng, "b", &[3]),
            ];
            gradcheck(
                move |tape, ids| {
                    let y = tape.conv(ids[0], ids[1], ids[2], spec)?;
                    let r = tape.leaf(Tensor::filled(tape.value(y).shape().to_vec(), 0.3)?);
                    let m = tape.mul(y, r)?;
                    Ok(tape.sum(m))
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "pointwise-conv" => {
            let spec = crate::ops::conv::ConvSpec::pointwise(3, 4);
            let params = vec![
                named_tensor(&mut rng, "x", &[3, 2, 3, 3]),
                named_tensor(&mut rng, "w", &[4, 3, 1, 1, 1]),
                named_tensor(&mut rng, "b", &[4]),
            ];
            gradcheck(
                move |tape, ids| {
                    let y = tape.conv(ids[0], ids[1], ids[2], spec)?;
                    let p = tape.global_avg_pool(y)?;
                    tape.softmax_xent(p, 1)
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "avg-pool" => {
            let params = vec![named_tensor(&mut rng, "x", &[3, 2, 3, 3])];
            gradcheck(
                |tape, ids| {
                    let p = tape.global_avg_pool(ids[0])?;
                    tape.softmax_xent(p, 0)
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "max-pool" => {
            let x = rng.normal_tensor(&[3, 2, 3, 3], 0.0, 1.0).unwrap();
            let params = vec![("x".to_string(), separate_maxima(&x))];
            gradcheck(
                |tape, ids| {
                    let p = tape.global_max_pool(ids[0])?;
                    tape.softmax_xent(p, 2)
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "upsample" => {
            let params = vec![
                named_tensor(&mut rng, "x", &[2, 2, 3, 2]),
                named_tensor(&mut rng, "r", &[2, 2, 6, 4]),
            ];
            gradcheck(
                |tape, ids| {
                    let up = tape.upsample_bilinear2x(ids[0])?;
                    let m = tape.mul(up, ids[1])?;
                    Ok(tape.sum(m))
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "dense" => {
            let params = vec![
                named_tensor(&mut rng, "x", &[6]),
                named_tensor(&mut rng, "w", &[6, 4]),
                named_tensor(&mut rng, "b", &[4]),
            ];
            gradcheck(
                |tape, ids| {
                    let y = tape.dense(ids[0], ids[1], ids[2])?;
                    tape.softmax_xent(y, 3)
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "softmax-xent" => {
            let params = vec![named_tensor(&mut rng, "logits", &[7])];
            gradcheck(
                |tape, ids| tape.softmax_xent(ids[0], 4),
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "cross-channel-pool" => {
            let params = vec![named_tensor(&mut rng, "maxvec", &[10])];
            gradcheck(
                |tape, ids| {
                    let z = tape.cross_channel_pool(ids[0], 2, 5)?;
                    tape.softmax_xent(z, 2)
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        "dropout" => {
            let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
            let params = vec![
                named_tensor(&mut rng, "x", &[12]),
                named_tensor(&mut rng, "r", &[12]),
            ];
            gradcheck(
                move |tape, ids| {
                    let d = tape.dropout(
                        ids[0],
                        crate::ops::dropout::DropoutMode::FixedMask { p: 0.5, mask: &mask },
                    )?;
                    let m = tape.mul(d, ids[1])?;
                    Ok(tape.sum(m))
                },
                &params,
                OP_STEP,
                OP_TOL,
            )
        }
        other => Err(Error::GradCheck(format!(
            "unknown op '{other}'; known ops: {}",
            OP_NAMES.join(", ")
        ))),
    }
}

/// Finite differences in f64 are only trustworthy at well-conditioned test
/// points: every max-pool winner must lead its runner-up by much more than
/// the probe step, relu pre-activations must sit clear of the kink, and
/// live gradients must stay above the cancellation noise floor
/// (~eps*|loss|/(2*step)). The full-head check rejection-samples its test
/// point until all three hold.
const MAXPOOL_MARGIN_MIN: f64 = 1e-3;
const RELU_MARGIN_MIN: f64 = 1e-4;
const LIVE_GRAD_FLOOR: f64 = 2e-6;

struct TestPoint {
    cfg: crate::model::ModelConfig,
    params: Vec<(String, Tensor<f64>)>,
    clip: Tensor<f64>,
    masks: Vec<Vec<bool>>,
    label: usize,
}

/// Parameter draw slanted toward a well-conditioned check: mildly positive
/// conv biases keep relus active, larger head/filter weights spread the
/// max-pool responses.
fn draw_test_point(seed: u64) -> Result<TestPoint> {
    use crate::model::{self, ModelConfig};

    let cfg = ModelConfig::micro_3d(3, 2);
    let mut init = model::init_params::<f64>(&cfg, seed)?;
    let root = crate::rng::Rng::new(seed ^ 0xc0ed17);
    for (i, name) in init.names().to_vec().into_iter().enumerate() {
        let shape = init.get(&name).unwrap().shape().to_vec();
        let mut rng = root.stream(i as u64);
        if name.ends_with(".b") {
            init.set(&name, rng.normal_tensor(&shape, 0.25, 0.05)?)?;
        } else if name.starts_with("fb.") || name.starts_with("head_") {
            init.set(&name, rng.normal_tensor(&shape, 0.0, 0.4)?)?;
        }
    }
    let mut rng = crate::rng::Rng::new(seed ^ 0x5eed);
    let clip: Tensor<f64> = rng.normal_tensor(
        &[3, cfg.backbone.frames, cfg.backbone.height, cfg.backbone.width],
        0.0,
        1.0,
    )?;
    // alternating masks: deterministic and never branch-killing
    let avg_mask: Vec<bool> = (0..cfg.backbone.stage5_width).map(|i| i % 2 == 0).collect();
    let max_mask: Vec<bool> = (0..cfg.head.filter_count()).map(|i| i % 2 == 0).collect();
    Ok(TestPoint {
        cfg,
        params: init.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        clip,
        masks: vec![avg_mask, max_mask],
        label: 1,
    })
}

fn build_full_head_loss(
    tape: &mut Tape<f64>,
    point: &TestPoint,
    ids: &[ValueId],
) -> Result<ValueId> {
    use crate::head::DropoutCtx;
    use crate::model::{self, Sampler};

    let map = point
        .params
        .iter()
        .map(|(n, _)| n.clone())
        .zip(ids.iter().copied())
        .collect::<std::collections::HashMap<_, _>>();
    let ids = model::ParamIds::from_map(map);
    let mut dropout = DropoutCtx::fixed(point.cfg.head.dropout, &point.masks);
    let fwd = model::forward_clip(tape, &point.clip, &ids, &point.cfg, &mut dropout, Sampler::EvalCenter)?;
    let (loss, _) = model::clip_loss(tape, &fwd, point.label)?;
    Ok(loss)
}

fn point_is_well_conditioned(point: &TestPoint) -> Result<bool> {
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = point.params.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let loss = build_full_head_loss(&mut tape, point, &ids)?;
    if tape.min_relu_input_abs().unwrap_or(f64::INFINITY) < RELU_MARGIN_MIN {
        return Ok(false);
    }
    if tape.min_maxpool_margin().unwrap_or(f64::INFINITY) < MAXPOOL_MARGIN_MIN {
        return Ok(false);
    }
    let grads = tape.backward(loss)?;
    for &id in &ids {
        if let Some(g) = grads.wrt(id) {
            for &v in g.data() {
                if v != 0.0 && v.abs() < LIVE_GRAD_FLOOR {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// End-to-end check of the four-term loss on a micro model (C=3, N=2,
/// T=4, 8x8 input, 64-bit, dropout in fixed-mask mode), at tolerance 1e-5.
pub fn check_full_head(seed: u64) -> Result<GradReport> {
    let mut point = None;
    for attempt in 0..64u64 {
        let candidate = draw_test_point(seed.wrapping_add(attempt))?;
        if point_is_well_conditioned(&candidate)? {
            point = Some(candidate);
            break;
        }
    }
    let point = point.ok_or_else(|| {
        Error::GradCheck(
            "no well-conditioned full-head test point found in 64 attempts".to_string(),
        )
    })?;
    let params = point.params.clone();
    gradcheck(
        move |tape, ids| build_full_head_loss(tape, &point, ids),
        &params,
        OP_STEP,
        FULL_HEAD_TOL,
    )
}
