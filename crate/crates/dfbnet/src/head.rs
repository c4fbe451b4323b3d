//! The three-branch classification head: global-average branch (`z_avg`),
//! discriminative filter bank with cross-channel pooling (`z_xchannel`),
//! dense classifier over max responses (`z_max`), combined prediction
//! (`z_comb = z_avg + z_xchannel + z_max`), and the four-term loss.
//!
//! The filter bank is `N` pointwise filters per class applied to post-relu
//! features and globally max-pooled; filters `[c*N, (c+1)*N)` belong to
//! class `c`, a layout both cross-channel pooling and localization rely on.
//! The local branch duplicates stage 5 with its own randomly initialized
//! weights, upsamples 2x bilinearly and adds a (projected) stage-4 skip.

use crate::backbone;
use crate::error::{Error, Result};
use crate::model::ParamIds;
use crate::ops::conv::ConvSpec;
use crate::ops::dropout::DropoutMode;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    /// Class count.
    pub classes: usize,
    /// Filters per class.
    pub filters_per_class: usize,
    /// Channel width of the duplicated local stage 5.
    pub local5_width: usize,
    /// Project the stage-4 skip to `local5_width` with a pointwise conv.
    /// Required when the widths differ.
    pub skip_projection: bool,
    pub dropout: f64,
}

impl HeadConfig {
    pub fn filter_count(&self) -> usize {
        self.classes * self.filters_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid(
                "head",
                format!("need at least 2 classes, got {}", self.classes),
            ));
        }
        if self.filters_per_class < 1 {
            return Err(Error::invalid(
                "head",
                format!("need at least 1 filter per class, got {}", self.filters_per_class),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(
                "head",
                format!("dropout must be in [0, 1), got {}", self.dropout),
            ));
        }
        Ok(())
    }
}

/// Dropout behavior for one forward pass. Fixed-mask mode replays supplied
/// masks in call order so gradcheck sees a deterministic graph.
pub enum DropoutCtx<'a> {
    Train { p: f64, rng: &'a mut Rng },
    Eval,
    Fixed { p: f64, masks: &'a [Vec<bool>], cursor: usize },
}

impl<'a> DropoutCtx<'a> {
    pub fn fixed(p: f64, masks: &'a [Vec<bool>]) -> Self {
        DropoutCtx::Fixed { p, masks, cursor: 0 }
    }

    fn apply<T: Scalar>(&mut self, tape: &mut Tape<T>, x: ValueId) -> Result<ValueId> {
        match self {
            DropoutCtx::Eval => tape.dropout(x, DropoutMode::Eval),
            DropoutCtx::Train { p, rng } => tape.dropout(x, DropoutMode::Train { p: *p, rng }),
            DropoutCtx::Fixed { p, masks, cursor } => {
                let mask = masks.get(*cursor).ok_or_else(|| {
                    Error::invalid(
                        "dropout",
                        format!("fixed-mask mode ran out of masks at call {}", *cursor),
                    )
                })?;
                *cursor += 1;
                tape.dropout(x, DropoutMode::FixedMask { p: *p, mask })
            }
        }
    }
}

/// The four logit vectors of one head pass. The filter-bank max-pool output
/// travels separately (its argmax coordinates live on the tape node).
#[derive(Debug, Clone, Copy)]
pub struct BranchLogitIds {
    pub z_avg: ValueId,
    pub z_xchannel: ValueId,
    pub z_max: ValueId,
    pub z_comb: ValueId,
}

/// Global-average branch: dense classifier over the dropout-regularized
/// global average pool of the stage-5 volume.
pub fn avg_branch<T: Scalar>(
    tape: &mut Tape<T>,
    stage5_global: ValueId,
    ids: &ParamIds,
    dropout: &mut DropoutCtx<'_>,
) -> Result<ValueId> {
    let pooled = tape.global_avg_pool(stage5_global)?;
    let pooled = dropout.apply(tape, pooled)?;
    tape.dense(pooled, ids.id("head_avg.w"), ids.id("head_avg.b"))
}

/// Local detail branch: duplicated stage 5 on stage-4 features, bilinear 2x
/// upsample back to stage-4 resolution, plus a (projected) skip.
pub fn local_branch<T: Scalar>(
    tape: &mut Tape<T>,
    stage4: ValueId,
    ids: &ParamIds,
    backbone_cfg: &backbone::BackboneConfig,
    head_cfg: &HeadConfig,
) -> Result<ValueId> {
    let mut specs = backbone_cfg.stage_specs(5);
    specs.0.c_out = head_cfg.local5_width;
    specs.1.c_in = head_cfg.local5_width;
    specs.1.c_out = head_cfg.local5_width;
    if let Some(p) = specs.2.as_mut() {
        p.c_out = head_cfg.local5_width;
    }
    let local5 = backbone::run_stage(tape, stage4, ids, "stage5l", specs, backbone_cfg.residual)?;
    let up = tape.upsample_bilinear2x(local5)?;

    let stage4_width = backbone_cfg.stage4_width();
    let skip = if head_cfg.skip_projection {
        let spec = ConvSpec::pointwise(stage4_width, head_cfg.local5_width);
        tape.conv(stage4, ids.id("skip.w"), ids.id("skip.b"), spec)?
    } else {
        if stage4_width != head_cfg.local5_width {
            return Err(Error::shape(
                "local_branch",
                format!(
                    "skip projection disabled but stage-4 width {stage4_width} differs from \
                     local width {}",
                    head_cfg.local5_width
                ),
            ));
        }
        stage4
    };
    tape.add(up, skip)
}

/// Pointwise filter bank followed by global max pooling: `N*C` max responses.
pub fn filter_bank<T: Scalar>(
    tape: &mut Tape<T>,
    features: ValueId,
    ids: &ParamIds,
    head_cfg: &HeadConfig,
) -> Result<ValueId> {
    let c_f = tape.value(features).shape()[0];
    let nc = head_cfg.filter_count();
    let w2 = ids.id("fb.w");
    let w5 = tape.reshape(w2, vec![nc, c_f, 1, 1, 1])?;
    let spec = ConvSpec::pointwise(c_f, nc);
    let responses = tape.conv(features, w5, ids.id("fb.b"), spec)?;
    tape.global_max_pool(responses)
}

/// Which feature volume feeds the discriminative filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterSource {
    /// Shared global stage-5 volume (the DF-only ablation).
    Stage5Global,
    /// Local detail branch output at stage-4 resolution (full model).
    LocalBranch,
}

/// Full head pass over one clip's (or one segment's) feature volumes.
/// Returns the logits and the filter-bank max-pool id.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    feats: backbone::StageIds,
    ids: &ParamIds,
    backbone_cfg: &backbone::BackboneConfig,
    head_cfg: &HeadConfig,
    source: FilterSource,
    dropout: &mut DropoutCtx<'_>,
) -> Result<(BranchLogitIds, ValueId)> {
    let z_avg = avg_branch(tape, feats.stage5_global, ids, dropout)?;

    let filter_feat = match source {
        FilterSource::Stage5Global => feats.stage5_global,
        FilterSource::LocalBranch => {
            local_branch(tape, feats.stage4, ids, backbone_cfg, head_cfg)?
        }
    };
    let maxvec = filter_bank(tape, filter_feat, ids, head_cfg)?;
    let z_xchannel =
        tape.cross_channel_pool(maxvec, head_cfg.filters_per_class, head_cfg.classes)?;
    let dropped = dropout.apply(tape, maxvec)?;
    let z_max = tape.dense(dropped, ids.id("head_max.w"), ids.id("head_max.b"))?;

    let partial = tape.add(z_avg, z_xchannel)?;
    let z_comb = tape.add(partial, z_max)?;
    Ok((
        BranchLogitIds {
            z_avg,
            z_xchannel,
            z_max,
            z_comb,
        },
        maxvec,
    ))
}

/// Loss component values for logging; `total == comb + avg + max + xchannel`
/// bit-exactly in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub total: T,
    pub comb: T,
    pub avg: T,
    pub max: T,
    pub xchannel: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn into_f64(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            total: self.total.into_f64(),
            comb: self.comb.into_f64(),
            avg: self.avg.into_f64(),
            max: self.max.into_f64(),
            xchannel: self.xchannel.into_f64(),
        }
    }
}

/// Four-term loss: softmax cross-entropy on each branch plus the combined
/// logits, summed as `comb + avg + max + xchannel`.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: &BranchLogitIds,
    label: usize,
) -> Result<(ValueId, LossBreakdown<T>)> {
    let l_comb = tape.softmax_xent(logits.z_comb, label)?;
    let l_avg = tape.softmax_xent(logits.z_avg, label)?;
    let l_max = tape.softmax_xent(logits.z_max, label)?;
    let l_xch = tape.softmax_xent(logits.z_xchannel, label)?;
    let s1 = tape.add(l_comb, l_avg)?;
    let s2 = tape.add(s1, l_max)?;
    let total = tape.add(s2, l_xch)?;
    Ok((
        total,
        LossBreakdown {
            total: tape.value(total).item(),
            comb: tape.value(l_comb).item(),
            avg: tape.value(l_avg).item(),
            max: tape.value(l_max).item(),
            xchannel: tape.value(l_xch).item(),
        },
    ))
}

/// Argmax of the combined logits; ties break toward the lowest class index.
pub fn predict<T: Scalar>(z_comb: &Tensor<T>) -> usize {
    let d = z_comb.data();
    let mut best = 0usize;
    for (i, &v) in d.iter().enumerate().skip(1) {
        if v > d[best] {
            best = i;
        }
    }
    best
}
