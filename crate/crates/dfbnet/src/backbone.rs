//! Stage-based CNN producing the stage-4 feature volume and the
//! global-branch stage-5 volume, in per-frame 2D (segment sampled) and
//! spatio-temporal 3D modes.
//!
//! Stages are plain conv-relu blocks (two convolutions each); a residual
//! identity-add variant is config-selectable. Downsampling strides sit on
//! the 3x3 (3x3x3) convolutions, the temporal stride only in the stem.

use crate::error::{Error, Result};
use crate::model::ParamIds;
use crate::ops::conv::ConvSpec;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoD,
    ThreeD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub mode: Mode,
    /// Segments sampled per clip in 2D mode.
    pub segments: usize,
    /// Input clip extents.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub stem_width: usize,
    pub stage_widths: [usize; 4],
    pub stage5_width: usize,
    /// Temporal stride of the stem convolution (3D mode).
    pub temporal_stride: usize,
    /// Stages (numbered 1-5) whose first convolution halves the spatial
    /// resolution.
    pub downsample_stages: Vec<usize>,
    pub residual: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            mode: Mode::ThreeD,
            segments: 3,
            frames: 8,
            height: 32,
            width: 32,
            stem_width: 8,
            stage_widths: [8, 16, 24, 32],
            stage5_width: 48,
            temporal_stride: 2,
            downsample_stages: vec![2, 3, 4, 5],
            residual: false,
        }
    }
}

/// Per-stage output extents and the cumulative input-space stride of the
/// stage-4 and stage-5 volumes (used by localization).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    /// (t, h, w) after the stem; t is 1 in 2D mode (per frame).
    pub after_stem: (usize, usize, usize),
    /// (t, h, w) after stages 1..=5.
    pub stages: [(usize, usize, usize); 5],
    pub stage4_stride: (usize, usize, usize),
    pub stage5_stride: (usize, usize, usize),
}

impl BackboneConfig {
    pub fn stage4_width(&self) -> usize {
        self.stage_widths[3]
    }

    fn temporal(&self) -> bool {
        self.mode == Mode::ThreeD
    }

    fn spatial_stride(&self, stage: usize) -> usize {
        if self.downsample_stages.contains(&stage) {
            2
        } else {
            1
        }
    }

    pub fn stage_width(&self, stage: usize) -> usize {
        match stage {
            1..=4 => self.stage_widths[stage - 1],
            5 => self.stage5_width,
            _ => unreachable!("stages are numbered 1-5"),
        }
    }

    fn stage_in_width(&self, stage: usize) -> usize {
        match stage {
            1 => self.stem_width,
            2..=5 => self.stage_widths[stage - 2],
            _ => unreachable!("stages are numbered 1-5"),
        }
    }

    pub fn stem_spec(&self) -> ConvSpec {
        ConvSpec::k3(
            3,
            self.stem_width,
            self.temporal(),
            (
                if self.temporal() { self.temporal_stride } else { 1 },
                1,
                1,
            ),
        )
    }

    /// (first conv, second conv, optional residual projection) of a stage.
    pub fn stage_specs(&self, stage: usize) -> (ConvSpec, ConvSpec, Option<ConvSpec>) {
        let c_in = self.stage_in_width(stage);
        let c_out = self.stage_width(stage);
        let s = self.spatial_stride(stage);
        let conv0 = ConvSpec::k3(c_in, c_out, self.temporal(), (1, s, s));
        let conv1 = ConvSpec::k3(c_out, c_out, self.temporal(), (1, 1, 1));
        let proj = if self.residual && (c_in != c_out || s != 1) {
            Some(ConvSpec {
                c_in,
                c_out,
                kernel: (1, 1, 1),
                stride: (1, s, s),
                pad: (0, 0, 0),
            })
        } else {
            None
        };
        (conv0, conv1, proj)
    }

    /// Validates the stage arithmetic and returns per-stage extents.
    pub fn plan(&self) -> Result<StagePlan> {
        let temporal = self.temporal();
        let t_in = if temporal { self.frames } else { 1 };
        let stem = self.stem_spec();
        let mut t = ConvSpec::out_extent(t_in, stem.kernel.0, stem.stride.0, stem.pad.0)?;
        let mut h = ConvSpec::out_extent(self.height, 3, 1, 1)?;
        let mut w = ConvSpec::out_extent(self.width, 3, 1, 1)?;
        let after_stem = (t, h, w);
        let mut stages = [(0, 0, 0); 5];
        let mut cum = (if temporal { self.temporal_stride } else { 1 }, 1usize, 1usize);
        let mut stage4_stride = cum;
        for stage in 1..=5 {
            let (conv0, _, _) = self.stage_specs(stage);
            t = ConvSpec::out_extent(t, conv0.kernel.0, conv0.stride.0, conv0.pad.0)?;
            h = ConvSpec::out_extent(h, 3, conv0.stride.1, 1)?;
            w = ConvSpec::out_extent(w, 3, conv0.stride.2, 1)?;
            stages[stage - 1] = (t, h, w);
            cum = (
                cum.0 * conv0.stride.0,
                cum.1 * conv0.stride.1,
                cum.2 * conv0.stride.2,
            );
            if stage == 4 {
                stage4_stride = cum;
            }
        }
        let (h4, w4) = (stages[3].1, stages[3].2);
        let (h5, w5) = (stages[4].1, stages[4].2);
        if h5 * 2 != h4 || w5 * 2 != w4 {
            return Err(Error::invalid(
                "backbone",
                format!(
                    "stage-5 extent ({h5}, {w5}) must be exactly half of stage-4 ({h4}, {w4}); \
                     adjust input extents or downsample_stages"
                ),
            ));
        }
        Ok(StagePlan {
            after_stem,
            stages,
            stage4_stride,
            stage5_stride: cum,
        })
    }
}

/// Frame sampling for 2D mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    TrainRandom,
    EvalCenter,
}

/// Divides `num_frames` evenly into `segments` and picks one index per
/// segment: uniform within the segment when training, the segment center at
/// eval time.
pub fn segment_sample(
    num_frames: usize,
    segments: usize,
    mode: SampleMode,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if segments == 0 || num_frames < segments {
        return Err(Error::invalid(
            "segment_sample",
            format!("need num_frames >= segments >= 1, got {num_frames} frames, {segments} segments"),
        ));
    }
    let mut out = Vec::with_capacity(segments);
    for i in 0..segments {
        let lo = i * num_frames / segments;
        let hi = (i + 1) * num_frames / segments;
        out.push(match mode {
            SampleMode::EvalCenter => (lo + hi) / 2,
            SampleMode::TrainRandom => lo + rng.below(hi - lo),
        });
    }
    Ok(out)
}

/// Arithmetic mean of equally sized vectors.
pub fn consensus_average<T: Scalar>(vectors: &[Tensor<T>]) -> Result<Tensor<T>> {
    let Some(first) = vectors.first() else {
        return Err(Error::invalid("consensus_average", "empty segment list"));
    };
    let mut acc = first.clone();
    for v in &vectors[1..] {
        acc = acc.add(v)?;
    }
    Ok(acc.scale(T::from_f64(1.0 / vectors.len() as f64)))
}

/// Tape form of `consensus_average` (sum in segment order, then scale).
pub fn consensus_on_tape<T: Scalar>(tape: &mut Tape<T>, ids: &[ValueId]) -> Result<ValueId> {
    let Some(&first) = ids.first() else {
        return Err(Error::invalid("consensus_average", "empty segment list"));
    };
    let mut acc = first;
    for &id in &ids[1..] {
        acc = tape.add(acc, id)?;
    }
    Ok(tape.scale(acc, T::from_f64(1.0 / ids.len() as f64)))
}

/// Copies frame `t` of a `[3, T, H, W]` clip as a `[3, H, W]` tensor.
pub fn extract_frame<T: Scalar>(clip: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
    let [c, frames, h, w] = clip.shape() else {
        return Err(Error::shape(
            "extract_frame",
            format!("expected [C, T, H, W], got {:?}", clip.shape()),
        ));
    };
    let (c, frames, h, w) = (*c, *frames, *h, *w);
    if t >= frames {
        return Err(Error::invalid(
            "extract_frame",
            format!("frame {t} out of range for {frames}"),
        ));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(c * plane);
    for ch in 0..c {
        let base = (ch * frames + t) * plane;
        data.extend_from_slice(&clip.data()[base..base + plane]);
    }
    Tensor::new(vec![c, h, w], data)
}

fn conv_block<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    ids: &ParamIds,
    name: &str,
    spec: ConvSpec,
) -> Result<ValueId> {
    let w = ids.id(&format!("{name}.w"));
    let b = ids.id(&format!("{name}.b"));
    let y = tape.conv(x, w, b, spec)?;
    Ok(tape.relu(y))
}

/// One two-convolution stage, optionally residual.
pub(crate) fn run_stage<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    ids: &ParamIds,
    prefix: &str,
    specs: (ConvSpec, ConvSpec, Option<ConvSpec>),
    residual: bool,
) -> Result<ValueId> {
    let (conv0, conv1, proj) = specs;
    let h = conv_block(tape, x, ids, &format!("{prefix}.conv0"), conv0)?;
    if !residual {
        return conv_block(tape, h, ids, &format!("{prefix}.conv1"), conv1);
    }
    let w1 = ids.id(&format!("{prefix}.conv1.w"));
    let b1 = ids.id(&format!("{prefix}.conv1.b"));
    let pre = tape.conv(h, w1, b1, conv1)?;
    let skip = match proj {
        Some(pspec) => {
            let pw = ids.id(&format!("{prefix}.proj.w"));
            let pb = ids.id(&format!("{prefix}.proj.b"));
            tape.conv(x, pw, pb, pspec)?
        }
        None => x,
    };
    let sum = tape.add(pre, skip)?;
    Ok(tape.relu(sum))
}

/// Feature volumes at the branch point: stage 4 and the global stage 5.
#[derive(Debug, Clone, Copy)]
pub struct StageIds {
    pub stage4: ValueId,
    pub stage5_global: ValueId,
}

/// Runs stem and stages 1-5 (global path) for one clip (3D mode) or one
/// frame (2D mode).
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    input: ValueId,
    ids: &ParamIds,
    cfg: &BackboneConfig,
) -> Result<StageIds> {
    let stem = tape.conv(input, ids.id("stem.w"), ids.id("stem.b"), cfg.stem_spec())?;
    let mut x = tape.relu(stem);
    for stage in 1..=4 {
        x = run_stage(
            tape,
            x,
            ids,
            &format!("stage{stage}"),
            cfg.stage_specs(stage),
            cfg.residual,
        )?;
    }
    let stage4 = x;
    let stage5_global = run_stage(
        tape,
        stage4,
        ids,
        "stage5g",
        cfg.stage_specs(5),
        cfg.residual,
    )?;
    Ok(StageIds {
        stage4,
        stage5_global,
    })
}
