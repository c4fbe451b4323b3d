//! Model assembly: parameter set, initialization, ablation variants, and
//! the whole-clip forward pass in 2D and 3D modes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::backbone::{self, BackboneConfig, Mode, SampleMode};
use crate::error::{Error, Result};
use crate::head::{self, BranchLogitIds, DropoutCtx, FilterSource, HeadConfig, LossBreakdown};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

/// Ablation variants of Table-1 shape: global branch only, plus the
/// discriminative filters on the shared stage-5 volume, plus the local
/// branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Gb,
    GbDf,
    GbDfLb,
}

impl Variant {
    pub fn filter_source(self) -> Option<FilterSource> {
        match self {
            Variant::Gb => None,
            Variant::GbDf => Some(FilterSource::Stage5Global),
            Variant::GbDfLb => Some(FilterSource::LocalBranch),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Gb => write!(f, "gb"),
            Variant::GbDf => write!(f, "gb+df"),
            Variant::GbDfLb => write!(f, "gb+df+lb"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gb" => Ok(Variant::Gb),
            "gb+df" => Ok(Variant::GbDf),
            "gb+df+lb" => Ok(Variant::GbDfLb),
            other => Err(Error::Config {
                key: "variant".to_string(),
                detail: format!("unknown variant '{other}' (expected gb, gb+df, gb+df+lb)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub variant: Variant,
}

impl ModelConfig {
    /// Desk-scale default: 3D mode, 32x32x8 clips.
    pub fn desk(classes: usize) -> Self {
        ModelConfig {
            backbone: BackboneConfig::default(),
            head: HeadConfig {
                classes,
                filters_per_class: 5,
                local5_width: 48,
                skip_projection: true,
                dropout: 0.5,
            },
            variant: Variant::GbDfLb,
        }
    }

    /// Tiny 3D model for gradient checking: T=4, 8x8 frames, narrow stages.
    pub fn micro_3d(classes: usize, filters_per_class: usize) -> Self {
        ModelConfig {
            backbone: BackboneConfig {
                mode: Mode::ThreeD,
                segments: 3,
                frames: 4,
                height: 8,
                width: 8,
                stem_width: 2,
                stage_widths: [2, 3, 3, 4],
                stage5_width: 4,
                temporal_stride: 2,
                downsample_stages: vec![4, 5],
                residual: false,
            },
            head: HeadConfig {
                classes,
                filters_per_class,
                local5_width: 4,
                skip_projection: true,
                dropout: 0.5,
            },
            variant: Variant::GbDfLb,
        }
    }

    /// Channel width of the volume the filter bank consumes.
    pub fn filter_input_width(&self) -> usize {
        match self.variant {
            Variant::GbDf => self.backbone.stage5_width,
            _ => self.head.local5_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        self.backbone.plan()?;
        if self.variant == Variant::GbDfLb
            && !self.head.skip_projection
            && self.backbone.stage4_width() != self.head.local5_width
        {
            return Err(Error::invalid(
                "model",
                format!(
                    "skip projection disabled but stage-4 width {} differs from local width {}",
                    self.backbone.stage4_width(),
                    self.head.local5_width
                ),
            ));
        }
        Ok(())
    }
}

/// Ordered, name-addressed parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) {
        debug_assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    /// Replaces a parameter's values; the shape must stay fixed.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let &i = self.index.get(name).ok_or_else(|| {
            Error::invalid("params", format!("unknown parameter '{name}'"))
        })?;
        if self.tensors[i].shape() != tensor.shape() {
            return Err(Error::shape(
                "params",
                format!(
                    "parameter '{name}' has shape {:?}, replacement {:?}",
                    self.tensors[i].shape(),
                    tensor.shape()
                ),
            ));
        }
        self.tensors[i] = tensor;
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    pub(crate) fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape leaf ids of every parameter, for one forward pass.
pub struct ParamIds {
    map: HashMap<String, ValueId>,
}

impl ParamIds {
    pub fn from_map(map: HashMap<String, ValueId>) -> Self {
        ParamIds { map }
    }

    pub fn id(&self, name: &str) -> ValueId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' not registered on this tape"))
    }

    pub fn get(&self, name: &str) -> Option<ValueId> {
        self.map.get(name).copied()
    }
}

/// Registers all parameters as tape leaves.
pub fn leaf_params<T: Scalar>(tape: &mut Tape<T>, params: &Params<T>) -> ParamIds {
    let mut map = HashMap::with_capacity(params.len());
    for (name, tensor) in params.iter() {
        map.insert(name.to_string(), tape.leaf(tensor.clone()));
    }
    ParamIds { map }
}

fn name_stream(name: &str) -> u64 {
    // FNV-1a; parameter init streams keyed by name so ordering changes
    // cannot silently reseed everything
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Builds the full parameter set for a configuration.
///
/// Conv weights use He-normal init (std `sqrt(2/fan_in)`), classifier heads
/// and the filter bank use normal(0, 0.01); all biases start at zero. Every
/// variant creates every parameter, so ablations only change which ones the
/// forward graph touches.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Params<T>> {
    cfg.validate()?;
    let root = Rng::new(seed);
    let mut params = Params::new();

    let conv = |params: &mut Params<T>, name: &str, spec: &crate::ops::conv::ConvSpec| -> Result<()> {
        let (kt, kh, kw) = spec.kernel;
        let fan_in = (spec.c_in * kt * kh * kw) as f64;
        let std = (2.0 / fan_in).sqrt();
        let shape = [spec.c_out, spec.c_in, kt, kh, kw];
        let wname = format!("{name}.w");
        let mut stream = root.stream(name_stream(&wname));
        params.insert(&wname, stream.normal_tensor(&shape, 0.0, std)?);
        params.insert(&format!("{name}.b"), Tensor::zeros(vec![spec.c_out])?);
        Ok(())
    };

    let bb = &cfg.backbone;
    conv(&mut params, "stem", &bb.stem_spec())?;
    for stage in 1..=4 {
        let (c0, c1, proj) = bb.stage_specs(stage);
        conv(&mut params, &format!("stage{stage}.conv0"), &c0)?;
        conv(&mut params, &format!("stage{stage}.conv1"), &c1)?;
        if let Some(p) = proj {
            conv(&mut params, &format!("stage{stage}.proj"), &p)?;
        }
    }
    let (g0, g1, gproj) = bb.stage_specs(5);
    conv(&mut params, "stage5g.conv0", &g0)?;
    conv(&mut params, "stage5g.conv1", &g1)?;
    if let Some(p) = gproj {
        conv(&mut params, "stage5g.proj", &p)?;
    }

    // local stage 5: same topology, its own width, always randomly initialized
    let (mut l0, mut l1, mut lproj) = bb.stage_specs(5);
    l0.c_out = cfg.head.local5_width;
    l1.c_in = cfg.head.local5_width;
    l1.c_out = cfg.head.local5_width;
    if let Some(p) = lproj.as_mut() {
        p.c_out = cfg.head.local5_width;
    }
    conv(&mut params, "stage5l.conv0", &l0)?;
    conv(&mut params, "stage5l.conv1", &l1)?;
    if let Some(p) = lproj {
        conv(&mut params, "stage5l.proj", &p)?;
    }

    if cfg.head.skip_projection {
        let spec = crate::ops::conv::ConvSpec::pointwise(bb.stage4_width(), cfg.head.local5_width);
        conv(&mut params, "skip", &spec)?;
    }

    let nc = cfg.head.filter_count();
    let c_f = cfg.filter_input_width();
    let mut stream = root.stream(name_stream("fb.w"));
    params.insert("fb.w", stream.normal_tensor(&[nc, c_f], 0.0, 0.01)?);
    params.insert("fb.b", Tensor::zeros(vec![nc])?);

    // classifier heads start at 1/sqrt(fan_in) so the trunk receives loss
    // gradient from the first step
    let mut stream = root.stream(name_stream("head_avg.w"));
    let std_avg = (1.0 / bb.stage5_width as f64).sqrt();
    params.insert(
        "head_avg.w",
        stream.normal_tensor(&[bb.stage5_width, cfg.head.classes], 0.0, std_avg)?,
    );
    params.insert("head_avg.b", Tensor::zeros(vec![cfg.head.classes])?);
    let mut stream = root.stream(name_stream("head_max.w"));
    let std_max = (1.0 / nc as f64).sqrt();
    params.insert(
        "head_max.w",
        stream.normal_tensor(&[nc, cfg.head.classes], 0.0, std_max)?,
    );
    params.insert("head_max.b", Tensor::zeros(vec![cfg.head.classes])?);

    Ok(params)
}

/// Logit ids of one clip forward.
#[derive(Debug, Clone, Copy)]
pub enum Logits {
    /// Global branch only; the combined prediction is `z_avg` itself.
    Gb { z_avg: ValueId },
    Full(BranchLogitIds),
}

impl Logits {
    pub fn z_comb(&self) -> ValueId {
        match self {
            Logits::Gb { z_avg } => *z_avg,
            Logits::Full(ids) => ids.z_comb,
        }
    }
}

/// One clip's forward pass: consensus-level logits plus the per-segment
/// filter-bank max responses (one entry in 3D mode) for localization.
pub struct ClipForward {
    pub logits: Logits,
    pub maxvecs: Vec<ValueId>,
    /// Source frame index per segment (2D mode only).
    pub segment_frames: Option<Vec<usize>>,
}

/// Frame selection for 2D mode; ignored in 3D mode.
pub enum Sampler<'a> {
    EvalCenter,
    TrainRandom(&'a mut Rng),
}

pub fn forward_clip<T: Scalar>(
    tape: &mut Tape<T>,
    clip: &Tensor<T>,
    ids: &ParamIds,
    cfg: &ModelConfig,
    dropout: &mut DropoutCtx<'_>,
    sampler: Sampler<'_>,
) -> Result<ClipForward> {
    match cfg.backbone.mode {
        Mode::ThreeD => {
            let input = tape.leaf(clip.clone());
            let feats = backbone::forward(tape, input, ids, &cfg.backbone)?;
            match cfg.variant.filter_source() {
                None => {
                    let z_avg = head::avg_branch(tape, feats.stage5_global, ids, dropout)?;
                    Ok(ClipForward {
                        logits: Logits::Gb { z_avg },
                        maxvecs: Vec::new(),
                        segment_frames: None,
                    })
                }
                Some(source) => {
                    let (logits, maxvec) =
                        head::forward(tape, feats, ids, &cfg.backbone, &cfg.head, source, dropout)?;
                    Ok(ClipForward {
                        logits: Logits::Full(logits),
                        maxvecs: vec![maxvec],
                        segment_frames: None,
                    })
                }
            }
        }
        Mode::TwoD => {
            let frames = clip.shape().get(1).copied().unwrap_or(0);
            let mode = match &sampler {
                Sampler::EvalCenter => SampleMode::EvalCenter,
                Sampler::TrainRandom(_) => SampleMode::TrainRandom,
            };
            let mut fallback = Rng::new(0);
            let rng: &mut Rng = match sampler {
                Sampler::TrainRandom(r) => r,
                Sampler::EvalCenter => &mut fallback,
            };
            let indices = backbone::segment_sample(frames, cfg.backbone.segments, mode, rng)?;

            let mut per_avg = Vec::new();
            let mut per_x = Vec::new();
            let mut per_max = Vec::new();
            let mut maxvecs = Vec::new();
            for &t in &indices {
                let frame = backbone::extract_frame(clip, t)?;
                let input = tape.leaf(frame);
                let feats = backbone::forward(tape, input, ids, &cfg.backbone)?;
                match cfg.variant.filter_source() {
                    None => {
                        per_avg.push(head::avg_branch(tape, feats.stage5_global, ids, dropout)?);
                    }
                    Some(source) => {
                        let (logits, maxvec) = head::forward(
                            tape,
                            feats,
                            ids,
                            &cfg.backbone,
                            &cfg.head,
                            source,
                            dropout,
                        )?;
                        per_avg.push(logits.z_avg);
                        per_x.push(logits.z_xchannel);
                        per_max.push(logits.z_max);
                        maxvecs.push(maxvec);
                    }
                }
            }

            let z_avg = backbone::consensus_on_tape(tape, &per_avg)?;
            let logits = if per_x.is_empty() {
                Logits::Gb { z_avg }
            } else {
                let z_xchannel = backbone::consensus_on_tape(tape, &per_x)?;
                let z_max = backbone::consensus_on_tape(tape, &per_max)?;
                let partial = tape.add(z_avg, z_xchannel)?;
                let z_comb = tape.add(partial, z_max)?;
                Logits::Full(BranchLogitIds {
                    z_avg,
                    z_xchannel,
                    z_max,
                    z_comb,
                })
            };
            Ok(ClipForward {
                logits,
                maxvecs,
                segment_frames: Some(indices),
            })
        }
    }
}

/// Loss of one clip under the variant's active branches.
pub fn clip_loss<T: Scalar>(
    tape: &mut Tape<T>,
    fwd: &ClipForward,
    label: usize,
) -> Result<(ValueId, LossBreakdown<T>)> {
    match &fwd.logits {
        Logits::Gb { z_avg } => {
            let l = tape.softmax_xent(*z_avg, label)?;
            let v = tape.value(l).item();
            Ok((
                l,
                LossBreakdown {
                    total: v,
                    comb: T::zero(),
                    avg: v,
                    max: T::zero(),
                    xchannel: T::zero(),
                },
            ))
        }
        Logits::Full(branch) => head::total_loss(tape, branch, label),
    }
}
