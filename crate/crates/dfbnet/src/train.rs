//! SGD training loop: momentum + weight decay, stepwise LR schedule,
//! deterministic shuffling and per-clip RNG streams, per-epoch metrics.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::backbone::Mode;
use crate::config::{Kv, KvWriter};
use crate::error::{Error, Result};
use crate::eval;
use crate::head::DropoutCtx;
use crate::model::{self, ModelConfig, Params, Sampler, Variant};
use crate::rng::Rng;
use crate::scalar::{Dtype, Scalar};
use crate::synth::{self, ClipManifest};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub dtype: Dtype,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs at whose start the learning rate drops by 10x (at most 3).
    pub lr_milestones: Vec<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hflip: bool,
    pub dropout: f64,
    // model shape
    pub mode: Mode,
    pub segments: usize,
    pub classes: usize,
    pub filters_per_class: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub stem_width: usize,
    pub stage_widths: [usize; 4],
    pub stage5_width: usize,
    pub local5_width: usize,
    pub temporal_stride: usize,
    pub downsample_stages: Vec<usize>,
    pub residual: bool,
    pub skip_projection: bool,
}

/// 10x drops at 50%, 75% and 90% of the epoch budget.
pub fn default_milestones(epochs: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [epochs / 2, epochs * 3 / 4, epochs * 9 / 10]
        .into_iter()
        .filter(|&m| m > 0 && m < epochs)
        .collect();
    out.dedup();
    out
}

impl Default for TrainConfig {
    fn default() -> Self {
        let bb = crate::backbone::BackboneConfig::default();
        TrainConfig {
            variant: Variant::GbDfLb,
            dtype: Dtype::F32,
            seed: 0,
            epochs: 12,
            batch_size: 8,
            lr: 0.01,
            lr_milestones: default_milestones(12),
            momentum: 0.9,
            weight_decay: 1e-4,
            hflip: false,
            dropout: 0.5,
            mode: bb.mode,
            segments: bb.segments,
            classes: 8,
            filters_per_class: 5,
            frames: bb.frames,
            height: bb.height,
            width: bb.width,
            stem_width: bb.stem_width,
            stage_widths: bb.stage_widths,
            stage5_width: bb.stage5_width,
            local5_width: bb.stage5_width,
            temporal_stride: bb.temporal_stride,
            downsample_stages: bb.downsample_stages,
            residual: false,
            skip_projection: true,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            backbone: crate::backbone::BackboneConfig {
                mode: self.mode,
                segments: self.segments,
                frames: self.frames,
                height: self.height,
                width: self.width,
                stem_width: self.stem_width,
                stage_widths: self.stage_widths,
                stage5_width: self.stage5_width,
                temporal_stride: self.temporal_stride,
                downsample_stages: self.downsample_stages.clone(),
                residual: self.residual,
            },
            head: crate::head::HeadConfig {
                classes: self.classes,
                filters_per_class: self.filters_per_class,
                local5_width: self.local5_width,
                skip_projection: self.skip_projection,
                dropout: self.dropout,
            },
            variant: self.variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config {
                key: "lr".to_string(),
                detail: format!("must be positive, got {}", self.lr),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::Config {
                key: "batch_size".to_string(),
                detail: "must be at least 1".to_string(),
            });
        }
        if self.lr_milestones.len() > 3 {
            return Err(Error::Config {
                key: "lr_milestones".to_string(),
                detail: format!("at most 3 reductions, got {}", self.lr_milestones.len()),
            });
        }
        if !self.lr_milestones.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config {
                key: "lr_milestones".to_string(),
                detail: format!("must be strictly increasing, got {:?}", self.lr_milestones),
            });
        }
        if let Some(&m) = self.lr_milestones.last() {
            if m >= self.epochs.max(1) {
                return Err(Error::Config {
                    key: "lr_milestones".to_string(),
                    detail: format!("milestone {m} is past the last epoch"),
                });
            }
        }
        self.model_config().validate()
    }

    pub fn to_kv_string(&self) -> String {
        let mut w = KvWriter::new("dfbnet train config");
        w.push("variant", self.variant);
        w.push("dtype", self.dtype);
        w.push("seed", self.seed);
        w.push("epochs", self.epochs);
        w.push("batch_size", self.batch_size);
        w.push("lr", self.lr);
        w.push_list("lr_milestones", &self.lr_milestones);
        w.push("momentum", self.momentum);
        w.push("weight_decay", self.weight_decay);
        w.push("hflip", self.hflip);
        w.push("dropout", self.dropout);
        w.push("mode", match self.mode {
            Mode::TwoD => "2d",
            Mode::ThreeD => "3d",
        });
        w.push("segments", self.segments);
        w.push("classes", self.classes);
        w.push("filters_per_class", self.filters_per_class);
        w.push("frames", self.frames);
        w.push("height", self.height);
        w.push("width", self.width);
        w.push("stem_width", self.stem_width);
        w.push_list("stage_widths", &self.stage_widths);
        w.push("stage5_width", self.stage5_width);
        w.push("local5_width", self.local5_width);
        w.push("temporal_stride", self.temporal_stride);
        w.push_list("downsample_stages", &self.downsample_stages);
        w.push("residual", self.residual);
        w.push("skip_projection", self.skip_projection);
        w.into_string()
    }

    pub fn from_kv_string(text: &str, origin: &str) -> Result<Self> {
        let mut kv = Kv::parse(text, origin)?;
        let mode = match kv.take("mode")?.as_str() {
            "2d" => Mode::TwoD,
            "3d" => Mode::ThreeD,
            other => {
                return Err(Error::Config {
                    key: "mode".to_string(),
                    detail: format!("expected 2d or 3d, got '{other}'"),
                })
            }
        };
        let dtype = match kv.take("dtype")?.as_str() {
            "f32" => Dtype::F32,
            "f64" => Dtype::F64,
            other => {
                return Err(Error::Config {
                    key: "dtype".to_string(),
                    detail: format!("expected f32 or f64, got '{other}'"),
                })
            }
        };
        let stage_widths_v: Vec<usize> = kv.take_list("stage_widths")?;
        let stage_widths: [usize; 4] = stage_widths_v.as_slice().try_into().map_err(|_| {
            Error::Config {
                key: "stage_widths".to_string(),
                detail: format!("need exactly 4 widths, got {}", stage_widths_v.len()),
            }
        })?;
        let cfg = TrainConfig {
            variant: kv.take("variant")?.parse()?,
            dtype,
            seed: kv.take_parse("seed")?,
            epochs: kv.take_parse("epochs")?,
            batch_size: kv.take_parse("batch_size")?,
            lr: kv.take_parse("lr")?,
            lr_milestones: kv.take_list("lr_milestones")?,
            momentum: kv.take_parse("momentum")?,
            weight_decay: kv.take_parse("weight_decay")?,
            hflip: kv.take_parse("hflip")?,
            dropout: kv.take_parse("dropout")?,
            mode,
            segments: kv.take_parse("segments")?,
            classes: kv.take_parse("classes")?,
            filters_per_class: kv.take_parse("filters_per_class")?,
            frames: kv.take_parse("frames")?,
            height: kv.take_parse("height")?,
            width: kv.take_parse("width")?,
            stem_width: kv.take_parse("stem_width")?,
            stage_widths,
            stage5_width: kv.take_parse("stage5_width")?,
            local5_width: kv.take_parse("local5_width")?,
            temporal_stride: kv.take_parse("temporal_stride")?,
            downsample_stages: kv.take_list("downsample_stages")?,
            residual: kv.take_parse("residual")?,
            skip_projection: kv.take_parse("skip_projection")?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_kv_string(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Momentum buffers keyed by parameter name.
pub struct SgdState<T> {
    velocity: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new() -> Self {
        SgdState {
            velocity: HashMap::new(),
        }
    }
}

impl<T: Scalar> Default for SgdState<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// One SGD update: `v <- momentum*v + g + wd*p; p <- p - lr*v`.
///
/// Only parameters present in `grads` are touched, so branches outside the
/// active variant stay bit-identical to initialization. Weight decay skips
/// biases.
pub fn sgd_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &HashMap<String, Tensor<T>>,
    lr: T,
    momentum: T,
    weight_decay: T,
    state: &mut SgdState<T>,
) -> Result<()> {
    for name in params.names().to_vec() {
        let Some(grad) = grads.get(&name) else {
            continue;
        };
        let param = params.tensor_mut(&name).expect("name from params");
        if grad.shape() != param.shape() {
            return Err(Error::shape(
                "sgd_step",
                format!(
                    "gradient for '{name}' has shape {:?}, parameter {:?}",
                    grad.shape(),
                    param.shape()
                ),
            ));
        }
        let wd = if name.ends_with(".b") {
            T::zero()
        } else {
            weight_decay
        };
        let velocity = state
            .velocity
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(param.shape().to_vec()).expect("param shape"));
        let v = velocity.data_mut();
        let p = param.data_mut();
        let g = grad.data();
        for i in 0..p.len() {
            v[i] = momentum * v[i] + g[i] + wd * p[i];
            p[i] = p[i] - lr * v[i];
        }
    }
    Ok(())
}

pub struct TrainResult<T> {
    pub params: Params<T>,
    /// One tab-separated line per epoch:
    /// `epoch L_total L_comb L_avg L_max L_xchannel train_top1 val_top1`.
    pub metrics: Vec<String>,
    pub final_train_top1: f64,
    pub final_val_top1: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "epoch\tL_total\tL_comb\tL_avg\tL_max\tL_xchannel\ttrain_top1\tval_top1";

fn load_split<T: Scalar>(
    manifest: &ClipManifest,
    cfg: &TrainConfig,
) -> Result<Vec<(Tensor<T>, usize)>> {
    if manifest.classes != cfg.classes {
        return Err(Error::invalid(
            "train",
            format!(
                "manifest has {} classes, config expects {}",
                manifest.classes, cfg.classes
            ),
        ));
    }
    let expected = vec![3, cfg.frames, cfg.height, cfg.width];
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let clip = synth::load_clip::<T>(manifest, entry)?;
            if clip.shape() != expected.as_slice() {
                return Err(Error::TensorFormat {
                    path: manifest.clip_path(entry).display().to_string(),
                    detail: format!(
                        "clip shape {:?} does not match configured {expected:?}",
                        clip.shape()
                    ),
                });
            }
            Ok((clip, entry.label))
        })
        .collect()
}

struct ClipStep<T> {
    loss: crate::head::LossBreakdown<T>,
    correct: bool,
    grads: HashMap<String, Tensor<T>>,
}

fn run_clip<T: Scalar>(
    clip: &Tensor<T>,
    label: usize,
    params: &Params<T>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    clip_rng: &Rng,
) -> Result<ClipStep<T>> {
    let mut tape = crate::tape::Tape::new();
    let ids = model::leaf_params(&mut tape, params);

    let flipped;
    let input = if cfg.hflip && clip_rng.stream(0).below(2) == 1 {
        flipped = synth::hflip_clip(clip)?;
        &flipped
    } else {
        clip
    };

    let mut dropout_rng = clip_rng.stream(1);
    let mut sample_rng = clip_rng.stream(2);
    let mut dropout = DropoutCtx::Train {
        p: cfg.dropout,
        rng: &mut dropout_rng,
    };
    let fwd = model::forward_clip(
        &mut tape,
        input,
        &ids,
        model_cfg,
        &mut dropout,
        Sampler::TrainRandom(&mut sample_rng),
    )?;
    let (loss_id, loss) = model::clip_loss(&mut tape, &fwd, label)?;

    // Eq-1 identity must hold bit-exactly at every step
    let recomputed = ((loss.comb + loss.avg) + loss.max) + loss.xchannel;
    assert_eq!(
        loss.total.into_f64().to_bits(),
        recomputed.into_f64().to_bits(),
        "loss identity violated"
    );

    let pred = crate::head::predict(tape.value(fwd.logits.z_comb()));
    let mut grads_by_id = tape.backward(loss_id)?;
    let mut grads = HashMap::new();
    for name in params.names() {
        if let Some(g) = grads_by_id.take(ids.id(name)) {
            grads.insert(name.clone(), g);
        }
    }
    Ok(ClipStep {
        loss,
        correct: pred == label,
        grads,
    })
}

pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    train_manifest: &ClipManifest,
    val_manifest: Option<&ClipManifest>,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    let model_cfg = cfg.model_config();
    let train_clips = load_split::<T>(train_manifest, cfg)?;
    let val_clips = match val_manifest {
        Some(m) => Some(load_split::<T>(m, cfg)?),
        None => None,
    };
    if train_clips.is_empty() {
        return Err(Error::invalid("train", "training manifest has no clips"));
    }

    let mut params = model::init_params::<T>(&model_cfg, cfg.seed)?;
    let root = Rng::new(cfg.seed);
    let shuffle_root = root.stream(100);
    let clip_root = root.stream(101);

    let mut state = SgdState::new();
    let mut lr = cfg.lr;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut final_train_top1 = 0.0;
    let mut final_val_top1 = None;

    for epoch in 0..cfg.epochs {
        if cfg.lr_milestones.contains(&epoch) {
            lr *= 0.1;
        }
        let mut order: Vec<usize> = (0..train_clips.len()).collect();
        shuffle_root.stream(epoch as u64).shuffle(&mut order);

        let mut sums = crate::head::LossBreakdown {
            total: 0.0f64,
            comb: 0.0,
            avg: 0.0,
            max: 0.0,
            xchannel: 0.0,
        };
        let mut correct = 0usize;
        let epoch_rng = clip_root.stream(epoch as u64);

        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let steps: Vec<ClipStep<T>> = batch
                .par_iter()
                .map(|&idx| {
                    let (clip, label) = &train_clips[idx];
                    run_clip(
                        clip,
                        *label,
                        &params,
                        &model_cfg,
                        cfg,
                        &epoch_rng.stream(idx as u64),
                    )
                })
                .collect::<Result<_>>()?;

            let inv = T::from_f64(1.0 / batch.len() as f64);
            let mut batch_grads: HashMap<String, Tensor<T>> = HashMap::new();
            for s in &steps {
                if !s.loss.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        detail: format!("non-finite loss {}", s.loss.total),
                    });
                }
                let b = s.loss.into_f64();
                sums.total += b.total;
                sums.comb += b.comb;
                sums.avg += b.avg;
                sums.max += b.max;
                sums.xchannel += b.xchannel;
                correct += s.correct as usize;
                for (name, g) in &s.grads {
                    match batch_grads.get_mut(name) {
                        Some(acc) => *acc = acc.add(g)?,
                        None => {
                            batch_grads.insert(name.clone(), g.clone());
                        }
                    }
                }
            }
            for g in batch_grads.values_mut() {
                *g = g.scale(inv);
            }
            sgd_step(
                &mut params,
                &batch_grads,
                T::from_f64(lr),
                T::from_f64(cfg.momentum),
                T::from_f64(cfg.weight_decay),
                &mut state,
            )?;
        }

        let n = train_clips.len() as f64;
        let train_top1 = correct as f64 / n;
        final_train_top1 = train_top1;
        let val_top1 = match &val_clips {
            Some(clips) => {
                let evals = eval::evaluate_clips(&params, &model_cfg, clips)?;
                let hits = evals.iter().filter(|e| e.pred == e.label).count();
                let acc = hits as f64 / clips.len() as f64;
                final_val_top1 = Some(acc);
                acc.to_string()
            }
            None => "-".to_string(),
        };
        metrics.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            epoch + 1,
            sums.total / n,
            sums.comb / n,
            sums.avg / n,
            sums.max / n,
            sums.xchannel / n,
            train_top1,
            val_top1
        ));
    }

    Ok(TrainResult {
        params,
        metrics,
        final_train_top1,
        final_val_top1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_plain_step() {
        let mut params = Params::<f64>::new();
        params.insert("x.w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let mut grads = HashMap::new();
        grads.insert(
            "x.w".to_string(),
            Tensor::new(vec![2], vec![0.5, 1.0]).unwrap(),
        );
        let mut state = SgdState::new();
        sgd_step(&mut params, &grads, 0.1, 0.0, 0.0, &mut state).unwrap();
        let p = params.get("x.w").unwrap().data();
        assert!((p[0] - 0.95).abs() < 1e-15);
        assert!((p[1] + 2.1).abs() < 1e-15);
    }

    #[test]
    fn sgd_velocity_decays_geometrically_without_grad() {
        let mut params = Params::<f64>::new();
        params.insert("x.w", Tensor::new(vec![1], vec![1.0]).unwrap());
        let mut state = SgdState::new();
        let mut grads = HashMap::new();
        grads.insert("x.w".to_string(), Tensor::new(vec![1], vec![1.0]).unwrap());
        sgd_step(&mut params, &grads, 0.0, 0.9, 0.0, &mut state).unwrap();
        assert_eq!(state.velocity["x.w"].data()[0], 1.0);
        grads.insert("x.w".to_string(), Tensor::new(vec![1], vec![0.0]).unwrap());
        sgd_step(&mut params, &grads, 0.0, 0.9, 0.0, &mut state).unwrap();
        assert!((state.velocity["x.w"].data()[0] - 0.9).abs() < 1e-15);
        sgd_step(&mut params, &grads, 0.0, 0.9, 0.0, &mut state).unwrap();
        assert!((state.velocity["x.w"].data()[0] - 0.81).abs() < 1e-15);
    }

    // Two momentum steps on f(x) = x^2 from x0 = 1 with lr 0.1, momentum 0.9:
    // v1 = 2, x1 = 0.8; v2 = 0.9*2 + 1.6 = 3.4, x2 = 0.8 - 0.34 = 0.46.
    #[test]
    fn sgd_momentum_hand_iterated() {
        let mut params = Params::<f64>::new();
        params.insert("x.w", Tensor::new(vec![1], vec![1.0]).unwrap());
        let mut state = SgdState::new();
        for expect in [0.8, 0.46] {
            let x = params.get("x.w").unwrap().data()[0];
            let mut grads = HashMap::new();
            grads.insert("x.w".to_string(), Tensor::new(vec![1], vec![2.0 * x]).unwrap());
            sgd_step(&mut params, &grads, 0.1, 0.9, 0.0, &mut state).unwrap();
            let got = params.get("x.w").unwrap().data()[0];
            assert!((got - expect).abs() < 1e-12, "got {got}, want {expect}");
        }
    }

    #[test]
    fn weight_decay_skips_biases() {
        let mut params = Params::<f64>::new();
        params.insert("x.w", Tensor::new(vec![1], vec![1.0]).unwrap());
        params.insert("x.b", Tensor::new(vec![1], vec![1.0]).unwrap());
        let mut grads = HashMap::new();
        grads.insert("x.w".to_string(), Tensor::new(vec![1], vec![0.0]).unwrap());
        grads.insert("x.b".to_string(), Tensor::new(vec![1], vec![0.0]).unwrap());
        let mut state = SgdState::new();
        sgd_step(&mut params, &grads, 0.1, 0.0, 0.5, &mut state).unwrap();
        assert!((params.get("x.w").unwrap().data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(params.get("x.b").unwrap().data()[0], 1.0);
    }

    #[test]
    fn untouched_params_stay_bit_identical() {
        let mut params = Params::<f64>::new();
        params.insert("a.w", Tensor::new(vec![1], vec![0.123456789]).unwrap());
        params.insert("b.w", Tensor::new(vec![1], vec![0.5]).unwrap());
        let before = params.get("a.w").unwrap().clone();
        let mut grads = HashMap::new();
        grads.insert("b.w".to_string(), Tensor::new(vec![1], vec![1.0]).unwrap());
        let mut state = SgdState::new();
        sgd_step(&mut params, &grads, 0.1, 0.9, 1e-4, &mut state).unwrap();
        assert_eq!(params.get("a.w").unwrap(), &before);
        assert_ne!(params.get("b.w").unwrap().data()[0], 0.5);
    }

    #[test]
    fn config_round_trips() {
        let cfg = TrainConfig::default();
        let text = cfg.to_kv_string();
        let back = TrainConfig::from_kv_string(&text, "test").unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn config_bad_lr_named() {
        let text = TrainConfig::default()
            .to_kv_string()
            .replace("lr = 0.01", "lr = abc");
        let err = TrainConfig::from_kv_string(&text, "test").unwrap_err().to_string();
        assert!(err.contains("'lr'"), "{err}");
    }

    #[test]
    fn config_missing_classes_named() {
        let text = TrainConfig::default()
            .to_kv_string()
            .replace("classes = 8\n", "");
        let err = TrainConfig::from_kv_string(&text, "test").unwrap_err().to_string();
        assert!(err.contains("classes"), "{err}");
    }

    #[test]
    fn config_unknown_key_named() {
        let mut text = TrainConfig::default().to_kv_string();
        text.push_str("warmup = 3\n");
        let err = TrainConfig::from_kv_string(&text, "test").unwrap_err().to_string();
        assert!(err.contains("warmup"), "{err}");
    }

    #[test]
    fn default_milestone_shape() {
        assert_eq!(default_milestones(12), vec![6, 9, 10]);
        assert_eq!(default_milestones(30), vec![15, 22, 27]);
        assert_eq!(default_milestones(1), Vec::<usize>::new());
    }

    #[test]
    fn milestones_must_increase() {
        let cfg = TrainConfig {
            lr_milestones: vec![5, 5],
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
