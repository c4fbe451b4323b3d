//! Acceptance suite: one test per criterion, each printing an
//! `ACCEPTANCE <criterion>: PASS` line (visible with `--nocapture`).
//!
//! Tests serialize on a global lock because several criteria assert wall
//! times and the heavy ablation fixture is shared.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use dfbnet::backbone::Mode;
use dfbnet::eval;
use dfbnet::gradcheck;
use dfbnet::head::{self, DropoutCtx};
use dfbnet::localize;
use dfbnet::model::{self, ModelConfig, Sampler, Variant};
use dfbnet::rng::Rng;
use dfbnet::synth::{self, SynthConfig};
use dfbnet::tape::Tape;
use dfbnet::tensor::Tensor;
use dfbnet::train::{self, TrainConfig};
use dfbnet::vten;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|p| p.into_inner())
}

fn pass(name: &str) {
    println!("ACCEPTANCE {name}: PASS");
}

// ---------------------------------------------------------------------------
// shared ablation fixture
// ---------------------------------------------------------------------------

/// Dataset for the Table-1-style trend run: 8 classes, 100 train + 30 val
/// clips per class, 8x32x32 clips.
fn ablation_synth_config() -> SynthConfig {
    SynthConfig {
        classes: 8,
        train_clips_per_class: 100,
        val_clips_per_class: 30,
        frames: 8,
        height: 32,
        width: 32,
        patch_frames: 3,
        patch_height: 5,
        patch_width: 5,
        corr_len: 8,
        motif_amplitude: 0.5,
        signal_ratio: 3.0,
        seed: 7,
    }
}

/// Training recipe of the trend run (32-bit mode).
fn ablation_train_config(variant: Variant, seed: u64) -> TrainConfig {
    TrainConfig {
        variant,
        seed,
        epochs: 12,
        batch_size: 8,
        lr: 0.02,
        lr_milestones: vec![6, 9, 10],
        residual: true,
        ..TrainConfig::default()
    }
}

struct Ablation {
    _dir: tempfile::TempDir,
    val_manifest: synth::ClipManifest,
    /// Mean val top-1 over seeds for gb, gb+df, gb+df+lb.
    mean_top1: [f64; 3],
    per_seed: [[f64; 3]; 3],
    full_params: model::Params<f32>,
    full_cfg: ModelConfig,
    elapsed: Duration,
}

static ABLATION: OnceLock<Ablation> = OnceLock::new();

fn ablation() -> &'static Ablation {
    ABLATION.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::TempDir::new().expect("tempdir");
        let (train_manifest, val_manifest) =
            synth::generate(&ablation_synth_config(), dir.path()).expect("synth");

        let variants = [Variant::Gb, Variant::GbDf, Variant::GbDfLb];
        let seeds = [0u64, 1, 2];
        let mut per_seed = [[0.0f64; 3]; 3];
        let mut full_params = None;
        let mut full_cfg = None;
        for (vi, &variant) in variants.iter().enumerate() {
            for (si, &seed) in seeds.iter().enumerate() {
                let cfg = ablation_train_config(variant, seed);
                let result =
                    train::train::<f32>(&cfg, &train_manifest, Some(&val_manifest)).expect("train");
                per_seed[si][vi] = result.final_val_top1.expect("val accuracy");
                eprintln!(
                    "[ablation] variant {variant} seed {seed}: val top-1 {:.4} ({:?} elapsed)",
                    per_seed[si][vi],
                    start.elapsed()
                );
                if variant == Variant::GbDfLb && seed == 0 {
                    full_cfg = Some(cfg.model_config());
                    full_params = Some(result.params);
                }
            }
        }
        let mut mean_top1 = [0.0f64; 3];
        for vi in 0..3 {
            mean_top1[vi] = per_seed.iter().map(|row| row[vi]).sum::<f64>() / seeds.len() as f64;
        }
        Ablation {
            _dir: dir,
            val_manifest,
            mean_top1,
            per_seed,
            full_params: full_params.expect("full model trained"),
            full_cfg: full_cfg.expect("full model config"),
            elapsed: start.elapsed(),
        }
    })
}

// ---------------------------------------------------------------------------
// 1. gradient correctness
// ---------------------------------------------------------------------------

#[test]
fn gradient_correctness() {
    let _guard = serial();
    let start = Instant::now();
    for op in gradcheck::OP_NAMES {
        let report = gradcheck::check_op(op, 0).expect("op gradcheck");
        assert!(
            report.pass() && report.max_rel_err() < gradcheck::OP_TOL,
            "op {op} failed:\n{}",
            report.table()
        );
    }
    let report = gradcheck::check_full_head(0).expect("full-head gradcheck");
    assert!(
        report.pass() && report.max_rel_err() < gradcheck::FULL_HEAD_TOL,
        "full head failed:\n{}",
        report.table()
    );
    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "gradcheck took {elapsed:?}, budget is 60 s"
    );
    pass("gradient-correctness");
}

// ---------------------------------------------------------------------------
// 2. oracle equivalence (independent brute-force oracles live here)
// ---------------------------------------------------------------------------

fn conv_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: (usize, usize, usize),
    pad: (usize, usize, usize),
) -> Vec<f64> {
    let [ci_n, t_in, h_in, w_in] = x.shape() else { panic!() };
    let [co_n, _, kt, kh, kw] = w.shape() else { panic!() };
    let out_t = (t_in + 2 * pad.0 - kt) / stride.0 + 1;
    let out_h = (h_in + 2 * pad.1 - kh) / stride.1 + 1;
    let out_w = (w_in + 2 * pad.2 - kw) / stride.2 + 1;
    let mut out = Vec::new();
    for co in 0..*co_n {
        for to in 0..out_t {
            for ho in 0..out_h {
                for wo in 0..out_w {
                    let mut acc = b.data()[co];
                    for ci in 0..*ci_n {
                        for dt in 0..*kt {
                            for dh in 0..*kh {
                                for dw in 0..*kw {
                                    let ti = (to * stride.0 + dt) as isize - pad.0 as isize;
                                    let hi = (ho * stride.1 + dh) as isize - pad.1 as isize;
                                    let wi = (wo * stride.2 + dw) as isize - pad.2 as isize;
                                    if ti < 0
                                        || hi < 0
                                        || wi < 0
                                        || ti >= *t_in as isize
                                        || hi >= *h_in as isize
                                        || wi >= *w_in as isize
                                    {
                                        continue;
                                    }
                                    acc += x.get(&[ci, ti as usize, hi as usize, wi as usize])
                                        * w.get(&[co, ci, dt, dh, dw]);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn oracle_equivalence() {
    let _guard = serial();
    let root = Rng::new(41);

    // convolution vs six-nested-loop oracle
    for trial in 0..100 {
        let mut r = root.stream(trial);
        let c_in = 1 + r.below(3);
        let c_out = 1 + r.below(3);
        let t = 1 + r.below(4);
        let h = 2 + r.below(3);
        let wdt = 2 + r.below(3);
        let k = if r.below(2) == 0 { 1 } else { 3 };
        let stride = 1 + r.below(2);
        let pad = if k == 3 { 1 } else { 0 };
        let x: Tensor<f64> = r.normal_tensor(&[c_in, t, h, wdt], 0.0, 1.0).unwrap();
        let w: Tensor<f64> = r.normal_tensor(&[c_out, c_in, k, k, k], 0.0, 1.0).unwrap();
        let b: Tensor<f64> = r.normal_tensor(&[c_out], 0.0, 1.0).unwrap();
        let spec = dfbnet::ops::ConvSpec {
            c_in,
            c_out,
            kernel: (k, k, k),
            stride: (stride, stride, stride),
            pad: (pad, pad, pad),
        };
        if spec.output_shape(x.shape()).is_err() {
            continue;
        }
        let got = dfbnet::ops::conv::forward(&x, &w, &b, &spec).unwrap();
        let want = conv_oracle(&x, &w, &b, spec.stride, spec.pad);
        assert_eq!(got.len(), want.len());
        for (g, o) in got.data().iter().zip(&want) {
            assert!(close(*g, *o), "conv trial {trial}");
        }
    }

    // pooling vs flat scans
    for trial in 0..100 {
        let mut r = root.stream(1000 + trial);
        let c = 1 + r.below(4);
        let shape = [c, 1 + r.below(4), 1 + r.below(4), 1 + r.below(4)];
        let x: Tensor<f64> = r.normal_tensor(&shape, 0.0, 1.0).unwrap();
        let volume: usize = shape[1..].iter().product();

        let avg = dfbnet::ops::pool::global_avg_pool_forward(&x).unwrap();
        let max = dfbnet::ops::pool::global_max_pool_forward(&x).unwrap();
        for ch in 0..c {
            let chunk = &x.data()[ch * volume..(ch + 1) * volume];
            let mean: f64 = chunk.iter().sum::<f64>() / volume as f64;
            assert!(close(avg.data()[ch], mean), "avg trial {trial}");
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for (i, &v) in chunk.iter().enumerate() {
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            assert_eq!(max.values.data()[ch], best, "max trial {trial}");
            assert_eq!(max.argmax[ch], best_i, "argmax trial {trial}");
        }
    }

    // bilinear upsample vs the closed-form coordinate mapping
    for trial in 0..100 {
        let mut r = root.stream(2000 + trial);
        let shape = [1 + r.below(3), 1 + r.below(3), 1 + r.below(4), 1 + r.below(4)];
        let x: Tensor<f64> = r.normal_tensor(&shape, 0.0, 1.0).unwrap();
        let y = dfbnet::ops::upsample::forward(&x).unwrap();
        let (c, t, h, wdt) = (shape[0], shape[1], shape[2], shape[3]);
        let source = |extent: usize, d: usize| -> (usize, usize, f64) {
            let s = ((d as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (extent - 1) as f64);
            let lo = s.floor() as usize;
            (lo, (lo + 1).min(extent - 1), s - s.floor())
        };
        for ci in 0..c {
            for ti in 0..t {
                for dy in 0..2 * h {
                    for dx in 0..2 * wdt {
                        let (y0, y1, fy) = source(h, dy);
                        let (x0, x1, fx) = source(wdt, dx);
                        let want = (1.0 - fy) * (1.0 - fx) * x.get(&[ci, ti, y0, x0])
                            + (1.0 - fy) * fx * x.get(&[ci, ti, y0, x1])
                            + fy * (1.0 - fx) * x.get(&[ci, ti, y1, x0])
                            + fy * fx * x.get(&[ci, ti, y1, x1]);
                        assert!(
                            close(y.get(&[ci, ti, dy, dx]), want),
                            "upsample trial {trial}"
                        );
                    }
                }
            }
        }
    }

    // cross-channel pooling vs blockwise means
    for trial in 0..100 {
        let mut r = root.stream(3000 + trial);
        let n = 1 + r.below(4);
        let classes = 2 + r.below(4);
        let v: Tensor<f64> = r.normal_tensor(&[n * classes], 0.0, 1.0).unwrap();
        let z = dfbnet::ops::pool::cross_channel_pool_forward(&v, n, classes).unwrap();
        for cls in 0..classes {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v.data()[cls * n + k];
            }
            assert!(close(z.data()[cls], acc / n as f64), "xchannel trial {trial}");
        }
    }

    pass("oracle-equivalence");
}

// ---------------------------------------------------------------------------
// 3. loss identity
// ---------------------------------------------------------------------------

#[test]
fn loss_identity() {
    let _guard = serial();

    // uniform logits: every component is ln C, total within 1e-12
    let cfg = ModelConfig::micro_3d(4, 2);
    let mut params = model::init_params::<f64>(&cfg, 0).unwrap();
    for name in params.names().to_vec() {
        let shape = params.get(&name).unwrap().shape().to_vec();
        params.set(&name, Tensor::zeros(shape).unwrap()).unwrap();
    }
    let mut tape = Tape::new();
    let ids = model::leaf_params(&mut tape, &params);
    let clip = Tensor::zeros(vec![3, 4, 8, 8]).unwrap();
    let mut ctx = DropoutCtx::Eval;
    let fwd = model::forward_clip(&mut tape, &clip, &ids, &cfg, &mut ctx, Sampler::EvalCenter).unwrap();
    let (_, loss) = model::clip_loss(&mut tape, &fwd, 0).unwrap();
    let ln_c = 4.0f64.ln();
    for term in [loss.comb, loss.avg, loss.max, loss.xchannel] {
        assert!((term - ln_c).abs() < 1e-12, "uniform component {term} vs ln C {ln_c}");
    }
    assert!((loss.total - 4.0 * ln_c).abs() < 1e-12);

    // random models: the identity holds bit-exactly in the declared order
    for seed in 0..20 {
        let params = model::init_params::<f64>(&cfg, seed).unwrap();
        let mut tape = Tape::new();
        let ids = model::leaf_params(&mut tape, &params);
        let mut rng = Rng::new(seed + 500);
        let clip: Tensor<f64> = rng.normal_tensor(&[3, 4, 8, 8], 0.0, 1.0).unwrap();
        let mut ctx = DropoutCtx::Eval;
        let fwd =
            model::forward_clip(&mut tape, &clip, &ids, &cfg, &mut ctx, Sampler::EvalCenter).unwrap();
        let (_, loss) = model::clip_loss(&mut tape, &fwd, (seed % 4) as usize).unwrap();
        let recomputed = ((loss.comb + loss.avg) + loss.max) + loss.xchannel;
        assert_eq!(loss.total.to_bits(), recomputed.to_bits());
    }

    // a short real training run re-asserts the identity at every step
    // (train panics if any step violates it)
    let dir = tempfile::TempDir::new().unwrap();
    let synth_cfg = SynthConfig {
        classes: 2,
        train_clips_per_class: 6,
        val_clips_per_class: 2,
        ..ablation_synth_config()
    };
    let (train_m, _) = synth::generate(&synth_cfg, dir.path()).unwrap();
    let cfg = TrainConfig {
        classes: 2,
        epochs: 2,
        ..ablation_train_config(Variant::GbDfLb, 0)
    };
    train::train::<f64>(&cfg, &train_m, None).unwrap();

    pass("loss-identity");
}

// ---------------------------------------------------------------------------
// 4. branch isolation
// ---------------------------------------------------------------------------

#[test]
fn branch_isolation() {
    let _guard = serial();
    let dir = tempfile::TempDir::new().unwrap();
    let synth_cfg = SynthConfig {
        classes: 3,
        train_clips_per_class: 8,
        val_clips_per_class: 4,
        ..ablation_synth_config()
    };
    let (train_m, val_m) = synth::generate(&synth_cfg, dir.path()).unwrap();

    // gb training must leave filter-bank and local-branch parameters
    // bit-identical to initialization
    let cfg = TrainConfig {
        classes: 3,
        epochs: 3,
        ..ablation_train_config(Variant::Gb, 5)
    };
    let init = model::init_params::<f32>(&cfg.model_config(), cfg.seed).unwrap();
    let result = train::train::<f32>(&cfg, &train_m, None).unwrap();
    let mut trained_something = false;
    for (name, tensor) in result.params.iter() {
        let frozen = name.starts_with("fb.")
            || name.starts_with("stage5l.")
            || name.starts_with("skip.")
            || name.starts_with("head_max.");
        let same = init.get(name).unwrap() == tensor;
        if frozen {
            assert!(same, "{name} changed under gb training");
        } else if !same {
            trained_something = true;
        }
    }
    assert!(trained_something, "gb training updated nothing");

    // z_comb is the bitwise sum of the three branch logits on every
    // evaluated clip of a full model
    let cfg = TrainConfig {
        classes: 3,
        epochs: 1,
        ..ablation_train_config(Variant::GbDfLb, 6)
    };
    let model_cfg = cfg.model_config();
    let result = train::train::<f32>(&cfg, &train_m, None).unwrap();
    for entry in &val_m.entries {
        let clip = synth::load_clip::<f32>(&val_m, entry).unwrap();
        let mut tape = Tape::new();
        let ids = model::leaf_params(&mut tape, &result.params);
        let mut ctx = DropoutCtx::Eval;
        let fwd =
            model::forward_clip(&mut tape, &clip, &ids, &model_cfg, &mut ctx, Sampler::EvalCenter)
                .unwrap();
        let model::Logits::Full(branch) = fwd.logits else {
            panic!("full variant expected")
        };
        let za = tape.value(branch.z_avg).data();
        let zx = tape.value(branch.z_xchannel).data();
        let zm = tape.value(branch.z_max).data();
        let zc = tape.value(branch.z_comb).data();
        for i in 0..3 {
            assert_eq!(zc[i].to_bits(), ((za[i] + zx[i]) + zm[i]).to_bits());
        }
    }

    pass("branch-isolation");
}

// ---------------------------------------------------------------------------
// 5. ablation trend
// ---------------------------------------------------------------------------

#[test]
fn ablation_trend() {
    let _guard = serial();
    let ab = ablation();
    let [gb, df, full] = ab.mean_top1;
    eprintln!(
        "[ablation] mean val top-1: gb {gb:.4}, gb+df {df:.4}, gb+df+lb {full:.4} (per-seed {:?}, {:?})",
        ab.per_seed, ab.elapsed
    );
    assert!(
        df >= gb + 0.03,
        "gb+df ({df:.4}) must beat gb ({gb:.4}) by 3 points"
    );
    assert!(
        full >= df - 0.01,
        "gb+df+lb ({full:.4}) must stay within 1 point of gb+df ({df:.4})"
    );
    assert!(
        full >= gb + 0.05,
        "gb+df+lb ({full:.4}) must beat gb ({gb:.4}) by 5 points"
    );
    assert!(
        ab.elapsed < Duration::from_secs(30 * 60),
        "ablation took {:?}, budget is 30 min",
        ab.elapsed
    );
    pass("ablation-trend");
}

// ---------------------------------------------------------------------------
// 6. localization
// ---------------------------------------------------------------------------

#[test]
fn localization() {
    let _guard = serial();
    let ab = ablation();
    let cfg = &ab.full_cfg;
    let n = cfg.head.filters_per_class;
    let classes = cfg.head.classes;

    // hits[class][filter] over correctly classified val clips of that class
    let mut hits = vec![vec![0usize; n]; classes];
    let mut counts = vec![0usize; classes];
    for entry in &ab.val_manifest.entries {
        let clip = synth::load_clip::<f32>(&ab.val_manifest, entry).unwrap();
        let mut tape = Tape::new();
        let ids = model::leaf_params(&mut tape, &ab.full_params);
        let mut ctx = DropoutCtx::Eval;
        let fwd = model::forward_clip(&mut tape, &clip, &ids, cfg, &mut ctx, Sampler::EvalCenter)
            .unwrap();
        let pred = head::predict(tape.value(fwd.logits.z_comb()));
        if pred != entry.label {
            continue;
        }
        counts[entry.label] += 1;
        let argmax = tape.max_argmax(fwd.maxvecs[0]).unwrap();
        for k in 0..n {
            let flat = argmax[entry.label * n + k];
            let mapping = localize::argmax_to_box(cfg, flat).unwrap();
            if entry
                .patch
                .contains(mapping.center.0, mapping.center.1, mapping.center.2)
            {
                hits[entry.label][k] += 1;
            }
        }
    }

    let mut best_rates = Vec::new();
    for c in 0..classes {
        assert!(counts[c] > 0, "class {c} has no correctly classified val clips");
        let best = (0..n)
            .map(|k| hits[c][k] as f64 / counts[c] as f64)
            .fold(0.0, f64::max);
        best_rates.push(best);
    }
    let mean_best = best_rates.iter().sum::<f64>() / classes as f64;

    let plan = cfg.backbone.plan().unwrap();
    let baseline = localize::random_baseline_hit_rate(
        (cfg.backbone.frames, cfg.backbone.height, cfg.backbone.width),
        (3, 5, 5),
        plan.stages[3],
        plan.stage4_stride,
    );
    eprintln!(
        "[localization] best per-class hit rates {best_rates:?} mean {mean_best:.4}, random baseline {baseline:.4}"
    );
    assert!(baseline <= 0.25, "analytic baseline {baseline} above 25%");
    assert!(
        mean_best >= 0.60,
        "best per-class filter hit-rate {mean_best:.4} below 60%"
    );
    pass("localization");
}

// ---------------------------------------------------------------------------
// 7. determinism
// ---------------------------------------------------------------------------

#[test]
fn determinism() {
    let _guard = serial();
    let dir = tempfile::TempDir::new().unwrap();
    let synth_cfg = SynthConfig {
        classes: 3,
        train_clips_per_class: 8,
        val_clips_per_class: 4,
        ..ablation_synth_config()
    };
    let (train_m, val_m) = synth::generate(&synth_cfg, dir.path()).unwrap();
    let cfg = TrainConfig {
        classes: 3,
        epochs: 3,
        ..ablation_train_config(Variant::GbDfLb, 9)
    };
    let a = train::train::<f32>(&cfg, &train_m, Some(&val_m)).unwrap();
    let b = train::train::<f32>(&cfg, &train_m, Some(&val_m)).unwrap();
    assert_eq!(a.metrics, b.metrics, "metrics.log differs between identical runs");
    assert_eq!(a.params, b.params, "parameters differ between identical runs");
    pass("determinism");
}

// ---------------------------------------------------------------------------
// 8. micro-overfit sanity
// ---------------------------------------------------------------------------

#[test]
fn micro_overfit() {
    let _guard = serial();
    let dir = tempfile::TempDir::new().unwrap();
    let synth_cfg = SynthConfig {
        classes: 2,
        train_clips_per_class: 10,
        val_clips_per_class: 2,
        ..ablation_synth_config()
    };
    let (train_m, _) = synth::generate(&synth_cfg, dir.path()).unwrap();
    let cfg = TrainConfig {
        classes: 2,
        epochs: 30,
        batch_size: 4,
        lr: 0.02,
        lr_milestones: vec![15, 22, 27],
        ..ablation_train_config(Variant::GbDfLb, 0)
    };
    let result = train::train::<f32>(&cfg, &train_m, None).unwrap();
    assert_eq!(
        result.final_train_top1, 1.0,
        "micro-overfit reached only {:.3} train top-1",
        result.final_train_top1
    );
    pass("micro-overfit");
}

// ---------------------------------------------------------------------------
// 9. file formats
// ---------------------------------------------------------------------------

#[test]
fn file_formats() {
    let _guard = serial();
    let dir = tempfile::TempDir::new().unwrap();

    // VTEN bit-exact round trip + named diagnostics
    let mut rng = Rng::new(3);
    let tensor: Tensor<f32> = rng.normal_tensor(&[3, 4, 5], 0.0, 1.0).unwrap();
    let tpath = dir.path().join("t.vten");
    vten::write(&tpath, &tensor).unwrap();
    assert_eq!(vten::read_exact::<f32>(&tpath).unwrap(), tensor);
    let bytes = vten::encode(&tensor);
    let err = vten::decode_any(std::path::Path::new("cut.vten"), &bytes[..bytes.len() / 2])
        .unwrap_err()
        .to_string();
    assert!(err.contains("cut.vten") && err.contains("mismatch"), "{err}");

    // manifest round trip + named line diagnostics
    let synth_cfg = SynthConfig {
        classes: 2,
        train_clips_per_class: 2,
        val_clips_per_class: 1,
        ..ablation_synth_config()
    };
    let (train_m, _) = synth::generate(&synth_cfg, dir.path()).unwrap();
    let mpath = dir.path().join("train.manifest");
    let back = synth::read_manifest(&mpath).unwrap();
    assert_eq!(back, train_m);
    let bad = dir.path().join("bad.manifest");
    std::fs::write(&bad, "DFBMANIFEST 1 C=2 SPLIT=x\nmissing.vten\t0\t0,0,0,1,1,1\n").unwrap();
    let err = synth::read_manifest(&bad).unwrap_err().to_string();
    assert!(err.contains("line 2") && err.contains("does not exist"), "{err}");

    // checkpoint bit-exact round trip + named diagnostics
    let tc = TrainConfig {
        classes: 2,
        ..ablation_train_config(Variant::GbDfLb, 0)
    };
    let params = model::init_params::<f32>(&tc.model_config(), 1).unwrap();
    let ckpt = dir.path().join("ckpt");
    dfbnet::checkpoint::save(&ckpt, &params, &tc).unwrap();
    assert_eq!(dfbnet::checkpoint::load::<f32>(&ckpt).unwrap(), params);
    assert_eq!(dfbnet::checkpoint::load_config(&ckpt).unwrap(), tc);
    let err = dfbnet::checkpoint::load::<f64>(&ckpt).unwrap_err().to_string();
    assert!(err.contains("f32") && err.contains("f64"), "{err}");

    // run-config round trip + named key diagnostics
    let text = tc.to_kv_string();
    assert_eq!(TrainConfig::from_kv_string(&text, "rt").unwrap(), tc);
    let err = TrainConfig::from_kv_string(&text.replace("lr = 0.02", "lr = oops"), "rt")
        .unwrap_err()
        .to_string();
    assert!(err.contains("'lr'"), "{err}");
    let err = TrainConfig::from_kv_string(&text.replace("classes = 2\n", ""), "rt")
        .unwrap_err()
        .to_string();
    assert!(err.contains("classes"), "{err}");

    // synth config the same way
    let stext = dfbnet::config::synth_config_to_string(&synth_cfg);
    assert_eq!(
        dfbnet::config::synth_config_from_str(&stext, "rt").unwrap(),
        synth_cfg
    );

    pass("file-formats");
}
