//! Maximal-response localization: map a discriminative filter's argmax back
//! to an input-space box.
//!
//! A feature cell at coordinate `f` with cumulative stride `s` covers input
//! `[f*s, (f+1)*s)`; its center is `f*s + s/2`. A localization counts as a
//! hit when the box center lies inside the clip's planted patch box.

use rayon::prelude::*;

use crate::backbone::Mode;
use crate::error::{Error, Result};
use crate::head::{predict, DropoutCtx};
use crate::model::{self, ModelConfig, Params, Sampler, Variant};
use crate::scalar::Scalar;
use crate::synth::{self, ClipManifest, ManifestEntry, PatchBox};

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub clip_index: usize,
    pub clip_path: String,
    pub true_label: usize,
    pub predicted: usize,
    /// Class whose filter was probed.
    pub class: usize,
    /// Filter index within the class (0..N).
    pub filter: usize,
    /// Argmax coordinate in the filter's feature volume (t, y, x).
    pub feat_coords: (usize, usize, usize),
    /// Input-space box origin (t0, y0, x0).
    pub box_origin: (usize, usize, usize),
    /// Input-space box extents (t, h, w) — the feature cell's footprint.
    pub box_extents: (usize, usize, usize),
    /// Box center (t, y, x).
    pub box_center: (usize, usize, usize),
    pub hit: bool,
}

/// Input-space box of one feature cell under per-axis cumulative strides.
pub fn feature_cell_box(
    feat: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> ((usize, usize, usize), (usize, usize, usize), (usize, usize, usize)) {
    let origin = (feat.0 * stride.0, feat.1 * stride.1, feat.2 * stride.2);
    let center = (
        origin.0 + stride.0 / 2,
        origin.1 + stride.1 / 2,
        origin.2 + stride.2 / 2,
    );
    (origin, stride, center)
}

/// Mapping of one filter argmax back to input space.
#[derive(Debug, Clone, Copy)]
pub struct BoxMapping {
    pub feat: (usize, usize, usize),
    pub origin: (usize, usize, usize),
    pub extents: (usize, usize, usize),
    pub center: (usize, usize, usize),
}

/// Maps a flat argmax offset inside the filter volume to an input-space box
/// (3D mode).
pub fn argmax_to_box(cfg: &ModelConfig, flat: usize) -> Result<BoxMapping> {
    let plan = cfg.backbone.plan()?;
    let (volume, stride) = match cfg.variant {
        Variant::GbDf => (plan.stages[4], plan.stage5_stride),
        _ => (plan.stages[3], plan.stage4_stride),
    };
    let (vt, vh, vw) = volume;
    if flat >= vt * vh * vw {
        return Err(Error::invalid(
            "localize",
            format!("argmax offset {flat} outside feature volume {volume:?}"),
        ));
    }
    let ft = flat / (vh * vw);
    let fy = (flat / vw) % vh;
    let fx = flat % vw;
    let t_stride = stride.0.min(cfg.backbone.frames);
    let (origin, mut extents, center) = feature_cell_box((ft, fy, fx), (t_stride, stride.1, stride.2));
    extents.0 = extents.0.min(cfg.backbone.frames - origin.0);
    Ok(BoxMapping {
        feat: (ft, fy, fx),
        origin,
        extents,
        center,
    })
}

fn center_hits(center: (usize, usize, usize), patch: &PatchBox) -> bool {
    patch.contains(center.0, center.1, center.2)
}

/// Runs the head on one clip and maps the argmax of filter
/// `class * N + filter` back to input space.
pub fn localize_clip<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    manifest: &ClipManifest,
    clip_index: usize,
    class: usize,
    filter: usize,
) -> Result<LocalizationResult> {
    if cfg.variant == Variant::Gb {
        return Err(Error::invalid(
            "localize",
            "the gb variant has no filter bank to localize",
        ));
    }
    if class >= cfg.head.classes || filter >= cfg.head.filters_per_class {
        return Err(Error::invalid(
            "localize",
            format!(
                "class {class} / filter {filter} out of range (C={}, N={})",
                cfg.head.classes, cfg.head.filters_per_class
            ),
        ));
    }
    let entry: &ManifestEntry = manifest.entries.get(clip_index).ok_or_else(|| {
        Error::invalid(
            "localize",
            format!("clip index {clip_index} out of range ({} entries)", manifest.entries.len()),
        )
    })?;
    let clip = synth::load_clip::<T>(manifest, entry)?;

    let mut tape = crate::tape::Tape::new();
    let ids = model::leaf_params(&mut tape, params);
    let mut dropout = DropoutCtx::Eval;
    let fwd = model::forward_clip(&mut tape, &clip, &ids, cfg, &mut dropout, Sampler::EvalCenter)?;
    let predicted = predict(tape.value(fwd.logits.z_comb()));

    let plan = cfg.backbone.plan()?;
    let filter_index = class * cfg.head.filters_per_class + filter;
    let (volume, stride) = match cfg.variant {
        Variant::GbDf => (plan.stages[4], plan.stage5_stride),
        _ => (plan.stages[3], plan.stage4_stride),
    };

    // pick the segment with the strongest response in 2D mode
    let (seg, flat) = fwd
        .maxvecs
        .iter()
        .enumerate()
        .map(|(seg, &mv)| {
            let value = tape.value(mv).data()[filter_index].into_f64();
            let flat = tape.max_argmax(mv).expect("max pool node")[filter_index];
            (value, seg, flat)
        })
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(_, seg, flat)| (seg, flat))
        .ok_or_else(|| Error::invalid("localize", "forward produced no max responses"))?;

    let (feat, origin, extents, center) = match cfg.backbone.mode {
        Mode::ThreeD => {
            let m = argmax_to_box(cfg, flat)?;
            (m.feat, m.origin, m.extents, m.center)
        }
        Mode::TwoD => {
            let (_, vh, vw) = volume;
            debug_assert!(flat < vh * vw);
            let fy = flat / vw;
            let fx = flat % vw;
            let frames = fwd
                .segment_frames
                .as_ref()
                .ok_or_else(|| Error::invalid("localize", "2d forward lost segment frames"))?;
            let t0 = frames[seg];
            let (o, e, c) = feature_cell_box((0, fy, fx), (1, stride.1, stride.2));
            ((seg, fy, fx), (t0, o.1, o.2), (1, e.1, e.2), (t0, c.1, c.2))
        }
    };

    let hit = center_hits(center, &entry.patch);
    Ok(LocalizationResult {
        clip_index,
        clip_path: entry.path.clone(),
        true_label: entry.label,
        predicted,
        class,
        filter,
        feat_coords: feat,
        box_origin: origin,
        box_extents: extents,
        box_center: center,
        hit,
    })
}

/// Localizes every clip in a manifest for one (class, filter) pair.
pub fn localize_manifest<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    manifest: &ClipManifest,
    class: usize,
    filter: usize,
) -> Result<Vec<LocalizationResult>> {
    (0..manifest.entries.len())
        .into_par_iter()
        .map(|i| localize_clip(params, cfg, manifest, i, class, filter))
        .collect()
}

pub fn to_csv(results: &[LocalizationResult]) -> String {
    let mut out = String::from(
        "clip_index,clip_path,true_label,predicted,class,filter,feat_t,feat_y,feat_x,\
         box_t0,box_y0,box_x0,box_t,box_h,box_w,hit\n",
    );
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.clip_index,
            r.clip_path,
            r.true_label,
            r.predicted,
            r.class,
            r.filter,
            r.feat_coords.0,
            r.feat_coords.1,
            r.feat_coords.2,
            r.box_origin.0,
            r.box_origin.1,
            r.box_origin.2,
            r.box_extents.0,
            r.box_extents.1,
            r.box_extents.2,
            r.hit
        ));
    }
    out
}

/// Analytic hit probability of a uniformly random feature cell center:
/// the fraction of cell centers that land inside a patch of the given
/// extents, averaged over all patch placements.
pub fn random_baseline_hit_rate(
    clip: (usize, usize, usize),
    patch: (usize, usize, usize),
    volume: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> f64 {
    let axis = |clip_e: usize, patch_e: usize, cells: usize, s: usize| -> f64 {
        let placements = clip_e - patch_e + 1;
        let mut total = 0usize;
        for p0 in 0..placements {
            for cell in 0..cells {
                let center = cell * s + s / 2;
                if center >= p0 && center < p0 + patch_e {
                    total += 1;
                }
            }
        }
        total as f64 / (placements * cells) as f64
    };
    axis(clip.0, patch.0, volume.0, stride.0.min(clip.0))
        * axis(clip.1, patch.1, volume.1, stride.1)
        * axis(clip.2, patch.2, volume.2, stride.2)
}
