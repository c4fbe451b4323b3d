//! Evaluation: top-1/top-5 accuracy, confusion matrices, meta-category
//! accuracy and most-confused class pairs.
//!
//! Evaluation is deterministic: dropout off, eval-center segment sampling,
//! predictions from the combined logits with lowest-index tie breaking.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::head::{predict, DropoutCtx};
use crate::model::{self, ModelConfig, Params, Sampler};
use crate::scalar::Scalar;
use crate::synth::{self, ClipManifest};
use crate::tensor::Tensor;

/// One clip's evaluation outcome.
#[derive(Debug, Clone)]
pub struct ClipEval {
    pub label: usize,
    pub pred: usize,
    /// Combined logits as f64.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetaAccuracy {
    pub name: String,
    pub top1: f64,
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConfusedPair {
    pub truth: usize,
    pub predicted: usize,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub classes: usize,
    pub total: u64,
    pub top1: f64,
    pub top5: f64,
    /// rows = truth, columns = prediction
    pub confusion: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<Vec<MetaAccuracy>>,
    pub most_confused: Vec<ConfusedPair>,
}

/// Combined logits of one clip under eval-mode forward.
pub fn eval_clip<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    clip: &Tensor<T>,
) -> Result<Vec<f64>> {
    let mut tape = crate::tape::Tape::new();
    let ids = model::leaf_params(&mut tape, params);
    let mut dropout = DropoutCtx::Eval;
    let fwd = model::forward_clip(&mut tape, clip, &ids, cfg, &mut dropout, Sampler::EvalCenter)?;
    Ok(tape
        .value(fwd.logits.z_comb())
        .data()
        .iter()
        .map(|v| v.into_f64())
        .collect())
}

pub fn evaluate_clips<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    clips: &[(Tensor<T>, usize)],
) -> Result<Vec<ClipEval>> {
    clips
        .par_iter()
        .map(|(clip, label)| {
            let scores = eval_clip(params, cfg, clip)?;
            let pred = predict(&Tensor::new(vec![scores.len()], scores.clone())?);
            Ok(ClipEval {
                label: *label,
                pred,
                scores,
            })
        })
        .collect()
}

/// Rank of `label` under (score desc, index asc) ordering.
fn label_rank(scores: &[f64], label: usize) -> usize {
    let s = scores[label];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > s || (v == s && i < label))
        .count()
}

/// Assembles the report from per-clip outcomes.
pub fn report_from(
    evals: &[ClipEval],
    classes: usize,
    meta_map: Option<&[(usize, String)]>,
    confused_k: usize,
) -> Result<EvalReport> {
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut top1_hits = 0u64;
    let mut top5_hits = 0u64;
    let k = classes.min(5);
    for e in evals {
        if e.label >= classes || e.pred >= classes {
            return Err(Error::invalid(
                "evaluate",
                format!("label {} or prediction {} out of range for C={classes}", e.label, e.pred),
            ));
        }
        confusion[e.label][e.pred] += 1;
        top1_hits += (e.pred == e.label) as u64;
        top5_hits += (label_rank(&e.scores, e.label) < k) as u64;
    }
    let total = evals.len() as u64;
    let meta = match meta_map {
        None => None,
        Some(pairs) => Some(meta_accuracy(&confusion, classes, pairs)?),
    };
    Ok(EvalReport {
        classes,
        total,
        top1: top1_hits as f64 / total.max(1) as f64,
        top5: top5_hits as f64 / total.max(1) as f64,
        confusion: confusion.clone(),
        meta,
        most_confused: top_confused_pairs(&confusion, confused_k),
    })
}

/// Per-class top-1 from a confusion matrix row.
fn class_top1(confusion: &[Vec<u64>], c: usize) -> f64 {
    let row_sum: u64 = confusion[c].iter().sum();
    if row_sum == 0 {
        0.0
    } else {
        confusion[c][c] as f64 / row_sum as f64
    }
}

/// Meta-category accuracy: the unweighted mean of child-class top-1.
fn meta_accuracy(
    confusion: &[Vec<u64>],
    classes: usize,
    pairs: &[(usize, String)],
) -> Result<Vec<MetaAccuracy>> {
    let mut order: Vec<String> = Vec::new();
    let mut children: std::collections::HashMap<&str, Vec<usize>> = Default::default();
    for (class, name) in pairs {
        if *class >= classes {
            return Err(Error::invalid(
                "meta_map",
                format!("class {class} out of range for C={classes} (meta '{name}')"),
            ));
        }
        if !children.contains_key(name.as_str()) {
            order.push(name.clone());
        }
        children.entry(name.as_str()).or_default().push(*class);
    }
    Ok(order
        .iter()
        .map(|name| {
            let cls = &children[name.as_str()];
            let top1 = cls.iter().map(|&c| class_top1(confusion, c)).sum::<f64>()
                / cls.len() as f64;
            MetaAccuracy {
                name: name.clone(),
                top1,
                classes: cls.clone(),
            }
        })
        .collect())
}

/// Off-diagonal confusion cells sorted by count descending, ties by
/// (row, column) index, truncated to `k` nonzero entries.
pub fn top_confused_pairs(confusion: &[Vec<u64>], k: usize) -> Vec<ConfusedPair> {
    let mut pairs: Vec<ConfusedPair> = Vec::new();
    for (t, row) in confusion.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            if t != p && count > 0 {
                pairs.push(ConfusedPair {
                    truth: t,
                    predicted: p,
                    count,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.truth.cmp(&b.truth))
            .then(a.predicted.cmp(&b.predicted))
    });
    pairs.truncate(k);
    pairs
}

/// Full evaluation of a parameter set against a manifest.
pub fn evaluate<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    manifest: &ClipManifest,
    meta_map: Option<&[(usize, String)]>,
) -> Result<EvalReport> {
    if manifest.classes != cfg.head.classes {
        return Err(Error::invalid(
            "evaluate",
            format!(
                "manifest has {} classes, model expects {}",
                manifest.classes, cfg.head.classes
            ),
        ));
    }
    let clips: Vec<(Tensor<T>, usize)> = manifest
        .entries
        .par_iter()
        .map(|e| Ok((synth::load_clip::<T>(manifest, e)?, e.label)))
        .collect::<Result<_>>()?;
    let evals = evaluate_clips(params, cfg, &clips)?;
    report_from(&evals, cfg.head.classes, meta_map, 10)
}

/// Parses lines of `<class-index>\t<meta-name>`.
pub fn read_meta_map(path: &std::path::Path) -> Result<Vec<(usize, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((class_s, name)) = line.split_once('\t') else {
            return Err(Error::Manifest {
                path: path.display().to_string(),
                line: idx + 1,
                detail: format!("expected '<class-index>\\t<meta-name>', got '{line}'"),
            });
        };
        let class: usize = class_s.trim().parse().map_err(|_| Error::Manifest {
            path: path.display().to_string(),
            line: idx + 1,
            detail: format!("bad class index '{class_s}'"),
        })?;
        out.push((class, name.trim().to_string()));
    }
    Ok(out)
}

/// Confusion matrix as CSV with a header row and truth-labeled rows.
pub fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("truth\\pred");
    for c in 0..report.classes {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for (t, row) in report.confusion.iter().enumerate() {
        out.push_str(&t.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
