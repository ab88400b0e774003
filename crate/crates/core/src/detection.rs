//! Detector post-processing (NMS, top-k) and localization/labelling metrics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::{iou, DetectedField, FieldAnnotation, FieldKind};

/// Thresholds for selecting and scoring detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    /// Minimum IoU with the ground truth for a true positive.
    pub iou_threshold: f64,
    /// Minimum detector confidence for a prediction to be counted at all.
    pub score_threshold: f64,
    /// Same-kind proposals overlapping a kept box by more than this are dropped.
    pub nms_iou: f64,
    /// Proposals kept per field kind after NMS.
    pub top_k: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            iou_threshold: 0.5,
            score_threshold: 0.5,
            nms_iou: 0.5,
            top_k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must lie in (0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("top_k must be at least 1")]
    ZeroTopK,
}

impl DetectionParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in [
            ("iou_threshold", self.iou_threshold),
            ("score_threshold", self.score_threshold),
            ("nms_iou", self.nms_iou),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ParamError::OutOfRange { name, value });
            }
        }
        if self.top_k == 0 {
            return Err(ParamError::ZeroTopK);
        }
        Ok(())
    }
}

/// Ranking used everywhere a detector's outputs are ordered: score
/// descending, then smaller `x_min`, then smaller `y_min`, then the remaining
/// corners so that only identical proposals compare equal.
pub fn rank_order(a: &DetectedField, b: &DetectedField) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
}

fn group_by_kind(proposals: &[DetectedField]) -> BTreeMap<&FieldKind, Vec<&DetectedField>> {
    let mut groups: BTreeMap<&FieldKind, Vec<&DetectedField>> = BTreeMap::new();
    for p in proposals {
        groups.entry(&p.kind).or_default().push(p);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| rank_order(a, b));
    }
    groups
}

/// Greedy per-kind non-maximum suppression.
///
/// Output is grouped by field kind (canonical order) and ranked within each
/// group.
pub fn nms(proposals: &[DetectedField], suppression_iou: f64) -> Vec<DetectedField> {
    let mut out = Vec::new();
    for (_, ranked) in group_by_kind(proposals) {
        let mut kept: Vec<&DetectedField> = Vec::new();
        for p in ranked {
            if kept.iter().all(|k| iou(&k.bbox, &p.bbox) <= suppression_iou) {
                kept.push(p);
            }
        }
        out.extend(kept.into_iter().cloned());
    }
    out
}

/// Keeps at most `k` proposals per field kind, highest score first, among
/// those scoring at least `min_score`.
pub fn top_k_per_field(proposals: &[DetectedField], k: usize, min_score: f64) -> Vec<DetectedField> {
    group_by_kind(proposals)
        .into_values()
        .flat_map(|ranked| {
            ranked
                .into_iter()
                .filter(|p| p.score >= min_score)
                .take(k)
                .cloned()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of matching one document's predictions to its ground truth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// Predictions that passed the score threshold but found no partner:
    /// the false positives.
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truth: Vec<usize>,
    /// Predictions below the score threshold; neither TP nor FP.
    pub discarded_predictions: Vec<usize>,
}

/// Greedy highest-score-first matching.
///
/// Each prediction (in [`rank_order`]) claims the still-unmatched ground truth
/// of the same kind with the highest IoU, provided that IoU reaches
/// `iou_threshold`. IoU ties go to the lower ground-truth index.
pub fn match_predictions(
    preds: &[DetectedField],
    truth: &[FieldAnnotation],
    iou_threshold: f64,
    score_threshold: f64,
) -> MatchResult {
    let mut result = MatchResult::default();
    let mut ranked: Vec<usize> = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        if p.score >= score_threshold {
            ranked.push(i);
        } else {
            result.discarded_predictions.push(i);
        }
    }
    ranked.sort_by(|&a, &b| rank_order(&preds[a], &preds[b]).then(a.cmp(&b)));

    let mut taken = alloc::vec![false; truth.len()];
    for pi in ranked {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in truth.iter().enumerate() {
            if taken[gi] || g.kind != p.kind {
                continue;
            }
            let v = iou(&p.bbox, &g.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, v)) => {
                taken[gi] = true;
                result.pairs.push(MatchPair {
                    prediction: pi,
                    ground_truth: gi,
                    iou: v,
                });
            }
            None => result.unmatched_predictions.push(pi),
        }
    }
    result.unmatched_predictions.sort_unstable();
    result.unmatched_ground_truth = (0..truth.len()).filter(|&g| !taken[g]).collect();
    result
}

/// A counted prediction: its kind, confidence, and whether it matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub kind: FieldKind,
    pub score: f64,
    pub true_positive: bool,
}

/// Per-document input to [`detection_metrics`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DocumentMatches {
    /// Counted predictions in rank order.
    pub detections: Vec<ScoredDetection>,
    pub ground_truth: BTreeMap<FieldKind, usize>,
}

impl DocumentMatches {
    pub fn new(preds: &[DetectedField], truth: &[FieldAnnotation], m: &MatchResult) -> Self {
        let mut counted: Vec<usize> = m
            .pairs
            .iter()
            .map(|p| p.prediction)
            .chain(m.unmatched_predictions.iter().copied())
            .collect();
        counted.sort_by(|&a, &b| rank_order(&preds[a], &preds[b]).then(a.cmp(&b)));
        let detections = counted
            .into_iter()
            .map(|i| ScoredDetection {
                kind: preds[i].kind.clone(),
                score: preds[i].score,
                true_positive: m.pairs.iter().any(|p| p.prediction == i),
            })
            .collect();
        let mut ground_truth = BTreeMap::new();
        for g in truth {
            *ground_truth.entry(g.kind.clone()).or_insert(0) += 1;
        }
        DocumentMatches {
            detections,
            ground_truth,
        }
    }

    /// Convenience: match and tally in one step.
    pub fn evaluate(preds: &[DetectedField], truth: &[FieldAnnotation], params: &DetectionParams) -> Self {
        let m = match_predictions(preds, truth, params.iou_threshold, params.score_threshold);
        Self::new(preds, truth, &m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldDetectionMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub average_precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallDetectionMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Mean of per-field average precision over applicable fields.
    pub mean_average_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// `None` marks a field with neither ground truth nor predictions.
    pub fields: BTreeMap<FieldKind, Option<FieldDetectionMetrics>>,
    pub overall: OverallDetectionMetrics,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// All-point interpolated average precision of a ranked TP/FP sequence
/// against `n_truth` ground-truth objects.
pub fn average_precision(ranked_hits: &[bool], n_truth: usize) -> f64 {
    if n_truth == 0 {
        return 0.0;
    }
    let mut precisions = Vec::with_capacity(ranked_hits.len());
    let mut recalls = Vec::with_capacity(ranked_hits.len());
    let mut tp = 0usize;
    for (i, &hit) in ranked_hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / n_truth as f64);
    }
    // precision envelope, right to left
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recalls.iter().zip(&precisions) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

/// Aggregates per-document matches into per-field and micro-averaged metrics.
///
/// Detections of one field are pooled across documents and ranked by score;
/// equal scores keep document order. AP is computed per field at the single
/// IoU threshold used for matching, and mAP is their mean.
pub fn detection_metrics(docs: &[DocumentMatches]) -> DetectionReport {
    let mut pooled: BTreeMap<FieldKind, (Vec<(f64, bool)>, usize)> = BTreeMap::new();
    for d in docs {
        for det in &d.detections {
            pooled
                .entry(det.kind.clone())
                .or_default()
                .0
                .push((det.score, det.true_positive));
        }
        for (k, &n) in &d.ground_truth {
            pooled.entry(k.clone()).or_default().1 += n;
        }
    }

    let mut fields = BTreeMap::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    let mut ap_values = Vec::new();
    for (kind, (mut dets, n_truth)) in pooled {
        if dets.is_empty() && n_truth == 0 {
            fields.insert(kind, None);
            continue;
        }
        dets.sort_by(|a, b| b.0.total_cmp(&a.0));
        let hits: Vec<bool> = dets.iter().map(|d| d.1).collect();
        let tp = hits.iter().filter(|&&h| h).count();
        let fp = hits.len() - tp;
        let fn_ = n_truth - tp;
        let recall = ratio(tp, n_truth);
        let precision = ratio(tp, hits.len());
        let ap = average_precision(&hits, n_truth);
        ap_values.push(ap);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        fields.insert(
            kind,
            Some(FieldDetectionMetrics {
                true_positives: tp,
                false_positives: fp,
                false_negatives: fn_,
                recall,
                precision,
                f1: f1_score(precision, recall),
                average_precision: ap,
            }),
        );
    }
    let recall = ratio(tp_all, tp_all + fn_all);
    let precision = ratio(tp_all, tp_all + fp_all);
    let mean_average_precision = if ap_values.is_empty() {
        None
    } else {
        Some(ap_values.iter().sum::<f64>() / ap_values.len() as f64)
    };
    DetectionReport {
        fields,
        overall: OverallDetectionMetrics {
            true_positives: tp_all,
            false_positives: fp_all,
            false_negatives: fn_all,
            recall,
            precision,
            f1: f1_score(precision, recall),
            mean_average_precision,
        },
    }
}
