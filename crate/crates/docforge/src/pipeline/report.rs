use std::fmt::Write as _;

use docforge_core::detection::{DetectionReport, FieldDetectionMetrics};
use docforge_core::doc_model::Violation;
use docforge_core::text_metrics::{FieldTextScore, OcrTable};
use docforge_core::{BoundingBox, FieldKind};
use serde::{Deserialize, Serialize};

/// One field rewritten by post-correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionLogRow {
    pub doc_id: String,
    pub field: FieldKind,
    pub original: String,
    pub corrected: String,
    pub ocr_confidence: f64,
    /// Lowest similarity among the rewritten units.
    pub knn_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearFlag {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Annotation,
    Detection,
    Recognition,
    Correction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFailure {
    pub doc_id: String,
    pub stage: Stage,
    pub error: String,
    /// True when the error concerns the backend as a whole (unreachable,
    /// timed out) rather than this document.
    pub backend_wide: bool,
}

/// Final prediction for one field of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPrediction {
    pub field: FieldKind,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
    pub text: String,
    pub ocr_confidence: f64,
    pub corrected: bool,
    pub original_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub fields: Vec<FieldPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationWarning {
    pub doc_id: String,
    pub warning: String,
}

impl From<&Violation> for AnnotationWarning {
    fn from(v: &Violation) -> Self {
        let warning = match (v.field_index, &v.field) {
            (Some(i), Some(k)) => format!("field #{i} ({k}): {}", v.rule),
            _ => v.rule.to_string(),
        };
        AnnotationWarning {
            doc_id: v.doc_id.clone(),
            warning,
        }
    }
}

/// Detection-only evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRunReport {
    pub documents: usize,
    pub detection: DetectionReport,
    pub annotation_warnings: Vec<AnnotationWarning>,
}

/// Output of a full pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Documents that went through every stage.
    pub documents: usize,
    pub detection: DetectionReport,
    /// `None` when no evaluated document had a transcribed field.
    pub ocr_before: Option<OcrTable>,
    pub ocr_after: Option<OcrTable>,
    pub correction_log: Vec<CorrectionLogRow>,
    pub implausible_years: Vec<YearFlag>,
    pub annotation_warnings: Vec<AnnotationWarning>,
    pub failures: Vec<DocumentFailure>,
    pub predictions: Vec<DocumentResult>,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

/// Table rows: the four standard fields always, in fixed order, then any
/// other field present in the data.
fn row_order<'a>(present: impl Iterator<Item = &'a FieldKind>) -> Vec<FieldKind> {
    let mut rows: Vec<FieldKind> = FieldKind::BUILTIN.to_vec();
    for k in present {
        if !rows.contains(k) {
            rows.push(k.clone());
        }
    }
    rows
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn detection_markdown(report: &DetectionReport) -> String {
    let mut out = String::new();
    out.push_str("| Field | Re | Pr | F1 | mAP |\n|---|---|---|---|---|\n");
    for kind in row_order(report.fields.keys()) {
        let m: Option<&FieldDetectionMetrics> = report.fields.get(&kind).and_then(Option::as_ref);
        match m {
            Some(m) => writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                cell(kind.display_name()),
                num(m.recall),
                num(m.precision),
                num(m.f1),
                num(m.average_precision)
            ),
            None => writeln!(out, "| {} | n/a | n/a | n/a | n/a |", cell(kind.display_name())),
        }
        .unwrap();
    }
    let o = &report.overall;
    writeln!(
        out,
        "| Overall | {} | {} | {} | {} |",
        num(o.recall),
        num(o.precision),
        num(o.f1),
        o.mean_average_precision.map(num).unwrap_or_else(|| "n/a".into())
    )
    .unwrap();
    out
}

pub fn ocr_markdown(table: &OcrTable) -> String {
    let mut out = String::new();
    out.push_str("| Field | CER | WER | BLEU |\n|---|---|---|---|\n");
    let line = |out: &mut String, name: &str, s: Option<&FieldTextScore>| {
        match s {
            Some(s) => writeln!(out, "| {} | {} | {} | {} |", cell(name), num(s.cer), num(s.wer), num(s.bleu)),
            None => writeln!(out, "| {} | n/a | n/a | n/a |", cell(name)),
        }
        .unwrap()
    };
    for kind in row_order(table.fields.keys()) {
        line(&mut out, kind.display_name(), table.fields.get(&kind));
    }
    line(&mut out, "Overall", Some(&table.overall));
    out
}

fn ocr_comparison(before: &OcrTable, after: &OcrTable) -> String {
    let mut out = String::new();
    out.push_str(
        "| Field | CER before | CER after | WER before | WER after | BLEU before | BLEU after |\n\
         |---|---|---|---|---|---|---|\n",
    );
    let mut rows: Vec<(String, Option<&FieldTextScore>, Option<&FieldTextScore>)> =
        row_order(before.fields.keys().chain(after.fields.keys()))
            .into_iter()
            .map(|k| (k.display_name().to_string(), before.fields.get(&k), after.fields.get(&k)))
            .collect();
    rows.push(("Overall".into(), Some(&before.overall), Some(&after.overall)));
    for (name, b, a) in rows {
        let pick = |s: Option<&FieldTextScore>, f: fn(&FieldTextScore) -> f64| {
            s.map(|s| num(f(s))).unwrap_or_else(|| "n/a".into())
        };
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            cell(&name),
            pick(b, |s| s.cer),
            pick(a, |s| s.cer),
            pick(b, |s| s.wer),
            pick(a, |s| s.wer),
            pick(b, |s| s.bleu),
            pick(a, |s| s.bleu),
        )
        .unwrap();
    }
    out
}

pub fn detection_run_markdown(report: &DetectionRunReport) -> String {
    let mut out = format!("# Field detection\n\nDocuments: {}\n\n", report.documents);
    out.push_str(&detection_markdown(&report.detection));
    warnings_section(&mut out, &report.annotation_warnings);
    out
}

fn warnings_section(out: &mut String, warnings: &[AnnotationWarning]) {
    if warnings.is_empty() {
        return;
    }
    out.push_str("\n## Annotation warnings\n\n");
    for w in warnings {
        writeln!(out, "- {}: {}", w.doc_id, cell(&w.warning)).unwrap();
    }
}

pub fn run_markdown(report: &RunReport) -> String {
    let mut out = format!(
        "# Pipeline run\n\nDocuments evaluated: {}; failed: {}\n\n## Field detection\n\n",
        report.documents,
        report.failures.len()
    );
    out.push_str(&detection_markdown(&report.detection));
    out.push_str("\n## Recognition\n\n");
    match (&report.ocr_before, &report.ocr_after) {
        (Some(b), Some(a)) => out.push_str(&ocr_comparison(b, a)),
        _ => out.push_str("No transcribed fields were evaluated.\n"),
    }
    out.push_str("\n## Corrections\n\n");
    if report.correction_log.is_empty() {
        out.push_str("No fields were corrected.\n");
    } else {
        out.push_str(
            "| Document | Field | Original | Corrected | OCR confidence | KNN similarity |\n\
             |---|---|---|---|---|---|\n",
        );
        for r in &report.correction_log {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                cell(&r.doc_id),
                cell(r.field.display_name()),
                cell(&r.original),
                cell(&r.corrected),
                num(r.ocr_confidence),
                num(r.knn_similarity)
            )
            .unwrap();
        }
    }
    if !report.implausible_years.is_empty() {
        out.push_str("\n## Implausible years\n\n");
        for y in &report.implausible_years {
            writeln!(out, "- {}: {:?}", y.doc_id, y.text).unwrap();
        }
    }
    warnings_section(&mut out, &report.annotation_warnings);
    if !report.failures.is_empty() {
        out.push_str("\n## Failures\n\n| Document | Stage | Error |\n|---|---|---|\n");
        for f in &report.failures {
            let stage = serde_json::to_value(f.stage).unwrap();
            writeln!(
                out,
                "| {} | {} | {} |",
                cell(&f.doc_id),
                stage.as_str().unwrap_or_default(),
                cell(&f.error)
            )
            .unwrap();
        }
    }
    out
}
