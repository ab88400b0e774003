//! End-to-end orchestration: detect → select → recognize → correct → evaluate.
//!
//! Documents are processed independently on a bounded worker pool. Results
//! are collected in doc_id order, so reports do not depend on which worker
//! finished first. A failing document is recorded and left out of every
//! metric; the rest of the corpus still runs.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use docforge_core::corrector::{correct_field_traced, plausible_year};
use docforge_core::detection::{detection_metrics, nms, rank_order, top_k_per_field, DocumentMatches};
use docforge_core::doc_model::validate_annotation;
use docforge_core::text_metrics::{evaluate_ocr, EvalOptions, OcrTable};
use docforge_core::{DetectedField, DocumentAnnotation, FieldKind, RecognizedField};
use rayon::prelude::*;
use thiserror::Error;

use crate::annotation_io::parse_labelme;
use crate::backend::{
    BackendDescriptor, BackendError, BackendKind, FixtureBackend, ImageSource, RecognitionBackend,
    RecognitionRequest, RemoteBackend,
};

pub use config::{
    load_gazetteer_files, ConfigError, LoadedConfig, OutputConfig, Overrides, PipelineConfig,
    ReportFormat, BACKEND_URL_ENV,
};
pub use report::{
    detection_markdown, detection_run_markdown, ocr_markdown, run_markdown, to_json,
    AnnotationWarning, CorrectionLogRow, DetectionRunReport, DocumentFailure, DocumentResult,
    FieldPrediction, RunReport, Stage, YearFlag,
};

/// Opens the configured backend; a remote backend must pass its health check.
pub fn connect(desc: &BackendDescriptor) -> Result<Box<dyn RecognitionBackend>, BackendError> {
    desc.validate()?;
    match desc.kind {
        BackendKind::Fixture => Ok(Box::new(FixtureBackend::open(&desc.location)?)),
        BackendKind::Remote => {
            let client = RemoteBackend::new(desc)?;
            client.health()?;
            Ok(Box::new(client))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentInput {
    pub doc_id: String,
    pub annotation: Option<PathBuf>,
    pub image: Option<PathBuf>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl LoadedConfig {
    /// Documents of the configured split, sorted by doc_id.
    pub fn documents(&self) -> Vec<DocumentInput> {
        let mut docs: Vec<DocumentInput> = self
            .manifest
            .in_split(self.config.split)
            .map(|e| DocumentInput {
                doc_id: e.doc_id.clone(),
                annotation: match &e.annotation {
                    Some(a) => Some(resolve(&self.manifest_dir, a)),
                    None => self
                        .config
                        .annotations_dir
                        .as_ref()
                        .map(|d| d.join(format!("{}.json", e.doc_id))),
                },
                image: e.image.as_ref().map(|i| resolve(&self.manifest_dir, i)),
            })
            .collect();
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        docs
    }

    fn patch(&self, doc_id: &str, field: &FieldKind) -> ImageSource {
        match &self.config.patches_dir {
            Some(dir) => ImageSource::Path(dir.join(doc_id).join(format!("{}.png", field.label()))),
            None => ImageSource::Inline(Vec::new()),
        }
    }
}

fn failure(doc_id: &str, stage: Stage, error: impl ToString, backend_wide: bool) -> DocumentFailure {
    DocumentFailure {
        doc_id: doc_id.to_string(),
        stage,
        error: error.to_string(),
        backend_wide,
    }
}

fn backend_failure(doc_id: &str, stage: Stage, e: &BackendError) -> DocumentFailure {
    failure(doc_id, stage, e, !e.is_document_scoped())
}

fn load_annotation(doc: &DocumentInput) -> Result<(DocumentAnnotation, Vec<AnnotationWarning>), DocumentFailure> {
    let Some(path) = &doc.annotation else {
        return Err(failure(
            &doc.doc_id,
            Stage::Annotation,
            "manifest entry names no annotation file and no annotations_dir is configured",
            false,
        ));
    };
    let content = fs::read_to_string(path)
        .map_err(|e| failure(&doc.doc_id, Stage::Annotation, format!("{}: {e}", path.display()), false))?;
    let ann = parse_labelme(&content, &doc.doc_id)
        .map_err(|e| failure(&doc.doc_id, Stage::Annotation, format!("{}: {e}", path.display()), false))?;
    let warnings: Vec<AnnotationWarning> = validate_annotation(&ann).iter().map(Into::into).collect();
    for w in &warnings {
        log::warn!("{}: {}", w.doc_id, w.warning);
    }
    Ok((ann, warnings))
}

struct Detected {
    annotation: DocumentAnnotation,
    warnings: Vec<AnnotationWarning>,
    selected: Vec<DetectedField>,
    matches: DocumentMatches,
}

fn detect_document(
    cfg: &LoadedConfig,
    backend: &dyn RecognitionBackend,
    doc: &DocumentInput,
) -> Result<Detected, DocumentFailure> {
    let (annotation, warnings) = load_annotation(doc)?;
    let image = match &doc.image {
        Some(p) => ImageSource::Path(p.clone()),
        None => ImageSource::Inline(Vec::new()),
    };
    let proposals = backend
        .detect_fields(&doc.doc_id, &image)
        .map_err(|e| backend_failure(&doc.doc_id, Stage::Detection, &e))?;
    let params = &cfg.config.detection;
    let survivors = nms(&proposals, params.nms_iou);
    let selected = top_k_per_field(&survivors, params.top_k, params.score_threshold);
    let matches = DocumentMatches::evaluate(&selected, &annotation.fields, params);
    Ok(Detected {
        annotation,
        warnings,
        selected,
        matches,
    })
}

/// Everything a fully processed document contributes to the report.
struct Processed {
    matches: DocumentMatches,
    /// (field, reference, text before correction, text after correction)
    ocr_pairs: Vec<(FieldKind, String, String, String)>,
    log: Vec<CorrectionLogRow>,
    years: Vec<YearFlag>,
    result: DocumentResult,
}

fn process_document(
    cfg: &LoadedConfig,
    backend: &dyn RecognitionBackend,
    doc: &DocumentInput,
) -> (Vec<AnnotationWarning>, Result<Processed, DocumentFailure>) {
    let det = match detect_document(cfg, backend, doc) {
        Ok(d) => d,
        Err(f) => return (Vec::new(), Err(f)),
    };
    let warnings = det.warnings.clone();
    (warnings, recognize_and_correct(cfg, backend, doc, det))
}

fn recognize_and_correct(
    cfg: &LoadedConfig,
    backend: &dyn RecognitionBackend,
    doc: &DocumentInput,
    det: Detected,
) -> Result<Processed, DocumentFailure> {
    // The best selected box of each field is the one that gets read.
    let mut best: BTreeMap<FieldKind, &DetectedField> = BTreeMap::new();
    for d in &det.selected {
        best.entry(d.kind.clone())
            .and_modify(|cur| {
                if rank_order(d, cur).is_lt() {
                    *cur = d;
                }
            })
            .or_insert(d);
    }

    let mut finals: BTreeMap<FieldKind, RecognizedField> = BTreeMap::new();
    let mut log = Vec::new();
    let mut years = Vec::new();
    let mut fields = Vec::new();
    for (kind, d) in &best {
        let req = RecognitionRequest {
            doc_id: doc.doc_id.clone(),
            field: kind.clone(),
            patch: cfg.patch(&doc.doc_id, kind),
            generation: cfg.config.generation,
        };
        let resp = backend
            .recognize_patch(&req)
            .map_err(|e| backend_failure(&doc.doc_id, Stage::Recognition, &e))?;
        let rec = RecognizedField::new(kind.clone(), resp.text, resp.confidence);
        let trace = correct_field_traced(&rec, &cfg.indexes, &cfg.config.policy)
            .map_err(|e| failure(&doc.doc_id, Stage::Correction, e, false))?;
        let out = trace.field.clone();
        if out.corrected {
            log.push(CorrectionLogRow {
                doc_id: doc.doc_id.clone(),
                field: kind.clone(),
                original: out.original_text.clone(),
                corrected: out.text.clone(),
                ocr_confidence: out.confidence,
                knn_similarity: trace.replacement_similarity().unwrap_or(0.0),
            });
        }
        if *kind == FieldKind::Year && !plausible_year(&out.text) {
            years.push(YearFlag {
                doc_id: doc.doc_id.clone(),
                text: out.text.clone(),
            });
        }
        fields.push(FieldPrediction {
            field: kind.clone(),
            bbox: d.bbox,
            score: d.score,
            text: out.text.clone(),
            ocr_confidence: out.confidence,
            corrected: out.corrected,
            original_text: out.original_text.clone(),
        });
        finals.insert(kind.clone(), out);
    }

    // A transcribed field that was never detected is read as empty text.
    let mut ocr_pairs = Vec::new();
    for f in &det.annotation.fields {
        let Some(reference) = f.value.as_deref().filter(|v| !v.trim().is_empty()) else {
            continue;
        };
        let (before, after) = finals
            .get(&f.kind)
            .map(|r| (r.original_text.clone(), r.text.clone()))
            .unwrap_or_default();
        ocr_pairs.push((f.kind.clone(), reference.to_string(), before, after));
    }

    Ok(Processed {
        matches: det.matches,
        ocr_pairs,
        log,
        years,
        result: DocumentResult {
            doc_id: doc.doc_id.clone(),
            fields,
        },
    })
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("{} document(s) failed during detection", .0.len())]
    Detection(Vec<DocumentFailure>),
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Detection metrics over the configured split. Any document failure aborts
/// the evaluation and all failures are returned.
pub fn run_detection(
    cfg: &LoadedConfig,
    backend: &dyn RecognitionBackend,
    workers: usize,
) -> Result<DetectionRunReport, PipelineError> {
    let docs = cfg.documents();
    let results: Vec<Result<Detected, DocumentFailure>> = with_pool(workers, || {
        docs.par_iter().map(|d| detect_document(cfg, backend, d)).collect()
    })?;
    let mut failures = Vec::new();
    let mut matches = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(d) => {
                matches.push(d.matches);
                warnings.extend(d.warnings);
            }
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(PipelineError::Detection(failures));
    }
    Ok(DetectionRunReport {
        documents: matches.len(),
        detection: detection_metrics(&matches),
        annotation_warnings: warnings,
    })
}

fn ocr_table(pairs: &[(FieldKind, &str, &str)], options: EvalOptions) -> Option<OcrTable> {
    if pairs.is_empty() {
        None
    } else {
        // references are pre-filtered to be non-blank, so this cannot fail
        Some(evaluate_ocr(pairs, options).expect("non-empty references"))
    }
}

/// The full pipeline over the configured split.
pub fn run_pipeline(
    cfg: &LoadedConfig,
    backend: &dyn RecognitionBackend,
    workers: usize,
) -> Result<RunReport, PipelineError> {
    let docs = cfg.documents();
    let results = with_pool(workers, || {
        docs.par_iter()
            .map(|d| process_document(cfg, backend, d))
            .collect::<Vec<_>>()
    })?;

    let mut matches = Vec::new();
    let mut pairs: Vec<(FieldKind, String, String, String)> = Vec::new();
    let mut report = RunReport {
        documents: 0,
        detection: detection_metrics(&[]),
        ocr_before: None,
        ocr_after: None,
        correction_log: Vec::new(),
        implausible_years: Vec::new(),
        annotation_warnings: Vec::new(),
        failures: Vec::new(),
        predictions: Vec::new(),
    };
    for (warnings, r) in results {
        report.annotation_warnings.extend(warnings);
        match r {
            Ok(p) => {
                report.documents += 1;
                matches.push(p.matches);
                pairs.extend(p.ocr_pairs);
                report.correction_log.extend(p.log);
                report.implausible_years.extend(p.years);
                report.predictions.push(p.result);
            }
            Err(f) => {
                log::error!("{}: {:?} failed: {}", f.doc_id, f.stage, f.error);
                report.failures.push(f);
            }
        }
    }
    report.detection = detection_metrics(&matches);
    let options = EvalOptions {
        case_insensitive: cfg.config.case_insensitive,
    };
    let before: Vec<(FieldKind, &str, &str)> =
        pairs.iter().map(|(k, r, b, _)| (k.clone(), r.as_str(), b.as_str())).collect();
    let after: Vec<(FieldKind, &str, &str)> =
        pairs.iter().map(|(k, r, _, a)| (k.clone(), r.as_str(), a.as_str())).collect();
    report.ocr_before = ocr_table(&before, options);
    report.ocr_after = ocr_table(&after, options);
    Ok(report)
}

/// Writes `<stem>.json` and/or `<stem>.md` into `dir`, returning the paths.
pub fn write_reports(
    dir: &Path,
    formats: &[ReportFormat],
    stem: &str,
    json: &str,
    markdown: &str,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        let (ext, body) = match f {
            ReportFormat::Json => ("json", json),
            ReportFormat::Markdown => ("md", markdown),
        };
        let path = dir.join(format!("{stem}.{ext}"));
        if written.contains(&path) {
            continue;
        }
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
