//! Readers and writers for annotation files, gazetteers, dataset manifests
//! and patch transcription metadata.

use std::collections::BTreeSet;

use docforge_core::corrector::GazetteerRecord;
use docforge_core::doc_model::{DatasetManifest, ImageExtent, ManifestError};
use docforge_core::{BoundingBox, DocumentAnnotation, FieldAnnotation, FieldKind};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelmeError {
    #[error("malformed annotation at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("shape {index}: {reason}")]
    Shape { index: usize, reason: String },
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(content: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = content
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(content.len())
}

fn syntax_error(content: &str, e: serde_json::Error) -> LabelmeError {
    LabelmeError::Syntax {
        offset: byte_offset(content, e.line(), e.column()),
        message: e.to_string(),
    }
}

#[derive(Deserialize)]
struct LabelmeFile {
    #[serde(rename = "imageWidth")]
    image_width: u32,
    #[serde(rename = "imageHeight")]
    image_height: u32,
    #[serde(default)]
    shapes: Vec<LabelmeShape>,
}

#[derive(Deserialize)]
struct LabelmeShape {
    label: String,
    #[serde(default)]
    points: Vec<(f64, f64)>,
    #[serde(default)]
    shape_type: Option<String>,
    #[serde(default)]
    description: Option<String>,
}

/// Parses a LabelMe JSON document.
///
/// Rectangle shapes (or shapes without a `shape_type`) become field
/// annotations; other shape types are skipped. The shape `description`, when
/// non-blank, is taken as the ground-truth transcription. Boxes are not
/// validated here; run [`validate_annotation`](docforge_core::doc_model::validate_annotation)
/// on the result.
pub fn parse_labelme(content: &str, doc_id: &str) -> Result<DocumentAnnotation, LabelmeError> {
    let file: LabelmeFile = serde_json::from_str(content).map_err(|e| syntax_error(content, e))?;
    let mut fields = Vec::with_capacity(file.shapes.len());
    for (index, shape) in file.shapes.into_iter().enumerate() {
        match shape.shape_type.as_deref() {
            None | Some("rectangle") => {}
            Some(other) => {
                log::debug!("{doc_id}: skipping shape {index} of type {other:?}");
                continue;
            }
        }
        let kind = FieldKind::parse(&shape.label).map_err(|_| LabelmeError::Shape {
            index,
            reason: "empty label".into(),
        })?;
        if shape.points.len() < 2 {
            return Err(LabelmeError::Shape {
                index,
                reason: format!("rectangle needs 2 points, found {}", shape.points.len()),
            });
        }
        let bbox = BoundingBox::enclosing(&shape.points).expect("at least two points");
        let value = shape
            .description
            .map(|d| d.trim().to_string())
            .filter(|d| !d.is_empty());
        fields.push(FieldAnnotation { kind, bbox, value });
    }
    Ok(DocumentAnnotation {
        doc_id: doc_id.to_string(),
        image_extent: ImageExtent {
            width: file.image_width,
            height: file.image_height,
        },
        fields,
    })
}

#[derive(Debug, Error)]
pub enum TupleError {
    #[error("line {line}: expected label, left, top, width, height[, value]")]
    Columns { line: usize },
    #[error("line {line}: {reason}")]
    Value { line: usize, reason: String },
}

/// Parses ground truth given as `(left, top, width, height)` tuples, one
/// tab-separated line per field: `label, left, top, width, height[, value]`.
///
/// Tuples that do not form a valid rectangle are kept (so validation can
/// report them) and also returned as warnings.
pub fn parse_box_tuples(
    content: &str,
    doc_id: &str,
    image_extent: ImageExtent,
) -> Result<(DocumentAnnotation, Vec<String>), TupleError> {
    let mut fields = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if !(5..=6).contains(&cols.len()) {
            return Err(TupleError::Columns { line });
        }
        let kind = FieldKind::parse(cols[0]).map_err(|e| TupleError::Value {
            line,
            reason: e.to_string(),
        })?;
        let mut nums = [0.0f64; 4];
        for (slot, col) in nums.iter_mut().zip(&cols[1..5]) {
            *slot = col.trim().parse().map_err(|_| TupleError::Value {
                line,
                reason: format!("not a number: {col:?}"),
            })?;
        }
        let [left, top, width, height] = nums;
        let bbox = match BoundingBox::from_left_top_width_height(left, top, width, height) {
            Ok(b) => b,
            Err(e) => {
                let msg = format!(
                    "{doc_id} line {line}: ({left}, {top}, {width}, {height}) read as left/top/width/height is not a valid box: {e}"
                );
                log::warn!("{msg}");
                warnings.push(msg);
                BoundingBox {
                    x_min: left,
                    y_min: top,
                    x_max: left + width,
                    y_max: top + height,
                }
            }
        };
        let value = cols
            .get(5)
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty());
        fields.push(FieldAnnotation { kind, bbox, value });
    }
    Ok((
        DocumentAnnotation {
            doc_id: doc_id.to_string(),
            image_extent,
            fields,
        },
        warnings,
    ))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GazetteerError {
    #[error("gazetteer for {0} has no entries")]
    Empty(FieldKind),
    #[error("line {line}: empty field label")]
    EmptyLabel { line: usize },
}

/// Reads a gazetteer: one entry per line, or `field<TAB>entry` lines in a
/// combined file (only rows for `field` are kept). Entries are trimmed with
/// case preserved; blank lines and repeated entries are dropped.
pub fn load_gazetteer(content: &str, field: &FieldKind) -> Result<Vec<GazetteerRecord>, GazetteerError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let entry = match line.split_once('\t') {
            Some((label, entry)) => {
                let kind = FieldKind::parse(label).map_err(|_| GazetteerError::EmptyLabel { line: i + 1 })?;
                if &kind != field {
                    continue;
                }
                entry
            }
            None => line,
        };
        let entry = entry.trim();
        if entry.is_empty() || !seen.insert(entry.to_string()) {
            continue;
        }
        out.push(GazetteerRecord::new(field.clone(), entry));
    }
    if out.is_empty() {
        return Err(GazetteerError::Empty(field.clone()));
    }
    Ok(out)
}

/// One-entry-per-line form of a gazetteer.
pub fn write_gazetteer(records: &[GazetteerRecord]) -> String {
    records.iter().map(|r| format!("{}\n", r.entry)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMetadataRow {
    pub patch_path: String,
    pub transcription: String,
    pub field: FieldKind,
    pub doc_id: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetadataError {
    #[error("patch path {0:?} appears more than once")]
    DuplicatePath(String),
    #[error("{column} for {path:?} contains a tab or line break")]
    Unrepresentable { path: String, column: &'static str },
}

/// Tab-separated `path, field, transcription` lines, LF-terminated, no
/// header, sorted by document then field.
pub fn write_patch_metadata(rows: &[PatchMetadataRow]) -> Result<String, MetadataError> {
    let mut paths = BTreeSet::new();
    for r in rows {
        if !paths.insert(r.patch_path.as_str()) {
            return Err(MetadataError::DuplicatePath(r.patch_path.clone()));
        }
        for (column, text) in [("path", r.patch_path.as_str()), ("transcription", r.transcription.as_str())] {
            if text.contains(['\t', '\n', '\r']) {
                return Err(MetadataError::Unrepresentable {
                    path: r.patch_path.clone(),
                    column,
                });
            }
        }
    }
    let mut sorted: Vec<&PatchMetadataRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.doc_id, &a.field, &a.patch_path).cmp(&(&b.doc_id, &b.field, &b.patch_path))
    });
    Ok(sorted
        .into_iter()
        .map(|r| format!("{}\t{}\t{}\n", r.patch_path, r.field.label(), r.transcription))
        .collect())
}

#[derive(Debug, Error)]
pub enum ManifestIoError {
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ManifestError),
}

pub fn read_manifest(content: &str) -> Result<DatasetManifest, ManifestIoError> {
    let m: DatasetManifest = serde_json::from_str(content)?;
    m.validate()?;
    Ok(m)
}

pub fn write_manifest(manifest: &DatasetManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}
