//! Domain types shared by every stage: field geometry, ground-truth
//! annotations, detector and recognizer outputs, and dataset splits.

mod field;
mod geometry;
mod split;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use field::{EmptyLabel, FieldKind};
pub use geometry::{iou, BoundingBox, GeometryError, ImageExtent};
pub use split::{split_dataset, DatasetManifest, ManifestEntry, ManifestError, Split, SplitError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldAnnotation {
    pub kind: FieldKind,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Ground-truth transcription; `None` for boxes annotated without text.
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentAnnotation {
    pub doc_id: String,
    pub image_extent: ImageExtent,
    pub fields: Vec<FieldAnnotation>,
}

impl DocumentAnnotation {
    pub fn field(&self, kind: &FieldKind) -> Option<&FieldAnnotation> {
        self.fields.iter().find(|f| &f.kind == kind)
    }
}

/// A raw or filtered detector proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedField {
    pub kind: FieldKind,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Recognizer output for one field, possibly rewritten by post-correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizedField {
    pub kind: FieldKind,
    pub text: String,
    pub confidence: f64,
    pub corrected: bool,
    pub original_text: String,
}

impl RecognizedField {
    pub fn new(kind: FieldKind, text: impl Into<String>, confidence: f64) -> Self {
        let text = text.into();
        RecognizedField {
            kind,
            original_text: text.clone(),
            text,
            confidence,
            corrected: false,
        }
    }

    pub fn is_consistent(&self) -> bool {
        (0.0..=1.0).contains(&self.confidence)
            && (self.corrected != (self.original_text == self.text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    NonFiniteCoordinate,
    NegativeCoordinate,
    DegenerateBox,
    OutsideImage,
    EmptyValue,
    DuplicateField,
    EmptyLabel,
    EmptyDocId,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::NonFiniteCoordinate => "box coordinate is not finite",
            Rule::NegativeCoordinate => "box coordinate is negative",
            Rule::DegenerateBox => "box has zero or negative width or height",
            Rule::OutsideImage => "box extends past the image extent",
            Rule::EmptyValue => "transcription is blank",
            Rule::DuplicateField => "field annotated more than once",
            Rule::EmptyLabel => "field label is empty",
            Rule::EmptyDocId => "document id is empty",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub doc_id: String,
    /// Index into `DocumentAnnotation::fields`; `None` for document-level rules.
    pub field_index: Option<usize>,
    pub field: Option<FieldKind>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.doc_id)?;
        if let (Some(i), Some(k)) = (self.field_index, &self.field) {
            write!(f, " field #{i} ({k})")?;
        }
        write!(f, ": {}", self.rule)
    }
}

/// Checks every annotation invariant. An empty result means the document is
/// well formed; nothing here fails early.
pub fn validate_annotation(doc: &DocumentAnnotation) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |idx: Option<usize>, field: Option<&FieldKind>, rule| {
        out.push(Violation {
            doc_id: doc.doc_id.clone(),
            field_index: idx,
            field: field.cloned(),
            rule,
        })
    };

    if doc.doc_id.trim().is_empty() {
        push(None, None, Rule::EmptyDocId);
    }

    let mut seen: BTreeMap<&FieldKind, usize> = BTreeMap::new();
    for (i, fa) in doc.fields.iter().enumerate() {
        let kind = Some(&fa.kind);
        if let FieldKind::Other(label) = &fa.kind {
            if label.trim().is_empty() {
                push(Some(i), kind, Rule::EmptyLabel);
            }
        }
        match fa.bbox.check() {
            Ok(()) => {
                if !fa.bbox.fits_within(doc.image_extent) {
                    push(Some(i), kind, Rule::OutsideImage);
                }
            }
            Err(GeometryError::NonFinite) => push(Some(i), kind, Rule::NonFiniteCoordinate),
            Err(GeometryError::Negative) => push(Some(i), kind, Rule::NegativeCoordinate),
            Err(GeometryError::Degenerate { .. }) => push(Some(i), kind, Rule::DegenerateBox),
        }
        if matches!(&fa.value, Some(v) if v.trim().is_empty()) {
            push(Some(i), kind, Rule::EmptyValue);
        }
        if fa.kind.is_builtin() {
            let count = seen.entry(&fa.kind).or_insert(0);
            *count += 1;
            if *count == 2 {
                push(Some(i), kind, Rule::DuplicateField);
            }
        }
    }
    out
}
