use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::index::{KnnMatch, TfIdfIndex};
use crate::doc_model::{FieldKind, RecognizedField};

/// Unit of text looked up in the gazetteer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Each whitespace-separated token is corrected on its own.
    Token,
    /// The trimmed field value is matched as one string.
    WholeField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionPolicy {
    /// Recognitions with confidence strictly below this are corrected.
    pub ocr_confidence_threshold: f64,
    /// A unit is replaced only when the best similarity is strictly above this.
    pub knn_accept_threshold: f64,
    pub k: usize,
    /// Fields absent from this map are never corrected.
    pub granularity: BTreeMap<FieldKind, Granularity>,
}

impl Default for CorrectionPolicy {
    fn default() -> Self {
        let mut granularity = BTreeMap::new();
        granularity.insert(FieldKind::ComplainantName, Granularity::Token);
        granularity.insert(FieldKind::PoliceStation, Granularity::WholeField);
        granularity.insert(FieldKind::Statute, Granularity::WholeField);
        CorrectionPolicy {
            ocr_confidence_threshold: 0.7,
            knn_accept_threshold: 0.9,
            k: 1,
            granularity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrectionError {
    #[error("no gazetteer index for correctable field {0}")]
    MissingIndex(FieldKind),
    #[error("index registered under {registered} was built for {built}")]
    IndexFieldMismatch { registered: FieldKind, built: FieldKind },
    #[error("{name} must lie in [0, 1], got {value}")]
    ThresholdOutOfRange { name: &'static str, value: f64 },
    #[error("k must be at least 1")]
    ZeroK,
}

impl CorrectionPolicy {
    pub fn validate(&self) -> Result<(), CorrectionError> {
        for (name, value) in [
            ("ocr_confidence_threshold", self.ocr_confidence_threshold),
            ("knn_accept_threshold", self.knn_accept_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CorrectionError::ThresholdOutOfRange { name, value });
            }
        }
        if self.k == 0 {
            return Err(CorrectionError::ZeroK);
        }
        Ok(())
    }

    /// Whether `rec` goes to post-correction at all.
    pub fn considers(&self, rec: &RecognizedField) -> bool {
        rec.confidence < self.ocr_confidence_threshold && self.granularity.contains_key(&rec.kind)
    }
}

/// Per-field gazetteer indexes.
pub type IndexSet = BTreeMap<FieldKind, TfIdfIndex>;

/// Checks that every correctable field has an index built for that field.
pub fn check_indexes(indexes: &IndexSet, policy: &CorrectionPolicy) -> Result<(), CorrectionError> {
    for (registered, idx) in indexes {
        if idx.field() != registered {
            return Err(CorrectionError::IndexFieldMismatch {
                registered: registered.clone(),
                built: idx.field().clone(),
            });
        }
    }
    match policy.granularity.keys().find(|k| !indexes.contains_key(*k)) {
        Some(k) => Err(CorrectionError::MissingIndex(k.clone())),
        None => Ok(()),
    }
}

/// Lookup result for one unit of a considered field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDecision {
    pub unit: String,
    pub best: Option<KnnMatch>,
    /// The unit's text was rewritten.
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub field: RecognizedField,
    pub considered: bool,
    pub units: Vec<UnitDecision>,
}

impl CorrectionTrace {
    /// Lowest similarity among rewritten units, if any unit was rewritten.
    pub fn replacement_similarity(&self) -> Option<f64> {
        self.units
            .iter()
            .filter(|u| u.replaced)
            .filter_map(|u| u.best.as_ref().map(|b| b.similarity))
            .reduce(f64::min)
    }

    pub fn replaced_units(&self) -> impl Iterator<Item = (usize, &UnitDecision)> {
        self.units.iter().enumerate().filter(|(_, u)| u.replaced)
    }
}

/// Byte ranges of whitespace-separated tokens.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn decide(index: &TfIdfIndex, unit: &str, policy: &CorrectionPolicy) -> (UnitDecision, Option<String>) {
    let best = index.knn_search(unit, policy.k).into_iter().next();
    let replacement = best
        .as_ref()
        .filter(|b| b.similarity > policy.knn_accept_threshold && b.entry != unit)
        .map(|b| b.entry.clone());
    (
        UnitDecision {
            unit: String::from(unit),
            best,
            replaced: replacement.is_some(),
        },
        replacement,
    )
}

/// Post-corrects one recognition and reports how each unit was decided.
///
/// Fields at or above the OCR confidence threshold, and fields without a
/// configured granularity, come back untouched. Otherwise every unit is
/// looked up in the field's index and replaced by its nearest entry when the
/// similarity clears the acceptance threshold. Whitespace between tokens is
/// preserved. `original_text` always keeps the recognizer's first output.
pub fn correct_field_traced(
    rec: &RecognizedField,
    indexes: &IndexSet,
    policy: &CorrectionPolicy,
) -> Result<CorrectionTrace, CorrectionError> {
    if !policy.considers(rec) {
        return Ok(CorrectionTrace {
            field: rec.clone(),
            considered: false,
            units: Vec::new(),
        });
    }
    let granularity = policy.granularity[&rec.kind];
    let index = indexes
        .get(&rec.kind)
        .ok_or_else(|| CorrectionError::MissingIndex(rec.kind.clone()))?;

    let mut units = Vec::new();
    let text = match granularity {
        Granularity::Token => {
            let mut out = String::with_capacity(rec.text.len());
            let mut cursor = 0;
            for (s, e) in token_spans(&rec.text) {
                out.push_str(&rec.text[cursor..s]);
                let (decision, replacement) = decide(index, &rec.text[s..e], policy);
                out.push_str(replacement.as_deref().unwrap_or(&rec.text[s..e]));
                units.push(decision);
                cursor = e;
            }
            out.push_str(&rec.text[cursor..]);
            out
        }
        Granularity::WholeField => {
            let trimmed = rec.text.trim();
            if trimmed.is_empty() {
                rec.text.clone()
            } else {
                let (decision, replacement) = decide(index, trimmed, policy);
                units.push(decision);
                replacement.unwrap_or_else(|| rec.text.clone())
            }
        }
    };

    let mut field = rec.clone();
    if text != rec.text {
        field.corrected = text != rec.original_text;
        field.text = text;
    }
    Ok(CorrectionTrace {
        field,
        considered: true,
        units,
    })
}

pub fn correct_field(
    rec: &RecognizedField,
    indexes: &IndexSet,
    policy: &CorrectionPolicy,
) -> Result<RecognizedField, CorrectionError> {
    correct_field_traced(rec, indexes, policy).map(|t| t.field)
}

/// Four ASCII digits between 1900 and 2099. Year fields are checked with
/// this instead of a gazetteer.
pub fn plausible_year(text: &str) -> bool {
    let t = text.trim();
    t.len() == 4
        && t.bytes().all(|b| b.is_ascii_digit())
        && t.parse::<u16>().is_ok_and(|y| (1900..=2099).contains(&y))
}
