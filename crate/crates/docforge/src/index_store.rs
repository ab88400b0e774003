//! JSON persistence for gazetteer indexes.
//!
//! Layout: `{field, ngram_size, idf: {ngram: weight}, entries: [{text, vector: {ngram: weight}}]}`.
//! Weights are written in shortest round-trip form and read back with exact
//! float parsing, so a loaded index ranks queries exactly like the original.

use std::collections::BTreeMap;

use docforge_core::corrector::{IndexError, TfIdfIndex};
use docforge_core::FieldKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Serialize, Deserialize)]
struct StoredEntry {
    text: String,
    vector: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredIndex {
    field: FieldKind,
    ngram_size: usize,
    idf: BTreeMap<String, f64>,
    entries: Vec<StoredEntry>,
}

#[derive(Debug, Error)]
pub enum IndexStoreError {
    #[error("index file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("index file is inconsistent: {0}")]
    Invalid(#[from] IndexError),
}

pub fn save_index(index: &TfIdfIndex) -> String {
    let stored = StoredIndex {
        field: index.field().clone(),
        ngram_size: index.ngram_size(),
        idf: index
            .idf_weights()
            .map(|(g, w)| (g.to_string(), w))
            .collect(),
        entries: (0..index.len())
            .map(|i| StoredEntry {
                text: index.entries()[i].text.clone(),
                vector: index
                    .entry_weights(i)
                    .into_iter()
                    .map(|(g, w)| (g.to_string(), w))
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&stored).expect("index serializes");
    s.push('\n');
    s
}

pub fn load_index(content: &str) -> Result<TfIdfIndex, IndexStoreError> {
    let stored: StoredIndex = serde_json::from_str(content)?;
    Ok(TfIdfIndex::from_parts(
        stored.field,
        stored.ngram_size,
        stored.idf,
        stored
            .entries
            .into_iter()
            .map(|e| (e.text, e.vector))
            .collect(),
    )?)
}
