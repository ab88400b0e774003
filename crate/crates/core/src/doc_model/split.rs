use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" | "testing" => Ok(Split::Test),
            other => Err(alloc::format!("unknown split tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub split: Split,
    /// Annotation file, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("document {0:?} appears more than once in the manifest")]
    DuplicateDocId(String),
    #[error("manifest entry with empty document id")]
    EmptyDocId,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if e.doc_id.trim().is_empty() {
                return Err(ManifestError::EmptyDocId);
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(ManifestError::DuplicateDocId(e.doc_id.clone()));
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("no documents to split")]
    Empty,
    #[error("{name} must lie strictly between 0 and 1, got {value}")]
    FractionOutOfRange { name: &'static str, value: f64 },
    #[error("document {0:?} listed twice")]
    DuplicateDocId(String),
}

// Absorbs representation error such as 300 * 0.3 = 89.99999999999999.
const FLOOR_SLACK: f64 = 1e-9;

fn floor_count(n: usize, fraction: f64) -> usize {
    libm::floor(n as f64 * fraction + FLOOR_SLACK) as usize
}

/// Deterministically partitions `docs` into train, validation and test.
///
/// The test split takes `floor(n * test_fraction)` documents; the validation
/// split takes `floor(train_side * validation_fraction_of_train)` of the rest.
/// Rounding remainders stay in training. Input order does not matter: ids are
/// sorted before the seeded shuffle, and entries come back sorted by id.
pub fn split_dataset(
    docs: &[String],
    test_fraction: f64,
    validation_fraction_of_train: f64,
    seed: u64,
) -> Result<DatasetManifest, SplitError> {
    if docs.is_empty() {
        return Err(SplitError::Empty);
    }
    for (name, value) in [
        ("test_fraction", test_fraction),
        ("validation_fraction_of_train", validation_fraction_of_train),
    ] {
        if !(value > 0.0 && value < 1.0) {
            return Err(SplitError::FractionOutOfRange { name, value });
        }
    }

    let mut ids: Vec<&str> = docs.iter().map(String::as_str).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(SplitError::DuplicateDocId(String::from(w[0])));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = ids.clone();
    order.shuffle(&mut rng);

    let n_test = floor_count(order.len(), test_fraction);
    let n_val = floor_count(order.len() - n_test, validation_fraction_of_train);

    let mut entries: Vec<ManifestEntry> = order
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Validation
            } else {
                Split::Train
            };
            ManifestEntry {
                doc_id: String::from(*id),
                split,
                annotation: None,
                image: None,
            }
        })
        .collect();
    entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(DatasetManifest { entries })
}
