use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ngrams::extract_ngrams;
use crate::doc_model::FieldKind;
use crate::text_metrics::align;

pub const DEFAULT_NGRAM_SIZE: usize = 3;

/// One gazetteer line bound to the field it can fill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerRecord {
    pub field: FieldKind,
    pub entry: String,
}

impl GazetteerRecord {
    pub fn new(field: FieldKind, entry: impl Into<String>) -> Self {
        GazetteerRecord {
            field,
            entry: entry.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("cannot build an index from zero records")]
    Empty,
    #[error("n-gram size must be at least 1")]
    ZeroNgramSize,
    #[error("record {index} belongs to field {found}, index is for {expected}")]
    MixedFields {
        index: usize,
        expected: FieldKind,
        found: FieldKind,
    },
    #[error("idf weight for {ngram:?} must be finite and positive, got {weight}")]
    BadIdf { ngram: String, weight: f64 },
    #[error("entry {entry:?} uses n-gram {ngram:?} that has no idf weight")]
    UnknownNgram { entry: String, ngram: String },
    #[error("entry {entry:?} has invalid weight {weight} for {ngram:?}")]
    BadWeight {
        entry: String,
        ngram: String,
        weight: f64,
    },
    #[error("entry {entry:?} vector has norm {norm}, expected 1 or 0")]
    NotNormalized { entry: String, norm: f64 },
    #[error("n-gram {0:?} has an idf weight but occurs in no entry")]
    UnusedNgram(String),
    #[error("n-gram {ngram:?} does not have {expected} characters")]
    WrongNgramLength { ngram: String, expected: usize },
}

/// Sparse vector: `(dimension, weight)` pairs sorted by dimension.
pub type SparseVector = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub text: String,
    pub vector: SparseVector,
}

impl IndexEntry {
    /// Entries shorter than the n-gram size have an empty vector and can
    /// never be retrieved.
    pub fn is_reachable(&self) -> bool {
        !self.vector.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnMatch {
    pub entry: String,
    /// Cosine similarity in `[0, 1]`.
    pub similarity: f64,
}

/// TF-IDF vectors over the character n-grams of one field's gazetteer.
///
/// Every entry is a document. Term frequency is the raw n-gram count in the
/// entry, `idf = ln((1 + N) / (1 + df)) + 1`, and vectors are L2-normalized.
/// Dimensions are assigned in sorted n-gram order, which fixes the
/// floating-point summation order of every dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfIndex {
    field: FieldKind,
    ngram_size: usize,
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    entries: Vec<IndexEntry>,
    // dimension -> [(entry index, weight)]
    postings: Vec<Vec<(usize, f64)>>,
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    libm::log((1.0 + n_docs as f64) / (1.0 + df as f64)) + 1.0
}

fn normalize(mut v: SparseVector) -> SparseVector {
    let norm = libm::sqrt(v.iter().map(|(_, w)| w * w).sum::<f64>());
    if norm > 0.0 {
        for (_, w) in v.iter_mut() {
            *w /= norm;
        }
    }
    v
}

/// Builds the index. Records must all belong to one field; duplicates are not
/// removed here (loaders deduplicate), so repeated entries get equal vectors.
pub fn build_index(records: &[GazetteerRecord], ngram_size: usize) -> Result<TfIdfIndex, IndexError> {
    let first = records.first().ok_or(IndexError::Empty)?;
    if ngram_size == 0 {
        return Err(IndexError::ZeroNgramSize);
    }
    if let Some((index, r)) = records
        .iter()
        .enumerate()
        .find(|(_, r)| r.field != first.field)
    {
        return Err(IndexError::MixedFields {
            index,
            expected: first.field.clone(),
            found: r.field.clone(),
        });
    }

    let counts: Vec<BTreeMap<String, u32>> = records
        .iter()
        .map(|r| extract_ngrams(&r.entry, ngram_size))
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &counts {
        for gram in c.keys() {
            *df.entry(gram.as_str()).or_insert(0) += 1;
        }
    }
    let vocabulary: BTreeMap<String, usize> = df
        .keys()
        .enumerate()
        .map(|(i, g)| (String::from(*g), i))
        .collect();
    let idf: Vec<f64> = df.values().map(|&d| smoothed_idf(records.len(), d)).collect();

    let entries = records
        .iter()
        .zip(&counts)
        .map(|(r, c)| {
            let raw: SparseVector = c
                .iter()
                .map(|(g, &tf)| {
                    let dim = vocabulary[g];
                    (dim, f64::from(tf) * idf[dim])
                })
                .collect();
            IndexEntry {
                text: r.entry.clone(),
                vector: normalize(raw),
            }
        })
        .collect();
    Ok(TfIdfIndex::assemble(
        first.field.clone(),
        ngram_size,
        vocabulary,
        idf,
        entries,
    ))
}

impl TfIdfIndex {
    fn assemble(
        field: FieldKind,
        ngram_size: usize,
        vocabulary: BTreeMap<String, usize>,
        idf: Vec<f64>,
        entries: Vec<IndexEntry>,
    ) -> Self {
        let mut postings = alloc::vec![Vec::new(); idf.len()];
        for (ei, e) in entries.iter().enumerate() {
            for &(dim, w) in &e.vector {
                postings[dim].push((ei, w));
            }
        }
        TfIdfIndex {
            field,
            ngram_size,
            vocabulary,
            idf,
            entries,
            postings,
        }
    }

    /// Rebuilds an index from persisted weights, checking every invariant.
    /// Weights are taken verbatim, so search results match the original
    /// index bit for bit.
    pub fn from_parts(
        field: FieldKind,
        ngram_size: usize,
        idf: BTreeMap<String, f64>,
        entries: Vec<(String, BTreeMap<String, f64>)>,
    ) -> Result<Self, IndexError> {
        if ngram_size == 0 {
            return Err(IndexError::ZeroNgramSize);
        }
        if entries.is_empty() {
            return Err(IndexError::Empty);
        }
        let mut vocabulary = BTreeMap::new();
        let mut weights = Vec::with_capacity(idf.len());
        for (i, (gram, w)) in idf.into_iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(IndexError::BadIdf {
                    ngram: gram,
                    weight: w,
                });
            }
            if gram.chars().count() != ngram_size {
                return Err(IndexError::WrongNgramLength {
                    ngram: gram,
                    expected: ngram_size,
                });
            }
            vocabulary.insert(gram, i);
            weights.push(w);
        }
        let mut used = alloc::vec![false; weights.len()];
        let mut built = Vec::with_capacity(entries.len());
        for (text, vec) in entries {
            let mut v = SparseVector::with_capacity(vec.len());
            for (gram, w) in vec {
                let Some(&dim) = vocabulary.get(&gram) else {
                    return Err(IndexError::UnknownNgram { entry: text, ngram: gram });
                };
                if !(w.is_finite() && w > 0.0) {
                    return Err(IndexError::BadWeight {
                        entry: text,
                        ngram: gram,
                        weight: w,
                    });
                }
                used[dim] = true;
                v.push((dim, w));
            }
            let norm = libm::sqrt(v.iter().map(|(_, w)| w * w).sum::<f64>());
            if !v.is_empty() && (norm - 1.0).abs() > 1e-9 {
                return Err(IndexError::NotNormalized { entry: text, norm });
            }
            built.push(IndexEntry { text, vector: v });
        }
        if let Some(dim) = used.iter().position(|u| !u) {
            let gram = vocabulary
                .iter()
                .find(|(_, &d)| d == dim)
                .map(|(g, _)| g.clone())
                .unwrap_or_default();
            return Err(IndexError::UnusedNgram(gram));
        }
        Ok(Self::assemble(field, ngram_size, vocabulary, weights, built))
    }

    pub fn field(&self) -> &FieldKind {
        &self.field
    }

    pub fn ngram_size(&self) -> usize {
        self.ngram_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn idf(&self, ngram: &str) -> Option<f64> {
        self.vocabulary.get(ngram).map(|&d| self.idf[d])
    }

    /// `(n-gram, idf)` in dimension order.
    pub fn idf_weights(&self) -> impl Iterator<Item = (&str, f64)> {
        self.vocabulary.iter().map(|(g, &d)| (g.as_str(), self.idf[d]))
    }

    /// Entry vector keyed by n-gram text.
    pub fn entry_weights(&self, entry: usize) -> BTreeMap<&str, f64> {
        let by_dim: BTreeMap<usize, &str> =
            self.vocabulary.iter().map(|(g, &d)| (d, g.as_str())).collect();
        self.entries[entry]
            .vector
            .iter()
            .map(|&(d, w)| (by_dim[&d], w))
            .collect()
    }

    pub fn unreachable_entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(|e| !e.is_reachable())
    }

    /// TF-IDF vector of a query, with n-grams outside the vocabulary dropped.
    pub fn vectorize(&self, query: &str) -> SparseVector {
        let raw: SparseVector = extract_ngrams(query, self.ngram_size)
            .iter()
            .filter_map(|(g, &tf)| {
                self.vocabulary
                    .get(g)
                    .map(|&dim| (dim, f64::from(tf) * self.idf[dim]))
            })
            .collect();
        normalize(raw)
    }

    /// Nearest gazetteer entries by cosine similarity, best first.
    ///
    /// Equal similarities are ordered by Levenshtein distance between the
    /// raw query and entry, then by entry text, then by position. Entries
    /// with no n-grams never appear. A query sharing no n-gram with the
    /// vocabulary returns nothing.
    pub fn knn_search(&self, query: &str, k: usize) -> Vec<KnnMatch> {
        let q = self.vectorize(query);
        if q.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut scores = alloc::vec![0.0f64; self.entries.len()];
        for &(dim, qw) in &q {
            for &(ei, ew) in &self.postings[dim] {
                scores[ei] += qw * ew;
            }
        }
        let mut ranked: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| self.entries[*i].is_reachable())
            .map(|(i, &s)| (s.clamp(0.0, 1.0), i))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

        let query_chars: Vec<char> = query.chars().collect();
        let mut out: Vec<KnnMatch> = Vec::with_capacity(k.min(ranked.len()));
        let mut start = 0;
        while start < ranked.len() && out.len() < k {
            let sim = ranked[start].0;
            let end = start + ranked[start..].iter().take_while(|r| r.0 == sim).count();
            let mut group: Vec<(usize, &str, usize)> = ranked[start..end]
                .iter()
                .map(|&(_, i)| {
                    let text = self.entries[i].text.as_str();
                    let entry_chars: Vec<char> = text.chars().collect();
                    (align(&query_chars, &entry_chars).distance(), text, i)
                })
                .collect();
            group.sort_by(tie_break);
            for (_, text, _) in group.into_iter().take(k - out.len()) {
                out.push(KnnMatch {
                    entry: String::from(text),
                    similarity: sim,
                });
            }
            start = end;
        }
        out
    }
}

fn tie_break(a: &(usize, &str, usize), b: &(usize, &str, usize)) -> Ordering {
    a.0.cmp(&b.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2))
}

/// Free-function form of [`TfIdfIndex::knn_search`].
pub fn knn_search(index: &TfIdfIndex, query: &str, k: usize) -> Vec<KnnMatch> {
    index.knn_search(query, k)
}
