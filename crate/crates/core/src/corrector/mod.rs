//! Gazetteer post-correction of low-confidence recognitions.
//!
//! Each correctable field has a database of valid values. The database is
//! turned into TF-IDF vectors over character n-grams ([`build_index`]); a
//! recognition whose confidence falls below the policy threshold is looked up
//! by cosine similarity ([`TfIdfIndex::knn_search`]) and replaced by its
//! nearest entry when that similarity is high enough ([`correct_field`]).

mod correct;
mod index;
mod ngrams;

pub use correct::{
    check_indexes, correct_field, correct_field_traced, plausible_year, CorrectionError,
    CorrectionPolicy, CorrectionTrace, Granularity, IndexSet, UnitDecision,
};
pub use index::{
    build_index, knn_search, smoothed_idf, GazetteerRecord, IndexEntry, IndexError, KnnMatch,
    SparseVector, TfIdfIndex, DEFAULT_NGRAM_SIZE,
};
pub use ngrams::extract_ngrams;
