//! Core algorithms for extracting fields from handwritten form documents.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): box
//! geometry and dataset splits ([`doc_model`]), detector post-processing and
//! scoring ([`detection`]), character n-gram TF-IDF post-correction
//! ([`corrector`]) and recognition metrics ([`text_metrics`]). File formats,
//! model backends and the command line live in the `docforge` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corrector;
pub mod detection;
pub mod doc_model;
pub mod text_metrics;

pub use doc_model::{
    iou, BoundingBox, DetectedField, DocumentAnnotation, FieldAnnotation, FieldKind,
    RecognizedField,
};
