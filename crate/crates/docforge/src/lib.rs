//! File formats, recognition backends, the end-to-end pipeline and the
//! `docforge` command line, built on the algorithms in `docforge-core`.

pub mod annotation_io;
pub mod cli;
pub mod backend;
pub mod index_store;
pub mod pipeline;

pub use docforge_core as core_algos;
