//! Detector and recognizer backends.
//!
//! Two implementations share one trait: [`FixtureBackend`] answers from
//! per-document record files on disk, and [`RemoteBackend`] talks to a model
//! server over HTTP. Both validate everything they return, so a confidence
//! outside `[0, 1]` or an inverted box never reaches the pipeline.

mod fixture;
mod remote;
pub mod wire;

use std::path::PathBuf;
use std::time::Duration;

use docforge_core::{BoundingBox, DetectedField, FieldKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{FixtureBackend, FixtureProposal, FixtureRecord};
pub use remote::RemoteBackend;

pub const DEFAULT_PATCH_SIDE: u32 = 384;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(clap::ValueEnum)]
pub enum BackendKind {
    Fixture,
    Remote,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_patch_side() -> u32 {
    DEFAULT_PATCH_SIDE
}

/// Where and how to reach a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Fixture root directory or server base URL.
    pub location: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Square side the server resizes patches to; transmitted, never applied here.
    #[serde(default = "default_patch_side")]
    pub patch_side: u32,
}

impl BackendDescriptor {
    pub fn fixture(root: impl Into<String>) -> Self {
        BackendDescriptor {
            kind: BackendKind::Fixture,
            location: root.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            patch_side: DEFAULT_PATCH_SIDE,
        }
    }

    pub fn remote(url: impl Into<String>) -> Self {
        BackendDescriptor {
            kind: BackendKind::Remote,
            ..Self::fixture(url)
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.patch_side == 0 {
            return Err(BackendError::InvalidRequest("patch_side must be positive".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidRequest("timeout_ms must be positive".into()));
        }
        if self.location.trim().is_empty() {
            return Err(BackendError::InvalidRequest("backend location is empty".into()));
        }
        Ok(())
    }
}

/// Decoding settings forwarded to the recognizer untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub max_length: u32,
    pub beam_count: u32,
    pub no_repeat_ngram: u32,
    pub length_penalty: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_length: 32,
            beam_count: 4,
            no_repeat_ngram: 3,
            length_penalty: 2.0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_length < 1 {
            return Err(BackendError::InvalidRequest("max_length must be at least 1".into()));
        }
        if self.beam_count < 1 {
            return Err(BackendError::InvalidRequest("beam_count must be at least 1".into()));
        }
        if !self.length_penalty.is_finite() {
            return Err(BackendError::InvalidRequest("length_penalty must be finite".into()));
        }
        Ok(())
    }
}

/// A field patch or page image, either on disk or already in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    Path(PathBuf),
    Inline(Vec<u8>),
}

impl ImageSource {
    pub fn bytes(&self) -> Result<Vec<u8>, BackendError> {
        match self {
            ImageSource::Path(p) => std::fs::read(p).map_err(|source| BackendError::Io {
                path: p.clone(),
                source,
            }),
            ImageSource::Inline(b) => Ok(b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionRequest {
    pub doc_id: String,
    pub field: FieldKind,
    pub patch: ImageSource,
    pub generation: GenerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResponse {
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no backend record for document {doc_id:?}, field {field:?}")]
    NotFound { doc_id: String, field: Option<FieldKind> },
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed backend response ({detail}): {excerpt}")]
    Protocol { detail: String, excerpt: String },
    #[error("backend returned HTTP {status}: {error}: {detail}")]
    Server { status: u16, error: String, detail: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Errors that concern one document rather than the backend as a whole.
    pub fn is_document_scoped(&self) -> bool {
        matches!(
            self,
            BackendError::NotFound { .. } | BackendError::Protocol { .. } | BackendError::Io { .. }
        ) || matches!(self, BackendError::Server { status, .. } if (400..500).contains(status))
    }
}

const EXCERPT_CHARS: usize = 200;

pub(crate) fn excerpt(payload: &str) -> String {
    let mut chars = payload.chars();
    let head: String = chars.by_ref().take(EXCERPT_CHARS).collect();
    if chars.next().is_some() {
        format!("{head}…")
    } else {
        head
    }
}

pub(crate) fn protocol(detail: impl Into<String>, payload: &str) -> BackendError {
    BackendError::Protocol {
        detail: detail.into(),
        excerpt: excerpt(payload),
    }
}

/// Checks a recognizer answer and applies the only normalization allowed:
/// trailing whitespace is trimmed.
pub(crate) fn checked_response(
    text: String,
    confidence: f64,
    payload: &str,
) -> Result<RecognitionResponse, BackendError> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(protocol(format!("confidence {confidence} outside [0, 1]"), payload));
    }
    Ok(RecognitionResponse {
        text: text.trim_end().to_string(),
        confidence,
    })
}

pub(crate) fn checked_proposal(
    kind: FieldKind,
    bbox: BoundingBox,
    score: f64,
    payload: &str,
) -> Result<DetectedField, BackendError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(protocol(format!("score {score} outside [0, 1]"), payload));
    }
    bbox.check()
        .map_err(|e| protocol(format!("invalid box: {e}"), payload))?;
    Ok(DetectedField { kind, bbox, score })
}

pub(crate) fn parse_field(label: &str, payload: &str) -> Result<FieldKind, BackendError> {
    FieldKind::parse(label).map_err(|_| protocol("empty field label", payload))
}

pub trait RecognitionBackend: Send + Sync {
    fn recognize_patch(&self, req: &RecognitionRequest) -> Result<RecognitionResponse, BackendError>;

    /// Raw, unfiltered proposals for one page.
    fn detect_fields(&self, doc_id: &str, image: &ImageSource) -> Result<Vec<DetectedField>, BackendError>;
}

pub fn open_backend(desc: &BackendDescriptor) -> Result<Box<dyn RecognitionBackend>, BackendError> {
    desc.validate()?;
    Ok(match desc.kind {
        BackendKind::Fixture => Box::new(FixtureBackend::open(&desc.location)?),
        BackendKind::Remote => Box::new(RemoteBackend::new(desc)?),
    })
}
