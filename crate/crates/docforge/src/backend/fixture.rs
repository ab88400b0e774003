use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use docforge_core::{BoundingBox, DetectedField, FieldKind};
use serde::{Deserialize, Serialize};

use super::{
    checked_proposal, checked_response, protocol, BackendError, ImageSource, RecognitionBackend,
    RecognitionRequest, RecognitionResponse,
};

/// Stored detector proposal; its field is the one named by the record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureProposal {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub score: f64,
}

/// Contents of `<root>/<doc_id>/<field label>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub text: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposals: Option<Vec<FixtureProposal>>,
}

/// Answers requests from record files; never looks at image bytes.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    root: PathBuf,
}

impl FixtureBackend {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, BackendError> {
        let root = root.as_ref().to_path_buf();
        match fs::metadata(&root) {
            Ok(m) if m.is_dir() => Ok(FixtureBackend { root }),
            Ok(_) => Err(BackendError::InvalidRequest(format!(
                "fixture root {} is not a directory",
                root.display()
            ))),
            Err(source) => Err(BackendError::Io { path: root, source }),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_dir(&self, doc_id: &str) -> Result<PathBuf, BackendError> {
        let bad = doc_id.is_empty()
            || doc_id == "."
            || doc_id == ".."
            || doc_id.contains(['/', '\\', '\0']);
        if bad {
            return Err(BackendError::InvalidRequest(format!(
                "document id {doc_id:?} cannot name a fixture directory"
            )));
        }
        Ok(self.root.join(doc_id))
    }

    fn read_record(path: &Path) -> Result<(FixtureRecord, String), BackendError> {
        let content = fs::read_to_string(path).map_err(|source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let record = serde_json::from_str(&content)
            .map_err(|e| protocol(format!("{}: {e}", path.display()), &content))?;
        Ok((record, content))
    }

    /// Field record files of one document, sorted by file name.
    fn record_files(&self, doc_id: &str) -> Result<Vec<(FieldKind, PathBuf)>, BackendError> {
        let dir = self.doc_dir(doc_id)?;
        let listing = match fs::read_dir(&dir) {
            Ok(l) => l,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Err(BackendError::NotFound {
                    doc_id: doc_id.to_string(),
                    field: None,
                })
            }
            Err(source) => return Err(BackendError::Io { path: dir, source }),
        };
        let mut files = Vec::new();
        for item in listing {
            let item = item.map_err(|source| BackendError::Io {
                path: dir.clone(),
                source,
            })?;
            let path = item.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let kind = FieldKind::parse(stem)
                .map_err(|_| protocol("record file without a field name", &path.display().to_string()))?;
            files.push((kind, path));
        }
        files.sort_by(|a, b| a.1.cmp(&b.1));
        Ok(files)
    }

    /// Writes one record file, creating the document directory as needed.
    pub fn write_record(
        &self,
        doc_id: &str,
        field: &FieldKind,
        record: &FixtureRecord,
    ) -> Result<PathBuf, BackendError> {
        let dir = self.doc_dir(doc_id)?;
        fs::create_dir_all(&dir).map_err(|source| BackendError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join(format!("{}.json", field.label()));
        let mut body = serde_json::to_string_pretty(record).expect("record serializes");
        body.push('\n');
        fs::write(&path, body).map_err(|source| BackendError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

impl RecognitionBackend for FixtureBackend {
    fn recognize_patch(&self, req: &RecognitionRequest) -> Result<RecognitionResponse, BackendError> {
        req.generation.validate()?;
        let path = self
            .doc_dir(&req.doc_id)?
            .join(format!("{}.json", req.field.label()));
        let (record, content) = match Self::read_record(&path) {
            Err(BackendError::Io { source, .. }) if source.kind() == ErrorKind::NotFound => {
                return Err(BackendError::NotFound {
                    doc_id: req.doc_id.clone(),
                    field: Some(req.field.clone()),
                })
            }
            other => other?,
        };
        checked_response(record.text, record.confidence, &content)
    }

    fn detect_fields(&self, doc_id: &str, _image: &ImageSource) -> Result<Vec<DetectedField>, BackendError> {
        let mut out = Vec::new();
        for (kind, path) in self.record_files(doc_id)? {
            let (record, content) = Self::read_record(&path)?;
            for p in record.proposals.unwrap_or_default() {
                let bbox = BoundingBox {
                    x_min: p.x_min,
                    y_min: p.y_min,
                    x_max: p.x_max,
                    y_max: p.y_max,
                };
                out.push(checked_proposal(kind.clone(), bbox, p.score, &content)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::GenerationConfig;

    fn request(doc: &str, field: FieldKind) -> RecognitionRequest {
        RecognitionRequest {
            doc_id: doc.into(),
            field,
            patch: ImageSource::Inline(Vec::new()),
            generation: GenerationConfig::default(),
        }
    }

    fn store() -> (tempfile::TempDir, FixtureBackend) {
        let dir = tempfile::tempdir().unwrap();
        let b = FixtureBackend::open(dir.path()).unwrap();
        b.write_record(
            "doc7",
            &FieldKind::Year,
            &FixtureRecord {
                text: "2019".into(),
                confidence: 0.89,
                proposals: Some(vec![
                    FixtureProposal { x_min: 1.0, y_min: 1.0, x_max: 5.0, y_max: 4.0, score: 0.9 },
                    FixtureProposal { x_min: 2.0, y_min: 1.0, x_max: 6.0, y_max: 4.0, score: 0.4 },
                ]),
            },
        )
        .unwrap();
        b.write_record(
            "doc3",
            &FieldKind::ComplainantName,
            &FixtureRecord { text: "Lian Min Thang".into(), confidence: 0.77, proposals: None },
        )
        .unwrap();
        (dir, b)
    }

    #[test]
    fn returns_stored_rows_verbatim() {
        let (_d, b) = store();
        let r = b.recognize_patch(&request("doc7", FieldKind::Year)).unwrap();
        assert_eq!((r.text.as_str(), r.confidence), ("2019", 0.89));
        let r = b.recognize_patch(&request("doc3", FieldKind::ComplainantName)).unwrap();
        assert_eq!((r.text.as_str(), r.confidence), ("Lian Min Thang", 0.77));
    }

    #[test]
    fn missing_row_is_not_found() {
        let (_d, b) = store();
        match b.recognize_patch(&request("doc9", FieldKind::Statute)) {
            Err(BackendError::NotFound { doc_id, field }) => {
                assert_eq!(doc_id, "doc9");
                assert_eq!(field, Some(FieldKind::Statute));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            b.recognize_patch(&request("doc7", FieldKind::Statute)),
            Err(BackendError::NotFound { .. })
        ));
    }

    #[test]
    fn proposals_pass_through_unfiltered() {
        let (_d, b) = store();
        let img = ImageSource::Inline(Vec::new());
        let p = b.detect_fields("doc7", &img).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|d| d.kind == FieldKind::Year));
        assert!(b.detect_fields("doc3", &img).unwrap().is_empty());
        assert!(matches!(
            b.detect_fields("doc9", &img),
            Err(BackendError::NotFound { field: None, .. })
        ));
    }

    #[test]
    fn invalid_records_are_protocol_errors() {
        let (d, b) = store();
        std::fs::write(
            d.path().join("doc7/statute.json"),
            r#"{"text":"x","confidence":1.3}"#,
        )
        .unwrap();
        assert!(matches!(
            b.recognize_patch(&request("doc7", FieldKind::Statute)),
            Err(BackendError::Protocol { .. })
        ));
        std::fs::write(
            d.path().join("doc3/statute.json"),
            r#"{"text":"x","confidence":0.3,"proposals":[{"x_min":5,"y_min":0,"x_max":1,"y_max":2,"score":0.5}]}"#,
        )
        .unwrap();
        match b.detect_fields("doc3", &ImageSource::Inline(Vec::new())) {
            Err(BackendError::Protocol { excerpt, .. }) => assert!(excerpt.contains("x_min")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn path_like_ids_are_refused() {
        let (_d, b) = store();
        for id in ["../doc7", "a/b", "..", ""] {
            assert!(matches!(
                b.recognize_patch(&request(id, FieldKind::Year)),
                Err(BackendError::InvalidRequest(_))
            ));
        }
    }

    #[test]
    fn repeated_requests_agree() {
        let (_d, b) = store();
        let a = b.detect_fields("doc7", &ImageSource::Inline(Vec::new())).unwrap();
        let c = b.detect_fields("doc7", &ImageSource::Inline(Vec::new())).unwrap();
        assert_eq!(a, c);
    }
}
