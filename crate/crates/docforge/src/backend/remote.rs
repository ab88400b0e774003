use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use docforge_core::{BoundingBox, DetectedField};
use serde::de::DeserializeOwned;
use ureq::Agent;

use super::wire::{
    DetectRequestBody, DetectResponseBody, ErrorBody, HealthBody, RecognizeRequestBody,
    RecognizeResponseBody,
};
use super::{
    checked_proposal, checked_response, parse_field, protocol, BackendDescriptor, BackendError,
    ImageSource, RecognitionBackend, RecognitionRequest, RecognitionResponse,
};

/// Header carrying the square patch side the server should resize to.
pub const PATCH_SIDE_HEADER: &str = "x-patch-side";

/// HTTP client for a model server. Holds no per-request state and never
/// retries; callers decide what to do with a failure.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    agent: Agent,
    base: String,
    timeout: Duration,
    patch_side: u32,
}

impl RemoteBackend {
    pub fn new(desc: &BackendDescriptor) -> Result<Self, BackendError> {
        desc.validate()?;
        let base = desc.location.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(BackendError::InvalidRequest(format!(
                "remote location {base:?} is not an http(s) URL"
            )));
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(desc.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteBackend {
            agent,
            base,
            timeout: desc.timeout(),
            patch_side: desc.patch_side,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn transport(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                BackendError::Timeout(self.timeout)
            }
            other => BackendError::Transport(other.to_string()),
        }
    }

    /// Sends one request and returns `(status, body)`.
    fn exchange(&self, path: &str, body: Option<String>) -> Result<(u16, String), BackendError> {
        let url = format!("{}{}", self.base, path);
        let result = match body {
            Some(body) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .header(PATCH_SIDE_HEADER, &self.patch_side.to_string())
                .send(body),
            None => self.agent.get(&url).call(),
        };
        let mut resp = result.map_err(|e| self.transport(e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport(e))?;
        Ok((status, text))
    }

    fn decode<T: DeserializeOwned>(status: u16, body: &str) -> Result<T, BackendError> {
        if !(200..300).contains(&status) {
            return Err(match serde_json::from_str::<ErrorBody>(body) {
                Ok(e) => BackendError::Server {
                    status,
                    error: e.error,
                    detail: e.detail,
                },
                Err(_) => protocol(format!("HTTP {status} without an error body"), body),
            });
        }
        serde_json::from_str(body).map_err(|e| protocol(e.to_string(), body))
    }

    /// True when the server reports a loaded model.
    pub fn health(&self) -> Result<(), BackendError> {
        let (status, body) = self.exchange("/healthz", None)?;
        let h: HealthBody = Self::decode(status, &body)?;
        if h.status == "ok" {
            Ok(())
        } else {
            Err(protocol(format!("server not ready: {}", h.status), &body))
        }
    }
}

impl RecognitionBackend for RemoteBackend {
    fn recognize_patch(&self, req: &RecognitionRequest) -> Result<RecognitionResponse, BackendError> {
        req.generation.validate()?;
        let g = req.generation;
        let body = RecognizeRequestBody {
            doc_id: req.doc_id.clone(),
            field: req.field.label().to_string(),
            patch_b64: STANDARD.encode(req.patch.bytes()?),
            max_length: g.max_length,
            beam_count: g.beam_count,
            no_repeat_ngram: g.no_repeat_ngram,
            length_penalty: g.length_penalty,
        };
        let (status, text) = self.exchange(
            "/recognize",
            Some(serde_json::to_string(&body).expect("request serializes")),
        )?;
        if status == 404 {
            return Err(BackendError::NotFound {
                doc_id: req.doc_id.clone(),
                field: Some(req.field.clone()),
            });
        }
        let r: RecognizeResponseBody = Self::decode(status, &text)?;
        checked_response(r.text, r.confidence, &text)
    }

    fn detect_fields(&self, doc_id: &str, image: &ImageSource) -> Result<Vec<DetectedField>, BackendError> {
        let body = DetectRequestBody {
            doc_id: doc_id.to_string(),
            image_b64: STANDARD.encode(image.bytes()?),
        };
        let (status, text) = self.exchange(
            "/detect",
            Some(serde_json::to_string(&body).expect("request serializes")),
        )?;
        if status == 404 {
            return Err(BackendError::NotFound {
                doc_id: doc_id.to_string(),
                field: None,
            });
        }
        let r: DetectResponseBody = Self::decode(status, &text)?;
        r.proposals
            .into_iter()
            .map(|p| {
                let kind = parse_field(&p.field, &text)?;
                let bbox = BoundingBox {
                    x_min: p.x_min,
                    y_min: p.y_min,
                    x_max: p.x_max,
                    y_max: p.y_max,
                };
                checked_proposal(kind, bbox, p.score, &text)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_http_locations() {
        assert!(RemoteBackend::new(&BackendDescriptor::remote("/tmp/x")).is_err());
        let b = RemoteBackend::new(&BackendDescriptor::remote("http://127.0.0.1:9/")).unwrap();
        assert_eq!(b.base_url(), "http://127.0.0.1:9");
    }

    #[test]
    fn error_bodies_become_server_errors() {
        let e = RemoteBackend::decode::<HealthBody>(503, r#"{"error":"not_ready","detail":"loading"}"#);
        match e {
            Err(BackendError::Server { status, error, detail }) => {
                assert_eq!((status, error.as_str(), detail.as_str()), (503, "not_ready", "loading"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RemoteBackend::decode::<HealthBody>(500, "<html>"),
            Err(BackendError::Protocol { .. })
        ));
        assert!(matches!(
            RemoteBackend::decode::<HealthBody>(200, r#"{"state":"ok"}"#),
            Err(BackendError::Protocol { .. })
        ));
    }
}
