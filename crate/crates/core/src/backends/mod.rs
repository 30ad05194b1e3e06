//! Generation backends for template and slot prediction.
//!
//! [`ExtractiveBaseline`] is a deterministic heuristic so the whole pipeline
//! runs without model weights; [`RemoteBackend`] talks to a model server over
//! the `/v1/generate` JSON protocol.

mod baseline;
mod remote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::ExtractiveBaseline;
pub use remote::{RemoteBackend, RetryPolicy};

/// Environment variable that overrides the remote backend address.
pub const BACKEND_URL_ENV: &str = "SLOTSUM_BACKEND_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Template,
    Slot,
}

/// One generation request. `serialized_input` is the exact string a model
/// would consume: the slot query for slot requests, the newline-joined
/// documents for template requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendRequest {
    pub task: Task,
    pub entity_name: String,
    pub documents: Vec<String>,
    pub slot_key: Option<String>,
    pub serialized_input: String,
}

impl BackendRequest {
    pub fn template(entity_name: &str, documents: &[String]) -> Self {
        Self {
            task: Task::Template,
            entity_name: entity_name.to_string(),
            documents: documents.to_vec(),
            slot_key: None,
            serialized_input: documents.join("\n"),
        }
    }

    pub fn slot(entity_name: &str, slot_key: &str, documents: &[String]) -> Self {
        Self {
            task: Task::Slot,
            entity_name: entity_name.to_string(),
            documents: documents.to_vec(),
            slot_key: Some(slot_key.to_string()),
            serialized_input: crate::slotfill::format_slot_query(entity_name, slot_key, documents),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), BackendError> {
        match (self.task, &self.slot_key) {
            (Task::Slot, None) => Err(BackendError::InvalidRequest(
                "slot request without slot_key".into(),
            )),
            (Task::Template, Some(_)) => Err(BackendError::InvalidRequest(
                "template request must not carry slot_key".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendResponse {
    pub output: String,
    pub latency_ms: f64,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("no response from {url} after {attempts} attempt(s): {detail}")]
    Timeout {
        url: String,
        attempts: u32,
        detail: String,
    },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no evidence: {0}")]
    NoEvidence(String),
}

/// Anything that can answer template and slot requests.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn generate(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).generate(request)
    }
}

/// `builtin`, or `remote:ADDRESS` (address optional when
/// [`BACKEND_URL_ENV`] is set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Builtin,
    Remote(Option<String>),
}

impl BackendSpec {
    /// Resolves the remote address, letting `env_override` win.
    pub fn resolve(&self, env_override: Option<String>) -> Result<Option<String>, String> {
        match self {
            BackendSpec::Builtin => Ok(None),
            BackendSpec::Remote(addr) => env_override
                .filter(|s| !s.trim().is_empty())
                .or_else(|| addr.clone())
                .map(Some)
                .ok_or_else(|| {
                    format!(
                        "remote backend needs an address (remote:HOST:PORT or {BACKEND_URL_ENV})"
                    )
                }),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "builtin" {
            return Ok(BackendSpec::Builtin);
        }
        match s.strip_prefix("remote") {
            Some("") => Ok(BackendSpec::Remote(None)),
            Some(rest) => match rest.strip_prefix(':') {
                Some(addr) if !addr.is_empty() => Ok(BackendSpec::Remote(Some(addr.to_string()))),
                _ => Err(format!(
                    "bad backend `{s}`; expected builtin or remote:ADDRESS"
                )),
            },
            None => Err(format!(
                "bad backend `{s}`; expected builtin or remote:ADDRESS"
            )),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Builtin => f.write_str("builtin"),
            BackendSpec::Remote(None) => f.write_str("remote"),
            BackendSpec::Remote(Some(a)) => write!(f, "remote:{a}"),
        }
    }
}
