use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse, Task};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    task: Task,
    entity_name: &'a str,
    documents: &'a [String],
    slot_key: Option<&'a str>,
    input: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    output: String,
    backend_id: String,
}

/// Client for a model server speaking `POST /v1/generate`.
///
/// Transport failures and 5xx answers are retried with exponential backoff;
/// 4xx answers and unparsable bodies fail immediately. The client is cheap to
/// share across threads.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
    policy: RetryPolicy,
    id: String,
}

impl RemoteBackend {
    pub fn new(address: &str) -> Self {
        Self::with_policy(address, RetryPolicy::default())
    }

    pub fn with_policy(address: &str, policy: RetryPolicy) -> Self {
        let base = address.trim().trim_end_matches('/');
        let base = if base.starts_with("http://") || base.starts_with("https://") {
            base.to_string()
        } else {
            format!("http://{base}")
        };
        let agent = ureq::AgentBuilder::new().timeout(policy.timeout).build();
        Self {
            id: format!("remote:{base}"),
            endpoint: format!("{base}/v1/generate"),
            agent,
            policy,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call_once(&self, body: &WireRequest<'_>) -> Result<WireResponse, Attempt> {
        match self.agent.post(&self.endpoint).send_json(body) {
            Ok(resp) => {
                let text = resp
                    .into_string()
                    .map_err(|e| Attempt::Fatal(BackendError::MalformedResponse(e.to_string())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Attempt::Fatal(BackendError::MalformedResponse(e.to_string())))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let err = BackendError::Status {
                    code,
                    body: resp.into_string().unwrap_or_default(),
                };
                if code >= 500 {
                    Err(Attempt::Retry(err))
                } else {
                    Err(Attempt::Fatal(err))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Attempt::Retry(BackendError::Timeout {
                url: self.endpoint.clone(),
                attempts: 0,
                detail: t.to_string(),
            })),
        }
    }
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        let body = WireRequest {
            task: request.task,
            entity_name: &request.entity_name,
            documents: &request.documents,
            slot_key: request.slot_key.as_deref(),
            input: &request.serialized_input,
        };
        let started = Instant::now();
        let attempts = self.policy.attempts.max(1);
        let mut backoff = self.policy.initial_backoff;
        let mut last = None;
        for attempt in 1..=attempts {
            match self.call_once(&body) {
                Ok(resp) => {
                    return Ok(BackendResponse {
                        output: resp.output,
                        latency_ms: started.elapsed().as_secs_f64() * 1000.0,
                        backend_id: resp.backend_id,
                    })
                }
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(err)) => {
                    log::debug!(
                        "attempt {attempt}/{attempts} to {} failed: {err}",
                        self.endpoint
                    );
                    last = Some(err);
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(match last {
            Some(BackendError::Timeout { url, detail, .. }) => BackendError::Timeout {
                url,
                attempts,
                detail,
            },
            Some(other) => other,
            None => unreachable!("at least one attempt is made"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_normalization() {
        assert_eq!(
            RemoteBackend::new("localhost:9000").endpoint(),
            "http://localhost:9000/v1/generate"
        );
        assert_eq!(
            RemoteBackend::new("http://h:1/").endpoint(),
            "http://h:1/v1/generate"
        );
    }

    #[test]
    fn wire_request_shape() {
        let docs = vec!["d".to_string()];
        let body = WireRequest {
            task: Task::Template,
            entity_name: "e",
            documents: &docs,
            slot_key: None,
            input: "d",
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"task":"template","entity_name":"e","documents":["d"],"slot_key":null,"input":"d"}"#
        );
    }
}
