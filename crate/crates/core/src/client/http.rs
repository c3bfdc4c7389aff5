use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{Backend, BackendError, ClientError, CompletionRequest};

/// OpenAI-compatible chat-completion endpoint.
///
/// Request body: `model`, `messages` (system then user), `temperature`,
/// `max_tokens` and `seed` when set. The reply text is read from
/// `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    http: reqwest::Client,
    endpoint: String,
    credential: String,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, credential: impl Into<String>, timeout: Duration) -> Result<Self, ClientError> {
        let credential = credential.into();
        if credential.trim().is_empty() {
            return Err(ClientError::Auth("credential is empty".into()));
        }
        let endpoint = endpoint.into();
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(ClientError::InvalidConfig(format!(
                "endpoint {endpoint:?} is not an http(s) URL"
            )));
        }
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            http,
            endpoint,
            credential,
        })
    }

    /// Reads the credential from the named environment variable. Fails with
    /// an auth error, without touching the network, if it is unset.
    pub fn from_env(endpoint: impl Into<String>, credential_var: &str, timeout: Duration) -> Result<Self, ClientError> {
        let credential = std::env::var(credential_var).map_err(|_| {
            ClientError::Auth(format!("environment variable {credential_var} is not set"))
        })?;
        Self::new(endpoint, credential, timeout)
    }

    pub fn request_body(request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": request.config.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.config.temperature,
            "max_tokens": request.config.max_new_tokens,
        });
        if let Some(seed) = request.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    pub fn response_text(body: &Value) -> Result<String, BackendError> {
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

#[async_trait]
impl Backend for HttpBackend {
    async fn send(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.credential)
            .json(&Self::request_body(request))
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {
                let body: Value = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Malformed(e.to_string()))?;
                Self::response_text(&body)
            }
            401 | 403 => Err(BackendError::Auth(text)),
            _ => Err(BackendError::Status { status, body: text }),
        }
    }
}
