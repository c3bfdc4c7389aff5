use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest};
use crate::io::IoError;

/// One scripted backend outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockReply {
    Text(String),
    Status(u16),
    Timeout,
    /// A response body that is not a valid completion.
    Malformed,
}

/// Matches requests and yields replies in sequence.
///
/// Every present matcher must match. The reply cursor advances per distinct
/// request (by cache key), so retries of one request walk the sequence
/// regardless of what other requests are in flight. The last reply repeats.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring of the user prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// Template name, e.g. `candidate-graph` or `integration`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Exact request cache key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    pub replies: Vec<MockReply>,
}

impl MockRule {
    pub fn contains(needle: impl Into<String>, replies: Vec<MockReply>) -> Self {
        Self {
            contains: Some(needle.into()),
            replies,
            ..Self::default()
        }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = Some(prompt.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn matches(&self, request: &CompletionRequest, key: &str) -> bool {
        self.contains
            .as_ref()
            .is_none_or(|c| request.user_prompt.contains(c.as_str()))
            && self.prompt.as_ref().is_none_or(|p| *p == request.prompt_name)
            && self.seed.is_none_or(|s| request.config.seed == Some(s))
            && self.hash.as_ref().is_none_or(|h| h == key)
    }
}

/// Fixture file contents for [`MockBackend`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Reply for requests no rule matches; without it they fail with HTTP 404.
    #[serde(default)]
    pub default: Option<MockReply>,
    /// Artificial latency per call, in milliseconds.
    #[serde(default)]
    pub latency_ms: u64,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| IoError::Schema {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Deterministic scripted backend.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    cursors: Mutex<HashMap<(usize, String), usize>>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ..Self::default()
        }
    }

    /// Backend that answers every request with the same text.
    pub fn fixed(text: impl Into<String>) -> Self {
        Self::new(MockScript {
            default: Some(MockReply::Text(text.into())),
            ..MockScript::default()
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next_reply(&self, request: &CompletionRequest) -> Option<MockReply> {
        let key = request.cache_key();
        let (index, rule) = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.matches(request, &key))?;
        if rule.replies.is_empty() {
            return None;
        }
        let mut cursors = self.cursors.lock().expect("mock cursor lock");
        let cursor = cursors.entry((index, key)).or_insert(0);
        let reply = rule.replies[(*cursor).min(rule.replies.len() - 1)].clone();
        *cursor += 1;
        Some(reply)
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn send(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.script.latency_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.script.latency_ms)).await;
        }
        match self.next_reply(request).or_else(|| self.script.default.clone()) {
            Some(MockReply::Text(text)) => Ok(text),
            Some(MockReply::Status(status)) => Err(BackendError::Status {
                status,
                body: "scripted failure".into(),
            }),
            Some(MockReply::Timeout) => Err(BackendError::Timeout),
            Some(MockReply::Malformed) => Err(BackendError::Malformed("scripted malformed body".into())),
            None => Err(BackendError::Status {
                status: 404,
                body: "no mock rule matches request".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::SamplingConfig;

    #[test]
    fn script_json_shape() {
        let script: MockScript = serde_json::from_str(
            r#"{"rules":[{"contains":"iPhone","seed":3,"replies":[{"status":429},"timeout",{"text":"ok"}]}],
                "default":{"text":"fallback"}}"#,
        )
        .unwrap();
        assert_eq!(script.rules[0].replies.len(), 3);
        assert_eq!(script.rules[0].replies[1], MockReply::Timeout);
    }

    #[tokio::test]
    async fn sequence_per_request() {
        let backend = MockBackend::new(MockScript {
            rules: vec![MockRule::contains(
                "q",
                vec![MockReply::Status(500), MockReply::Text("done".into())],
            )],
            ..MockScript::default()
        });
        let a = CompletionRequest::new("s", "q one", SamplingConfig::default());
        let b = CompletionRequest::new("s", "q two", SamplingConfig::default());
        assert!(backend.send(&a).await.is_err());
        assert!(backend.send(&b).await.is_err());
        assert_eq!(backend.send(&a).await.unwrap(), "done");
        assert_eq!(backend.send(&a).await.unwrap(), "done");
        let unmatched = CompletionRequest::new("s", "zzz", SamplingConfig::default());
        assert!(matches!(
            backend.send(&unmatched).await,
            Err(BackendError::Status { status: 404, .. })
        ));
        assert_eq!(backend.calls(), 5);
    }
}
