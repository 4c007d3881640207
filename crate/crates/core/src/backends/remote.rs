//! Generic chat-completion backend.
//!
//! Speaks the common `POST {endpoint}` JSON contract with a `messages` array
//! and reads `choices[0].message.content` from the reply. The auth token is
//! read from the environment variable named in the config and never written
//! anywhere else.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub temperature: f64,
    /// Minimum spacing between request starts, per backend.
    pub min_interval_ms: u64,
    /// Context length the model accepts, if it must be enforced locally.
    pub max_tokens: Option<usize>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            auth_env: "CODESEG_API_KEY".into(),
            max_retries: 3,
            timeout_secs: 60,
            temperature: 0.0,
            min_interval_ms: 0,
            max_tokens: None,
        }
    }
}

#[cfg(feature = "remote")]
pub use client::RemoteBackend;

#[cfg(feature = "remote")]
mod client {
    use std::sync::Mutex;
    use std::thread;
    use std::time::{Duration, Instant};

    use reqwest::blocking::Client;
    use reqwest::StatusCode;
    use serde_json::{json, Value};

    use super::RemoteConfig;
    use crate::backends::{Backend, Query};
    use crate::error::{Error, Result};

    const BASE_BACKOFF: Duration = Duration::from_millis(250);

    pub struct RemoteBackend {
        config: RemoteConfig,
        client: Client,
        token: Option<String>,
        last_request: Mutex<Option<Instant>>,
    }

    enum Attempt {
        Done(String),
        Retry(String),
        Fatal(Error),
    }

    impl RemoteBackend {
        pub fn new(config: RemoteConfig) -> Result<Self> {
            let client = Client::builder()
                .timeout(Duration::from_secs(config.timeout_secs))
                .build()
                .map_err(|e| Error::Config(format!("http client: {e}")))?;
            let token = std::env::var(&config.auth_env).ok();
            Ok(RemoteBackend {
                config,
                client,
                token,
                last_request: Mutex::new(None),
            })
        }

        fn wait_turn(&self) {
            let interval = Duration::from_millis(self.config.min_interval_ms);
            if interval.is_zero() {
                return;
            }
            let mut last = self.last_request.lock().unwrap();
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < interval {
                    thread::sleep(interval - elapsed);
                }
            }
            *last = Some(Instant::now());
        }

        fn attempt(&self, prompt: &str) -> Attempt {
            self.wait_turn();
            let body = json!({
                "model": self.config.model,
                "temperature": self.config.temperature,
                "messages": [{"role": "user", "content": prompt}],
            });
            let mut req = self.client.post(&self.config.endpoint).json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) if e.is_timeout() => return Attempt::Retry("timeout".into()),
                Err(e) => return Attempt::Retry(e.to_string()),
            };
            let status = resp.status();
            if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                return Attempt::Retry(format!("HTTP {status}"));
            }
            if !status.is_success() {
                return Attempt::Fatal(self.unavailable(format!("HTTP {status}")));
            }
            let value: Value = match resp.json() {
                Ok(v) => v,
                Err(e) => return Attempt::Fatal(self.unavailable(format!("bad JSON reply: {e}"))),
            };
            match value
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
            {
                Some(text) => Attempt::Done(text.to_string()),
                None => Attempt::Fatal(self.unavailable("reply has no choices[0].message.content".into())),
            }
        }

        fn unavailable(&self, reason: String) -> Error {
            Error::BackendUnavailable {
                backend: self.id(),
                reason,
            }
        }
    }

    impl Backend for RemoteBackend {
        fn id(&self) -> String {
            format!("remote:{}", self.config.model)
        }

        fn token_limit(&self) -> Option<(usize, usize)> {
            self.config.max_tokens.map(|m| (m, 0))
        }

        fn respond(&self, query: &Query<'_>) -> Result<String> {
            let mut last = String::new();
            for attempt in 0..=self.config.max_retries {
                if attempt > 0 {
                    thread::sleep(BASE_BACKOFF * 2u32.pow(attempt - 1));
                }
                match self.attempt(query.prompt()) {
                    Attempt::Done(text) => return Ok(text),
                    Attempt::Fatal(e) => return Err(e),
                    Attempt::Retry(reason) => {
                        log::debug!("{}: attempt {} failed: {reason}", self.id(), attempt + 1);
                        last = reason;
                    }
                }
            }
            if last == "timeout" {
                Err(Error::Timeout {
                    backend: self.id(),
                    seconds: self.config.timeout_secs,
                })
            } else {
                Err(self.unavailable(last))
            }
        }
    }
}
