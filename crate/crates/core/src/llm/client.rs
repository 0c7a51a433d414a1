use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Always call the endpoint.
    #[default]
    Live,
    /// Serve from the cache when possible, otherwise call and store.
    Record,
    /// Cache only; a miss is an error.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmClientConfig {
    /// Explicit endpoint URL; when absent it is read from `endpoint_env`.
    pub endpoint: Option<String>,
    pub endpoint_env: String,
    pub api_key_env: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub cache_mode: CacheMode,
    pub cache_dir: Option<PathBuf>,
    pub request_timeout_secs: u64,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            endpoint_env: "SIM_LLM_ENDPOINT".into(),
            api_key_env: "SIM_LLM_API_KEY".into(),
            model: "gpt-4o".into(),
            temperature: 0.7,
            max_retries: 3,
            cache_mode: CacheMode::Live,
            cache_dir: None,
            request_timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// One HTTP POST with a JSON body. Errors are connection-level failures.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &serde_json::Value) -> Result<HttpReply, String>;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &serde_json::Value) -> Result<HttpReply, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

type Responder = dyn Fn(&str) -> Result<String, u16> + Send + Sync;

/// In-process endpoint: maps the last message of each request to a reply or
/// an HTTP status. Used for offline runs and tests.
pub struct FnTransport {
    respond: Arc<Responder>,
}

impl FnTransport {
    pub fn new(respond: Arc<Responder>) -> Self {
        Self { respond }
    }
}

impl Transport for FnTransport {
    fn post_json(&self, _url: &str, _api_key: Option<&str>, body: &serde_json::Value) -> Result<HttpReply, String> {
        let prompt = body
            .pointer("/messages")
            .and_then(|m| m.as_array())
            .and_then(|m| m.last())
            .and_then(|m| m["content"].as_str())
            .unwrap_or("");
        Ok(match (self.respond)(prompt) {
            Ok(text) => HttpReply {
                status: 200,
                body: serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
            },
            Err(status) => HttpReply {
                status,
                body: String::new(),
            },
        })
    }
}

/// Chat-completions client with exponential backoff and a content-addressed
/// record/replay cache (`<cache_dir>/<sha256>.txt`).
#[derive(Clone)]
pub struct LlmClient {
    config: LlmClientConfig,
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    network_calls: Arc<AtomicU64>,
    cache_hits: Arc<AtomicU64>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("config", &self.config)
            .field("network_calls", &self.network_calls())
            .finish()
    }
}

fn retryable(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

impl LlmClient {
    pub fn new(config: LlmClientConfig) -> Self {
        let transport = Arc::new(UreqTransport::new(Duration::from_secs(config.request_timeout_secs)));
        Self::with_transport(config, transport, Arc::new(ThreadSleeper))
    }

    pub fn with_transport(config: LlmClientConfig, transport: Arc<dyn Transport>, sleeper: Arc<dyn Sleeper>) -> Self {
        Self {
            config,
            transport,
            sleeper,
            network_calls: Arc::new(AtomicU64::new(0)),
            cache_hits: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Client backed by an in-process [`FnTransport`]. An endpoint URL is
    /// filled in when the config has none.
    pub fn with_responder(mut config: LlmClientConfig, respond: Arc<Responder>) -> Self {
        config.endpoint.get_or_insert_with(|| "inproc://responder".into());
        Self::with_transport(config, Arc::new(FnTransport::new(respond)), Arc::new(ThreadSleeper))
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    /// HTTP attempts made, shared by all clones.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    fn request_body(&self, messages: &[ChatMessage]) -> serde_json::Value {
        serde_json::to_value(ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
        })
        .expect("request serializes")
    }

    /// SHA-256 of the request body.
    pub fn cache_key(&self, messages: &[ChatMessage]) -> String {
        let body = self.request_body(messages).to_string();
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(format!("{key}.txt")))
    }

    fn endpoint(&self) -> Result<String, LlmError> {
        if let Some(e) = &self.config.endpoint {
            return Ok(e.clone());
        }
        std::env::var(&self.config.endpoint_env)
            .map_err(|_| LlmError::Config(format!("endpoint not set; export {}", self.config.endpoint_env)))
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let key = self.cache_key(messages);
        let path = self.cache_path(&key);
        if self.config.cache_mode != CacheMode::Live {
            let path = path
                .as_ref()
                .ok_or_else(|| LlmError::Config("cache mode requires cache_dir".into()))?;
            if let Ok(text) = std::fs::read_to_string(path) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(text);
            }
            if self.config.cache_mode == CacheMode::Replay {
                return Err(LlmError::CacheMiss { key });
            }
        }
        let reply = self.call_with_retries(messages)?;
        if self.config.cache_mode == CacheMode::Record {
            write_atomic(path.as_ref().expect("checked above"), &reply)?;
        }
        Ok(reply)
    }

    fn call_with_retries(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let url = self.endpoint()?;
        let api_key = std::env::var(&self.config.api_key_env).ok();
        let body = self.request_body(messages);
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                self.sleeper.sleep(Duration::from_secs(1 << (attempt - 1).min(16)));
            }
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.post_json(&url, api_key.as_deref(), &body) {
                Ok(r) if (200..300).contains(&r.status) => return parse_completion(&r.body),
                Ok(r) if retryable(r.status) => last_error = format!("HTTP {}: {}", r.status, r.body),
                Ok(r) => {
                    return Err(LlmError::Http {
                        status: r.status,
                        body: r.body,
                    })
                }
                Err(e) => last_error = e,
            }
            tracing::debug!(attempt, error = %last_error, "language model call failed");
        }
        Err(LlmError::Transport(format!(
            "{} attempts failed; last error: {last_error}",
            self.config.max_retries + 1
        )))
    }
}

fn parse_completion(body: &str) -> Result<String, LlmError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
}

fn write_atomic(path: &Path, text: &str) -> Result<(), LlmError> {
    let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    /// Fails `failures` times, then answers with a fixed completion.
    struct Flaky {
        failures: Mutex<u32>,
        status: u16,
        seen: Mutex<Vec<serde_json::Value>>,
    }

    impl Transport for Flaky {
        fn post_json(&self, _url: &str, _key: Option<&str>, body: &serde_json::Value) -> Result<HttpReply, String> {
            self.seen.lock().unwrap().push(body.clone());
            let mut f = self.failures.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                if self.status == 0 {
                    return Err("connection reset".into());
                }
                return Ok(HttpReply {
                    status: self.status,
                    body: "busy".into(),
                });
            }
            Ok(HttpReply {
                status: 200,
                body: r#"{"choices":[{"message":{"role":"assistant","content":"stay"}}]}"#.into(),
            })
        }
    }

    #[derive(Default)]
    struct Recorder(Mutex<Vec<Duration>>);

    impl Sleeper for Recorder {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    fn client(
        mode: CacheMode,
        dir: Option<&Path>,
        failures: u32,
        status: u16,
    ) -> (LlmClient, Arc<Flaky>, Arc<Recorder>) {
        let t = Arc::new(Flaky {
            failures: Mutex::new(failures),
            status,
            seen: Mutex::new(Vec::new()),
        });
        let s = Arc::new(Recorder::default());
        let cfg = LlmClientConfig {
            endpoint: Some("http://localhost:9/v1/chat/completions".into()),
            cache_mode: mode,
            cache_dir: dir.map(Path::to_path_buf),
            ..Default::default()
        };
        (LlmClient::with_transport(cfg, t.clone(), s.clone()), t, s)
    }

    #[test]
    fn backoff_schedule() {
        let (c, _, sleeps) = client(CacheMode::Live, None, 2, 0);
        assert_eq!(c.complete(&[ChatMessage::user("hi")]).unwrap(), "stay");
        let total: Duration = sleeps.0.lock().unwrap().iter().sum();
        assert_eq!(total, Duration::from_secs(3));
        assert_eq!(c.network_calls(), 3);
    }

    #[test]
    fn exhausted_retries() {
        let (c, _, sleeps) = client(CacheMode::Live, None, 10, 503);
        assert!(matches!(
            c.complete(&[ChatMessage::user("hi")]),
            Err(LlmError::Transport(_))
        ));
        assert_eq!(c.network_calls(), 4);
        assert_eq!(
            *sleeps.0.lock().unwrap(),
            vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)]
        );
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (c, _, _) = client(CacheMode::Live, None, 1, 401);
        assert!(matches!(
            c.complete(&[ChatMessage::user("hi")]),
            Err(LlmError::Http { status: 401, .. })
        ));
        assert_eq!(c.network_calls(), 1);
    }

    #[test]
    fn wire_shape() {
        let (c, t, _) = client(CacheMode::Live, None, 0, 0);
        c.complete(&[ChatMessage::system("s"), ChatMessage::user("u")]).unwrap();
        let body = &t.seen.lock().unwrap()[0];
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["messages"][1]["content"], "u");
        assert!(body["temperature"].is_number());
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let prompt = [ChatMessage::user("where are the apples?")];
        let (rec, _, _) = client(CacheMode::Record, Some(dir.path()), 0, 0);
        assert_eq!(rec.complete(&prompt).unwrap(), "stay");
        assert_eq!(rec.complete(&prompt).unwrap(), "stay");
        assert_eq!(rec.network_calls(), 1);
        assert!(dir.path().join(format!("{}.txt", rec.cache_key(&prompt))).exists());

        let (rep, _, _) = client(CacheMode::Replay, Some(dir.path()), 0, 0);
        assert_eq!(rep.complete(&prompt).unwrap(), "stay");
        assert!(matches!(
            rep.complete(&[ChatMessage::user("novel")]),
            Err(LlmError::CacheMiss { .. })
        ));
        assert_eq!(rep.network_calls(), 0);
    }
}
