//! Generation-backend abstraction: deterministic mock, scripted playback,
//! and an HTTP client for chat-completion endpoints.

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::core::{canonicalize_answer, is_terminal_step, Problem, Step, Trajectory};
use crate::util::stable_hash;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: MessageRole::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: MessageRole::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt_messages: Vec<Message>) -> Self {
        GenerationRequest {
            prompt_messages,
            temperature: 0.7,
            max_tokens: 1024,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }

    fn flattened_prompt(&self) -> String {
        self.prompt_messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Diagnostic detail carried when `finish_reason` is `Error`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendErrorDetail {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Option<TokenUsage>,
    pub error: Option<BackendErrorDetail>,
}

impl GenerationResponse {
    pub fn ok(text: String, finish_reason: FinishReason) -> Self {
        GenerationResponse {
            text,
            finish_reason,
            usage: None,
            error: None,
        }
    }

    pub fn from_error(err: &Error) -> Self {
        let kind = match err {
            Error::Timeout(_) => "timeout",
            Error::Transport(_) => "transport",
            Error::ScriptExhausted(_) => "script_exhausted",
            Error::MalformedResponse(_) => "malformed_response",
            _ => "backend",
        };
        GenerationResponse {
            text: String::new(),
            finish_reason: FinishReason::Error,
            usage: None,
            error: Some(BackendErrorDetail {
                kind: kind.to_string(),
                message: err.to_string(),
            }),
        }
    }

    /// The generated text, or the carried error.
    pub fn into_text(self) -> Result<String> {
        match self.finish_reason {
            FinishReason::Error => {
                let detail = self
                    .error
                    .map(|e| format!("{}: {}", e.kind, e.message))
                    .unwrap_or_else(|| "unknown".to_string());
                Err(Error::Backend(detail))
            }
            _ => Ok(self.text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Scripted,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the API key; the key itself
    /// never appears in config.
    pub api_key_env_var: Option<String>,
    pub max_concurrent_requests: usize,
    pub request_timeout_ms: u64,
    pub retry_policy: RetryPolicy,
    /// Script file for the Scripted kind.
    pub script_path: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: None,
            api_key_env_var: None,
            max_concurrent_requests: 4,
            request_timeout_ms: 60_000,
            retry_policy: RetryPolicy::default(),
            script_path: None,
        }
    }
}

/// A text-generation backend. Implementations are shareable handles and
/// `generate` is safe to call concurrently.
pub trait Backend: Send + Sync {
    /// Produce a completion. Errors are carried in the response with
    /// `finish_reason = Error` rather than returned.
    fn generate(&self, request: &GenerationRequest) -> GenerationResponse;
}

/// Build a backend from config.
pub fn build_backend(cfg: &BackendConfig) -> Result<Box<dyn Backend>> {
    match cfg.kind {
        BackendKind::Mock => Ok(Box::new(MockBackend)),
        BackendKind::Scripted => {
            let path = cfg
                .script_path
                .as_ref()
                .ok_or_else(|| Error::Config("scripted backend requires script_path".into()))?;
            Ok(Box::new(ScriptedBackend::from_file(Path::new(path))?))
        }
        BackendKind::Http => Ok(Box::new(HttpBackend::new(cfg)?)),
    }
}

/// Pure deterministic backend: the response is a function of the prompt
/// messages and seed only. Useful for plumbing and determinism tests.
pub struct MockBackend;

impl Backend for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> GenerationResponse {
        let mut bytes = Vec::new();
        for m in &request.prompt_messages {
            bytes.extend_from_slice(m.content.as_bytes());
            bytes.push(0);
        }
        bytes.extend_from_slice(&request.seed.unwrap_or(0).to_le_bytes());
        let h = stable_hash(&bytes);
        GenerationResponse::ok(format!("mock:{h:016x}"), FinishReason::Stop)
    }
}

/// One recorded playback entry. When `match` is present the entry only
/// fires on prompts containing that substring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_substring: Option<String>,
    pub response: String,
}

/// Replays a recorded sequence of responses in order. Consumption is
/// serialized with a lock so playback order is deterministic per script.
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    consumed: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let consumed = Mutex::new(vec![false; entries.len()]);
        ScriptedBackend { entries, consumed }
    }

    pub fn from_responses(responses: &[&str]) -> Self {
        Self::new(
            responses
                .iter()
                .map(|r| ScriptEntry {
                    match_substring: None,
                    response: r.to_string(),
                })
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(crate::util::read_jsonl(path)?))
    }

    pub fn consumed_count(&self) -> usize {
        self.consumed.lock().unwrap().iter().filter(|c| **c).count()
    }

    fn next_matching(&self, prompt: &str) -> Result<String> {
        let mut consumed = self.consumed.lock().unwrap();
        for (i, entry) in self.entries.iter().enumerate() {
            if consumed[i] {
                continue;
            }
            let matches = entry
                .match_substring
                .as_ref()
                .map(|m| prompt.contains(m.as_str()))
                .unwrap_or(true);
            if matches {
                consumed[i] = true;
                return Ok(entry.response.clone());
            }
        }
        Err(Error::ScriptExhausted(
            consumed.iter().filter(|c| **c).count(),
        ))
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> GenerationResponse {
        match self.next_matching(&request.flattened_prompt()) {
            Ok(text) => GenerationResponse::ok(text, FinishReason::Stop),
            Err(e) => GenerationResponse::from_error(&e),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().unwrap() += 1;
        self.limiter.cv.notify_one();
    }
}

/// Chat-completions HTTP client with retry/backoff and a concurrency bound.
pub struct HttpBackend {
    endpoint_url: String,
    model_name: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self> {
        let endpoint_url = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| Error::Config("http backend requires endpoint_url".into()))?;
        let model_name = cfg
            .model_name
            .clone()
            .ok_or_else(|| Error::Config("http backend requires model_name".into()))?;
        let api_key = cfg
            .api_key_env_var
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpBackend {
            endpoint_url: endpoint_url.trim_end_matches('/').to_string(),
            model_name,
            api_key,
            client,
            retry: cfg.retry_policy.clone(),
            limiter: Limiter::new(cfg.max_concurrent_requests),
        })
    }

    fn request_body(&self, request: &GenerationRequest) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = request
            .prompt_messages
            .iter()
            .map(|m| {
                serde_json::json!({
                    "role": match m.role {
                        MessageRole::System => "system",
                        MessageRole::User => "user",
                        MessageRole::Assistant => "assistant",
                    },
                    "content": m.content,
                })
            })
            .collect();
        let mut body = serde_json::json!({
            "model": self.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = serde_json::json!(request.stop_sequences);
        }
        if let Some(seed) = request.seed {
            body["seed"] = serde_json::json!(seed);
        }
        body
    }

    fn send_once(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        let url = format!("{}/chat/completions", self.endpoint_url);
        let mut req = self.client.post(&url).json(&self.request_body(request));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout(e.to_string())
            } else {
                Error::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let body: serde_json::Value = resp
            .json()
            .map_err(|e| Error::MalformedResponse(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("status {status}: {body}")));
        }
        let choice = body
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| Error::MalformedResponse("no choices in response".into()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| Error::MalformedResponse("missing message content".into()))?
            .to_string();
        let finish_reason = match choice.get("finish_reason").and_then(|f| f.as_str()) {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        let usage = body.get("usage").and_then(|u| {
            Some(TokenUsage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(GenerationResponse {
            text,
            finish_reason,
            usage,
            error: None,
        })
    }
}

impl Backend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> GenerationResponse {
        let _permit = self.limiter.acquire();
        let mut last_err = None;
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.retry.backoff_ms.saturating_mul(1 << (attempt - 1)),
                ));
            }
            match self.send_once(request) {
                Ok(resp) => return resp,
                Err(e @ Error::MalformedResponse(_)) => {
                    // Retrying cannot fix a malformed 200 response.
                    return GenerationResponse::from_error(&e);
                }
                Err(e) => last_err = Some(e),
            }
        }
        GenerationResponse::from_error(&last_err.unwrap())
    }
}

/// The outcome of a single-step generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedStep {
    pub step: Step,
    /// True when the step declares a final answer.
    pub terminal: bool,
    /// Canonical final answer, present iff `terminal`.
    pub final_answer: Option<String>,
}

/// Generate exactly one next step for `problem` from `prefix`.
///
/// The prompt template may use `{problem}` and `{prefix}` placeholders.
/// Generation is truncated at the first step delimiter; a step carrying a
/// final-answer marker is flagged terminal.
pub fn generate_step(
    backend: &dyn Backend,
    prefix: &Trajectory,
    problem: &Problem,
    prompt_template: &str,
    delimiter: &str,
    temperature: f64,
    seed: u64,
) -> Result<GeneratedStep> {
    let prompt = prompt_template
        .replace("{problem}", &problem.statement)
        .replace("{prefix}", &prefix.render(delimiter));
    let mut request = GenerationRequest::new(vec![Message::user(prompt)]);
    request.temperature = temperature;
    request.stop_sequences = vec![delimiter.to_string()];
    request.seed = Some(seed);
    let text = backend.generate(&request).into_text()?;
    let step_text = text
        .split(delimiter)
        .map(str::trim)
        .find(|s| !s.is_empty())
        .unwrap_or("")
        .to_string();
    let terminal = is_terminal_step(&step_text);
    let final_answer = terminal.then(|| canonicalize_answer(&step_text));
    Ok(GeneratedStep {
        step: Step {
            index: prefix.steps.len(),
            text: step_text,
        },
        terminal,
        final_answer,
    })
}
