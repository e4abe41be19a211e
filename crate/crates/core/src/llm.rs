//! Text-completion backends and post-processing of generated user turns.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CorpusError, LlmError};

/// Markers that end the user turn inside a raw completion.
pub const TRUNCATION_MARKERS: [&str; 5] = ["\nASSISTANT", "\nCUSTOMER", "ASSISTANT:", "CUSTOMER:", "\n\n"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelProfile {
    #[default]
    Llama,
    Gpt,
    Flan,
}

impl ModelProfile {
    pub fn default_temperature(self) -> f64 {
        match self {
            ModelProfile::Llama => 0.8,
            ModelProfile::Gpt => 1.0,
            ModelProfile::Flan => 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
    pub request_seed: Option<u64>,
    pub retries: u32,
    pub timeout_secs: f64,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base_ms: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams::for_profile(ModelProfile::default())
    }
}

impl GenerationParams {
    pub fn for_profile(profile: ModelProfile) -> Self {
        GenerationParams {
            temperature: profile.default_temperature(),
            max_tokens: 64,
            stop_sequences: vec!["\nASSISTANT".into(), "\nCUSTOMER".into(), "\n\n".into()],
            request_seed: None,
            retries: 3,
            timeout_secs: 60.0,
            backoff_base_ms: 500,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }
}

/// A single text-completion endpoint. Implementations must tolerate
/// concurrent calls.
pub trait CompletionBackend: Send + Sync {
    fn complete_once(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError>;
}

fn truncate_at_stops(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// Calls `op` until it succeeds, fails permanently, or `retries` extra
/// attempts on transient errors are used up. Delays double from `base`.
pub fn with_retries<T>(
    retries: u32,
    base: Duration,
    mut op: impl FnMut() -> Result<T, LlmError>,
) -> Result<T, LlmError> {
    let mut attempt = 0;
    loop {
        match op() {
            Err(e) if e.is_transient() && attempt < retries => {
                let delay = base.saturating_mul(1 << attempt.min(16));
                log::debug!("transient backend error ({e}); retry {} in {delay:?}", attempt + 1);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Generates a raw completion: retries transient failures and cuts the text
/// at the first stop sequence.
pub fn complete(
    backend: &dyn CompletionBackend,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String, LlmError> {
    if prompt.is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    let raw = with_retries(params.retries, Duration::from_millis(params.backoff_base_ms), || {
        backend.complete_once(prompt, params)
    })?;
    Ok(truncate_at_stops(&raw, &params.stop_sequences))
}

/// Reduces a raw completion to a single user utterance.
pub fn postprocess_completion(raw: &str) -> Result<String, LlmError> {
    let cut = TRUNCATION_MARKERS
        .iter()
        .filter_map(|m| raw.find(m))
        .min()
        .unwrap_or(raw.len());
    let text = raw[..cut]
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if text.is_empty() {
        Err(LlmError::EmptyGeneration)
    } else {
        Ok(text)
    }
}

/// Returns scripted completions in order.
#[derive(Debug)]
pub struct ReplayBackend {
    script: Vec<String>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(script: Vec<String>) -> Self {
        ReplayBackend {
            script,
            cursor: Mutex::new(0),
        }
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete_once(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, LlmError> {
        let mut cursor = self.cursor.lock().unwrap();
        let out = self
            .script
            .get(*cursor)
            .cloned()
            .ok_or(LlmError::FixtureExhausted(*cursor))?;
        *cursor += 1;
        Ok(out)
    }
}

/// Returns the last line of the prompt; used for plumbing tests.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoBackend;

impl CompletionBackend for EchoBackend {
    fn complete_once(&self, prompt: &str, _params: &GenerationParams) -> Result<String, LlmError> {
        Ok(prompt.lines().last().unwrap_or("").to_string())
    }
}

/// Token bucket shared by every session talking to one endpoint.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        RateLimiter {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HttpApi {
    #[default]
    Chat,
    Completions,
}

/// OpenAI-compatible HTTP backend.
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api: HttpApi,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        api: HttpApi,
        api_key: Option<String>,
        timeout: Duration,
        limiter: Arc<RateLimiter>,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api,
            api_key,
            agent: config.into(),
            limiter,
        }
    }

    /// Request body for the configured API flavor.
    pub fn request_body(&self, prompt: &str, params: &GenerationParams) -> Value {
        let mut body = json!({
            "model": self.model,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "stop": params.stop_sequences,
        });
        match self.api {
            HttpApi::Chat => body["messages"] = json!([{ "role": "user", "content": prompt }]),
            HttpApi::Completions => body["prompt"] = json!(prompt),
        }
        if let Some(seed) = params.request_seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn url(&self) -> String {
        match self.api {
            HttpApi::Chat => format!("{}/chat/completions", self.endpoint),
            HttpApi::Completions => format!("{}/completions", self.endpoint),
        }
    }
}

/// Extracts the first choice's text from a chat or completions response.
pub fn parse_completion_response(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Protocol(format!("invalid JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::Protocol("response has no choices".into()))?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol("first choice carries no text".into()))
}

fn map_transport(e: ureq::Error) -> LlmError {
    match e {
        ureq::Error::Timeout(_) => LlmError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => LlmError::Timeout,
        other => LlmError::Protocol(other.to_string()),
    }
}

impl CompletionBackend for HttpBackend {
    fn complete_once(&self, prompt: &str, params: &GenerationParams) -> Result<String, LlmError> {
        self.limiter.acquire();
        let body = self.request_body(prompt, params).to_string();
        let mut req = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body.as_str()).map_err(map_transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        match status {
            200..=299 => parse_completion_response(&text),
            429 => Err(LlmError::RateLimited),
            408 | 504 => Err(LlmError::Timeout),
            // overloaded upstreams are worth another try
            500 | 502 | 503 => Err(LlmError::RateLimited),
            _ => Err(LlmError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmBackendConfig {
    HttpCompletion {
        endpoint: String,
        model: String,
        #[serde(default)]
        api: HttpApi,
        #[serde(default = "default_credential_env")]
        credential_env: String,
        #[serde(default = "default_rpm")]
        requests_per_minute: u32,
    },
    Replay {
        fixture: PathBuf,
    },
    Echo,
}

pub fn default_credential_env() -> String {
    "LLM_API_KEY".into()
}

fn default_rpm() -> u32 {
    60
}

/// Replay fixture: one script shared by every dialog, or one per dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayFixture {
    Single(Vec<String>),
    PerDialog(Vec<Vec<String>>),
}

impl ReplayFixture {
    pub fn script_for(&self, dialog_index: usize) -> Vec<String> {
        match self {
            ReplayFixture::Single(s) => s.clone(),
            ReplayFixture::PerDialog(all) if all.is_empty() => Vec::new(),
            ReplayFixture::PerDialog(all) => all[dialog_index % all.len()].clone(),
        }
    }
}

/// Creates one backend per dialog session.
pub enum LlmProvider {
    Http {
        endpoint: String,
        model: String,
        api: HttpApi,
        api_key: Option<String>,
        limiter: Arc<RateLimiter>,
        timeout: Duration,
    },
    Replay(ReplayFixture),
    Echo,
    Custom(Arc<dyn Fn(usize) -> Arc<dyn CompletionBackend> + Send + Sync>),
}

impl LlmProvider {
    pub fn from_config(cfg: &LlmBackendConfig, params: &GenerationParams) -> Result<Self, LlmError> {
        match cfg {
            LlmBackendConfig::HttpCompletion {
                endpoint,
                model,
                api,
                credential_env,
                requests_per_minute,
            } => Ok(LlmProvider::Http {
                endpoint: endpoint.clone(),
                model: model.clone(),
                api: *api,
                api_key: std::env::var(credential_env).ok(),
                limiter: Arc::new(RateLimiter::per_minute(*requests_per_minute)),
                timeout: params.timeout(),
            }),
            LlmBackendConfig::Replay { fixture } => {
                let fx: ReplayFixture = crate::corpus::read_json(fixture)
                    .map_err(|e: CorpusError| LlmError::Protocol(format!("replay fixture: {e}")))?;
                Ok(LlmProvider::Replay(fx))
            }
            LlmBackendConfig::Echo => Ok(LlmProvider::Echo),
        }
    }

    pub fn session(&self, dialog_index: usize) -> Arc<dyn CompletionBackend> {
        match self {
            LlmProvider::Http {
                endpoint,
                model,
                api,
                api_key,
                limiter,
                timeout,
            } => Arc::new(HttpBackend::new(endpoint, model, *api, api_key.clone(), *timeout, limiter.clone())),
            LlmProvider::Replay(fx) => Arc::new(ReplayBackend::new(fx.script_for(dialog_index))),
            LlmProvider::Echo => Arc::new(EchoBackend),
            LlmProvider::Custom(f) => f(dialog_index),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn fast() -> GenerationParams {
        GenerationParams {
            backoff_base_ms: 0,
            ..GenerationParams::default()
        }
    }

    #[test]
    fn replay_returns_script_then_exhausts() {
        let b = ReplayBackend::new(vec!["hello".into()]);
        assert_eq!(complete(&b, "p", &fast()).unwrap(), "hello");
        assert_eq!(complete(&b, "p", &fast()), Err(LlmError::FixtureExhausted(1)));
    }

    #[test]
    fn echo_returns_last_line() {
        assert_eq!(complete(&EchoBackend, "a\nb\nCUSTOMER:", &fast()).unwrap(), "CUSTOMER:");
        assert_eq!(complete(&EchoBackend, "", &fast()), Err(LlmError::EmptyPrompt));
    }

    #[test]
    fn stop_sequences_honored() {
        let b = ReplayBackend::new(vec!["Hi there.\nASSISTANT: ok".into()]);
        assert_eq!(complete(&b, "p", &fast()).unwrap(), "Hi there.");
    }

    #[test]
    fn profiles() {
        assert_eq!(GenerationParams::for_profile(ModelProfile::Llama).temperature, 0.8);
        assert_eq!(GenerationParams::for_profile(ModelProfile::Gpt).temperature, 1.0);
        assert_eq!(GenerationParams::for_profile(ModelProfile::Flan).temperature, 0.9);
        assert!(!GenerationParams::default().stop_sequences.is_empty());
    }

    #[test]
    fn postprocess_examples() {
        assert_eq!(postprocess_completion("Hi, I need a hotel.\nASSISTANT: Sure").unwrap(), "Hi, I need a hotel.");
        assert_eq!(postprocess_completion("In the south").unwrap(), "In the south");
        assert_eq!(postprocess_completion("   \n"), Err(LlmError::EmptyGeneration));
        assert_eq!(postprocess_completion(" a\nb \n\nc").unwrap(), "a b");
        assert_eq!(postprocess_completion("ASSISTANT: hi"), Err(LlmError::EmptyGeneration));
    }

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: LlmError,
    }

    impl CompletionBackend for Flaky {
        fn complete_once(&self, _: &str, _: &GenerationParams) -> Result<String, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn retry_policy_counts_attempts() {
        for n in 0..3 {
            let b = Flaky { failures: n, calls: AtomicU32::new(0), error: LlmError::RateLimited };
            let params = GenerationParams { retries: 3, ..fast() };
            assert_eq!(complete(&b, "p", &params).unwrap(), "ok");
            assert_eq!(b.calls.load(Ordering::SeqCst), n + 1);
        }
        let b = Flaky { failures: 5, calls: AtomicU32::new(0), error: LlmError::Timeout };
        let params = GenerationParams { retries: 2, ..fast() };
        assert_eq!(complete(&b, "p", &params), Err(LlmError::Timeout));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
        let b = Flaky { failures: 5, calls: AtomicU32::new(0), error: LlmError::Protocol("bad".into()) };
        assert!(complete(&b, "p", &fast()).is_err());
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn response_parsing() {
        let chat = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(parse_completion_response(chat).unwrap(), "hi");
        let comp = r#"{"choices":[{"text":" there"}]}"#;
        assert_eq!(parse_completion_response(comp).unwrap(), " there");
        assert!(matches!(parse_completion_response("{}"), Err(LlmError::Protocol(_))));
        assert!(matches!(parse_completion_response("nope"), Err(LlmError::Protocol(_))));
    }

    #[test]
    fn request_bodies() {
        let limiter = Arc::new(RateLimiter::per_minute(60));
        let b = HttpBackend::new("http://x/v1/", "m", HttpApi::Chat, None, Duration::from_secs(1), limiter.clone());
        let params = GenerationParams { request_seed: Some(7), ..GenerationParams::default() };
        let body = b.request_body("PROMPT", &params);
        assert_eq!(body["messages"], json!([{"role": "user", "content": "PROMPT"}]));
        assert_eq!(body["seed"], json!(7));
        assert_eq!(body["temperature"], json!(0.8));
        assert_eq!(b.url(), "http://x/v1/chat/completions");
        let b = HttpBackend::new("http://x/v1", "m", HttpApi::Completions, None, Duration::from_secs(1), limiter);
        let body = b.request_body("PROMPT", &GenerationParams::default());
        assert_eq!(body["prompt"], json!("PROMPT"));
        assert!(body.get("seed").is_none());
        assert_eq!(b.url(), "http://x/v1/completions");
    }

    #[test]
    fn replay_fixture_shapes() {
        let single: ReplayFixture = serde_json::from_str(r#"["a","b"]"#).unwrap();
        assert_eq!(single.script_for(5), ["a", "b"]);
        let per: ReplayFixture = serde_json::from_str(r#"[["a"],["b"]]"#).unwrap();
        assert_eq!(per.script_for(3), ["b"]);
    }

    proptest! {
        #[test]
        fn postprocess_output_is_clean(raw in "(CUSTOMER|ASSISTANT|:|\n| |a|b|\\.){0,30}") {
            if let Ok(out) = postprocess_completion(&raw) {
                prop_assert!(!out.contains("ASSISTANT:"));
                prop_assert!(!out.contains("CUSTOMER:"));
                prop_assert!(!out.contains('\n'));
                prop_assert!(!out.is_empty());
            }
        }
    }
}
