//! Chat-completion transports: an HTTP client and a scripted mock.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::decoding::DecodingProfile;
use super::template::{Bindings, TemplateId};

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub request_id: u64,
    /// Zero-based attempt within one logical gateway operation, counting
    /// transport retries and re-asks after invalid answers alike.
    pub attempt: u32,
    pub template: TemplateId,
    pub bindings: Bindings,
    pub prompt: String,
    pub decoding: DecodingProfile,
    /// Ask for first-token log-probabilities.
    pub logprobs: bool,
    pub top_logprobs: Option<u32>,
    /// Continuations to score when the backend supports constrained scoring.
    pub choices: Vec<String>,
}

/// One alternative of the first generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    #[serde(default)]
    pub text: String,
    /// Top alternatives of the first generated token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<Vec<TokenLogprob>>,
    /// Log-probabilities of the requested `choices`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_logprobs: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network: {0}")]
    Network(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("no scripted reply for {template} (bindings {bindings_hash})")]
    NoScript { template: TemplateId, bindings_hash: String },
}

impl TransportError {
    /// Whether a retry could help.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Http { status, .. } => *status == 429 || *status >= 500,
            TransportError::Network(_) | TransportError::Protocol(_) => true,
            TransportError::NoScript { .. } => false,
        }
    }
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError>;
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl HttpConfig {
    /// API key read from `RELSHOT_API_KEY` when set.
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var("RELSHOT_API_KEY").ok().filter(|k| !k.is_empty()),
            max_in_flight: 8,
            timeout: Duration::from_secs(120),
        }
    }
}

/// JSON-over-HTTP client for OpenAI-compatible chat-completion servers.
pub struct HttpTransport {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: Semaphore,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(config.timeout))
                .build(),
        );
        let gate = Semaphore::new(config.max_in_flight);
        Self { config, agent, gate }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    /// Request body for `request`.
    pub fn body(&self, request: &ChatRequest) -> Value {
        let d = &request.decoding;
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": d.temperature,
            "top_p": d.top_p,
            "max_tokens": d.max_new_tokens,
        });
        if let Some(k) = d.top_k {
            body["top_k"] = json!(k);
        }
        if request.logprobs {
            body["logprobs"] = json!(true);
            if let Some(n) = request.top_logprobs {
                body["top_logprobs"] = json!(n);
            }
        }
        body
    }
}

/// Extract text and first-token alternatives from a chat-completions response.
pub fn parse_completion(v: &Value) -> Result<ChatReply, TransportError> {
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| TransportError::Protocol("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Protocol("choice has no message content".into()))?
        .to_string();
    let top_logprobs = choice.pointer("/logprobs/content/0/top_logprobs").and_then(Value::as_array).map(|alts| {
        alts.iter()
            .filter_map(|a| {
                Some(TokenLogprob { token: a.get("token")?.as_str()?.to_string(), logprob: a.get("logprob")?.as_f64()? })
            })
            .collect()
    });
    Ok(ChatReply { text, top_logprobs, choice_logprobs: None })
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let _slot = self.gate.acquire();
        let payload = serde_json::to_vec(&self.body(request)).map_err(|e| TransportError::Protocol(e.to_string()))?;
        let mut req = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(&payload[..]).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Http { status, body: text });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Protocol(e.to_string()))?;
        parse_completion(&v)
    }
}

/// A scripted reply, or an injected failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    #[serde(flatten)]
    pub reply: ChatReply,
    /// When set the call fails with a transient network error carrying this message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// When set the call fails with this HTTP status.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { reply: ChatReply { text: text.into(), ..Default::default() }, ..Default::default() }
    }

    /// Constrained yes/no log-probabilities.
    pub fn yes_no(yes: f64, no: f64) -> Self {
        let probs = BTreeMap::from([("yes".to_string(), yes), ("no".to_string(), no)]);
        Self { reply: ChatReply { choice_logprobs: Some(probs), ..Default::default() }, ..Default::default() }
    }

    fn outcome(&self) -> Result<ChatReply, TransportError> {
        if let Some(status) = self.status {
            return Err(TransportError::Http { status, body: self.error.clone().unwrap_or_default() });
        }
        if let Some(msg) = &self.error {
            return Err(TransportError::Network(msg.clone()));
        }
        Ok(self.reply.clone())
    }
}

/// One fixture line.
///
/// Exactly one selector applies: `bindings_hash` (exact request), `match`
/// (all listed binding values equal), or `default` (any request for the
/// template). `replies` is indexed by the request's attempt number, the last
/// one repeating, so retries walk the sequence while identical prompts from
/// different episodes see the same replies; `reply` is shorthand for a
/// single-element sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub template: TemplateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bindings_hash: Option<String>,
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub matches: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub default: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<ScriptedReply>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replies: Vec<ScriptedReply>,
}

impl MockEntry {
    /// Entry answering every request for `template`.
    pub fn fallback(template: TemplateId, replies: Vec<ScriptedReply>) -> Self {
        Self { template, bindings_hash: None, matches: None, default: true, reply: None, replies }
    }

    /// Entry answering requests whose bindings include all of `matches`.
    pub fn matching(template: TemplateId, matches: BTreeMap<String, String>, replies: Vec<ScriptedReply>) -> Self {
        Self { template, bindings_hash: None, matches: Some(matches), default: false, reply: None, replies }
    }

    /// Entry answering exactly one request.
    pub fn exact(template: TemplateId, bindings: &Bindings, replies: Vec<ScriptedReply>) -> Self {
        Self { template, bindings_hash: Some(bindings.hash()), matches: None, default: false, reply: None, replies }
    }

    fn script(&self) -> Vec<ScriptedReply> {
        let mut s: Vec<ScriptedReply> = self.reply.iter().cloned().collect();
        s.extend(self.replies.iter().cloned());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MockCall {
    pub template: TemplateId,
    pub bindings_hash: String,
    /// Fixture entry that answered, if any.
    pub entry: Option<usize>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Entry { path: String, line: usize, message: String },
}

/// Deterministic transport answering from a fixture.
#[derive(Debug, Default)]
pub struct MockTransport {
    entries: Vec<(MockEntry, Vec<ScriptedReply>)>,
    calls: Mutex<Vec<MockCall>>,
}

impl MockTransport {
    pub fn new(entries: Vec<MockEntry>) -> Result<Self, String> {
        let mut out = Vec::with_capacity(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            let selectors = usize::from(e.bindings_hash.is_some()) + usize::from(e.matches.is_some()) + usize::from(e.default);
            if selectors != 1 {
                return Err(format!("entry {i}: needs exactly one of bindings_hash, match, default"));
            }
            let script = e.script();
            if script.is_empty() {
                return Err(format!("entry {i}: no reply"));
            }
            out.push((e, script));
        }
        Ok(Self { entries: out, ..Default::default() })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, (usize, String)> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?);
        }
        Self::new(entries).map_err(|e| (0, e))
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io { path: p.clone(), source })?;
        Self::from_jsonl(&text).map_err(|(line, message)| FixtureError::Entry { path: p, line, message })
    }

    /// Entry answering `request`: exact hash first, then the `match` entry with the
    /// most keys (earliest on ties), then the template default.
    fn lookup(&self, template: TemplateId, bindings: &Bindings, hash: &str) -> Option<usize> {
        let candidates = || self.entries.iter().enumerate().filter(|(_, (e, _))| e.template == template);
        if let Some((i, _)) = candidates().find(|(_, (e, _))| e.bindings_hash.as_deref() == Some(hash)) {
            return Some(i);
        }
        let mut best: Option<(usize, usize)> = None;
        for (i, (e, _)) in candidates() {
            if let Some(m) = &e.matches {
                if m.iter().all(|(k, v)| bindings.get(k) == Some(v.as_str())) && best.is_none_or(|(_, n)| m.len() > n) {
                    best = Some((i, m.len()));
                }
            }
        }
        if let Some((i, _)) = best {
            return Some(i);
        }
        candidates().find(|(_, (e, _))| e.default).map(|(i, _)| i)
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().expect("mock poisoned").clone()
    }

    pub fn call_count(&self, template: TemplateId) -> usize {
        self.calls.lock().expect("mock poisoned").iter().filter(|c| c.template == template).count()
    }
}

impl ChatTransport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let hash = request.bindings.hash();
        let entry = self.lookup(request.template, &request.bindings, &hash);
        self.calls.lock().expect("mock poisoned").push(MockCall {
            template: request.template,
            bindings_hash: hash.clone(),
            entry,
        });
        let Some(i) = entry else {
            return Err(TransportError::NoScript { template: request.template, bindings_hash: hash });
        };
        let script = &self.entries[i].1;
        script[(request.attempt as usize).min(script.len() - 1)].outcome()
    }
}
