//! Language-model oracle behind a session interface.
//!
//! A session holds the prompt/answer transcript and builds per-turn requests
//! from a sliding history window. Two backends ship: a scripted one that
//! replays canned answers from a plain-text file (one answer per line, `#`
//! comments allowed) for fully offline runs, and a remote one speaking a
//! small JSON-over-HTTP contract:
//!
//! ```text
//! POST <endpoint>
//! Authorization: Bearer $CHATMONKEY_API_KEY   (when the variable is set)
//! {"model": "...", "temperature": 0.2, "max_tokens": 128,
//!  "messages": [{"role": "user", "text": "..."},
//!               {"role": "assistant", "text": "..."}, ...]}
//! ```
//!
//! The response body is `{"text": "..."}`. Roles strictly alternate and the
//! last message is always the new user prompt.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompter::{Prompt, PromptKind};

pub const API_KEY_ENV: &str = "CHATMONKEY_API_KEY";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle config: {0}")]
    ConfigInvalid(String),
    #[error("oracle request timed out")]
    Timeout,
    #[error("remote oracle error (status {status}): {message}")]
    Remote { status: u16, message: String },
    #[error("scripted oracle has no answers left")]
    ScriptExhausted,
    #[error("oracle io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub endpoint: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_answer_tokens: u32,
    /// Number of past turns carried in each remote request.
    pub history_window: usize,
    pub request_timeout: Duration,
}

impl Default for OracleConfig {
    fn default() -> Self {
        // Decoding parameters are engineering defaults; nothing upstream
        // prescribes them.
        OracleConfig {
            endpoint: None,
            model_name: "default".into(),
            temperature: 0.2,
            max_answer_tokens: 128,
            history_window: 6,
            request_timeout: Duration::from_secs(30),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.temperature < 0.0 {
            return Err(OracleError::ConfigInvalid(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.history_window < 1 {
            return Err(OracleError::ConfigInvalid("history_window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    pub text: String,
    pub latency: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// Wire shape of one oracle call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    #[serde(rename = "model")]
    pub model_name: String,
    pub temperature: f64,
    #[serde(rename = "max_tokens")]
    pub max_answer_tokens: u32,
    pub messages: Vec<Message>,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    text: String,
}

pub trait OracleBackend {
    fn describe(&self) -> String;
    fn answer(&mut self, request: &OracleRequest) -> Result<String, OracleError>;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Replays canned answers; makes the whole engine deterministic.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    answers: VecDeque<String>,
}

impl ScriptedBackend {
    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            answers: lines.into_iter().map(Into::into).collect(),
        }
    }

    pub fn from_script(text: &str) -> Self {
        Self::from_lines(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Ok(Self::from_script(&std::fs::read_to_string(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.answers.len()
    }
}

impl OracleBackend for ScriptedBackend {
    fn describe(&self) -> String {
        format!("scripted ({} answers)", self.answers.len())
    }

    fn answer(&mut self, _request: &OracleRequest) -> Result<String, OracleError> {
        self.answers.pop_front().ok_or(OracleError::ScriptExhausted)
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

pub struct RemoteBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl RemoteBackend {
    /// Credentials come only from the environment.
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self::with_api_key(endpoint, timeout, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(
        endpoint: impl Into<String>,
        timeout: Duration,
        api_key: Option<String>,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        RemoteBackend {
            agent: config.into(),
            endpoint: endpoint.into(),
            api_key,
        }
    }
}

impl OracleBackend for RemoteBackend {
    fn describe(&self) -> String {
        format!("remote ({})", self.endpoint)
    }

    fn answer(&mut self, request: &OracleRequest) -> Result<String, OracleError> {
        let mut builder = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = builder.send_json(request).map_err(|e| match e {
            ureq::Error::Timeout(_) => OracleError::Timeout,
            other => OracleError::Remote { status: 0, message: other.to_string() },
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let message = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default()
                .chars()
                .take(200)
                .collect();
            return Err(OracleError::Remote { status, message });
        }
        let parsed: RemoteResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Remote { status, message: e.to_string() })?;
        Ok(parsed.text)
    }
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

/// One conversation with the oracle. The transcript strictly alternates
/// prompt and answer; the start prompt, when present, is its first entry.
pub struct OracleSession {
    config: OracleConfig,
    backend: Box<dyn OracleBackend>,
    transcript: Vec<(Prompt, OracleAnswer)>,
}

pub fn open_session(
    config: OracleConfig,
    backend: Box<dyn OracleBackend>,
) -> Result<OracleSession, OracleError> {
    config.validate()?;
    Ok(OracleSession { config, backend, transcript: Vec::new() })
}

/// Flushes the transcript into a serializable log.
pub fn close_session(session: OracleSession) -> SessionLog {
    SessionLog {
        entries: session
            .transcript
            .into_iter()
            .enumerate()
            .map(|(i, (prompt, answer))| TurnRecord {
                turn: i + 1,
                kind: prompt.kind,
                prompt: prompt.text,
                answer: answer.text,
                latency_ms: answer.latency.as_millis() as u64,
            })
            .collect(),
    }
}

impl OracleSession {
    /// Sends one prompt and appends the turn to the transcript. A timed-out
    /// request is retried once before the error surfaces.
    pub fn ask(&mut self, prompt: &Prompt) -> Result<OracleAnswer, OracleError> {
        let request = self.build_request(prompt);
        let started = Instant::now();
        let text = match self.backend.answer(&request) {
            Err(OracleError::Timeout) => self.backend.answer(&request),
            other => other,
        }?;
        if text.trim().is_empty() {
            return Err(OracleError::Remote {
                status: 0,
                message: "oracle returned an empty answer".into(),
            });
        }
        let answer = OracleAnswer { text, latency: started.elapsed() };
        self.transcript.push((prompt.clone(), answer.clone()));
        Ok(answer)
    }

    /// Builds the request for the next turn: the last `history_window` turns
    /// plus the new prompt. The start turn is retained at the head of the
    /// window even when older turns are evicted.
    pub fn build_request(&self, prompt: &Prompt) -> OracleRequest {
        let mut messages = Vec::new();
        let window_start = self.transcript.len().saturating_sub(self.config.history_window);
        if window_start > 0 {
            if let Some((first_prompt, first_answer)) = self.transcript.first() {
                if first_prompt.kind == PromptKind::Start {
                    messages.push(Message { role: Role::User, text: first_prompt.text.clone() });
                    messages.push(Message {
                        role: Role::Assistant,
                        text: first_answer.text.clone(),
                    });
                }
            }
        }
        for (p, a) in &self.transcript[window_start..] {
            messages.push(Message { role: Role::User, text: p.text.clone() });
            messages.push(Message { role: Role::Assistant, text: a.text.clone() });
        }
        messages.push(Message { role: Role::User, text: prompt.text.clone() });
        OracleRequest {
            model_name: self.config.model_name.clone(),
            temperature: self.config.temperature,
            max_answer_tokens: self.config.max_answer_tokens,
            messages,
        }
    }

    pub fn transcript(&self) -> &[(Prompt, OracleAnswer)] {
        &self.transcript
    }

    pub fn turns(&self) -> usize {
        self.transcript.len()
    }

    pub fn backend_description(&self) -> String {
        self.backend.describe()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub kind: PromptKind,
    pub prompt: String,
    pub answer: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SessionLog {
    pub entries: Vec<TurnRecord>,
}

impl SessionLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
