//! Contracts for every external service the pipeline talks to.
//!
//! Each dependency is a small object-safe trait. Scripted mocks live in
//! [`script`] and [`mock`]; [`live`] speaks one generic JSON-over-HTTP protocol;
//! [`factory`] builds either from a [`ClientConfig`].

pub mod factory;
pub mod live;
pub mod mock;
pub mod script;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use factory::ClientFactory;
pub use live::{HttpTransport, LiveClient, Transport};
pub use mock::{
    stable_seed, ExcerptReader, HashEmbedder, SampledAccuracyEvaluator, ScriptedDiscoverer, ScriptedEvaluator,
    ScriptedGenerator, ScriptedJudge, ScriptedReasoner, ScriptedSearch, SyntheticDiscoverer,
    SyntheticSearch,
};
pub use script::{MockReply, MockScript, ScriptEntry, ScriptPlayer};

/// Default embedding arity.
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("script violation: {0}")]
    ScriptViolation(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("client configuration: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: Box<ClientError> },
}

impl ClientError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ClientError::Transport(_) | ClientError::Timeout)
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    #[default]
    Mock,
}

/// Per-client configuration section.
///
/// `auth_env` names an environment variable holding the token; the secret itself
/// never appears in configuration. In mock mode `script` is either a path to a
/// JSON [`MockScript`] or `builtin:<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl ClientConfig {
    pub fn mock(script: impl Into<String>) -> Self {
        Self {
            mode: Mode::Mock,
            endpoint: None,
            auth_env: None,
            timeout_ms: default_timeout_ms(),
            retries: 0,
            script: Some(script.into()),
        }
    }

    pub fn live(endpoint: impl Into<String>) -> Self {
        Self {
            mode: Mode::Live,
            endpoint: Some(endpoint.into()),
            auth_env: None,
            timeout_ms: default_timeout_ms(),
            retries: 0,
            script: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> ClientResult<()> {
        match self.mode {
            Mode::Live if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                Err(ClientError::Config("live mode requires an endpoint".into()))
            }
            Mode::Mock if self.script.as_deref().is_none_or(str::is_empty) => {
                Err(ClientError::Config("mock mode requires a script".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> ClientResult<String>;
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> ClientResult<Vec<f64>>;
}

/// What an accuracy evaluator is asked about. `complexity` is the calibration
/// level the question was generated at; scripted evaluators may key on it.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyQuery<'a> {
    pub question: &'a str,
    pub answer: &'a str,
    pub complexity: u32,
}

pub trait AccuracyEvaluator: Send + Sync {
    fn name(&self) -> &str;
    /// Fraction of attempts in which the evaluated system answers correctly.
    fn evaluate_question_accuracy(&self, query: &AccuracyQuery<'_>) -> ClientResult<f64>;
}

/// Validates an accuracy value reported by an evaluator.
pub fn checked_accuracy(value: f64) -> ClientResult<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ClientError::Contract(format!("accuracy {value} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
}

impl Discovery {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            predicate: None,
        }
    }

    pub fn with_predicate(name: impl Into<String>, predicate: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            predicate: Some(predicate.into()),
        }
    }
}

pub trait EntityDiscoverer: Send + Sync {
    fn discover_entities(&self, context_entity: &str) -> ClientResult<Vec<Discovery>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

pub trait WebSearch: Send + Sync {
    fn search(&self, query: &str) -> ClientResult<Vec<SearchHit>>;
}

pub trait DocumentReader: Send + Sync {
    fn read(&self, document: &str, question: &str) -> ClientResult<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Keep,
    Drop,
}

impl Verdict {
    pub fn parse(text: &str) -> ClientResult<Self> {
        let word = text.split_whitespace().next().unwrap_or("");
        match word.to_ascii_uppercase().trim_matches(|c: char| !c.is_ascii_alphabetic()) {
            "KEEP" => Ok(Verdict::Keep),
            "DROP" => Ok(Verdict::Drop),
            _ => Err(ClientError::Contract(format!("unrecognized verdict `{}`", text.trim()))),
        }
    }
}

/// Judges whether a rare-entity candidate is worth keeping.
pub trait RarityJudge: Send + Sync {
    fn judge(&self, candidate: &str) -> ClientResult<Verdict>;
}

/// Rarity judgments delegated to a text generator that answers KEEP or DROP.
pub struct GeneratorJudge<G> {
    generator: G,
}

impl<G: TextGenerator> GeneratorJudge<G> {
    pub fn new(generator: G) -> Self {
        Self { generator }
    }
}

impl<G: TextGenerator> RarityJudge for GeneratorJudge<G> {
    fn judge(&self, candidate: &str) -> ClientResult<Verdict> {
        let prompt = format!(
            "Is `{candidate}` a genuine, clinically significant medical entity (not a typo or a \
             common term)? Answer KEEP or DROP."
        );
        Verdict::parse(&self.generator.generate(&prompt, &GenerationParams::default())?)
    }
}

/// One turn request to the ReAct reasoner.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerRequest<'a> {
    pub question_id: &'a str,
    pub step: usize,
    pub prompt: &'a str,
}

pub trait Reasoner: Send + Sync {
    fn next_turn(&self, request: &ReasonerRequest<'_>) -> ClientResult<String>;
}

/// Reasoner backed by a plain text generator.
pub struct GeneratorReasoner<G> {
    generator: G,
    params: GenerationParams,
}

impl<G: TextGenerator> GeneratorReasoner<G> {
    pub fn new(generator: G) -> Self {
        Self {
            generator,
            params: GenerationParams::default(),
        }
    }
}

impl<G: TextGenerator> Reasoner for GeneratorReasoner<G> {
    fn next_turn(&self, request: &ReasonerRequest<'_>) -> ClientResult<String> {
        self.generator.generate(request.prompt, &self.params)
    }
}

/// Expert preference score in [0, 1] for a finished answer.
pub trait PreferenceJudge: Send + Sync {
    fn preference(&self, question: &str, answer: &str) -> ClientResult<f64>;
}

impl<T: TextGenerator + ?Sized> TextGenerator for std::sync::Arc<T> {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> ClientResult<String> {
        (**self).generate(prompt, params)
    }
}

impl<T: TextGenerator + ?Sized> TextGenerator for &T {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> ClientResult<String> {
        (**self).generate(prompt, params)
    }
}

/// Calls `op` until it succeeds, fails with a non-retriable error, or
/// `retries + 1` attempts have been made. Returns the value and the attempt count.
pub fn with_retries<T>(
    retries: u32,
    mut op: impl FnMut() -> ClientResult<T>,
) -> ClientResult<(T, usize)> {
    let max_attempts = retries as usize + 1;
    let mut attempts = 0;
    loop {
        attempts += 1;
        match op() {
            Ok(value) => return Ok((value, attempts)),
            Err(err) if err.is_retriable() && attempts < max_attempts => {
                tracing::debug!(attempts, error = %err, "retrying client call");
            }
            Err(err) if err.is_retriable() && max_attempts > 1 => {
                return Err(ClientError::RetriesExhausted {
                    attempts,
                    last: Box::new(err),
                })
            }
            Err(err) => return Err(err),
        }
    }
}

/// Wraps a generator with retry accounting.
pub struct RetryingGenerator<G> {
    inner: G,
    retries: u32,
    attempts: AtomicUsize,
}

impl<G: TextGenerator> RetryingGenerator<G> {
    pub fn new(inner: G, retries: u32) -> Self {
        Self {
            inner,
            retries,
            attempts: AtomicUsize::new(0),
        }
    }

    /// Total attempts made across all calls so far.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl<G: TextGenerator> TextGenerator for RetryingGenerator<G> {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> ClientResult<String> {
        let result = with_retries(self.retries, || {
            self.attempts.fetch_add(1, Ordering::SeqCst);
            self.inner.generate(prompt, params)
        });
        result.map(|(text, _)| text)
    }
}
