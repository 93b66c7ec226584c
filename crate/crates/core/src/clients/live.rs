//! Generic JSON-over-HTTP client.
//!
//! Every live dependency speaks the same protocol: `POST {endpoint}/{operation}`
//! with a JSON body, answered by a JSON object. Operations and their fields:
//!
//! | operation  | request                               | response                          |
//! |------------|---------------------------------------|-----------------------------------|
//! | `generate` | `prompt`, `max_tokens?`, `temperature?` | `text`                          |
//! | `embed`    | `text`                                | `embedding: [f64]`                |
//! | `evaluate` | `question`, `answer`, `complexity`    | `accuracy`                        |
//! | `discover` | `entity`                              | `entities: [{name, predicate?}]`  |
//! | `search`   | `query`                               | `results: [{title, snippet, url?}]` |
//! | `read`     | `document`, `question`                | `text`                            |
//! | `judge`    | `candidate`                           | `verdict: "KEEP" \| "DROP"`       |
//! | `prefer`   | `question`, `answer`                  | `score`                           |

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    checked_accuracy, with_retries, AccuracyEvaluator, AccuracyQuery, ClientConfig, ClientError,
    ClientResult, Discovery, DocumentReader, Embedder, EntityDiscoverer, GenerationParams, Mode,
    PreferenceJudge, RarityJudge, Reasoner, ReasonerRequest, SearchHit, TextGenerator, Verdict,
    WebSearch,
};

/// The wire. Swappable so tests can observe or forbid network activity.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        bearer: Option<&str>,
        timeout: Duration,
    ) -> ClientResult<Value>;
}

/// Blocking HTTP transport.
#[derive(Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        bearer: Option<&str>,
        timeout: Duration,
    ) -> ClientResult<Value> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut request = agent.post(url);
        if let Some(token) = bearer {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(map_ureq)?;
        response.body_mut().read_json::<Value>().map_err(map_ureq)
    }
}

fn map_ureq(err: ureq::Error) -> ClientError {
    match err {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        ureq::Error::StatusCode(code) if code >= 500 || code == 429 => {
            ClientError::Transport(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => ClientError::Contract(format!("HTTP {code}")),
        other => ClientError::Transport(other.to_string()),
    }
}

/// A configured live endpoint implementing every client contract.
pub struct LiveClient {
    config: ClientConfig,
    transport: Arc<dyn Transport>,
    embedding_dim: usize,
}

impl LiveClient {
    pub fn new(config: ClientConfig, transport: Arc<dyn Transport>) -> ClientResult<Self> {
        config.validate()?;
        if config.mode != Mode::Live {
            return Err(ClientError::Config("live client built from a mock config".into()));
        }
        Ok(Self {
            config,
            transport,
            embedding_dim: super::DEFAULT_EMBEDDING_DIM,
        })
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = dim;
        self
    }

    fn token(&self) -> ClientResult<Option<String>> {
        match &self.config.auth_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ClientError::Config(format!("environment variable `{var}` is not set"))),
        }
    }

    fn call(&self, operation: &str, body: Value) -> ClientResult<Value> {
        let endpoint = self.config.endpoint.as_deref().unwrap_or_default();
        let url = format!("{}/{operation}", endpoint.trim_end_matches('/'));
        let token = self.token()?;
        let (value, _) = with_retries(self.config.retries, || {
            self.transport
                .post_json(&url, &body, token.as_deref(), self.config.timeout())
        })?;
        Ok(value)
    }

    fn field<'a>(value: &'a Value, name: &str) -> ClientResult<&'a Value> {
        value
            .get(name)
            .ok_or_else(|| ClientError::Contract(format!("response lacks `{name}`")))
    }

    fn text_field(value: &Value, name: &str) -> ClientResult<String> {
        Self::field(value, name)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Contract(format!("`{name}` is not a string")))
    }

    fn number_field(value: &Value, name: &str) -> ClientResult<f64> {
        Self::field(value, name)?
            .as_f64()
            .ok_or_else(|| ClientError::Contract(format!("`{name}` is not a number")))
    }

    fn decode<T: serde::de::DeserializeOwned>(value: &Value, name: &str) -> ClientResult<T> {
        serde_json::from_value(Self::field(value, name)?.clone())
            .map_err(|e| ClientError::Contract(format!("`{name}`: {e}")))
    }
}

impl TextGenerator for LiveClient {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> ClientResult<String> {
        let mut body = json!({ "prompt": prompt });
        if let Some(n) = params.max_tokens {
            body["max_tokens"] = json!(n);
        }
        if let Some(t) = params.temperature {
            body["temperature"] = json!(t);
        }
        Self::text_field(&self.call("generate", body)?, "text")
    }
}

impl Embedder for LiveClient {
    fn dimension(&self) -> usize {
        self.embedding_dim
    }

    fn embed(&self, text: &str) -> ClientResult<Vec<f64>> {
        let v: Vec<f64> = Self::decode(&self.call("embed", json!({ "text": text }))?, "embedding")?;
        if v.len() != self.embedding_dim {
            return Err(ClientError::Contract(format!(
                "embedding arity {} != {}",
                v.len(),
                self.embedding_dim
            )));
        }
        Ok(v)
    }
}

impl AccuracyEvaluator for LiveClient {
    fn name(&self) -> &str {
        self.config.endpoint.as_deref().unwrap_or("live")
    }

    fn evaluate_question_accuracy(&self, query: &AccuracyQuery<'_>) -> ClientResult<f64> {
        let body = json!({
            "question": query.question,
            "answer": query.answer,
            "complexity": query.complexity,
        });
        checked_accuracy(Self::number_field(&self.call("evaluate", body)?, "accuracy")?)
    }
}

impl EntityDiscoverer for LiveClient {
    fn discover_entities(&self, context_entity: &str) -> ClientResult<Vec<Discovery>> {
        Self::decode(&self.call("discover", json!({ "entity": context_entity }))?, "entities")
    }
}

impl WebSearch for LiveClient {
    fn search(&self, query: &str) -> ClientResult<Vec<SearchHit>> {
        Self::decode(&self.call("search", json!({ "query": query }))?, "results")
    }
}

impl DocumentReader for LiveClient {
    fn read(&self, document: &str, question: &str) -> ClientResult<String> {
        let body = json!({ "document": document, "question": question });
        Self::text_field(&self.call("read", body)?, "text")
    }
}

impl RarityJudge for LiveClient {
    fn judge(&self, candidate: &str) -> ClientResult<Verdict> {
        let reply = self.call("judge", json!({ "candidate": candidate }))?;
        Verdict::parse(&Self::text_field(&reply, "verdict")?)
    }
}

impl PreferenceJudge for LiveClient {
    fn preference(&self, question: &str, answer: &str) -> ClientResult<f64> {
        let reply = self.call("prefer", json!({ "question": question, "answer": answer }))?;
        checked_accuracy(Self::number_field(&reply, "score")?)
    }
}

impl Reasoner for LiveClient {
    fn next_turn(&self, request: &ReasonerRequest<'_>) -> ClientResult<String> {
        self.generate(request.prompt, &GenerationParams::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Records requests and replays canned responses.
    struct FakeTransport {
        replies: Mutex<Vec<ClientResult<Value>>>,
        seen: Mutex<Vec<(String, Value, Option<String>)>>,
    }

    impl FakeTransport {
        fn new(mut replies: Vec<ClientResult<Value>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Self {
                replies: Mutex::new(replies),
                seen: Mutex::new(vec![]),
            })
        }
    }

    impl Transport for FakeTransport {
        fn post_json(&self, url: &str, body: &Value, bearer: Option<&str>, _: Duration) -> ClientResult<Value> {
            self.seen
                .lock()
                .unwrap()
                .push((url.to_string(), body.clone(), bearer.map(str::to_string)));
            self.replies.lock().unwrap().pop().expect("no reply left")
        }
    }

    #[test]
    fn generate_round_trip_with_retries() {
        let t = FakeTransport::new(vec![
            Err(ClientError::Timeout),
            Ok(json!({ "text": "hello" })),
        ]);
        let mut cfg = ClientConfig::live("http://svc/");
        cfg.retries = 1;
        let client = LiveClient::new(cfg, t.clone()).unwrap();
        assert_eq!(client.generate("p", &GenerationParams::default()).unwrap(), "hello");
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0].0, "http://svc/generate");
        assert_eq!(seen[0].1, json!({ "prompt": "p" }));
    }

    #[test]
    fn auth_token_read_from_named_variable() {
        let t = FakeTransport::new(vec![Ok(json!({ "verdict": "KEEP" }))]);
        let mut cfg = ClientConfig::live("http://svc");
        cfg.auth_env = Some("KGSYNTH_TEST_TOKEN_LIVE".into());
        std::env::set_var("KGSYNTH_TEST_TOKEN_LIVE", "s3cret");
        let client = LiveClient::new(cfg, t.clone()).unwrap();
        assert_eq!(client.judge("x").unwrap(), Verdict::Keep);
        assert_eq!(t.seen.lock().unwrap()[0].2.as_deref(), Some("s3cret"));
    }

    #[test]
    fn malformed_responses_are_contract_errors() {
        let t = FakeTransport::new(vec![
            Ok(json!({ "accuracy": 1.5 })),
            Ok(json!({ "embedding": [1.0, 0.0] })),
            Ok(json!({ "nothing": 1 })),
        ]);
        let client = LiveClient::new(ClientConfig::live("http://svc"), t).unwrap();
        let q = AccuracyQuery {
            question: "q",
            answer: "a",
            complexity: 0,
        };
        assert!(matches!(client.evaluate_question_accuracy(&q), Err(ClientError::Contract(_))));
        assert!(matches!(client.embed("x"), Err(ClientError::Contract(_))));
        assert!(matches!(client.discover_entities("x"), Err(ClientError::Contract(_))));
    }

    #[test]
    fn mock_config_rejected() {
        let t = FakeTransport::new(vec![]);
        assert!(LiveClient::new(ClientConfig::mock("builtin:template"), t).is_err());
    }
}
