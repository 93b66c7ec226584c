use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{
    AccuracyEvaluator, ClientConfig, ClientError, ClientResult, DocumentReader, Embedder,
    EntityDiscoverer, ExcerptReader, GeneratorJudge, HashEmbedder, HttpTransport, LiveClient, Mode,
    MockScript, PreferenceJudge, RarityJudge, Reasoner, ScriptPlayer, ScriptedDiscoverer,
    ScriptedEvaluator, ScriptedGenerator, ScriptedJudge, ScriptedReasoner, ScriptedSearch,
    SyntheticDiscoverer, SyntheticSearch, TextGenerator, Transport, WebSearch,
};
use crate::synthesis::TemplateQuestionWriter;

/// Builds clients from configuration sections.
///
/// Mock scripts are resolved relative to `base_dir`. The transport is only ever
/// touched by live clients.
pub struct ClientFactory {
    base_dir: PathBuf,
    transport: Arc<dyn Transport>,
}

enum Source {
    Builtin(String),
    Script(ScriptPlayer),
    Live(LiveClient),
}

impl ClientFactory {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self::with_transport(base_dir, Arc::new(HttpTransport))
    }

    pub fn with_transport(base_dir: impl Into<PathBuf>, transport: Arc<dyn Transport>) -> Self {
        Self {
            base_dir: base_dir.into(),
            transport,
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn source(&self, config: &ClientConfig) -> ClientResult<Source> {
        config.validate()?;
        match config.mode {
            Mode::Live => Ok(Source::Live(LiveClient::new(config.clone(), self.transport.clone())?)),
            Mode::Mock => {
                let script = config.script.as_deref().unwrap_or_default();
                if let Some(name) = script.strip_prefix("builtin:") {
                    return Ok(Source::Builtin(name.to_string()));
                }
                let path = self.base_dir.join(script);
                Ok(Source::Script(MockScript::load(&path)?.player()?))
            }
        }
    }

    fn unknown_builtin<T>(kind: &str, name: &str) -> ClientResult<T> {
        Err(ClientError::Config(format!("no builtin {kind} mock named `{name}`")))
    }

    pub fn generator(&self, config: &ClientConfig) -> ClientResult<Arc<dyn TextGenerator>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedGenerator::new(p))),
            Source::Builtin(name) if name == "template" => Ok(Arc::new(TemplateQuestionWriter)),
            Source::Builtin(name) => Self::unknown_builtin("generator", &name),
        }
    }

    pub fn embedder(&self, config: &ClientConfig) -> ClientResult<Arc<dyn Embedder>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Builtin(name) if name == "hash" => Ok(Arc::new(HashEmbedder::default())),
            Source::Builtin(name) => Self::unknown_builtin("embedder", &name),
            Source::Script(_) => Err(ClientError::Config("embedders cannot be scripted; use builtin:hash".into())),
        }
    }

    pub fn evaluator(&self, name: &str, config: &ClientConfig) -> ClientResult<Arc<dyn AccuracyEvaluator>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedEvaluator::new(name, p))),
            Source::Builtin(b) => Self::unknown_builtin("evaluator", &b),
        }
    }

    pub fn discoverer(&self, config: &ClientConfig) -> ClientResult<Arc<dyn EntityDiscoverer>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedDiscoverer::from_script(p))),
            Source::Builtin(name) if name == "synthetic" => Ok(Arc::new(SyntheticDiscoverer::default())),
            Source::Builtin(name) => Self::unknown_builtin("discoverer", &name),
        }
    }

    pub fn search(&self, config: &ClientConfig) -> ClientResult<Arc<dyn WebSearch>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedSearch::new(p))),
            Source::Builtin(name) if name == "synthetic" => Ok(Arc::new(SyntheticSearch)),
            Source::Builtin(name) => Self::unknown_builtin("search", &name),
        }
    }

    pub fn reader(&self, config: &ClientConfig) -> ClientResult<Arc<dyn DocumentReader>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Builtin(name) if name == "excerpt" => Ok(Arc::new(ExcerptReader::default())),
            Source::Builtin(name) => Self::unknown_builtin("reader", &name),
            Source::Script(p) => Ok(Arc::new(ScriptedReader(p))),
        }
    }

    pub fn rarity_judge(&self, config: &ClientConfig) -> ClientResult<Arc<dyn RarityJudge>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedJudge::new(p))),
            Source::Builtin(name) if name == "keep_all" => Ok(Arc::new(GeneratorJudge::new(KeepAll))),
            Source::Builtin(name) => Self::unknown_builtin("judge", &name),
        }
    }

    pub fn preference_judge(&self, config: &ClientConfig) -> ClientResult<Arc<dyn PreferenceJudge>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedJudge::new(p))),
            Source::Builtin(name) => Self::unknown_builtin("preference judge", &name),
        }
    }

    pub fn reasoner(&self, config: &ClientConfig) -> ClientResult<Arc<dyn Reasoner>> {
        match self.source(config)? {
            Source::Live(c) => Ok(Arc::new(c)),
            Source::Script(p) => Ok(Arc::new(ScriptedReasoner::new(p))),
            Source::Builtin(name) => Self::unknown_builtin("reasoner", &name),
        }
    }
}

struct ScriptedReader(ScriptPlayer);

impl DocumentReader for ScriptedReader {
    fn read(&self, document: &str, _question: &str) -> ClientResult<String> {
        self.0.next(document)
    }
}

struct KeepAll;

impl TextGenerator for KeepAll {
    fn generate(&self, _prompt: &str, _params: &super::GenerationParams) -> ClientResult<String> {
        Ok("KEEP".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{AccuracyQuery, GenerationParams, ReasonerRequest};
    use serde_json::Value;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[derive(Default)]
    struct CountingTransport(AtomicUsize);

    impl Transport for CountingTransport {
        fn post_json(&self, _: &str, _: &Value, _: Option<&str>, _: Duration) -> ClientResult<Value> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(ClientError::Transport("network forbidden in this test".into()))
        }
    }

    #[test]
    fn mock_mode_never_touches_the_transport() {
        let dir = std::env::temp_dir().join(format!("kgsynth-factory-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("s.json"),
            r#"{"entries":[{"match":"*","response":"0.25"}]}"#,
        )
        .unwrap();
        let transport = Arc::new(CountingTransport::default());
        let f = ClientFactory::with_transport(&dir, transport.clone());

        let g = f.generator(&ClientConfig::mock("builtin:template")).unwrap();
        let _ = g.generate("Relation 1: a --treats--> b\n", &GenerationParams::default());
        f.embedder(&ClientConfig::mock("builtin:hash")).unwrap().embed("x").unwrap();
        let ev = f.evaluator("e", &ClientConfig::mock("s.json")).unwrap();
        let q = AccuracyQuery {
            question: "q",
            answer: "a",
            complexity: 0,
        };
        assert_eq!(ev.evaluate_question_accuracy(&q).unwrap(), 0.25);
        f.discoverer(&ClientConfig::mock("builtin:synthetic"))
            .unwrap()
            .discover_entities("x")
            .unwrap();
        f.search(&ClientConfig::mock("builtin:synthetic")).unwrap().search("x").unwrap();
        f.reader(&ClientConfig::mock("builtin:excerpt")).unwrap().read("x.", "x").unwrap();
        f.rarity_judge(&ClientConfig::mock("builtin:keep_all")).unwrap().judge("x").unwrap();
        let r = f.reasoner(&ClientConfig::mock("s.json")).unwrap();
        r.next_turn(&ReasonerRequest {
            question_id: "q",
            step: 0,
            prompt: "",
        })
        .unwrap();

        assert_eq!(transport.0.load(Ordering::SeqCst), 0);

        // and live mode does use it
        let live = f.generator(&ClientConfig::live("http://127.0.0.1:9")).unwrap();
        assert!(live.generate("p", &GenerationParams::default()).is_err());
        assert_eq!(transport.0.load(Ordering::SeqCst), 1);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn unknown_builtin_and_missing_script() {
        let f = ClientFactory::new(std::env::temp_dir());
        assert!(matches!(
            f.generator(&ClientConfig::mock("builtin:nope")),
            Err(ClientError::Config(_))
        ));
        assert!(matches!(
            f.generator(&ClientConfig::mock("definitely-missing.json")),
            Err(ClientError::Config(_))
        ));
    }
}
