//! Deterministic client implementations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    checked_accuracy, AccuracyEvaluator, AccuracyQuery, ClientError, ClientResult, Discovery,
    DocumentReader, Embedder, EntityDiscoverer, GenerationParams, PreferenceJudge, RarityJudge,
    Reasoner, ReasonerRequest, ScriptPlayer, SearchHit, TextGenerator, Verdict, WebSearch,
};

/// 64-bit seed derived from a label and a text via SHA-256.
pub fn stable_seed(label: &str, text: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Generator whose replies come from a script keyed by the prompt text.
pub struct ScriptedGenerator {
    player: ScriptPlayer,
}

impl ScriptedGenerator {
    pub fn new(player: ScriptPlayer) -> Self {
        Self { player }
    }

    pub fn player(&self) -> &ScriptPlayer {
        &self.player
    }
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> ClientResult<String> {
        self.player.next(prompt)
    }
}

/// Embeds text as a unit vector of seeded pseudo-random components.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding arity must be positive");
        Self { dim, seed }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(super::DEFAULT_EMBEDDING_DIM, 0)
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> ClientResult<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(&self.seed.to_string(), text));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Evaluator replying from a script. The call key is
/// `complexity=<level>\n<question>`, so scripts can key on either part.
pub struct ScriptedEvaluator {
    name: String,
    player: ScriptPlayer,
}

impl ScriptedEvaluator {
    pub fn new(name: impl Into<String>, player: ScriptPlayer) -> Self {
        Self {
            name: name.into(),
            player,
        }
    }

    pub fn call_key(query: &AccuracyQuery<'_>) -> String {
        format!("complexity={}\n{}", query.complexity, query.question)
    }

    pub fn player(&self) -> &ScriptPlayer {
        &self.player
    }
}

impl AccuracyEvaluator for ScriptedEvaluator {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_question_accuracy(&self, query: &AccuracyQuery<'_>) -> ClientResult<f64> {
        let reply = self.player.next(&Self::call_key(query))?;
        let value: f64 = reply
            .trim()
            .parse()
            .map_err(|_| ClientError::Contract(format!("accuracy `{}` is not a number", reply.trim())))?;
        checked_accuracy(value)
    }
}

/// Accuracy measured as the fraction of `attempts` answers that contain the
/// reference answer (case-insensitive).
pub struct SampledAccuracyEvaluator<G> {
    name: String,
    answerer: G,
    attempts: usize,
}

/// Default number of attempts per accuracy estimate.
pub const DEFAULT_ACCURACY_ATTEMPTS: usize = 4;

impl<G: TextGenerator> SampledAccuracyEvaluator<G> {
    pub fn new(name: impl Into<String>, answerer: G, attempts: usize) -> Self {
        assert!(attempts > 0, "at least one attempt is required");
        Self {
            name: name.into(),
            answerer,
            attempts,
        }
    }
}

impl<G: TextGenerator> AccuracyEvaluator for SampledAccuracyEvaluator<G> {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate_question_accuracy(&self, query: &AccuracyQuery<'_>) -> ClientResult<f64> {
        let needle = query.answer.to_lowercase();
        let mut correct = 0usize;
        for attempt in 0..self.attempts {
            let prompt = format!("Attempt {}. Answer concisely.\n{}", attempt + 1, query.question);
            let answer = self.answerer.generate(&prompt, &GenerationParams::default())?;
            if answer.to_lowercase().contains(&needle) {
                correct += 1;
            }
        }
        checked_accuracy(correct as f64 / self.attempts as f64)
    }
}

enum DiscoverySource {
    Sequence(Mutex<std::vec::IntoIter<ClientResult<Vec<Discovery>>>>),
    Script(ScriptPlayer),
}

/// Discoverer replaying scripted results.
///
/// Built with [`ScriptedDiscoverer::new`], calls consume the given results in
/// order regardless of the context entity, and an exhausted sequence yields
/// nothing. Built from a script, the key is the context entity name and each
/// reply is a JSON list of names or `{"name", "predicate"}` objects.
pub struct ScriptedDiscoverer {
    source: DiscoverySource,
    calls: Mutex<usize>,
}

impl ScriptedDiscoverer {
    pub fn new(results: Vec<ClientResult<Vec<Discovery>>>) -> Self {
        Self {
            source: DiscoverySource::Sequence(Mutex::new(results.into_iter())),
            calls: Mutex::new(0),
        }
    }

    pub fn from_script(player: ScriptPlayer) -> Self {
        Self {
            source: DiscoverySource::Script(player),
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("poisoned")
    }
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum DiscoveryItem {
    Name(String),
    Full(Discovery),
}

pub(crate) fn parse_discoveries(text: &str) -> ClientResult<Vec<Discovery>> {
    let items: Vec<DiscoveryItem> = serde_json::from_str(text)
        .map_err(|e| ClientError::Contract(format!("bad discovery reply: {e}")))?;
    Ok(items
        .into_iter()
        .map(|item| match item {
            DiscoveryItem::Name(name) => Discovery::new(name),
            DiscoveryItem::Full(d) => d,
        })
        .collect())
}

impl EntityDiscoverer for ScriptedDiscoverer {
    fn discover_entities(&self, context_entity: &str) -> ClientResult<Vec<Discovery>> {
        *self.calls.lock().expect("poisoned") += 1;
        match &self.source {
            DiscoverySource::Sequence(seq) => seq.lock().expect("poisoned").next().unwrap_or(Ok(vec![])),
            DiscoverySource::Script(player) => parse_discoveries(&player.next(context_entity)?),
        }
    }
}

/// Discoverer that invents one new related entity per call.
///
/// The name is derived from the context entity and a per-context counter, so a
/// fresh instance replays identically.
pub struct SyntheticDiscoverer {
    predicates: Vec<String>,
    counters: Mutex<HashMap<String, usize>>,
}

impl SyntheticDiscoverer {
    pub fn new(predicates: Vec<String>) -> Self {
        assert!(!predicates.is_empty(), "at least one predicate is required");
        Self {
            predicates,
            counters: Mutex::new(HashMap::new()),
        }
    }
}

impl Default for SyntheticDiscoverer {
    fn default() -> Self {
        Self::new(vec!["discovered_link".to_string()])
    }
}

impl EntityDiscoverer for SyntheticDiscoverer {
    fn discover_entities(&self, context_entity: &str) -> ClientResult<Vec<Discovery>> {
        let mut counters = self.counters.lock().expect("poisoned");
        let n = counters.entry(context_entity.to_string()).or_insert(0);
        *n += 1;
        let seed = stable_seed("discover", &format!("{context_entity}#{n}"));
        let predicate = &self.predicates[(seed % self.predicates.len() as u64) as usize];
        Ok(vec![Discovery::with_predicate(
            format!("{context_entity} related finding {n}"),
            predicate.clone(),
        )])
    }
}

/// Search results scripted per query; each reply is a JSON list of hits.
pub struct ScriptedSearch {
    player: ScriptPlayer,
}

impl ScriptedSearch {
    pub fn new(player: ScriptPlayer) -> Self {
        Self { player }
    }
}

impl WebSearch for ScriptedSearch {
    fn search(&self, query: &str) -> ClientResult<Vec<SearchHit>> {
        let reply = self.player.next(query)?;
        serde_json::from_str(&reply).map_err(|e| ClientError::Contract(format!("bad search reply: {e}")))
    }
}

/// Search backend that answers every query with deterministic placeholder hits.
#[derive(Debug, Clone, Default)]
pub struct SyntheticSearch;

impl WebSearch for SyntheticSearch {
    fn search(&self, query: &str) -> ClientResult<Vec<SearchHit>> {
        let seed = stable_seed("search", query);
        Ok((0..2)
            .map(|i| SearchHit {
                title: format!("Result {} for {query}", i + 1),
                snippet: format!("Overview of {query} (source {:04x}).", (seed >> (16 * i)) & 0xffff),
                url: Some(format!("https://example.org/{:016x}/{i}", seed)),
            })
            .collect())
    }
}

/// Reader returning the leading sentences of the document that mention the question terms.
#[derive(Debug, Clone)]
pub struct ExcerptReader {
    max_chars: usize,
}

impl Default for ExcerptReader {
    fn default() -> Self {
        Self { max_chars: 240 }
    }
}

impl DocumentReader for ExcerptReader {
    fn read(&self, document: &str, question: &str) -> ClientResult<String> {
        let terms: Vec<String> = question
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.len() >= 4)
            .map(str::to_lowercase)
            .collect();
        let mut picked: Vec<&str> = document
            .split_inclusive(['.', '\n'])
            .filter(|s| {
                let lower = s.to_lowercase();
                terms.iter().any(|t| lower.contains(t))
            })
            .collect();
        if picked.is_empty() {
            picked = document.split_inclusive(['.', '\n']).take(1).collect();
        }
        let text: String = picked.concat().trim().chars().take(self.max_chars).collect();
        Ok(text)
    }
}

/// Rarity judge replying from a script keyed by candidate name.
pub struct ScriptedJudge {
    player: ScriptPlayer,
}

impl ScriptedJudge {
    pub fn new(player: ScriptPlayer) -> Self {
        Self { player }
    }
}

impl RarityJudge for ScriptedJudge {
    fn judge(&self, candidate: &str) -> ClientResult<Verdict> {
        Verdict::parse(&self.player.next(candidate)?)
    }
}

impl PreferenceJudge for ScriptedJudge {
    fn preference(&self, question: &str, answer: &str) -> ClientResult<f64> {
        let reply = self.player.next(&format!("{question}\n{answer}"))?;
        let value: f64 = reply
            .trim()
            .parse()
            .map_err(|_| ClientError::Contract(format!("preference `{}` is not a number", reply.trim())))?;
        checked_accuracy(value)
    }
}

/// Reasoner replaying a script keyed by `<question_id>#<step>`.
pub struct ScriptedReasoner {
    player: ScriptPlayer,
}

impl ScriptedReasoner {
    pub fn new(player: ScriptPlayer) -> Self {
        Self { player }
    }

    pub fn call_key(question_id: &str, step: usize) -> String {
        format!("{question_id}#{step}")
    }
}

impl Reasoner for ScriptedReasoner {
    fn next_turn(&self, request: &ReasonerRequest<'_>) -> ClientResult<String> {
        self.player.next(&Self::call_key(request.question_id, request.step))
    }
}

impl<T: Reasoner + ?Sized> Reasoner for Arc<T> {
    fn next_turn(&self, request: &ReasonerRequest<'_>) -> ClientResult<String> {
        (**self).next_turn(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{MockScript, ScriptEntry};

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn hash_embedder_is_deterministic_and_unit() {
        let e = HashEmbedder::default();
        let a = e.embed("sarcoidosis").unwrap();
        assert_eq!(a, e.embed("sarcoidosis").unwrap());
        assert_eq!(a.len(), 64);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distinct_strings_have_cosine_below_one() {
        let e = HashEmbedder::default();
        for i in 0..200 {
            let a = e.embed(&format!("term-{i}")).unwrap();
            let b = e.embed(&format!("term-{}", i + 1)).unwrap();
            assert!(cosine(&a, &b) < 1.0 - 1e-9);
        }
    }

    #[test]
    fn scripted_evaluator_values_and_range() {
        let script = MockScript::from_entries(vec![
            ScriptEntry::response("re:^complexity=[0-2]\\n", "0.8"),
            ScriptEntry::response("re:^complexity=9\\n", "1.2"),
            ScriptEntry::response("*", "0.3"),
        ]);
        let ev = ScriptedEvaluator::new("ev", script.player().unwrap());
        let q = |c| AccuracyQuery {
            question: "q?",
            answer: "a",
            complexity: c,
        };
        assert_eq!(ev.evaluate_question_accuracy(&q(1)).unwrap(), 0.8);
        assert_eq!(ev.evaluate_question_accuracy(&q(3)).unwrap(), 0.3);
        assert!(matches!(
            ev.evaluate_question_accuracy(&q(9)),
            Err(ClientError::Contract(_))
        ));
    }

    #[test]
    fn sampled_accuracy_counts_hits() {
        let script = MockScript::from_entries(vec![
            ScriptEntry::response("*", "It is Valsartan."),
            ScriptEntry::response("*", "no idea"),
            ScriptEntry::response("*", "valsartan"),
            ScriptEntry::response("*", "losartan"),
        ])
        .strict();
        let gen = ScriptedGenerator::new(script.player().unwrap());
        let ev = SampledAccuracyEvaluator::new("s", gen, 4);
        let acc = ev
            .evaluate_question_accuracy(&AccuracyQuery {
                question: "which drug?",
                answer: "Valsartan",
                complexity: 0,
            })
            .unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn discoverer_script_parses_names_and_predicates() {
        let script = MockScript::from_entries(vec![
            ScriptEntry::response("alpha", r#"["x"]"#),
            ScriptEntry::response("beta", r#"[{"name":"y","predicate":"inhibits"}]"#),
            ScriptEntry::response("*", "[]"),
        ]);
        let d = ScriptedDiscoverer::from_script(script.player().unwrap());
        assert_eq!(d.discover_entities("alpha").unwrap(), vec![Discovery::new("x")]);
        assert_eq!(
            d.discover_entities("beta").unwrap(),
            vec![Discovery::with_predicate("y", "inhibits")]
        );
        assert!(d.discover_entities("gamma").unwrap().is_empty());
    }

    #[test]
    fn synthetic_discoverer_replays() {
        let a = SyntheticDiscoverer::default();
        let b = SyntheticDiscoverer::default();
        let first: Vec<_> = (0..3).map(|_| a.discover_entities("kras").unwrap()).collect();
        let second: Vec<_> = (0..3).map(|_| b.discover_entities("kras").unwrap()).collect();
        assert_eq!(first, second);
        assert_ne!(first[0], first[1]);
    }

    #[test]
    fn excerpt_reader_prefers_relevant_sentences() {
        let r = ExcerptReader::default();
        let text = "Intro sentence. Valsartan blocks AT1 receptors. Unrelated tail.";
        assert_eq!(r.read(text, "what does valsartan block").unwrap(), "Valsartan blocks AT1 receptors.");
    }
}
