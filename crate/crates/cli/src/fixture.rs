//! Deterministic synthetic input bundle for offline runs.
//!
//! Every seed entity starts a chain of four or five relations with distinct
//! predicates inside its own cluster. Side branches and a refuted tail edge
//! make sure the longest valid path is the chain itself (or the chain plus one
//! discovered hop). Specialty tags are a synthetic 12-way taxonomy, not a
//! clinical one.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use kgsynth_core::clients::{MockScript, ScriptEntry, ScriptedReasoner};
use kgsynth_core::kg::{Entity, KnowledgeGraph, Relation};

use crate::config::stage_seed;
use crate::output::Staged;

pub const SPECIALTIES: usize = 12;
pub const SEEDS_PER_SPECIALTY: usize = 10;
/// Lexicon names the scripted rarity judge drops.
pub const DECOYS: usize = 6;
pub const EPISODE_QUESTIONS: usize = 24;
/// Rarity threshold used by the bundle; its corpus is far too small for the default.
pub const FIXTURE_TAU: &str = "0.001";

const PREDICATES: &[&str] = &[
    "treats",
    "inhibits",
    "expressed_in",
    "located_in",
    "mutated_in",
    "binds",
    "produced_by",
    "marker_of",
    "first_described_by",
    "co_occurs_with",
];
const BRANCH_PREDICATES: &[&str] = &["associated_with", "reported_in"];
const COMMON_TERMS: &[&str] = &["fever", "fatigue", "biopsy", "protein", "patient", "clinic"];
const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

pub fn specialty_tag(index: usize) -> String {
    format!("synthetic-specialty-{:02}", index + 1)
}

/// Unique six-letter names that occur in no predicate or common term.
struct Names {
    used: HashSet<String>,
    forbidden: Vec<String>,
}

impl Names {
    fn new() -> Self {
        let forbidden = PREDICATES
            .iter()
            .chain(BRANCH_PREDICATES)
            .chain(COMMON_TERMS)
            .map(|p| p.replace('_', " "))
            .chain(["refuted".to_string(), "related finding".to_string()])
            .collect();
        Self {
            used: HashSet::new(),
            forbidden,
        }
    }

    fn fresh<R: Rng>(&mut self, rng: &mut R) -> String {
        loop {
            let mut name = String::new();
            for _ in 0..3 {
                name.push(*CONSONANTS.choose(rng).expect("non-empty"));
                name.push(*VOWELS.choose(rng).expect("non-empty"));
            }
            let lower = name.clone();
            if self.forbidden.iter().any(|f| f.contains(&lower)) || !self.used.insert(lower) {
                continue;
            }
            let mut chars = name.chars();
            let first = chars.next().expect("six letters").to_ascii_uppercase();
            return std::iter::once(first).chain(chars).collect();
        }
    }
}

struct Cluster {
    seed: String,
    specialty: String,
    chain: Vec<(String, String)>,
}

fn slug(name: &str) -> String {
    name.to_lowercase()
}

/// Builds the bundle; file names are flat so it can be committed as one unit.
pub fn make_fixture(seed: u64) -> Staged {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(seed, "fixture"));
    let mut names = Names::new();
    let mut graph = KnowledgeGraph::new();
    let tau: f64 = FIXTURE_TAU.parse().expect("decimal");
    let mut clusters = Vec::new();

    for s in 0..SPECIALTIES {
        let specialty = specialty_tag(s);
        for _ in 0..SEEDS_PER_SPECIALTY {
            let seed_name = names.fresh(&mut rng);
            let hops = rng.gen_range(4..=5);
            let mut preds: Vec<&str> = PREDICATES.to_vec();
            preds.shuffle(&mut rng);
            let mut nodes = vec![seed_name.clone()];
            for _ in 0..hops {
                nodes.push(names.fresh(&mut rng));
            }
            for (i, n) in nodes.iter().enumerate() {
                let freq = if i == 0 { 0.0 } else { 0.01 };
                graph
                    .add_entity(Entity::new(slug(n), n, freq, tau).with_specialty(&specialty))
                    .expect("fresh id");
            }
            let mut chain = Vec::new();
            for i in 0..hops {
                let mut rel = Relation::new(slug(&nodes[i]), preds[i], slug(&nodes[i + 1]));
                match rng.gen_range(0..3) {
                    0 => rel = rel.with_temporal(&format!("{}", 1990 + rng.gen_range(0..30))),
                    1 => rel = rel.with_spatial(&specialty),
                    _ => rel = rel.with_clinical_context("case series"),
                }
                graph.add_relation(rel).expect("chain edge");
                chain.push((preds[i].to_string(), nodes[i + 1].clone()));
            }
            for _ in 0..2 {
                let from = rng.gen_range(0..hops);
                let leaf = names.fresh(&mut rng);
                graph
                    .add_entity(Entity::new(slug(&leaf), &leaf, 0.01, tau).with_specialty(&specialty))
                    .expect("fresh id");
                let pred = BRANCH_PREDICATES.choose(&mut rng).expect("non-empty");
                graph
                    .add_relation(Relation::new(slug(&nodes[from]), pred, slug(&leaf)))
                    .expect("branch edge");
            }
            // a longer path exists only through a refuted claim
            let tail = names.fresh(&mut rng);
            graph
                .add_entity(Entity::new(slug(&tail), &tail, 0.01, tau).with_specialty(&specialty))
                .expect("fresh id");
            graph
                .add_relation(
                    Relation::new(slug(&nodes[hops]), "associated_with", slug(&tail))
                        .with_clinical_context("refuted"),
                )
                .expect("tail edge");
            clusters.push(Cluster {
                seed: seed_name,
                specialty: specialty.clone(),
                chain,
            });
        }
    }
    let decoys: Vec<String> = (0..DECOYS).map(|_| names.fresh(&mut rng)).collect();

    let mut out = Staged::new();
    let mut graph_bytes = Vec::new();
    graph.write_jsonl(&mut graph_bytes).expect("in-memory write");
    out.add("graph.jsonl", graph_bytes);

    let mut lexicon = String::new();
    for c in &clusters {
        let _ = writeln!(lexicon, "{}", c.seed);
    }
    for d in &decoys {
        let _ = writeln!(lexicon, "{d}");
    }
    for t in COMMON_TERMS {
        let _ = writeln!(lexicon, "{t}");
    }
    out.add("lexicon.txt", lexicon.into_bytes());

    let mentions: Vec<(&str, &str)> = clusters
        .iter()
        .map(|c| (c.seed.as_str(), c.specialty.as_str()))
        .chain(decoys.iter().map(|d| (d.as_str(), "general")))
        .collect();
    out.add_jsonl(
        "corpus.jsonl",
        mentions.iter().enumerate().map(|(i, (name, specialty))| {
            json!({
                "id": format!("doc-{:04}", i + 1),
                "text": format!(
                    "Case report {}. The patient presented with fever and fatigue at the {specialty} clinic. \
                     A biopsy was taken and protein levels were measured. {name} was noted once in the workup. \
                     The patient recovered after supportive care and the clinic scheduled a follow-up visit.",
                    i + 1
                ),
            })
        }),
    );

    let judge = MockScript::from_entries(
        decoys
            .iter()
            .map(|d| ScriptEntry::response(d.as_str(), "DROP"))
            .chain([ScriptEntry::response("*", "KEEP")])
            .collect(),
    );
    out.add_json("rarity_judge.script.json", &judge);

    // too easy below complexity 2; questions starting from a Z-name never get hard
    let panel_a = MockScript::from_entries(vec![
        ScriptEntry::response("re:Starting from Z", "0.9"),
        ScriptEntry::response("re:^complexity=[01]\\b", "0.8"),
        ScriptEntry::response("*", "0.3"),
    ]);
    let panel_b = MockScript::from_entries(vec![
        ScriptEntry::response("re:^complexity=0\\b", "0.6"),
        ScriptEntry::response("*", "0.2"),
    ]);
    out.add_json("evaluator_a.script.json", &panel_a);
    out.add_json("evaluator_b.script.json", &panel_b);

    let mut turns = Vec::new();
    let mut questions = Vec::new();
    for (i, c) in clusters.iter().take(EPISODE_QUESTIONS).enumerate() {
        let id = format!("ep-{:02}", i + 1);
        let chain: Vec<String> = c.chain.iter().map(|(p, _)| p.replace('_', " ")).collect();
        let answer = &c.chain[c.chain.len() - 1].1;
        questions.push(json!({
            "id": id,
            "question": format!("Starting from {} and following {}, which entity do you reach?", c.seed, chain.join(", then ")),
            "answer": answer,
        }));
        let key = |step| ScriptedReasoner::call_key(&id, step);
        let first = &c.chain[0];
        turns.push(ScriptEntry::response(
            key(0),
            format!(
                "Thought: Look up the starting entity first.\nAction: auto\nAction Input: {}",
                json!({ "query": format!("{} {}", c.seed, first.0.replace('_', " ")) })
            ),
        ));
        let second = match i % 4 {
            // an unavailable tool; the episode has to recover
            3 => "Thought: Try the lab database.\nAction: lab_lookup\nAction Input: {\"query\": \"panel\"}".to_string(),
            2 => format!(
                "Thought: Check the clinical literature.\nAction: medical_retriever\nAction Input: {}",
                json!({ "query": format!("{} {}", c.seed, c.specialty) })
            ),
            _ => format!(
                "Thought: Confirm the lead.\nAction: web_search\nAction Input: {}",
                json!({ "query": format!("{} {}", c.seed, c.chain[1].0.replace('_', " ")) })
            ),
        };
        turns.push(ScriptEntry::response(key(1), second));
        let final_answer = if i % 3 == 2 { "unknown" } else { answer.as_str() };
        turns.push(ScriptEntry::response(
            key(2),
            format!("Thought: The chain ends here.\nFinal Answer: {final_answer}"),
        ));
    }
    out.add_json("reasoner.script.json", &MockScript::from_entries(turns).strict());
    out.add_jsonl("questions.jsonl", questions);
    out.add_json(
        "preference.script.json",
        &MockScript::from_entries(vec![ScriptEntry::response("*", "0.6")]),
    );

    out.add_jsonl(
        "documents.jsonl",
        (0..SPECIALTIES).map(|s| {
            let status = ["GUIDELINE", "CITED", "NONE"][s % 3];
            json!({
                "id": format!("doc-{}", specialty_tag(s)),
                "text": format!("Practice notes for {}: workup, differential and follow-up.", specialty_tag(s)),
                "impact_factor": (s * 4 + 2) as f64,
                "guideline_status": status,
            })
        }),
    );
    out.add_json(
        "evidence.json",
        &json!({
            "context": "synthetic differential",
            "priors": { "condition-a": 0.5, "condition-b": 0.3, "condition-c": 0.2 },
            "likelihoods": {
                "fever|condition-a": 0.8, "fever|condition-b": 0.4, "fever|condition-c": 0.1,
                "fatigue|condition-a": 0.6, "fatigue|condition-b": 0.7, "fatigue|condition-c": 0.3,
                "rash|condition-a": 0.1, "rash|condition-b": 0.2, "rash|condition-c": 0.9,
            },
        }),
    );

    let config = format!(
        r#"# Offline bundle; every client is a local mock.
global_seed = {seed}

[paths]
corpus = "corpus.jsonl"
lexicon = "lexicon.txt"
graph = "graph.jsonl"
output = "out"
questions = "questions.jsonl"
documents = "documents.jsonl"
evidence = "evidence.json"

[rarity]
tau_rare = "{FIXTURE_TAU}"

[budgets]
max_steps = 6
max_rounds = 4

[episodes]
group_size = 4

[episodes.policy]
w_medical = [0.8, 0.1, 1.0, 0.0, -0.2]
w_general = [0.0, 0.2, -0.5, 0.1, 0.3]

[clients.rarity_judge]
script = "rarity_judge.script.json"

[clients.evaluators.panel_a]
script = "evaluator_a.script.json"

[clients.evaluators.panel_b]
script = "evaluator_b.script.json"

[clients.reasoner]
script = "reasoner.script.json"

[clients.preference_judge]
script = "preference.script.json"
"#
    );
    out.add("config.toml", config.into_bytes());
    out
}
