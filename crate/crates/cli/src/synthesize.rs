//! Rare entities to calibrated, masked multi-hop QA items.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use kgsynth_core::clients::{AccuracyEvaluator, ClientFactory};
use kgsynth_core::kg::{expand_walk, Entity, EntityId, KnowledgeGraph};
use kgsynth_core::mining::{
    count_entity_frequencies, filter_candidates, read_corpus, select_rare_entities, Judgment, Lexicon, RareEntity,
};
use kgsynth_core::synthesis::{
    calibrate_difficulty, longest_valid_path, mask_path, path_to_question, DefaultValidity, MaskedScaffold,
    PathExtendingRegenerator, QAItem, QaStatus, ReasoningPath, SynthesisError,
};

use crate::config::{required, PipelineConfig};
use crate::output::Staged;
use crate::{client_error, CliError};

/// Pipeline stages in execution order. `--stage` stops after the named one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mine,
    Expand,
    Paths,
    Questions,
    Calibrate,
    Mask,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Expand => "expand",
            Stage::Paths => "paths",
            Stage::Questions => "questions",
            Stage::Calibrate => "calibrate",
            Stage::Mask => "mask",
        }
    }
}

fn failed(stage: Stage) -> impl Fn(String) -> CliError {
    move |message| CliError::Stage {
        stage: stage.name().into(),
        message,
    }
}

/// One line of `qa.jsonl`.
#[derive(Debug, Serialize)]
pub struct QaRecord<'a> {
    pub id: String,
    pub question: &'a str,
    pub answer: &'a str,
    pub hops: usize,
    pub complexity: u32,
    pub status: QaStatus,
    pub seed: &'a str,
    pub path: &'a ReasoningPath,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masked_scaffold: Option<&'a MaskedScaffold>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SynthesisSummary {
    pub global_seed: u64,
    pub stages: Vec<Stage>,
    pub rare_candidates: usize,
    pub kept_seeds: usize,
    pub dropped_seeds: usize,
    pub undecided_seeds: usize,
    pub graph_entities: usize,
    pub graph_relations: usize,
    pub paths: usize,
    pub seeds_without_path: usize,
    pub duplicate_paths: usize,
    pub items: usize,
    pub leaked: usize,
    pub calibrated: usize,
    pub exhausted: usize,
    pub mean_hops: f64,
    pub hop_histogram: BTreeMap<usize, usize>,
    pub mean_complexity: f64,
    /// Items per specialty tag of their seed entity.
    pub specialties: BTreeMap<String, usize>,
}

impl SynthesisSummary {
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let stages: Vec<&str> = self.stages.iter().map(|s| s.name()).collect();
        let _ = writeln!(t, "seed {} stages {}", self.global_seed, stages.join(","));
        let _ = writeln!(
            t,
            "rare candidates {} kept {} dropped {} undecided {}",
            self.rare_candidates, self.kept_seeds, self.dropped_seeds, self.undecided_seeds
        );
        let _ = writeln!(t, "graph {} entities {} relations", self.graph_entities, self.graph_relations);
        let _ = writeln!(
            t,
            "paths {} (no path {}, duplicates {})",
            self.paths, self.seeds_without_path, self.duplicate_paths
        );
        let _ = writeln!(
            t,
            "items {} (leaked {}, calibrated {}, exhausted {})",
            self.items, self.leaked, self.calibrated, self.exhausted
        );
        let _ = writeln!(t, "mean hops {:.3} mean complexity {:.3}", self.mean_hops, self.mean_complexity);
        for (hops, n) in &self.hop_histogram {
            let _ = writeln!(t, "  {hops} hops: {n}");
        }
        t
    }
}

struct SeedPath {
    seed: String,
    subgraph: KnowledgeGraph,
    path: ReasoningPath,
}

/// Largest subgraph around `seed`, shrinking the radius until it fits `cap`.
fn bounded_subgraph(graph: &KnowledgeGraph, seed: &EntityId, radius: usize, cap: usize) -> Option<KnowledgeGraph> {
    (1..=radius.max(1))
        .rev()
        .filter_map(|r| graph.subgraph_around(seed, r).ok())
        .find(|g| g.entity_count() <= cap)
}

/// Runs the pipeline through `last` and stages every output file.
pub fn synthesize(config: &PipelineConfig, last: Stage, factory: &ClientFactory) -> Result<Staged, CliError> {
    let paths = &config.paths;
    let lexicon_path = required(&paths.lexicon, "lexicon")?;
    let corpus_path = required(&paths.corpus, "corpus")?;
    let graph_path = required(&paths.graph, "graph")?;
    let clients = &config.clients;
    let judge = factory.rarity_judge(&clients.rarity_judge).map_err(client_error("rarity_judge"))?;
    let discoverer = factory.discoverer(&clients.discoverer).map_err(client_error("discoverer"))?;
    let generator = factory.generator(&clients.generator).map_err(client_error("generator"))?;
    let mut evaluators: Vec<std::sync::Arc<dyn AccuracyEvaluator>> = Vec::new();
    for (name, c) in &clients.evaluators {
        evaluators.push(factory.evaluator(name, c).map_err(client_error(name))?);
    }
    if last >= Stage::Calibrate && evaluators.is_empty() {
        return Err(CliError::Config("calibration needs at least one entry under clients.evaluators".into()));
    }

    let mut out = Staged::new();
    let mut summary = SynthesisSummary {
        global_seed: config.global_seed,
        ..Default::default()
    };

    // mine
    let fail = failed(Stage::Mine);
    let lexicon = Lexicon::load(lexicon_path).map_err(|e| fail(e.to_string()))?;
    let corpus = read_corpus(corpus_path).map_err(|e| fail(e.to_string()))?;
    let stats = count_entity_frequencies(corpus, &lexicon).map_err(|e| fail(e.to_string()))?;
    let rare = select_rare_entities(&stats, &config.rarity).map_err(|e| fail(e.to_string()))?;
    let names: Vec<&str> = rare.iter().map(|r| r.name.as_str()).collect();
    let report = filter_candidates(&names, judge.as_ref());
    summary.rare_candidates = rare.len();
    summary.kept_seeds = report.kept.len();
    summary.dropped_seeds = report.audit.iter().filter(|a| a.judgment == Judgment::Drop).count();
    summary.undecided_seeds = report.audit.iter().filter(|a| a.judgment == Judgment::Undecided).count();
    let kept: HashSet<&str> = report.kept.iter().map(String::as_str).collect();
    let seeds: Vec<&RareEntity> = rare.iter().filter(|r| kept.contains(r.name.as_str())).collect();
    out.add_jsonl("rare_entities.jsonl", &seeds);
    out.add_jsonl("mining_audit.jsonl", &report.audit);
    summary.stages.push(Stage::Mine);
    if last == Stage::Mine {
        return Ok(finish(out, summary));
    }

    // expand
    let fail = failed(Stage::Expand);
    let file = File::open(graph_path).map_err(|e| fail(format!("{}: {e}", graph_path.display())))?;
    let mut graph = KnowledgeGraph::read_jsonl(BufReader::new(file)).map_err(|e| fail(e.to_string()))?;
    let tau = config.rarity.tau_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(config.stage_seed(Stage::Expand.name()));
    let mut seed_ids = Vec::with_capacity(seeds.len());
    for seed in &seeds {
        let id = match graph.find_by_name(&seed.name) {
            Some(e) => e.id.clone(),
            None => {
                let freq = ratio_to_f64_u64(&seed.frequency);
                let entity = Entity::new(EntityId::from_name(&seed.name), &seed.name, freq, tau);
                let id = entity.id.clone();
                graph.add_entity(entity).map_err(|e| fail(e.to_string()))?;
                id
            }
        };
        let expansion = expand_walk(graph, &id, config.budgets.expansion_steps, &mut rng, discoverer.as_ref())
            .map_err(|e| fail(format!("seed {}: {e}", seed.name)))?;
        graph = expansion.graph;
        seed_ids.push((seed.name.clone(), id));
    }
    summary.graph_entities = graph.entity_count();
    summary.graph_relations = graph.relation_count();
    let mut graph_bytes = Vec::new();
    graph.write_jsonl(&mut graph_bytes).map_err(|e| fail(e.to_string()))?;
    out.add("graph.jsonl", graph_bytes);
    summary.stages.push(Stage::Expand);
    if last == Stage::Expand {
        return Ok(finish(out, summary));
    }

    // paths
    let fail = failed(Stage::Paths);
    let validity = DefaultValidity::default();
    let budgets = &config.budgets;
    let mut seen_paths = HashSet::new();
    let mut found = Vec::new();
    for (seed, id) in &seed_ids {
        let Some(sub) = bounded_subgraph(&graph, id, budgets.subgraph_radius, budgets.node_cap) else {
            tracing::warn!(seed = %seed, "no subgraph within the node cap");
            summary.seeds_without_path += 1;
            continue;
        };
        match longest_valid_path(&sub, &validity, budgets.node_cap) {
            Ok(path) => {
                if seen_paths.insert(path.clone()) {
                    found.push(SeedPath {
                        seed: seed.clone(),
                        subgraph: sub,
                        path,
                    });
                } else {
                    summary.duplicate_paths += 1;
                }
            }
            Err(SynthesisError::NoRelations | SynthesisError::NoValidPath) => summary.seeds_without_path += 1,
            Err(e) => return Err(fail(format!("seed {seed}: {e}"))),
        }
    }
    summary.paths = found.len();
    #[derive(Serialize)]
    struct PathRecord<'a> {
        seed: &'a str,
        hops: usize,
        path: &'a ReasoningPath,
    }
    out.add_jsonl(
        "paths.jsonl",
        found.iter().map(|f| PathRecord {
            seed: &f.seed,
            hops: f.path.hop_count(),
            path: &f.path,
        }),
    );
    summary.stages.push(Stage::Paths);
    if last == Stage::Paths {
        return Ok(finish(out, summary));
    }

    // questions
    let fail = failed(Stage::Questions);
    let mut drafts: Vec<(&SeedPath, QAItem)> = Vec::new();
    for f in &found {
        match path_to_question(&f.path, &f.subgraph, generator.as_ref(), &config.questions) {
            Ok(item) => drafts.push((f, item)),
            Err(SynthesisError::Leakage { attempts }) => {
                tracing::warn!(seed = %f.seed, attempts, "dropping question that keeps leaking its answer");
                summary.leaked += 1;
            }
            Err(e) => return Err(fail(format!("seed {}: {e}", f.seed))),
        }
    }
    summary.stages.push(Stage::Questions);

    // calibrate
    let mut items: Vec<(&SeedPath, QAItem)> = Vec::with_capacity(drafts.len());
    if last >= Stage::Calibrate {
        let fail = failed(Stage::Calibrate);
        let panel: Vec<&dyn AccuracyEvaluator> = evaluators.iter().map(|e| e.as_ref()).collect();
        for (f, item) in drafts {
            let regenerator = PathExtendingRegenerator {
                subgraph: &f.subgraph,
                generator: generator.as_ref(),
                validity: &validity,
                config: config.questions,
            };
            let outcome = calibrate_difficulty(item, &panel, budgets.max_rounds, &regenerator)
                .map_err(|e| fail(format!("seed {}: {e}", f.seed)))?;
            match outcome.item.status {
                QaStatus::Calibrated => summary.calibrated += 1,
                _ => summary.exhausted += 1,
            }
            items.push((f, outcome.item));
        }
        summary.stages.push(Stage::Calibrate);
    } else {
        items = drafts;
    }

    // mask
    let scaffolds: Vec<Option<MaskedScaffold>> = if last >= Stage::Mask {
        summary.stages.push(Stage::Mask);
        items.iter().map(|(f, item)| Some(mask_path(&item.source_path, &f.subgraph))).collect()
    } else {
        vec![None; items.len()]
    };

    summary.items = items.len();
    if !items.is_empty() {
        let n = items.len() as f64;
        summary.mean_hops = items.iter().map(|(_, i)| i.source_path.hop_count()).sum::<usize>() as f64 / n;
        summary.mean_complexity = items.iter().map(|(_, i)| f64::from(i.complexity)).sum::<f64>() / n;
    }
    for (f, item) in &items {
        *summary.hop_histogram.entry(item.source_path.hop_count()).or_default() += 1;
        let tag = graph
            .find_by_name(&f.seed)
            .and_then(|e| e.specialty.clone())
            .unwrap_or_else(|| "untagged".into());
        *summary.specialties.entry(tag).or_default() += 1;
    }
    out.add_jsonl(
        "qa.jsonl",
        items.iter().zip(&scaffolds).enumerate().map(|(i, ((f, item), scaffold))| QaRecord {
            id: format!("qa-{:04}", i + 1),
            question: &item.question,
            answer: &item.answer,
            hops: item.source_path.hop_count(),
            complexity: item.complexity,
            status: item.status,
            seed: &f.seed,
            path: &item.source_path,
            masked_scaffold: scaffold.as_ref(),
        }),
    );
    Ok(finish(out, summary))
}

fn ratio_to_f64_u64(r: &num_rational::Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn finish(mut out: Staged, summary: SynthesisSummary) -> Staged {
    out.add_json("summary.json", &summary);
    out.add("summary.txt", summary.to_text().into_bytes());
    out
}

/// Reads back the machine summary of a finished run.
pub fn summary_of(out: &Staged) -> Option<serde_json::Value> {
    serde_json::from_slice(out.get("summary.json")?).ok()
}
