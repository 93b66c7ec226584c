//! Scripted or live tool-use episodes with per-episode rewards.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use kgsynth_core::agent::{
    run_episode, ClinicalReasonerTool, DocumentReadTool, EpisodeContext, MedicalRetrieverTool, RarityIndex,
    Termination, ToolCategory, ToolRegistry, ToolSpec, Trajectory, WebSearchTool,
};
use kgsynth_core::clients::{stable_seed, ClientFactory, PreferenceJudge, Reasoner};
use kgsynth_core::medtools::{read_documents, EvidenceTable, PosteriorOptions};
use kgsynth_core::mining::{count_entity_frequencies, read_corpus, Lexicon};
use kgsynth_core::reward::{score_episodes, EfficiencyJudge, GeneratorEfficiencyJudge, RewardInputs, RewardRecord};

use crate::config::PipelineConfig;
use crate::output::Staged;
use crate::{client_error, CliError};

const STAGE: &str = "episodes";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct QuestionLine {
    #[serde(default)]
    id: Option<String>,
    question: String,
    answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: String,
    pub question: String,
    pub answer: String,
}

/// Reads `{"id"?, "question", "answer"}` lines; other fields are ignored, so a
/// synthesized `qa.jsonl` works as input. Missing ids become `q-<line>`.
pub fn read_questions(path: &Path) -> Result<Vec<Question>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: QuestionLine = serde_json::from_str(line)
            .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), idx + 1)))?;
        out.push(Question {
            id: q.id.unwrap_or_else(|| format!("q-{}", idx + 1)),
            question: q.question,
            answer: q.answer,
        });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("{}: no questions", path.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub global_seed: u64,
    pub episodes: usize,
    pub terminations: BTreeMap<String, usize>,
    pub tool_steps: usize,
    pub corrupted_steps: usize,
    pub corrupted_fraction: f64,
    pub error_steps: usize,
    pub task_accuracy: f64,
    pub mean_composite: f64,
}

fn termination_name(t: Termination) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn stage_error(message: impl std::fmt::Display) -> CliError {
    CliError::Stage {
        stage: STAGE.into(),
        message: message.to_string(),
    }
}

/// Tool registry from configuration: web search and document reading always,
/// plus the medical retriever and clinical reasoner when their inputs are set.
pub fn build_registry(config: &PipelineConfig, factory: &ClientFactory) -> Result<ToolRegistry, CliError> {
    let clients = &config.clients;
    let mut registry = ToolRegistry::new();
    let search = factory.search(&clients.search).map_err(client_error("search"))?;
    let reader = factory.reader(&clients.reader).map_err(client_error("reader"))?;
    let add = |registry: &mut ToolRegistry, spec: ToolSpec| registry.register(spec).map_err(stage_error);
    add(
        &mut registry,
        ToolSpec::new("web_search", ToolCategory::General, true, Arc::new(WebSearchTool(search))),
    )?;
    add(
        &mut registry,
        ToolSpec::new("read_document", ToolCategory::General, true, Arc::new(DocumentReadTool(reader))),
    )?;
    if let Some(path) = &config.paths.documents {
        let embedder = factory.embedder(&clients.embedder).map_err(client_error("embedder"))?;
        let docs = read_documents(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let tool = MedicalRetrieverTool::new(docs, embedder, config.ranker, config.budgets.retriever_top_k)
            .map_err(stage_error)?;
        add(
            &mut registry,
            ToolSpec::new("medical_retriever", ToolCategory::Medical, true, Arc::new(tool)),
        )?;
    }
    if let Some(path) = &config.paths.evidence {
        let table = EvidenceTable::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let tool = ClinicalReasonerTool::new(table, PosteriorOptions::default());
        add(
            &mut registry,
            ToolSpec::new("clinical_reasoner", ToolCategory::Medical, false, Arc::new(tool)),
        )?;
    }
    Ok(registry)
}

/// Entity frequencies from the configured corpus and lexicon, when both are set.
fn rarity_index(config: &PipelineConfig) -> Result<RarityIndex, CliError> {
    let p = &config.paths;
    let frequencies: Vec<(String, f64)> = match (&p.corpus, &p.lexicon) {
        (Some(corpus), Some(lexicon)) => {
            let lexicon = Lexicon::load(lexicon).map_err(stage_error)?;
            let docs = read_corpus(corpus).map_err(stage_error)?;
            let stats = count_entity_frequencies(docs, &lexicon).map_err(stage_error)?;
            lexicon
                .names()
                .iter()
                .filter_map(|n| stats.frequency(n).map(|f| (n.clone(), *f.numer() as f64 / *f.denom() as f64)))
                .collect()
        }
        _ => Vec::new(),
    };
    match &p.medical_terms {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let terms: Vec<String> =
                text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
            Ok(RarityIndex::new(frequencies, &terms))
        }
        None => Ok(RarityIndex::with_default_medical_terms(frequencies)),
    }
}

/// Runs one episode per question and scores them in consecutive groups.
///
/// Each episode draws from its own generator seeded by the episode stage seed
/// and the question id, so results do not depend on question order.
pub fn episodes(config: &PipelineConfig, questions: &[Question], factory: &ClientFactory) -> Result<Staged, CliError> {
    if questions.is_empty() {
        return Err(CliError::Config("no questions".into()));
    }
    let clients = &config.clients;
    let reasoner_config = clients
        .reasoner
        .as_ref()
        .ok_or_else(|| CliError::Config("clients.reasoner is required for episodes".into()))?;
    let reasoner: Arc<dyn Reasoner> = factory.reasoner(reasoner_config).map_err(client_error("reasoner"))?;
    let preference: Option<Arc<dyn PreferenceJudge>> = clients
        .preference_judge
        .as_ref()
        .map(|c| factory.preference_judge(c))
        .transpose()
        .map_err(client_error("preference_judge"))?;
    let efficiency: Option<Box<dyn EfficiencyJudge>> = match &clients.efficiency_judge {
        Some(c) => {
            let generator = factory.generator(c).map_err(client_error("efficiency_judge"))?;
            Some(Box::new(GeneratorEfficiencyJudge(generator)))
        }
        None => None,
    };
    let registry = build_registry(config, factory)?;
    let index = rarity_index(config)?;
    let ctx = EpisodeContext {
        registry: &registry,
        policy: &config.episodes.policy,
        reasoner: reasoner.as_ref(),
        index: &index,
        config: config.episode_config(),
    };
    let stage_seed = config.stage_seed(STAGE);
    let mut trajectories = Vec::with_capacity(questions.len());
    for q in questions {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(&q.id, &stage_seed.to_string()));
        let trajectory: Trajectory = run_episode(&ctx, &q.id, &q.question, &mut rng).map_err(stage_error)?;
        trajectories.push(trajectory);
    }

    let pairs: Vec<(&Trajectory, &str)> = trajectories.iter().zip(questions).map(|(t, q)| (t, q.answer.as_str())).collect();
    let inputs = RewardInputs {
        weights: config.reward,
        rules: &config.episodes.efficiency,
        efficiency_judge: efficiency.as_deref(),
        preference_judge: preference.as_deref(),
        group_size: config.episodes.group_size,
    };
    let rewards: Vec<RewardRecord> = score_episodes(&pairs, &inputs).map_err(stage_error)?;

    let mut summary = EpisodeSummary {
        global_seed: config.global_seed,
        episodes: trajectories.len(),
        ..Default::default()
    };
    for t in &trajectories {
        *summary.terminations.entry(termination_name(t.termination)).or_default() += 1;
        for step in &t.steps {
            if step.tool.is_some() {
                summary.tool_steps += 1;
                summary.corrupted_steps += usize::from(step.corrupted);
            }
            summary.error_steps += usize::from(step.error);
        }
    }
    if summary.tool_steps > 0 {
        summary.corrupted_fraction = summary.corrupted_steps as f64 / summary.tool_steps as f64;
    }
    let n = rewards.len() as f64;
    summary.task_accuracy = rewards.iter().map(|r| r.task).sum::<f64>() / n;
    summary.mean_composite = rewards.iter().map(|r| r.composite).sum::<f64>() / n;

    let mut out = Staged::new();
    let mut bytes = Vec::new();
    kgsynth_core::agent::write_trajectories(&mut bytes, &trajectories).map_err(stage_error)?;
    out.add("trajectories.jsonl", bytes);
    let mut bytes = Vec::new();
    kgsynth_core::reward::write_reward_log(&mut bytes, &rewards).map_err(stage_error)?;
    out.add("rewards.jsonl", bytes);
    out.add_json("episodes_summary.json", &summary);
    Ok(out)
}
