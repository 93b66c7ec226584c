//! Turning reasoning paths into natural-language questions.

use serde::{Deserialize, Serialize};

use super::{ReasoningPath, SynthesisError};
use crate::clients::{ClientError, ClientResult, GenerationParams, TextGenerator};
use crate::kg::{KnowledgeGraph, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QaStatus {
    Draft,
    Calibrated,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub question: String,
    /// Surface name of the path's terminal entity.
    pub answer: String,
    pub source_path: ReasoningPath,
    pub complexity: u32,
    pub status: QaStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionConfig {
    /// Extra generation attempts after a question leaks its answer.
    pub leak_retries: u32,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        Self { leak_retries: 2 }
    }
}

const RELATION_PREFIX: &str = "Relation ";
const ANSWER_PREFIX: &str = "Answer entity (never reveal it): ";
const COMPLEXITY_PREFIX: &str = "Complexity level: ";

fn relation_clause(graph: &KnowledgeGraph, index: usize, rel: &Relation) -> String {
    let mut clause = format!(
        "{RELATION_PREFIX}{}: {} --{}--> {}",
        index + 1,
        graph.name_of(&rel.subject),
        rel.predicate,
        graph.name_of(&rel.object)
    );
    let context: Vec<String> = [
        ("temporal", &rel.temporal),
        ("spatial", &rel.spatial),
        ("clinical", &rel.clinical_context),
    ]
    .into_iter()
    .filter_map(|(label, value)| value.as_ref().map(|v| format!("{label}: {v}")))
    .collect();
    if !context.is_empty() {
        clause.push_str(&format!(" ({})", context.join("; ")));
    }
    clause
}

/// Prompt asking for a question that chains every relation of `path`.
pub fn question_prompt(path: &ReasoningPath, graph: &KnowledgeGraph, complexity: u32) -> String {
    let answer = graph.name_of(path.terminal());
    let mut prompt = String::from(
        "Write one natural-language question that can only be answered by following every \
         relation below in order, starting from the first entity.\n\
         The answer entity must not appear anywhere in the question text.\n",
    );
    prompt.push_str(&format!("{COMPLEXITY_PREFIX}{complexity}\n"));
    prompt.push_str(&format!("{ANSWER_PREFIX}{answer}\n"));
    for (i, rel) in path.relations().iter().enumerate() {
        prompt.push_str(&relation_clause(graph, i, rel));
        prompt.push('\n');
    }
    prompt.push_str("Question:");
    prompt
}

fn leaks(question: &str, answer: &str) -> bool {
    !answer.is_empty() && question.to_lowercase().contains(&answer.to_lowercase())
}

/// Generates a DRAFT item for `path`, retrying while the generated question
/// contains the answer.
pub fn path_to_question(
    path: &ReasoningPath,
    graph: &KnowledgeGraph,
    generator: &dyn TextGenerator,
    config: &QuestionConfig,
) -> Result<QAItem, SynthesisError> {
    question_at_complexity(path, graph, generator, config, 0)
}

pub(crate) fn question_at_complexity(
    path: &ReasoningPath,
    graph: &KnowledgeGraph,
    generator: &dyn TextGenerator,
    config: &QuestionConfig,
    complexity: u32,
) -> Result<QAItem, SynthesisError> {
    let answer = graph.name_of(path.terminal()).to_string();
    let prompt = question_prompt(path, graph, complexity);
    let attempts = config.leak_retries + 1;
    for _ in 0..attempts {
        let question = generator
            .generate(&prompt, &GenerationParams::default())
            .map_err(SynthesisError::Generation)?;
        let question = question.trim().to_string();
        if !leaks(&question, &answer) {
            return Ok(QAItem {
                question,
                answer,
                source_path: path.clone(),
                complexity,
                status: QaStatus::Draft,
            });
        }
        tracing::debug!(%answer, "generated question leaked its answer; retrying");
    }
    Err(SynthesisError::Leakage { attempts })
}

/// Offline question writer that understands [`question_prompt`].
///
/// It names the starting entity and the predicate chain, never the later
/// entities, and says how many layers of indirection were requested.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateQuestionWriter;

impl TextGenerator for TemplateQuestionWriter {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> ClientResult<String> {
        let mut start = None;
        let mut predicates = Vec::new();
        let mut complexity = 0u32;
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix(COMPLEXITY_PREFIX) {
                complexity = rest.trim().parse().unwrap_or(0);
            } else if let Some(rest) = line.strip_prefix(RELATION_PREFIX) {
                let (_, body) = rest
                    .split_once(": ")
                    .ok_or_else(|| ClientError::Contract(format!("unparseable relation line `{line}`")))?;
                let (subject, rest) = body
                    .split_once(" --")
                    .ok_or_else(|| ClientError::Contract(format!("unparseable relation line `{line}`")))?;
                let (predicate, _) = rest
                    .split_once("--> ")
                    .ok_or_else(|| ClientError::Contract(format!("unparseable relation line `{line}`")))?;
                start.get_or_insert_with(|| subject.to_string());
                predicates.push(predicate.replace('_', " "));
            }
        }
        let start = start.ok_or_else(|| ClientError::Contract("prompt lists no relations".into()))?;
        let chain = predicates.join(", then ");
        let lead = match complexity {
            0 => String::new(),
            1 => "Working through one extra layer of indirection: ".to_string(),
            n => format!("Working through {n} extra layers of indirection: "),
        };
        Ok(format!(
            "{lead}Starting from {start} and following {chain}, which entity do you reach?"
        ))
    }
}
