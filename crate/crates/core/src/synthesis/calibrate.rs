//! Adaptive difficulty calibration against a panel of accuracy evaluators.

use super::question::question_at_complexity;
use super::{PathValidity, QAItem, QaStatus, QuestionConfig, ReasoningPath, SynthesisError};
use crate::clients::{AccuracyEvaluator, AccuracyQuery, TextGenerator};
use crate::kg::{Direction, KnowledgeGraph};

/// Accuracy at or above this on any evaluator means the question is too easy.
pub const PASS_THRESHOLD: f64 = 0.5;

/// Produces a harder version of a question.
pub trait Regenerator {
    fn regenerate(&self, item: &QAItem, complexity: u32) -> Result<QAItem, SynthesisError>;
}

impl<F> Regenerator for F
where
    F: Fn(&QAItem, u32) -> Result<QAItem, SynthesisError>,
{
    fn regenerate(&self, item: &QAItem, complexity: u32) -> Result<QAItem, SynthesisError> {
        self(item, complexity)
    }
}

/// Extends the source path by one hop inside `subgraph` when a valid extension
/// exists, otherwise asks the generator to rephrase at the higher complexity.
///
/// Extensions are tried in (object id, predicate) order so the choice is
/// deterministic.
pub struct PathExtendingRegenerator<'a> {
    pub subgraph: &'a KnowledgeGraph,
    pub generator: &'a dyn TextGenerator,
    pub validity: &'a dyn PathValidity,
    pub config: QuestionConfig,
}

impl PathExtendingRegenerator<'_> {
    pub fn extend(&self, path: &ReasoningPath) -> Option<ReasoningPath> {
        let on_path = path.entities();
        let mut candidates: Vec<_> = self
            .subgraph
            .edges(path.terminal(), Direction::Outgoing)
            .filter(|r| !on_path.contains(&&r.object))
            .collect();
        candidates.sort_by(|a, b| (&a.object, &a.predicate).cmp(&(&b.object, &b.predicate)));
        candidates.into_iter().find_map(|rel| {
            let mut relations = path.relations().to_vec();
            relations.push(rel.clone());
            if !self.validity.accepts(&relations) {
                return None;
            }
            ReasoningPath::new(relations).ok()
        })
    }
}

impl Regenerator for PathExtendingRegenerator<'_> {
    fn regenerate(&self, item: &QAItem, complexity: u32) -> Result<QAItem, SynthesisError> {
        let path = self.extend(&item.source_path).unwrap_or_else(|| item.source_path.clone());
        question_at_complexity(&path, self.subgraph, self.generator, &self.config, complexity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub item: QAItem,
    /// Evaluation rounds performed.
    pub rounds: u32,
    pub regenerations: u32,
}

/// Highest accuracy reported by any evaluator, ignoring failed ones.
///
/// Fails only when every evaluator fails.
pub fn panel_accuracy(evaluators: &[&dyn AccuracyEvaluator], item: &QAItem) -> Result<f64, SynthesisError> {
    let query = AccuracyQuery {
        question: &item.question,
        answer: &item.answer,
        complexity: item.complexity,
    };
    let mut best: Option<f64> = None;
    let mut failures = Vec::new();
    for evaluator in evaluators {
        match evaluator.evaluate_question_accuracy(&query) {
            Ok(acc) => best = Some(best.map_or(acc, |b| b.max(acc))),
            Err(e) => {
                tracing::warn!(evaluator = evaluator.name(), error = %e, "evaluator failed; accuracy unknown");
                failures.push(format!("{}: {e}", evaluator.name()));
            }
        }
    }
    best.ok_or_else(|| SynthesisError::Calibration(format!("every evaluator failed ({})", failures.join("; "))))
}

/// Raises the difficulty of `item` until no evaluator reaches
/// [`PASS_THRESHOLD`], for at most `max_rounds` evaluation rounds.
pub fn calibrate_difficulty(
    item: QAItem,
    evaluators: &[&dyn AccuracyEvaluator],
    max_rounds: u32,
    regenerator: &dyn Regenerator,
) -> Result<CalibrationOutcome, SynthesisError> {
    if evaluators.is_empty() {
        return Err(SynthesisError::Argument("calibration needs at least one evaluator".into()));
    }
    if max_rounds == 0 {
        return Err(SynthesisError::Argument("max_rounds must be positive".into()));
    }
    if item.status != QaStatus::Draft {
        return Err(SynthesisError::AlreadyFinal(item.status));
    }
    let mut current = item;
    let mut regenerations = 0;
    for round in 1..=max_rounds {
        if panel_accuracy(evaluators, &current)? < PASS_THRESHOLD {
            current.status = QaStatus::Calibrated;
            return Ok(CalibrationOutcome {
                item: current,
                rounds: round,
                regenerations,
            });
        }
        let next_complexity = current.complexity + 1;
        let mut next = regenerator.regenerate(&current, next_complexity)?;
        next.complexity = next_complexity;
        next.status = QaStatus::Draft;
        current = next;
        regenerations += 1;
    }
    current.status = QaStatus::Exhausted;
    Ok(CalibrationOutcome {
        item: current,
        rounds: max_rounds,
        regenerations,
    })
}
