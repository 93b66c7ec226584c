//! Trajectory records, step labeling and behavior statistics.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tools::{query_of, ToolCategory};
use super::AgentError;

/// Schema version written as the leading `"v"` field of every line.
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Answered,
    StepBudget,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub category: ToolCategory,
    pub retrieval: bool,
    pub parameters: Value,
    /// The reasoner asked for `auto` and the policy picked the tool.
    pub policy_selected: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub thought: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolCall>,
    /// Set on the final-answer step only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub observation: String,
    pub corrupted: bool,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub v: u32,
    pub id: String,
    pub question: String,
    pub steps: Vec<TrajectoryStep>,
    pub final_answer: Option<String>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    pub fn tool_calls(&self) -> impl Iterator<Item = (usize, &ToolCall)> {
        self.steps.iter().enumerate().filter_map(|(i, s)| s.tool.as_ref().map(|t| (i, t)))
    }
}

pub fn write_trajectories<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(input: R) -> Result<Vec<Trajectory>, AgentError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |message: String| AgentError::Parse { line: i + 1, message };
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| parse_error(e.to_string()))?;
        if t.v != TRAJECTORY_VERSION {
            return Err(parse_error(format!("unsupported trajectory version {}", t.v)));
        }
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepLabel {
    Search,
    Verify,
    Synthesize,
    Other,
}

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "been", "before", "does", "from", "have", "into", "more", "that", "their", "there",
    "these", "this", "what", "when", "where", "which", "while", "with", "would", "result", "results", "overview",
    "source",
];

/// Lowercased tokens long enough to plausibly name an entity.
fn entity_tokens(text: &str) -> HashSet<String> {
    crate::mining::tokenize(text)
        .filter(|t| t.chars().count() >= 4 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Labels every step.
///
/// A retrieval call whose query shares an entity token with an earlier
/// observation is VERIFY; otherwise a retrieval call with a query not used
/// before is SEARCH. Final-answer steps are SYNTHESIZE; the rest are OTHER.
pub fn step_labels(trajectory: &Trajectory) -> Vec<StepLabel> {
    let mut seen_queries: HashSet<String> = HashSet::new();
    let mut observed: HashSet<String> = HashSet::new();
    let mut labels = Vec::with_capacity(trajectory.steps.len());
    for step in &trajectory.steps {
        let label = if step.answer.is_some() {
            StepLabel::Synthesize
        } else {
            match &step.tool {
                Some(call) if call.retrieval => {
                    let query = query_of(&call.parameters).map_or_else(|| call.parameters.to_string(), str::to_string);
                    let normalized = query.trim().to_lowercase();
                    if entity_tokens(&query).iter().any(|t| observed.contains(t)) {
                        StepLabel::Verify
                    } else if seen_queries.insert(normalized) {
                        StepLabel::Search
                    } else {
                        StepLabel::Other
                    }
                }
                _ => StepLabel::Other,
            }
        };
        if let Some(call) = &step.tool {
            if let Some(q) = query_of(&call.parameters) {
                seen_queries.insert(q.trim().to_lowercase());
            }
        }
        observed.extend(entity_tokens(&step.observation));
        labels.push(label);
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub search_steps: usize,
    /// `n` in search+ verify^n synthesize; 0 when the pattern does not match.
    pub verify_count: usize,
    pub synthesized: bool,
    pub matched: bool,
}

/// Matches the label sequence, OTHER labels removed, against
/// `SEARCH+ VERIFY* SYNTHESIZE`.
pub fn classify_labels(labels: &[StepLabel]) -> PatternRecord {
    let core: Vec<StepLabel> = labels.iter().copied().filter(|l| *l != StepLabel::Other).collect();
    let searches = core.iter().take_while(|l| **l == StepLabel::Search).count();
    let verifies = core[searches..].iter().take_while(|l| **l == StepLabel::Verify).count();
    let rest = &core[searches + verifies..];
    if searches > 0 && rest == [StepLabel::Synthesize] {
        PatternRecord {
            search_steps: searches,
            verify_count: verifies,
            synthesized: true,
            matched: true,
        }
    } else {
        PatternRecord {
            search_steps: 0,
            verify_count: 0,
            synthesized: false,
            matched: false,
        }
    }
}

pub fn classify_pattern(trajectory: &Trajectory) -> PatternRecord {
    classify_labels(&step_labels(trajectory))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorStats {
    pub trajectories: usize,
    /// Share whose first tool call is MEDICAL.
    pub first_medical_rate: f64,
    /// Share with a GENERAL/MEDICAL change between consecutive tool calls.
    pub tool_switch_rate: f64,
    /// Share where a failed or corrupted step is followed by a call to a different tool.
    pub error_recovery_rate: f64,
    pub mean_tool_calls: f64,
}

fn recovers(t: &Trajectory) -> bool {
    t.steps.iter().enumerate().any(|(i, step)| {
        if !(step.error || step.corrupted) {
            return false;
        }
        let failed_tool = step.tool.as_ref().map(|c| c.name.as_str());
        t.steps[i + 1..]
            .iter()
            .find_map(|s| s.tool.as_ref())
            .is_some_and(|next| Some(next.name.as_str()) != failed_tool)
    })
}

pub fn trajectory_stats(trajectories: &[Trajectory]) -> Result<BehaviorStats, AgentError> {
    if trajectories.is_empty() {
        return Err(AgentError::Argument("no trajectories to summarize".into()));
    }
    let n = trajectories.len() as f64;
    let share = |pred: &dyn Fn(&Trajectory) -> bool| trajectories.iter().filter(|t| pred(t)).count() as f64 / n;
    Ok(BehaviorStats {
        trajectories: trajectories.len(),
        first_medical_rate: share(&|t| {
            t.tool_calls().next().is_some_and(|(_, c)| c.category == ToolCategory::Medical)
        }),
        tool_switch_rate: share(&|t| {
            let cats: Vec<ToolCategory> = t.tool_calls().map(|(_, c)| c.category).collect();
            cats.windows(2).any(|w| w[0] != w[1])
        }),
        error_recovery_rate: share(&recovers),
        mean_tool_calls: trajectories.iter().map(|t| t.tool_calls().count()).sum::<usize>() as f64 / n,
    })
}
