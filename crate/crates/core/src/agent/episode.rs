//! The reason-act-observe loop.

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::{extract_features, RarityIndex};
use super::policy::{select_tool, SelectionMode, ToolPolicy};
use super::tools::{query_of, ToolRegistry, ToolResult};
use super::trajectory::{Termination, ToolCall, Trajectory, TrajectoryStep, TRAJECTORY_VERSION};
use super::{AgentError, AgentState};
use crate::clients::{Reasoner, ReasonerRequest};
use crate::num::{decimal_serde, ratio_to_f64, Real};

pub const CORRUPTION_MARKER: &str = "__CORRUPTED__";

/// Characters of the original payload kept after the marker.
pub const CORRUPTION_PREFIX_CHARS: usize = 16;

/// Action name that defers the tool choice to the policy.
const AUTO_ACTION: &str = "auto";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Maximum reasoner turns.
    pub budget: u32,
    /// Probability that a successful tool result is corrupted.
    #[serde(with = "decimal_serde")]
    pub corruption_rate: Ratio<i64>,
    pub selection: SelectionMode,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            budget: 8,
            corruption_rate: Ratio::new(1, 20),
            selection: SelectionMode::Sample,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.budget == 0 {
            return Err(AgentError::Argument("episode budget must be at least 1".into()));
        }
        if self.corruption_rate < Ratio::from_integer(0) || self.corruption_rate > Ratio::from_integer(1) {
            return Err(AgentError::Argument(format!(
                "corruption rate {} outside [0, 1]",
                self.corruption_rate
            )));
        }
        Ok(())
    }
}

/// With probability `rate`, replaces the payload by the corruption marker and
/// the payload's first few characters. Always consumes exactly one draw.
pub fn corrupt_tool_output<R: Rng + ?Sized>(result: ToolResult, rate: f64, rng: &mut R) -> ToolResult {
    let hit = rng.gen::<f64>() < rate;
    if !hit {
        return result;
    }
    let prefix: String = result.payload.chars().take(CORRUPTION_PREFIX_CHARS).collect();
    ToolResult {
        payload: format!("{CORRUPTION_MARKER}{prefix}"),
        corrupted: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReasonerOutput {
    Act { thought: String, action: String, input: Value },
    Answer { thought: String, answer: String },
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Thought,
    Action,
    Input,
    Answer,
    Ignored,
}

const KEYWORDS: &[(&str, Field)] = &[
    ("Thought:", Field::Thought),
    ("Action Input:", Field::Input),
    ("Action:", Field::Action),
    ("Final Answer:", Field::Answer),
    ("Observation:", Field::Ignored),
];

/// Parses the `Thought / Action / Action Input` or `Thought / Final Answer`
/// text protocol. Anything after a self-written `Observation:` is ignored.
pub fn parse_reasoner_output(text: &str) -> Result<ReasonerOutput, String> {
    let mut fields: Vec<(Field, String)> = Vec::new();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        let keyword = KEYWORDS.iter().find(|(k, _)| trimmed.starts_with(k));
        match keyword {
            Some((_, Field::Ignored)) => break,
            Some((k, field)) => {
                if fields.iter().any(|(f, _)| f == field) {
                    return Err(format!("`{k}` appears twice"));
                }
                fields.push((*field, trimmed[k.len()..].trim().to_string()));
                current = Some(fields.len() - 1);
            }
            None => match current {
                Some(i) => {
                    let value = &mut fields[i].1;
                    if !value.is_empty() {
                        value.push('\n');
                    }
                    value.push_str(line.trim());
                }
                None if line.trim().is_empty() => {}
                None => return Err(format!("text before any keyword: `{}`", line.trim())),
            },
        }
    }
    let get = |field: Field| fields.iter().find(|(f, _)| *f == field).map(|(_, v)| v.trim().to_string());
    let thought = get(Field::Thought).unwrap_or_default();
    match (get(Field::Answer), get(Field::Action)) {
        (Some(_), Some(_)) => Err("both an action and a final answer".into()),
        (Some(answer), None) if !answer.is_empty() => Ok(ReasonerOutput::Answer { thought, answer }),
        (Some(_), None) => Err("empty final answer".into()),
        (None, Some(action)) if !action.is_empty() => {
            let raw = get(Field::Input).unwrap_or_default();
            let input = match serde_json::from_str::<Value>(&raw) {
                Ok(v @ Value::Object(_)) => v,
                _ => Value::String(raw),
            };
            Ok(ReasonerOutput::Act { thought, action, input })
        }
        (None, Some(_)) => Err("empty action".into()),
        (None, None) => Err("neither an action nor a final answer".into()),
    }
}

/// Everything an episode needs besides the question and the RNG.
pub struct EpisodeContext<'a, S = f64> {
    pub registry: &'a ToolRegistry,
    pub policy: &'a ToolPolicy<S>,
    pub reasoner: &'a dyn Reasoner,
    pub index: &'a RarityIndex,
    pub config: EpisodeConfig,
}

fn render_prompt(state: &AgentState, registry: &ToolRegistry) -> String {
    let mut prompt = String::from("Answer the question by reasoning step by step and calling tools.\nTools:\n");
    for tool in registry.iter() {
        prompt.push_str(&format!("- {} ({:?})\n", tool.name, tool.category));
    }
    prompt.push_str(
        "Reply with `Thought:` and then either `Action:` (a tool name, or `auto` to let the policy choose) \
         with `Action Input:` (JSON or text), or `Final Answer:`.\n\n",
    );
    prompt.push_str(&state.context.join("\n"));
    prompt
}

fn error_step(thought: String, tool: Option<ToolCall>, message: String) -> TrajectoryStep {
    TrajectoryStep {
        thought,
        tool,
        answer: None,
        observation: format!("ERROR: {message}"),
        corrupted: false,
        error: true,
    }
}

/// Runs one episode. `on_step` sees the state after every completed cycle.
pub fn run_episode_observed<S: Real, R: Rng + ?Sized>(
    ctx: &EpisodeContext<'_, S>,
    question_id: &str,
    question: &str,
    rng: &mut R,
    on_step: &mut dyn FnMut(&AgentState),
) -> Result<Trajectory, AgentError> {
    ctx.config.validate()?;
    ctx.policy.validate()?;
    let rate = ratio_to_f64(&ctx.config.corruption_rate);
    let mut state = AgentState::new(question);
    let mut trajectory = Trajectory {
        v: TRAJECTORY_VERSION,
        id: question_id.to_string(),
        question: question.to_string(),
        steps: Vec::new(),
        final_answer: None,
        termination: Termination::StepBudget,
        error: None,
    };
    for step in 0..ctx.config.budget as usize {
        let prompt = render_prompt(&state, ctx.registry);
        let request = ReasonerRequest {
            question_id,
            step,
            prompt: &prompt,
        };
        let reply = match ctx.reasoner.next_turn(&request) {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(question_id, step, error = %e, "reasoner failed; ending episode");
                trajectory.termination = Termination::Error;
                trajectory.error = Some(e.to_string());
                break;
            }
        };
        let record = match parse_reasoner_output(&reply) {
            Err(message) => error_step(String::new(), None, format!("unparseable reasoner output: {message}")),
            Ok(ReasonerOutput::Answer { thought, answer }) => TrajectoryStep {
                thought,
                tool: None,
                answer: Some(answer),
                observation: String::new(),
                corrupted: false,
                error: false,
            },
            Ok(ReasonerOutput::Act { thought, action, input }) => {
                let (spec, policy_selected, fallback) = if action.eq_ignore_ascii_case(AUTO_ACTION) {
                    let features = extract_features::<S>(&state, question, ctx.index);
                    let chosen = select_tool(ctx.policy, &features, ctx.registry, ctx.config.selection, rng)?;
                    (Some(chosen.tool), true, chosen.fallback)
                } else {
                    (ctx.registry.get(&action), false, false)
                };
                match spec {
                    None => error_step(thought, None, format!("unknown tool `{action}`")),
                    Some(spec) => {
                        let call = ToolCall {
                            name: spec.name.clone(),
                            category: spec.category,
                            retrieval: spec.retrieval,
                            parameters: input.clone(),
                            policy_selected,
                            fallback,
                        };
                        match spec.tool.invoke(&input) {
                            Err(message) => error_step(thought, Some(call), message),
                            Ok(result) => {
                                let result = corrupt_tool_output(result, rate, rng);
                                TrajectoryStep {
                                    thought,
                                    tool: Some(call),
                                    answer: None,
                                    observation: result.payload,
                                    corrupted: result.corrupted,
                                    error: false,
                                }
                            }
                        }
                    }
                }
            }
        };
        let turn = format!("{}\nObservation: {}", reply.trim_end(), record.observation);
        let query = record
            .tool
            .as_ref()
            .map(|t| (t.name.as_str(), query_of(&t.parameters).unwrap_or_default()));
        state.record(turn, query, &record.observation, record.error || record.corrupted, ctx.index);
        let answer = record.answer.clone();
        trajectory.steps.push(record);
        on_step(&state);
        if let Some(answer) = answer {
            trajectory.final_answer = Some(answer);
            trajectory.termination = Termination::Answered;
            break;
        }
    }
    Ok(trajectory)
}

pub fn run_episode<S: Real, R: Rng + ?Sized>(
    ctx: &EpisodeContext<'_, S>,
    question_id: &str,
    question: &str,
    rng: &mut R,
) -> Result<Trajectory, AgentError> {
    run_episode_observed(ctx, question_id, question, rng, &mut |_| {})
}
