//! ReAct episode runtime: state, features, tool policy, tools and trajectories.

mod episode;
mod features;
mod policy;
mod state;
mod tools;
mod trajectory;

use thiserror::Error;

pub use episode::{
    corrupt_tool_output, parse_reasoner_output, run_episode, run_episode_observed, EpisodeConfig, EpisodeContext,
    ReasonerOutput, CORRUPTION_MARKER, CORRUPTION_PREFIX_CHARS,
};
pub use features::{extract_features, FeatureVector, RarityIndex, FEATURE_ARITY, MAX_ESTIMATED_HOPS};
pub use policy::{select_tool, sigmoid, tool_probability, Selection, SelectionMode, ToolPolicy};
pub use state::AgentState;
pub use tools::{
    ClinicalReasonerTool, DocumentReadTool, MedicalRetrieverTool, Tool, ToolCategory, ToolRegistry, ToolResult,
    ToolSpec, WebSearchTool,
};
pub use trajectory::{
    classify_labels, classify_pattern, read_trajectories, step_labels, trajectory_stats, write_trajectories,
    BehaviorStats, PatternRecord, StepLabel, Termination, ToolCall, Trajectory, TrajectoryStep, TRAJECTORY_VERSION,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("tool registry is empty")]
    EmptyRegistry,
    #[error("tool `{0}` is registered twice")]
    DuplicateTool(String),
    #[error("{0}")]
    Argument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
