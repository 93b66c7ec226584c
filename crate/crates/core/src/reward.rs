//! Composite rewards, the efficiency penalty, group-relative advantages, the
//! policy-gradient loss, and curriculum tracking.
//!
//! The loss path has no KL term.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::io::Write;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Trajectory;
use crate::clients::{ClientResult, GenerationParams, PreferenceJudge, TextGenerator};
use crate::num::{decimal_serde, is_unit_interval, Scalar};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, RewardError>;

/// Weights of the task, expert and efficiency terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    #[serde(with = "decimal_serde")]
    pub alpha: Ratio<i64>,
    #[serde(with = "decimal_serde")]
    pub beta: Ratio<i64>,
    #[serde(with = "decimal_serde")]
    pub gamma: Ratio<i64>,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: Ratio::from_integer(1),
            beta: Ratio::new(1, 5),
            gamma: Ratio::new(1, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown<S = f64> {
    pub task: S,
    pub expert: S,
    pub efficiency: S,
    pub composite: S,
}

/// `alpha·task + beta·expert − gamma·efficiency`, exact in `S`.
pub fn composite_reward<S: Scalar>(task: S, expert: S, efficiency: S, weights: &RewardWeights) -> Result<RewardBreakdown<S>> {
    if !is_unit_interval(&task) || !is_unit_interval(&expert) {
        return Err(RewardError::Contract(format!(
            "task {task:?} and expert {expert:?} must lie in [0, 1]"
        )));
    }
    if !efficiency.is_finite_value() || efficiency < S::zero() {
        return Err(RewardError::Contract(format!("efficiency penalty {efficiency:?} is negative")));
    }
    let composite = S::from_ratio(&weights.alpha) * task.clone() + S::from_ratio(&weights.beta) * expert.clone()
        - S::from_ratio(&weights.gamma) * efficiency.clone();
    Ok(RewardBreakdown {
        task,
        expert,
        efficiency,
        composite,
    })
}

/// Second opinion on redundant tool calls; each flagged call costs one unit.
pub trait EfficiencyJudge: Send + Sync {
    fn flagged_calls(&self, trajectory: &Trajectory) -> ClientResult<u32>;
}

impl<F: Fn(&Trajectory) -> ClientResult<u32> + Send + Sync> EfficiencyJudge for F {
    fn flagged_calls(&self, trajectory: &Trajectory) -> ClientResult<u32> {
        self(trajectory)
    }
}

/// Asks a text generator how many calls were redundant; expects a bare integer.
pub struct GeneratorEfficiencyJudge<G>(pub G);

impl<G: TextGenerator> EfficiencyJudge for GeneratorEfficiencyJudge<G> {
    fn flagged_calls(&self, trajectory: &Trajectory) -> ClientResult<u32> {
        let mut prompt = format!(
            "Count the tool calls below that add no new information toward answering the question. \
             Reply with a single integer.\nQuestion: {}\n",
            trajectory.question
        );
        for (i, call) in trajectory.tool_calls() {
            prompt.push_str(&format!("{}. {} {}\n", i + 1, call.name, call.parameters));
        }
        let reply = self.0.generate(&prompt, &GenerationParams::default())?;
        reply
            .trim()
            .parse()
            .map_err(|_| crate::clients::ClientError::Contract(format!("expected an integer, got `{}`", reply.trim())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyRules {
    /// Tools whose every use is penalized.
    pub irrelevant_tools: BTreeSet<String>,
    /// Optional clip on the total.
    pub max_penalty: Option<u32>,
}

fn normalize_answer(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Index of the first tool step whose observation contains the final answer.
fn answer_source(trajectory: &Trajectory) -> Option<usize> {
    let answer = normalize_answer(trajectory.final_answer.as_deref()?);
    if answer.is_empty() {
        return None;
    }
    trajectory
        .tool_calls()
        .map(|(i, _)| i)
        .find(|&i| normalize_answer(&trajectory.steps[i].observation).contains(&answer))
}

/// Unit rule hits: duplicate (tool, parameters) calls, calls after the step that
/// surfaced the final answer, and uses of configured-irrelevant tools, plus any
/// calls the judge flags. A failing judge contributes nothing.
pub fn efficiency_penalty(trajectory: &Trajectory, rules: &EfficiencyRules, judge: Option<&dyn EfficiencyJudge>) -> u32 {
    let mut seen = HashSet::new();
    let mut hits = 0u32;
    let source = answer_source(trajectory);
    for (i, call) in trajectory.tool_calls() {
        if !seen.insert((call.name.as_str(), call.parameters.to_string())) {
            hits += 1;
        }
        if source.is_some_and(|s| i > s) {
            hits += 1;
        }
        if rules.irrelevant_tools.contains(&call.name) {
            hits += 1;
        }
    }
    if let Some(judge) = judge {
        match judge.flagged_calls(trajectory) {
            Ok(n) => hits += n,
            Err(e) => tracing::warn!(episode = %trajectory.id, error = %e, "efficiency judge failed; ignoring"),
        }
    }
    rules.max_penalty.map_or(hits, |cap| hits.min(cap))
}

/// Rewards minus their group mean.
pub fn group_advantages<S: Scalar>(rewards: &[S]) -> Result<Vec<S>> {
    if rewards.is_empty() {
        return Err(RewardError::Argument("empty reward group".into()));
    }
    let total = rewards.iter().fold(S::zero(), |acc, r| acc + r.clone());
    let mean = total / S::from_usize(rewards.len());
    Ok(rewards.iter().map(|r| r.clone() - mean.clone()).collect())
}

/// `−mean(logprob · advantage)`, a quantity to minimize.
pub fn grpo_loss<S: Scalar>(logprobs: &[S], rewards: &[S]) -> Result<S> {
    if logprobs.len() != rewards.len() {
        return Err(RewardError::Contract(format!(
            "{} log-probabilities for {} rewards",
            logprobs.len(),
            rewards.len()
        )));
    }
    if let Some(lp) = logprobs.iter().find(|lp| **lp > S::zero() || !lp.is_finite_value()) {
        return Err(RewardError::Contract(format!("log-probability {lp:?} is positive or not finite")));
    }
    let advantages = group_advantages(rewards)?;
    let total = logprobs
        .iter()
        .zip(&advantages)
        .fold(S::zero(), |acc, (lp, adv)| acc + lp.clone() * adv.clone());
    Ok(S::zero() - total / S::from_usize(logprobs.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState<S = Ratio<i64>> {
    pub level: u32,
    /// Most recent batch pass rates, oldest first, at most `window` long.
    pub window_pass_rates: VecDeque<S>,
    pub window: usize,
    pub promote_threshold: S,
    pub demote_threshold: S,
}

pub const DEFAULT_CURRICULUM_WINDOW: usize = 4;

impl<S: Scalar> Default for CurriculumState<S> {
    fn default() -> Self {
        Self::new(DEFAULT_CURRICULUM_WINDOW)
    }
}

impl<S: Scalar> CurriculumState<S> {
    pub fn new(window: usize) -> Self {
        Self {
            level: 0,
            window_pass_rates: VecDeque::with_capacity(window),
            window: window.max(1),
            promote_threshold: S::from_ratio(&Ratio::new(7, 10)),
            demote_threshold: S::from_ratio(&Ratio::new(3, 10)),
        }
    }

    pub fn window_mean(&self) -> Option<S> {
        if self.window_pass_rates.is_empty() {
            return None;
        }
        let total = self.window_pass_rates.iter().fold(S::zero(), |acc, r| acc + r.clone());
        Some(total / S::from_usize(self.window_pass_rates.len()))
    }
}

/// Records a batch pass rate. Once the window is full, a mean above the
/// promotion threshold raises the level and clears the window. The level never
/// drops; a mean below the demotion threshold is only logged.
pub fn curriculum_update<S: Scalar>(mut state: CurriculumState<S>, batch_pass_rate: S) -> Result<CurriculumState<S>> {
    if !is_unit_interval(&batch_pass_rate) {
        return Err(RewardError::Contract(format!("pass rate {batch_pass_rate:?} outside [0, 1]")));
    }
    if state.window_pass_rates.len() == state.window {
        state.window_pass_rates.pop_front();
    }
    state.window_pass_rates.push_back(batch_pass_rate);
    if state.window_pass_rates.len() < state.window {
        return Ok(state);
    }
    let mean = state.window_mean().expect("window is full");
    if mean > state.promote_threshold {
        state.level += 1;
        state.window_pass_rates.clear();
    } else if mean < state.demote_threshold {
        tracing::warn!(level = state.level, mean = mean.to_f64(), "pass rate below the demotion threshold; level kept");
    }
    Ok(state)
}

/// One line of the reward log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub episode_id: String,
    pub task: f64,
    pub expert: f64,
    pub efficiency: f64,
    pub composite: f64,
    pub advantage: f64,
}

pub fn write_reward_log<W: Write>(mut out: W, records: &[RewardRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Inputs for scoring a batch of episodes.
pub struct RewardInputs<'a> {
    pub weights: RewardWeights,
    pub rules: &'a EfficiencyRules,
    pub efficiency_judge: Option<&'a dyn EfficiencyJudge>,
    pub preference_judge: Option<&'a dyn PreferenceJudge>,
    /// Consecutive episodes sharing a baseline.
    pub group_size: usize,
}

/// Scores episodes against gold answers and attaches group advantages.
///
/// `task` is 1 on a normalized exact match. `expert` comes from the preference
/// judge (0 without one, or when it fails).
pub fn score_episodes(episodes: &[(&Trajectory, &str)], inputs: &RewardInputs<'_>) -> Result<Vec<RewardRecord>> {
    if inputs.group_size == 0 {
        return Err(RewardError::Argument("group size must be positive".into()));
    }
    let mut records = Vec::with_capacity(episodes.len());
    for (trajectory, gold) in episodes {
        let answer = trajectory.final_answer.as_deref().unwrap_or_default();
        let task = if !answer.is_empty() && normalize_answer(answer) == normalize_answer(gold) { 1.0 } else { 0.0 };
        let expert = match (inputs.preference_judge, trajectory.final_answer.as_deref()) {
            (Some(judge), Some(answer)) => judge.preference(&trajectory.question, answer).unwrap_or_else(|e| {
                tracing::warn!(episode = %trajectory.id, error = %e, "preference judge failed; expert score 0");
                0.0
            }),
            _ => 0.0,
        };
        let efficiency = f64::from(efficiency_penalty(trajectory, inputs.rules, inputs.efficiency_judge));
        let breakdown = composite_reward(task, expert, efficiency, &inputs.weights)?;
        records.push(RewardRecord {
            episode_id: trajectory.id.clone(),
            task,
            expert,
            efficiency,
            composite: breakdown.composite,
            advantage: 0.0,
        });
    }
    for group in records.chunks_mut(inputs.group_size) {
        let rewards: Vec<f64> = group.iter().map(|r| r.composite).collect();
        for (record, adv) in group.iter_mut().zip(group_advantages(&rewards)?) {
            record.advantage = adv;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Termination, ToolCall, ToolCategory, TrajectoryStep, TRAJECTORY_VERSION};
    use num_rational::BigRational;
    use proptest::prelude::*;
    use serde_json::json;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Ratio::new(n, d)
    }

    fn call(name: &str, query: &str, observation: &str) -> TrajectoryStep {
        TrajectoryStep {
            thought: String::new(),
            tool: Some(ToolCall {
                name: name.into(),
                category: ToolCategory::General,
                retrieval: true,
                parameters: json!({ "query": query }),
                policy_selected: false,
                fallback: false,
            }),
            answer: None,
            observation: observation.into(),
            corrupted: false,
            error: false,
        }
    }

    fn traj(steps: Vec<TrajectoryStep>, answer: Option<&str>) -> Trajectory {
        Trajectory {
            v: TRAJECTORY_VERSION,
            id: "e".into(),
            question: "q".into(),
            steps,
            final_answer: answer.map(str::to_string),
            termination: Termination::Answered,
            error: None,
        }
    }

    #[test]
    fn composite_examples_exact() {
        let w = RewardWeights::default();
        let c = |t, e, f| composite_reward(t, e, f, &w).unwrap().composite;
        assert_eq!(c(q(0, 1), q(0, 1), q(0, 1)), q(0, 1));
        assert_eq!(c(q(1, 1), q(1, 1), q(1, 1)), q(11, 10));
        assert_eq!(c(q(1, 1), q(0, 1), q(3, 1)), q(7, 10));
        assert!(composite_reward(q(3, 2), q(0, 1), q(0, 1), &w).is_err());
        assert!(composite_reward(q(1, 1), q(0, 1), q(-1, 1), &w).is_err());
    }

    #[test]
    fn efficiency_rules() {
        let rules = EfficiencyRules::default();
        let clean = traj(vec![call("a", "x", "nothing"), call("b", "y", "PEX1 found")], Some("PEX1"));
        assert_eq!(efficiency_penalty(&clean, &rules, None), 0);
        let dup = traj(vec![call("a", "x", "o"), call("a", "x", "o")], None);
        assert_eq!(efficiency_penalty(&dup, &rules, None), 1);
        let dup_and_late = traj(
            vec![call("a", "x", "answer is PEX1"), call("a", "x", "o"), call("b", "z", "o")],
            Some("pex1"),
        );
        // the duplicate is also post-answer, and so is the third call
        assert_eq!(efficiency_penalty(&dup_and_late, &rules, None), 3);
        let dup_plus_post = traj(vec![call("a", "x", "o"), call("a", "x", "PEX1"), call("b", "z", "o")], Some("PEX1"));
        assert_eq!(efficiency_penalty(&dup_plus_post, &rules, None), 2);

        let strict = EfficiencyRules {
            irrelevant_tools: ["b".to_string()].into(),
            max_penalty: Some(2),
        };
        let judge = |_: &Trajectory| -> ClientResult<u32> { Ok(5) };
        assert_eq!(efficiency_penalty(&clean, &strict, None), 1);
        assert_eq!(efficiency_penalty(&clean, &strict, Some(&judge)), 2);
        let broken = |_: &Trajectory| -> ClientResult<u32> { Err(crate::clients::ClientError::Timeout) };
        assert_eq!(efficiency_penalty(&clean, &EfficiencyRules::default(), Some(&broken)), 0);
    }

    #[test]
    fn advantages_and_loss_examples() {
        let r = |v: &[i64]| v.iter().map(|x| q(*x, 1)).collect::<Vec<_>>();
        assert_eq!(group_advantages(&r(&[1, 2, 3])).unwrap(), r(&[-1, 0, 1]));
        assert_eq!(group_advantages(&r(&[4, 4])).unwrap(), r(&[0, 0]));
        assert_eq!(group_advantages(&r(&[5])).unwrap(), r(&[0]));
        assert!(group_advantages::<Q>(&[]).is_err());

        assert_eq!(grpo_loss(&r(&[-3, -7]), &r(&[2, 2])).unwrap(), q(0, 1));
        assert_eq!(grpo_loss(&r(&[-1, -1]), &r(&[1, 0])).unwrap(), q(0, 1));
        assert_eq!(grpo_loss(&r(&[-1, -2]), &r(&[1, 0])).unwrap(), q(-1, 4));
        assert!(matches!(grpo_loss(&r(&[-1]), &r(&[1, 0])), Err(RewardError::Contract(_))));
        assert!(grpo_loss(&r(&[1]), &r(&[1])).is_err());
    }

    #[test]
    fn curriculum_examples() {
        let mut s = CurriculumState::<Q>::new(2);
        s = curriculum_update(s, q(8, 10)).unwrap();
        assert_eq!(s.level, 0, "window not yet full");
        s = curriculum_update(s, q(8, 10)).unwrap();
        assert_eq!(s.level, 1);
        assert!(s.window_pass_rates.is_empty());

        let mut flat = CurriculumState::<Q>::new(2);
        for _ in 0..5 {
            flat = curriculum_update(flat, q(1, 2)).unwrap();
        }
        assert_eq!(flat.level, 0);
        assert_eq!(flat.window_pass_rates.len(), 2);

        let mut twice = CurriculumState::<Q>::default();
        for _ in 0..2 * twice.window {
            twice = curriculum_update(twice, q(9, 10)).unwrap();
        }
        assert_eq!(twice.level, 2);

        let low = (0..4).fold(CurriculumState::<Q>::default(), |s, _| curriculum_update(s, q(1, 10)).unwrap());
        assert_eq!(low.level, 0);
        assert!(curriculum_update(CurriculumState::<Q>::default(), q(2, 1)).is_err());
    }

    #[test]
    fn scoring_batch() {
        let good = traj(vec![call("a", "x", "PEX1")], Some("PEX1"));
        let bad = traj(vec![call("a", "x", "o"), call("a", "x", "o")], Some("PEX2"));
        let rules = EfficiencyRules::default();
        let inputs = RewardInputs {
            weights: RewardWeights::default(),
            rules: &rules,
            efficiency_judge: None,
            preference_judge: None,
            group_size: 2,
        };
        let records = score_episodes(&[(&good, "pex1"), (&bad, "PEX1")], &inputs).unwrap();
        assert_eq!(records[0].task, 1.0);
        assert_eq!(records[1].task, 0.0);
        assert_eq!(records[1].efficiency, 1.0);
        assert!((records[0].advantage + records[1].advantage).abs() < 1e-12);
        let mut buf = Vec::new();
        write_reward_log(&mut buf, &records).unwrap();
        let first = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("{\"episode_id\":\"e\",\"task\":1.0,\"expert\":0.0,\"efficiency\":0.0,\"composite\":1.0,"));
    }

    fn big(v: i64, d: i64) -> BigRational {
        BigRational::new(v.into(), d.into())
    }

    proptest! {
        #[test]
        fn advantages_sum_to_exactly_zero(raw in proptest::collection::vec((-1000i64..1000, 1i64..50), 1..20)) {
            let rewards: Vec<BigRational> = raw.iter().map(|(n, d)| big(*n, *d)).collect();
            let total = group_advantages(&rewards).unwrap().into_iter().fold(big(0, 1), |a, b| a + b);
            prop_assert_eq!(total, big(0, 1));
        }

        #[test]
        fn loss_ignores_reward_shift(
            raw in proptest::collection::vec((-100i64..=0, -100i64..100), 1..12),
            shift in -50i64..50,
        ) {
            let lp: Vec<BigRational> = raw.iter().map(|(l, _)| big(*l, 10)).collect();
            let r: Vec<BigRational> = raw.iter().map(|(_, r)| big(*r, 7)).collect();
            let shifted: Vec<BigRational> = r.iter().map(|x| x + big(shift, 3)).collect();
            prop_assert_eq!(grpo_loss(&lp, &r).unwrap(), grpo_loss(&lp, &shifted).unwrap());
        }

        #[test]
        fn composite_is_linear_and_scales_with_weights(
            t in 0i64..=10, e in 0i64..=10, f in 0i64..20, c in 1i64..10,
        ) {
            let w = RewardWeights::default();
            let scaled = RewardWeights { alpha: w.alpha * c, beta: w.beta * c, gamma: w.gamma * c };
            let base = composite_reward(q(t, 10), q(e, 10), q(f, 1), &w).unwrap().composite;
            let big_w = composite_reward(q(t, 10), q(e, 10), q(f, 1), &scaled).unwrap().composite;
            prop_assert_eq!(big_w, base * c);
            // additive in the efficiency term
            let more = composite_reward(q(t, 10), q(e, 10), q(f + 1, 1), &w).unwrap().composite;
            prop_assert_eq!(base - more, w.gamma);
        }

        #[test]
        fn level_never_drops(rates in proptest::collection::vec(0i64..=10, 0..40), window in 1usize..6) {
            let mut s = CurriculumState::<Q>::new(window);
            let mut prev = 0;
            for r in rates {
                s = curriculum_update(s, q(r, 10)).unwrap();
                prop_assert!(s.level >= prev);
                prop_assert!(s.window_pass_rates.len() <= window);
                prev = s.level;
            }
        }
    }
}
