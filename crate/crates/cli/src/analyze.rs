//! Pattern and behavior report over a trajectory file.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use kgsynth_core::agent::{classify_pattern, trajectory_stats, BehaviorStats, Trajectory, TRAJECTORY_VERSION};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub trajectories: usize,
    /// 1-based line numbers that failed to parse.
    pub skipped_lines: Vec<usize>,
    /// Trajectories matching `SEARCH+ VERIFY^n SYNTHESIZE`.
    pub matched: usize,
    pub unmatched: usize,
    /// Trajectories per `n`; unmatched ones count under 0.
    pub pattern_histogram: BTreeMap<usize, usize>,
    /// Matched trajectories per `n`.
    pub matched_histogram: BTreeMap<usize, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorStats>,
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "trajectories {} skipped {} matched {} unmatched {}",
            self.trajectories,
            self.skipped_lines.len(),
            self.matched,
            self.unmatched
        );
        for (n, count) in &self.pattern_histogram {
            let matched = self.matched_histogram.get(n).copied().unwrap_or(0);
            let _ = writeln!(t, "  verify^{n}: {count} ({matched} matched)");
        }
        if let Some(b) = &self.behavior {
            let _ = writeln!(
                t,
                "first_medical_rate {:.4} tool_switch_rate {:.4} error_recovery_rate {:.4} mean_tool_calls {:.4}",
                b.first_medical_rate, b.tool_switch_rate, b.error_recovery_rate, b.mean_tool_calls
            );
        }
        t
    }
}

/// Parses each non-empty line; malformed lines are reported and skipped.
pub fn parse_lines(text: &str) -> (Vec<Trajectory>, Vec<usize>) {
    let mut parsed = Vec::new();
    let mut skipped = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Trajectory>(line) {
            Ok(t) if t.v == TRAJECTORY_VERSION => parsed.push(t),
            Ok(t) => {
                tracing::warn!(line = idx + 1, version = t.v, "skipping trajectory with unsupported version");
                skipped.push(idx + 1);
            }
            Err(e) => {
                tracing::warn!(line = idx + 1, error = %e, "skipping malformed trajectory line");
                skipped.push(idx + 1);
            }
        }
    }
    (parsed, skipped)
}

pub fn analyze(trajectories: &[Trajectory], skipped_lines: Vec<usize>) -> AnalysisReport {
    let mut report = AnalysisReport {
        trajectories: trajectories.len(),
        skipped_lines,
        behavior: trajectory_stats(trajectories).ok(),
        ..Default::default()
    };
    for t in trajectories {
        let p = classify_pattern(t);
        *report.pattern_histogram.entry(p.verify_count).or_default() += 1;
        if p.matched {
            report.matched += 1;
            *report.matched_histogram.entry(p.verify_count).or_default() += 1;
        } else {
            report.unmatched += 1;
        }
    }
    report
}

pub fn analyze_text(text: &str) -> AnalysisReport {
    let (parsed, skipped) = parse_lines(text);
    analyze(&parsed, skipped)
}
