//! Sigmoid tool-category scores and category/tool selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_ARITY};
use super::tools::{ToolCategory, ToolRegistry, ToolSpec};
use super::AgentError;
use crate::num::{Real, Scalar};

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Per-category linear weights over [`FeatureVector::components`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolPolicy<S = f64> {
    pub w_medical: Vec<S>,
    pub w_general: Vec<S>,
}

impl<S: Real> Default for ToolPolicy<S> {
    fn default() -> Self {
        Self {
            w_medical: vec![S::zero(); FEATURE_ARITY],
            w_general: vec![S::zero(); FEATURE_ARITY],
        }
    }
}

impl<S: Real> ToolPolicy<S> {
    pub fn validate(&self) -> Result<(), AgentError> {
        for (label, w) in [("w_medical", &self.w_medical), ("w_general", &self.w_general)] {
            if w.len() != FEATURE_ARITY {
                return Err(AgentError::Contract(format!(
                    "{label} has {} weights, features have {FEATURE_ARITY}",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(AgentError::Contract(format!("{label} has a non-finite weight")));
            }
        }
        Ok(())
    }

    pub fn weights(&self, category: ToolCategory) -> &[S] {
        match category {
            ToolCategory::Medical => &self.w_medical,
            ToolCategory::General => &self.w_general,
        }
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self {
            w_medical: self.w_medical.iter().map(|w| *w * factor).collect(),
            w_general: self.w_general.iter().map(|w| *w * factor).collect(),
        }
    }
}

/// `σ(w · φ)` for the category's weight vector.
pub fn tool_probability<S: Real>(
    policy: &ToolPolicy<S>,
    features: &FeatureVector<S>,
    category: ToolCategory,
) -> Result<S, AgentError> {
    let w = policy.weights(category);
    if w.len() != FEATURE_ARITY {
        return Err(AgentError::Contract(format!(
            "{} weights for {FEATURE_ARITY} features",
            w.len()
        )));
    }
    let dot = w
        .iter()
        .zip(features.components())
        .fold(S::zero(), |acc, (w, x)| acc + *w * x);
    Ok(sigmoid(dot))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Draw the category from the two scores normalized to a distribution.
    #[default]
    Sample,
    /// Take the higher-scoring category; ties go to MEDICAL.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct Selection<'a> {
    pub tool: &'a ToolSpec,
    /// Category the policy chose, before any fallback.
    pub drawn: ToolCategory,
    /// Set when `drawn` had no tools and the other category was used.
    pub fallback: bool,
    /// Normalized probability of MEDICAL.
    pub p_medical: f64,
}

/// Picks a category from the policy scores, then a tool uniformly within it.
///
/// Sampling mode consumes one uniform draw for the category and one for the
/// tool, so the stream position is independent of the outcome.
pub fn select_tool<'a, S: Real, R: Rng + ?Sized>(
    policy: &ToolPolicy<S>,
    features: &FeatureVector<S>,
    registry: &'a ToolRegistry,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<Selection<'a>, AgentError> {
    if registry.is_empty() {
        return Err(AgentError::EmptyRegistry);
    }
    let medical = tool_probability(policy, features, ToolCategory::Medical)?;
    let general = tool_probability(policy, features, ToolCategory::General)?;
    let p_medical = Scalar::to_f64(&(medical / (medical + general)));
    let drawn = match mode {
        SelectionMode::Sample if rng.gen::<f64>() < p_medical => ToolCategory::Medical,
        SelectionMode::Sample => ToolCategory::General,
        SelectionMode::Greedy if medical >= general => ToolCategory::Medical,
        SelectionMode::Greedy => ToolCategory::General,
    };
    let (category, fallback) = if registry.in_category(drawn).is_empty() {
        (drawn.other(), true)
    } else {
        (drawn, false)
    };
    let pool = registry.in_category(category);
    let tool = pool[rng.gen_range(0..pool.len())];
    if fallback {
        tracing::debug!(?drawn, tool = %tool.name, "no tool in the drawn category; fell back");
    }
    Ok(Selection {
        tool,
        drawn,
        fallback,
        p_medical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::tools::{Tool, ToolResult};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::Value;
    use std::sync::Arc;

    struct Echo;

    impl Tool for Echo {
        fn invoke(&self, _: &Value) -> Result<ToolResult, String> {
            Ok(ToolResult::new("ok"))
        }
    }

    fn registry(general: &[&str], medical: &[&str]) -> ToolRegistry {
        let mut r = ToolRegistry::new();
        for n in general {
            r.register(ToolSpec::new(*n, ToolCategory::General, true, Arc::new(Echo))).unwrap();
        }
        for n in medical {
            r.register(ToolSpec::new(*n, ToolCategory::Medical, true, Arc::new(Echo))).unwrap();
        }
        r
    }

    fn features(rarity: f64) -> FeatureVector {
        FeatureVector {
            entity_rarity: rarity,
            estimated_hops: 2,
            medical_term_flag: true,
            step_index: 0,
            prior_failures: 0,
        }
    }

    #[test]
    fn sigmoid_values() {
        let p = ToolPolicy::<f64>::default();
        assert_eq!(tool_probability(&p, &features(6.0), ToolCategory::Medical).unwrap(), 0.5);
        let two = ToolPolicy {
            w_medical: vec![0.0, 1.0, 0.0, 0.0, 0.0],
            w_general: vec![0.0; 5],
        };
        let v = tool_probability(&two, &features(6.0), ToolCategory::Medical).unwrap();
        assert!((v - 0.8808).abs() < 1e-4);
        let bigger = tool_probability(&two.scaled(10.0), &features(6.0), ToolCategory::Medical).unwrap();
        assert!(bigger > v && bigger < 1.0);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) == 1.0);
    }

    #[test]
    fn arity_mismatch_is_a_contract_error() {
        let p = ToolPolicy {
            w_medical: vec![1.0; 3],
            w_general: vec![0.0; 5],
        };
        assert!(matches!(
            tool_probability(&p, &features(1.0), ToolCategory::Medical),
            Err(AgentError::Contract(_))
        ));
        assert!(p.validate().is_err());
    }

    #[test]
    fn falls_back_when_category_empty() {
        let r = registry(&["web_search"], &[]);
        let p = ToolPolicy {
            w_medical: vec![5.0, 0.0, 0.0, 0.0, 0.0],
            w_general: vec![-5.0, 0.0, 0.0, 0.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = select_tool(&p, &features(6.0), &r, SelectionMode::Sample, &mut rng).unwrap();
        assert_eq!(s.tool.name, "web_search");
        assert!(s.fallback);
        assert_eq!(s.drawn, ToolCategory::Medical);
        assert!(select_tool(&p, &features(6.0), &ToolRegistry::new(), SelectionMode::Sample, &mut rng).is_err());
    }

    #[test]
    fn dominant_medical_score_wins_mid_range_draw() {
        let r = registry(&["web_search"], &["medical_retriever"]);
        let p = ToolPolicy {
            w_medical: vec![2.0, 0.0, 0.0, 0.0, 0.0],
            w_general: vec![-2.0, 0.0, 0.0, 0.0, 0.0],
        };
        let mut rng = crate::testing::ScriptedRng::new(&[0.5, 0.0]);
        let s = select_tool(&p, &features(6.0), &r, SelectionMode::Sample, &mut rng).unwrap();
        assert!(s.p_medical > 0.99);
        assert_eq!(s.tool.name, "medical_retriever");
        let g = select_tool(&p, &features(6.0), &r, SelectionMode::Greedy, &mut rng).unwrap();
        assert_eq!(g.tool.category, ToolCategory::Medical);
    }

    #[test]
    fn equal_scores_split_evenly() {
        let r = registry(&["g1", "g2"], &["m1", "m2"]);
        let p = ToolPolicy::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let medical = (0..n)
            .filter(|_| {
                select_tool(&p, &features(1.0), &r, SelectionMode::Sample, &mut rng)
                    .unwrap()
                    .tool
                    .category
                    == ToolCategory::Medical
            })
            .count();
        let frac = medical as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    proptest! {
        #[test]
        fn positive_scaling_keeps_the_leading_category(
            wm in proptest::collection::vec(-1.0f64..1.0, 5),
            wg in proptest::collection::vec(-1.0f64..1.0, 5),
            rarity in 0.0f64..6.0,
            factor in 0.1f64..2.0,
        ) {
            let p = ToolPolicy { w_medical: wm, w_general: wg };
            let f = features(rarity);
            let lead = |p: &ToolPolicy| {
                let m = tool_probability(p, &f, ToolCategory::Medical).unwrap();
                let g = tool_probability(p, &f, ToolCategory::General).unwrap();
                m.partial_cmp(&g).unwrap()
            };
            let dots = |w: &[f64]| w.iter().zip(f.components()).map(|(a, b)| a * b).sum::<f64>();
            // scores stay below saturation here; skip near-ties that rounding could flip
            prop_assume!((dots(&p.w_medical) - dots(&p.w_general)).abs() > 1e-6);
            prop_assert_eq!(lead(&p), lead(&p.scaled(factor)));
        }
    }
}
