//! State/question features consumed by the tool policy.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AgentState;
use crate::mining::Lexicon;
use crate::num::Real;

pub const FEATURE_ARITY: usize = 5;

/// Upper bound on the relational-cue count.
pub const MAX_ESTIMATED_HOPS: u32 = 8;

/// Frequencies at or below zero are treated as this, so unseen entities get a
/// large but finite rarity.
const MIN_FREQUENCY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<S = f64> {
    /// Largest `-log10(frequency)` over entities named in the question.
    pub entity_rarity: S,
    pub estimated_hops: u32,
    pub medical_term_flag: bool,
    pub step_index: u32,
    pub prior_failures: u32,
}

impl<S: Real> FeatureVector<S> {
    pub fn components(&self) -> [S; FEATURE_ARITY] {
        let count = |n: u32| S::from_usize(n as usize);
        [
            self.entity_rarity,
            count(self.estimated_hops),
            if self.medical_term_flag { S::one() } else { S::zero() },
            count(self.step_index),
            count(self.prior_failures),
        ]
    }
}

/// Entity names with corpus frequencies, plus medical vocabulary.
#[derive(Debug, Clone, Default)]
pub struct RarityIndex {
    entities: Lexicon,
    frequencies: HashMap<String, f64>,
    medical: Lexicon,
}

/// Generic clinical vocabulary used when no medical lexicon is configured.
pub const DEFAULT_MEDICAL_TERMS: &[&str] = &[
    "disease", "syndrome", "disorder", "deficiency", "mutation", "gene", "drug", "therapy", "treatment",
    "diagnosis", "symptom", "clinical trial", "dose", "inhibitor", "carcinoma", "tumor", "infection",
    "patient", "enzyme", "receptor",
];

impl RarityIndex {
    pub fn new<I, N>(frequencies: I, medical_terms: &[N]) -> Self
    where
        I: IntoIterator<Item = (N, f64)>,
        N: AsRef<str>,
    {
        let frequencies: HashMap<String, f64> = frequencies
            .into_iter()
            .map(|(n, f)| (n.as_ref().trim().to_string(), f))
            .collect();
        let mut names: Vec<&String> = frequencies.keys().collect();
        names.sort();
        Self {
            entities: Lexicon::new(names),
            medical: Lexicon::new(medical_terms.iter().map(AsRef::as_ref)),
            frequencies,
        }
    }

    pub fn with_default_medical_terms<I, N>(frequencies: I) -> Self
    where
        I: IntoIterator<Item = (N, f64)>,
        N: AsRef<str>,
    {
        let freq: Vec<(String, f64)> = frequencies.into_iter().map(|(n, f)| (n.as_ref().to_string(), f)).collect();
        Self::new(freq, &DEFAULT_MEDICAL_TERMS.iter().map(|t| t.to_string()).collect::<Vec<_>>())
    }

    /// Known entity names mentioned in `text`.
    pub fn entities_in<'a>(&'a self, text: &str) -> Vec<&'a str> {
        self.entities.find_in(text)
    }

    pub fn frequency(&self, name: &str) -> Option<f64> {
        self.frequencies.get(name).copied()
    }

    pub fn rarity(&self, name: &str) -> f64 {
        match self.frequencies.get(name) {
            Some(&f) => -(f.max(MIN_FREQUENCY)).log10(),
            None => 0.0,
        }
    }

    /// True when `text` contains any medical vocabulary.
    pub fn mentions_medical(&self, text: &str) -> bool {
        !self.medical.find_in(text).is_empty()
    }
}

fn hop_cues() -> &'static Regex {
    static CUES: OnceLock<Regex> = OnceLock::new();
    CUES.get_or_init(|| Regex::new(r"(?i)\bof the\b|\bthat was\b|\bwhich\b|\w's\b").expect("static regex"))
}

/// Number of relational connectives in `question`, capped at [`MAX_ESTIMATED_HOPS`].
pub fn estimate_hops(question: &str) -> u32 {
    (hop_cues().find_iter(question).count() as u32).min(MAX_ESTIMATED_HOPS)
}

pub fn extract_features<S: Real>(state: &AgentState, question: &str, index: &RarityIndex) -> FeatureVector<S> {
    let rarity = index
        .entities_in(question)
        .into_iter()
        .map(|n| index.rarity(n))
        .fold(0.0f64, f64::max);
    FeatureVector {
        entity_rarity: S::from_f64(rarity).unwrap_or_else(S::zero),
        estimated_hops: estimate_hops(question),
        medical_term_flag: index.mentions_medical(question),
        step_index: state.step_index,
        prior_failures: state.failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index() -> RarityIndex {
        RarityIndex::with_default_medical_terms([("Zellweger syndrome", 1e-6), ("aspirin", 1e-3), ("PEX1", 0.0)])
    }

    #[test]
    fn no_entities_means_zero() {
        let f: FeatureVector = extract_features(&AgentState::new("q"), "what is the capital city", &index());
        assert_eq!(f.entity_rarity, 0.0);
        assert!(!f.medical_term_flag);
        assert_eq!(f.estimated_hops, 0);
    }

    #[test]
    fn rarity_is_max_negative_log() {
        let idx = index();
        let f: FeatureVector = extract_features(&AgentState::new("q"), "Does zellweger syndrome respond to aspirin?", &idx);
        assert!((f.entity_rarity - 6.0).abs() < 1e-12);
        assert!(f.medical_term_flag);
        let g: FeatureVector = extract_features(&AgentState::new("q"), "aspirin", &idx);
        assert!((g.entity_rarity - 3.0).abs() < 1e-12);
        // zero frequency clamps to a finite rarity
        assert!((idx.rarity("PEX1") - 12.0).abs() < 1e-12);
    }

    #[test]
    fn hop_cues_are_counted_and_capped() {
        assert_eq!(estimate_hops("the mother of the founder of the company which made the drug"), 3);
        assert_eq!(estimate_hops("the author's advisor's lab"), 2);
        assert_eq!(estimate_hops(&"which ".repeat(20)), MAX_ESTIMATED_HOPS);
    }

    #[test]
    fn components_follow_field_order() {
        let mut s = AgentState::new("q");
        s.step_index = 3;
        s.failures = 1;
        let f: FeatureVector = extract_features(&s, "aspirin", &index());
        assert_eq!(f.components(), [3.0, 0.0, 0.0, 3.0, 1.0]);
    }
}
