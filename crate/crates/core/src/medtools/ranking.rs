//! Relevance/authority blended document ranking.

use std::cmp::Ordering;
use std::io::BufRead;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::MedToolsError;
use crate::clients::Embedder;
use crate::num::{decimal_serde, Real, Scalar};

type Result<T> = std::result::Result<T, MedToolsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GuidelineStatus {
    #[default]
    None,
    Cited,
    Guideline,
}

impl GuidelineStatus {
    /// Grade in `[0, 1]`: 0, 1/2 and 1.
    pub fn grade<S: Scalar>(self) -> S {
        match self {
            GuidelineStatus::None => S::zero(),
            GuidelineStatus::Cited => S::one() / (S::one() + S::one()),
            GuidelineStatus::Guideline => S::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<S = f64> {
    pub id: String,
    pub text: String,
    pub impact_factor: S,
    #[serde(default)]
    pub guideline_status: GuidelineStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<S>>,
}

impl<S: Scalar> Document<S> {
    pub fn new(id: impl Into<String>, text: impl Into<String>, impact_factor: S, status: GuidelineStatus) -> Result<Self> {
        let doc = Self {
            id: id.into(),
            text: text.into(),
            impact_factor,
            guideline_status: status,
            embedding: None,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn with_embedding(mut self, embedding: Vec<S>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.impact_factor.is_finite_value() || self.impact_factor < S::zero() {
            return Err(MedToolsError::Document {
                id: self.id.clone(),
                reason: format!("impact factor {:?} is negative or not finite", self.impact_factor),
            });
        }
        Ok(())
    }
}

/// Ranking weights. Stored exactly; converted to the scoring scalar on use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    /// Weight of relevance against authority.
    #[serde(with = "decimal_serde")]
    pub lambda: Ratio<i64>,
    /// Impact factor at which the impact component saturates.
    #[serde(with = "decimal_serde")]
    pub impact_cap: Ratio<i64>,
    #[serde(with = "decimal_serde")]
    pub impact_weight: Ratio<i64>,
    #[serde(with = "decimal_serde")]
    pub guideline_weight: Ratio<i64>,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            lambda: Ratio::new(2, 5),
            impact_cap: Ratio::from_integer(50),
            impact_weight: Ratio::new(1, 2),
            guideline_weight: Ratio::new(1, 2),
        }
    }
}

impl RankerConfig {
    pub fn with_lambda(lambda: Ratio<i64>) -> Result<Self> {
        let config = Self {
            lambda,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = Ratio::from_integer(0);
        let one = Ratio::from_integer(1);
        if self.lambda < zero || self.lambda > one {
            return Err(MedToolsError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.impact_cap <= zero {
            return Err(MedToolsError::Config(format!("impact_cap {} must be positive", self.impact_cap)));
        }
        if self.impact_weight < zero || self.guideline_weight < zero || self.impact_weight + self.guideline_weight != one {
            return Err(MedToolsError::Config(format!(
                "authority weights {} and {} must be nonnegative and sum to 1",
                self.impact_weight, self.guideline_weight
            )));
        }
        Ok(())
    }
}

/// Weighted mean of the capped, normalized impact factor and the guideline grade.
pub fn authority_score<S: Scalar>(doc: &Document<S>, config: &RankerConfig) -> S {
    let cap = S::from_ratio(&config.impact_cap);
    let impact = S::min_of(doc.impact_factor.clone() / cap, S::one());
    S::from_ratio(&config.impact_weight) * impact
        + S::from_ratio(&config.guideline_weight) * doc.guideline_status.grade::<S>()
}

/// `λ·relevance + (1−λ)·authority`.
pub fn blend_score<S: Scalar>(relevance: S, authority: S, config: &RankerConfig) -> S {
    let lambda = S::from_ratio(&config.lambda);
    lambda.clone() * relevance + (S::one() - lambda) * authority
}

/// Cosine similarity mapped from `[-1, 1]` onto `[0, 1]`.
pub fn relevance<S: Real>(query: &[S], embedding: &[S]) -> Result<S> {
    if query.len() != embedding.len() {
        return Err(MedToolsError::ArityMismatch {
            expected: query.len(),
            found: embedding.len(),
        });
    }
    let dot = query.iter().zip(embedding).fold(S::zero(), |acc, (a, b)| acc + *a * *b);
    let norm = |v: &[S]| v.iter().fold(S::zero(), |acc, x| acc + *x * *x).sqrt();
    let (nq, nd) = (norm(query), norm(embedding));
    if nq == S::zero() || nd == S::zero() {
        return Err(MedToolsError::ZeroVector);
    }
    let cosine = (dot / (nq * nd)).max(-S::one()).min(S::one());
    let two = S::one() + S::one();
    Ok((cosine + S::one()) / two)
}

pub fn score_document<S: Real>(doc: &Document<S>, query_embedding: &[S], config: &RankerConfig) -> Result<S> {
    let embedding = doc
        .embedding
        .as_deref()
        .ok_or_else(|| MedToolsError::MissingEmbedding(doc.id.clone()))?;
    let rel = relevance(query_embedding, embedding)?;
    Ok(blend_score(rel, authority_score(doc, config), config))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedDocument<S = f64> {
    pub id: String,
    pub score: S,
}

/// Top `k` by score descending, ties by id ascending.
pub fn order_by_score<S: Scalar>(mut scored: Vec<RankedDocument<S>>, k: usize) -> Vec<RankedDocument<S>> {
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    scored.truncate(k);
    scored
}

pub fn rank_documents<S: Real>(
    docs: &[Document<S>],
    query_embedding: &[S],
    config: &RankerConfig,
    k: usize,
) -> Result<Vec<RankedDocument<S>>> {
    if k == 0 {
        return Err(MedToolsError::Argument("k must be positive".into()));
    }
    config.validate()?;
    let scored = docs
        .iter()
        .map(|d| {
            Ok(RankedDocument {
                id: d.id.clone(),
                score: score_document(d, query_embedding, config)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(order_by_score(scored, k))
}

/// Fills in embeddings for documents that lack one.
pub fn embed_missing(docs: &mut [Document<f64>], embedder: &dyn Embedder) -> Result<()> {
    for doc in docs.iter_mut().filter(|d| d.embedding.is_none()) {
        doc.embedding = Some(embedder.embed(&doc.text)?);
    }
    Ok(())
}

/// Reads a line-delimited JSON document corpus. Blank lines are skipped.
pub fn read_documents(path: &Path) -> Result<Vec<Document<f64>>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document<f64> = serde_json::from_str(&line).map_err(|e| MedToolsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn doc(id: &str, impact: f64, status: GuidelineStatus, emb: Vec<f64>) -> Document<f64> {
        Document::new(id, "", impact, status).unwrap().with_embedding(emb)
    }

    #[test]
    fn authority_examples() {
        let c = RankerConfig::default();
        let none = Document::new("a", "", 0.0, GuidelineStatus::None).unwrap();
        assert_eq!(authority_score(&none, &c), 0.0);
        let top = Document::new("b", "", 80.0, GuidelineStatus::Guideline).unwrap();
        assert_eq!(authority_score(&top, &c), 1.0);
        let exact = Document::<Ratio<i64>>::new("c", "", Ratio::from_integer(25), GuidelineStatus::Cited).unwrap();
        assert_eq!(authority_score(&exact, &c), Ratio::new(1, 2));
    }

    #[test]
    fn blend_endpoints_exact() {
        let c = RankerConfig::default();
        let r = |n, d| Ratio::<i64>::new(n, d);
        assert_eq!(blend_score(r(1, 1), r(0, 1), &c), r(2, 5));
        assert_eq!(blend_score(r(0, 1), r(1, 1), &c), r(3, 5));
        assert_eq!(blend_score(r(1, 2), r(4, 5), &c), r(17, 25));
    }

    #[test]
    fn guideline_wins_equal_relevance() {
        let c = RankerConfig::default();
        let docs = [
            doc("a", 10.0, GuidelineStatus::None, vec![1.0, 1.0]),
            doc("b", 10.0, GuidelineStatus::Guideline, vec![1.0, 1.0]),
        ];
        let ranked = rank_documents(&docs, &[1.0, 0.0], &c, 5).unwrap();
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].id, "b");
    }

    #[test]
    fn constructed_three_document_order() {
        let c = RankerConfig::default();
        let docs = [
            doc("c", 0.0, GuidelineStatus::None, vec![1.0, 0.0]),
            doc("b", 50.0, GuidelineStatus::Guideline, vec![-1.0, 0.0]),
            doc("a", 30.0, GuidelineStatus::Guideline, vec![0.0, 1.0]),
        ];
        let ranked = rank_documents(&docs, &[1.0, 0.0], &c, 3).unwrap();
        let ids: Vec<_> = ranked.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        for (r, want) in ranked.iter().zip([0.68, 0.60, 0.40]) {
            assert!((r.score - want).abs() < 1e-12, "{} {}", r.id, r.score);
        }
    }

    #[test]
    fn ties_break_by_id() {
        let c = RankerConfig::default();
        let docs = [
            doc("z", 5.0, GuidelineStatus::Cited, vec![0.0, 1.0]),
            doc("m", 5.0, GuidelineStatus::Cited, vec![0.0, 1.0]),
        ];
        let ranked = rank_documents(&docs, &[0.0, 2.0], &c, 1).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].id, "m");
    }

    #[test]
    fn scoring_errors() {
        let c = RankerConfig::default();
        let bare = Document::new("x", "", 1.0, GuidelineStatus::None).unwrap();
        assert!(matches!(score_document(&bare, &[1.0], &c), Err(MedToolsError::MissingEmbedding(_))));
        let d = doc("y", 1.0, GuidelineStatus::None, vec![1.0, 0.0, 0.0]);
        assert!(matches!(score_document(&d, &[1.0, 0.0], &c), Err(MedToolsError::ArityMismatch { .. })));
        assert!(matches!(score_document(&d, &[0.0, 0.0, 0.0], &c), Err(MedToolsError::ZeroVector)));
        assert!(rank_documents(&[d], &[1.0, 0.0, 0.0], &c, 0).is_err());
        assert!(rank_documents::<f64>(&[], &[1.0], &c, 3).unwrap().is_empty());
        assert!(Document::new("n", "", -1.0, GuidelineStatus::None).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RankerConfig::with_lambda(Ratio::new(3, 2)).is_err());
        let c = RankerConfig {
            impact_weight: Ratio::new(3, 4),
            ..RankerConfig::default()
        };
        assert!(c.validate().is_err());
        let parsed: RankerConfig = serde_json::from_str(r#"{"lambda": 0.4}"#).unwrap();
        assert_eq!(parsed, RankerConfig::default());
    }

    #[test]
    fn corpus_round_trip() {
        let dir = std::env::temp_dir().join(format!("kgsynth-docs-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("docs.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"d1\",\"text\":\"t\",\"impact_factor\":3.5,\"guideline_status\":\"CITED\",\"embedding\":[1,0]}\n\n\
             {\"id\":\"d2\",\"text\":\"u\",\"impact_factor\":0}\n",
        )
        .unwrap();
        let docs = read_documents(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].guideline_status, GuidelineStatus::Cited);
        assert_eq!(docs[1].embedding, None);
        std::fs::write(&path, "{\"id\":\"d1\",\"text\":\"t\",\"impact_factor\":-2}\n").unwrap();
        assert!(read_documents(&path).is_err());
        std::fs::remove_dir_all(dir).ok();
    }

    proptest! {
        #[test]
        fn score_is_monotone_and_affine(
            rel in 0i64..=100, auth in 0i64..=100, bump in 1i64..=20, lam in 0i64..=10,
        ) {
            let c = RankerConfig::with_lambda(Ratio::new(lam, 10)).unwrap();
            let q = |v: i64| BigRational::new(v.into(), 100.into());
            let base = blend_score(q(rel), q(auth), &c);
            prop_assert!(blend_score(q(rel + bump), q(auth), &c) >= base);
            prop_assert!(blend_score(q(rel), q(auth + bump), &c) >= base);
            // affine: the score of a midpoint is the midpoint of the scores
            let two = BigRational::from_integer(2.into());
            let upper = blend_score(q(rel + bump), q(auth), &c);
            let midpoint = blend_score((q(rel) + q(rel + bump)) / two.clone(), q(auth), &c);
            prop_assert_eq!(midpoint * two, upper + base.clone());
            if lam == 10 {
                prop_assert_eq!(base.clone(), q(rel));
            }
            if lam == 0 {
                prop_assert_eq!(base, q(auth));
            }
        }

        #[test]
        fn monotone_transform_preserves_order(
            scores in proptest::collection::vec(0u8..6, 0..12),
            k in 1usize..15,
        ) {
            let docs: Vec<_> = scores
                .iter()
                .enumerate()
                .map(|(i, s)| RankedDocument { id: format!("d{i:02}"), score: f64::from(*s) / 5.0 })
                .collect();
            let transformed: Vec<_> = docs
                .iter()
                .map(|d| RankedDocument { id: d.id.clone(), score: (3.0 * d.score).exp() + 1.0 })
                .collect();
            let a: Vec<_> = order_by_score(docs, k).into_iter().map(|d| d.id).collect();
            let b: Vec<_> = order_by_score(transformed, k).into_iter().map(|d| d.id).collect();
            prop_assert_eq!(a, b);
        }
    }
}
