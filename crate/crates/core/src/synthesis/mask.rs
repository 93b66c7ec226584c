//! Entity-masked reasoning scaffolds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ReasoningPath;
use crate::kg::KnowledgeGraph;

pub const MASK_TOKEN: &str = "[MASK]";

/// One `([MASK], predicate, [MASK])` step with the relation's context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedStep {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinical_context: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskedScaffold {
    pub steps: Vec<MaskedStep>,
}

impl MaskedScaffold {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every string in the scaffold, in step order.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().flat_map(|s| {
            [Some(&s.subject), Some(&s.predicate), Some(&s.object)]
                .into_iter()
                .chain([s.temporal.as_ref(), s.spatial.as_ref(), s.clinical_context.as_ref()])
                .flatten()
                .map(String::as_str)
        })
    }

    /// True when some text outside the mask tokens contains one of `names`.
    ///
    /// Mask tokens themselves are skipped, so a name that happens to be a
    /// substring of `[MASK]` is not reported.
    pub fn leaks_any<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> bool {
        let names: Vec<&str> = names.into_iter().filter(|n| !n.is_empty()).collect();
        self.texts()
            .flat_map(|t| t.split(MASK_TOKEN))
            .any(|piece| names.iter().any(|n| piece.contains(n)))
    }
}

/// Replaces each entity-name occurrence in `text` with the mask token.
///
/// Text between existing mask tokens never contains a name afterwards.
fn scrub(text: &str, names: &[&str]) -> String {
    text.split(MASK_TOKEN)
        .map(|piece| scrub_piece(piece, names))
        .collect::<Vec<_>>()
        .join(MASK_TOKEN)
}

fn scrub_piece(piece: &str, names: &[&str]) -> String {
    // earliest occurrence, longest name on ties
    let hit = names
        .iter()
        .filter_map(|n| piece.find(n).map(|at| (at, n.len())))
        .min_by_key(|&(at, len)| (at, std::cmp::Reverse(len)));
    match hit {
        None => piece.to_string(),
        Some((at, len)) => format!("{}{MASK_TOKEN}{}", &piece[..at], scrub_piece(&piece[at + len..], names)),
    }
}

/// Masks every entity slot of `path` positionally.
///
/// Predicates and context are kept as written, except that any entity surface
/// name appearing inside them is masked too.
pub fn mask_path(path: &ReasoningPath, graph: &KnowledgeGraph) -> MaskedScaffold {
    let mut names: Vec<&str> = Vec::new();
    for id in path.entities() {
        names.push(graph.name_of(id));
    }
    names.retain(|n| !n.is_empty());
    names.sort_unstable();
    names.dedup();
    let keep = |value: &Option<Arc<str>>| value.as_deref().map(|v| scrub(v, &names));
    let steps = path
        .relations()
        .iter()
        .map(|rel| MaskedStep {
            subject: MASK_TOKEN.to_string(),
            predicate: scrub(&rel.predicate, &names),
            object: MASK_TOKEN.to_string(),
            temporal: keep(&rel.temporal),
            spatial: keep(&rel.spatial),
            clinical_context: keep(&rel.clinical_context),
        })
        .collect();
    MaskedScaffold { steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Entity, Relation};
    use proptest::prelude::*;

    fn path_of(names: &[&str], preds: &[&str]) -> (KnowledgeGraph, ReasoningPath) {
        let mut g = KnowledgeGraph::new();
        for (i, n) in names.iter().enumerate() {
            g.add_entity(Entity::new(format!("id{i}"), *n, 0.0, 1e-6)).unwrap();
        }
        let rels: Vec<_> = preds
            .iter()
            .enumerate()
            .map(|(i, p)| Relation::new(format!("id{i}"), p, format!("id{}", i + 1)))
            .collect();
        for r in &rels {
            g.add_relation(r.clone()).unwrap();
        }
        (g, ReasoningPath::new(rels).unwrap())
    }

    #[test]
    fn single_hop() {
        let (g, p) = path_of(&["aspirin", "pain"], &["treats"]);
        let m = mask_path(&p, &g);
        assert_eq!(m.steps.len(), 1);
        let s = &m.steps[0];
        assert_eq!((s.subject.as_str(), s.predicate.as_str(), s.object.as_str()), ("[MASK]", "treats", "[MASK]"));
    }

    #[test]
    fn three_hops_keep_predicate_order_and_context() {
        let (g, p) = path_of(&["Alpha", "Beta", "Gamma", "Delta"], &["p1", "p2", "p3"]);
        let mut rels = p.relations().to_vec();
        rels[1] = rels[1].clone().with_temporal("1998").with_clinical_context("phase III");
        let m = mask_path(&ReasoningPath::new(rels).unwrap(), &g);
        let preds: Vec<_> = m.steps.iter().map(|s| s.predicate.as_str()).collect();
        assert_eq!(preds, ["p1", "p2", "p3"]);
        assert_eq!(m.steps[1].temporal.as_deref(), Some("1998"));
        assert_eq!(m.steps[1].clinical_context.as_deref(), Some("phase III"));
    }

    #[test]
    fn entity_named_like_the_mask() {
        let (g, p) = path_of(&["[MASK]", "b"], &["treats"]);
        let m = mask_path(&p, &g);
        assert_eq!(m.steps[0].subject, MASK_TOKEN);
        assert_eq!(m.steps[0].object, MASK_TOKEN);
        assert!(!m.leaks_any(["[MASK]", "b"]));
    }

    #[test]
    fn names_inside_context_are_masked() {
        let mut g = KnowledgeGraph::new();
        g.add_entity(Entity::new("x", "Imatinib", 0.0, 1e-6)).unwrap();
        g.add_entity(Entity::new("y", "CML", 0.0, 1e-6)).unwrap();
        let r = Relation::new("x", "treats", "y").with_clinical_context("Imatinib-resistant CML excluded");
        g.add_relation(r.clone()).unwrap();
        let m = mask_path(&ReasoningPath::new(vec![r]).unwrap(), &g);
        assert_eq!(
            m.steps[0].clinical_context.as_deref(),
            Some("[MASK]-resistant [MASK] excluded")
        );
        assert!(!m.leaks_any(["Imatinib", "CML"]));
    }

    #[test]
    fn serializes_as_list_of_steps() {
        let (g, p) = path_of(&["aspirin", "pain"], &["treats"]);
        let json = serde_json::to_string(&mask_path(&p, &g)).unwrap();
        assert_eq!(json, r#"[{"subject":"[MASK]","predicate":"treats","object":"[MASK]"}]"#);
    }

    proptest! {
        #[test]
        fn never_leaks_entity_names(
            names in proptest::collection::btree_set("[A-Za-z\\[\\] ]{1,6}", 2..6),
            preds in proptest::collection::vec("[A-Za-z\\[\\] _]{1,12}", 5),
            ctx in "[A-Za-z\\[\\] ]{0,20}",
        ) {
            let names: Vec<String> = names.into_iter().collect();
            let hops = names.len() - 1;
            let mut g = KnowledgeGraph::new();
            for (i, n) in names.iter().enumerate() {
                g.add_entity(Entity::new(format!("node-{i}"), n.clone(), 0.0, 1e-6)).unwrap();
            }
            let rels: Vec<_> = (0..hops)
                .map(|i| Relation::new(format!("node-{i}"), &preds[i], format!("node-{}", i + 1)).with_spatial(&ctx))
                .collect();
            let p = ReasoningPath::new(rels).unwrap();
            let m = mask_path(&p, &g);
            prop_assert_eq!(m.len(), hops);
            prop_assert!(!m.leaks_any(names.iter().map(String::as_str)));
            for s in &m.steps {
                prop_assert_eq!(s.subject.as_str(), MASK_TOKEN);
                prop_assert_eq!(s.object.as_str(), MASK_TOKEN);
            }
        }
    }
}
