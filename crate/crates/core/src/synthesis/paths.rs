//! Directed simple-path enumeration and exact longest-valid-path search.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::SynthesisError;
use crate::kg::{Direction, EntityId, KnowledgeGraph, Relation};

/// Subgraphs larger than this are refused by [`longest_valid_path`] unless the
/// caller raises the cap.
pub const DEFAULT_NODE_CAP: usize = 14;

/// Clinical-context marker that disqualifies a relation under [`DefaultValidity`].
pub const REFUTED_MARKER: &str = "refuted";

/// An ordered chain of relations with no repeated entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Relation>", into = "Vec<Relation>")]
pub struct ReasoningPath {
    relations: Vec<Relation>,
}

impl ReasoningPath {
    pub fn new(relations: Vec<Relation>) -> Result<Self, SynthesisError> {
        if relations.is_empty() {
            return Err(SynthesisError::InvalidPath("a path needs at least one relation".into()));
        }
        for pair in relations.windows(2) {
            if pair[0].object != pair[1].subject {
                return Err(SynthesisError::InvalidPath(format!(
                    "`{}` does not continue from `{}`",
                    pair[1].subject, pair[0].object
                )));
            }
        }
        let mut seen = HashSet::new();
        let entities = std::iter::once(&relations[0].subject).chain(relations.iter().map(|r| &r.object));
        for id in entities {
            if !seen.insert(id) {
                return Err(SynthesisError::InvalidPath(format!("entity `{id}` repeats")));
            }
        }
        Ok(Self { relations })
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn hop_count(&self) -> usize {
        self.relations.len()
    }

    /// Entity ids in visiting order; one longer than the relation list.
    pub fn entities(&self) -> Vec<&EntityId> {
        std::iter::once(&self.relations[0].subject)
            .chain(self.relations.iter().map(|r| &r.object))
            .collect()
    }

    pub fn start(&self) -> &EntityId {
        &self.relations[0].subject
    }

    pub fn terminal(&self) -> &EntityId {
        &self.relations[self.relations.len() - 1].object
    }
}

impl TryFrom<Vec<Relation>> for ReasoningPath {
    type Error = SynthesisError;

    fn try_from(value: Vec<Relation>) -> Result<Self, Self::Error> {
        ReasoningPath::new(value)
    }
}

impl From<ReasoningPath> for Vec<Relation> {
    fn from(value: ReasoningPath) -> Self {
        value.relations
    }
}

/// Decides whether a candidate path is medically admissible.
pub trait PathValidity: Sync {
    fn accepts(&self, path: &[Relation]) -> bool;

    /// True when rejecting a path implies rejecting every extension of it;
    /// lets the search prune.
    fn prefix_closed(&self) -> bool {
        false
    }
}

impl<F: Fn(&[Relation]) -> bool + Sync> PathValidity for F {
    fn accepts(&self, path: &[Relation]) -> bool {
        self(path)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl PathValidity for AcceptAll {
    fn accepts(&self, _: &[Relation]) -> bool {
        true
    }

    fn prefix_closed(&self) -> bool {
        true
    }
}

/// Rejects paths that use any predicate twice.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistinctPredicates;

impl PathValidity for DistinctPredicates {
    fn accepts(&self, path: &[Relation]) -> bool {
        path.iter()
            .enumerate()
            .all(|(i, r)| path[..i].iter().all(|q| q.predicate != r.predicate))
    }

    fn prefix_closed(&self) -> bool {
        true
    }
}

/// Rejects paths through a relation whose clinical context is the given marker.
#[derive(Debug, Clone)]
pub struct RejectContext {
    pub marker: String,
}

impl Default for RejectContext {
    fn default() -> Self {
        Self {
            marker: REFUTED_MARKER.to_string(),
        }
    }
}

impl PathValidity for RejectContext {
    fn accepts(&self, path: &[Relation]) -> bool {
        !path.iter().any(|r| {
            r.clinical_context
                .as_deref()
                .is_some_and(|c| c.trim().eq_ignore_ascii_case(&self.marker))
        })
    }

    fn prefix_closed(&self) -> bool {
        true
    }
}

/// Both [`DistinctPredicates`] and [`RejectContext`] with the `refuted` marker.
#[derive(Debug, Clone, Default)]
pub struct DefaultValidity {
    context: RejectContext,
}

impl PathValidity for DefaultValidity {
    fn accepts(&self, path: &[Relation]) -> bool {
        DistinctPredicates.accepts(path) && self.context.accepts(path)
    }

    fn prefix_closed(&self) -> bool {
        true
    }
}

/// Every simple directed path with at most `max_depth` relations, each once.
///
/// Paths are grown one layer at a time, so the output is ordered by length and,
/// within a length, by the graph's relation order.
pub fn enumerate_paths(graph: &KnowledgeGraph, max_depth: usize) -> Result<Vec<ReasoningPath>, SynthesisError> {
    if max_depth == 0 {
        return Err(SynthesisError::Argument("max_depth must be at least 1".into()));
    }
    let mut all: Vec<ReasoningPath> = Vec::new();
    let mut frontier: Vec<Vec<Relation>> = graph.relations().iter().map(|r| vec![r.clone()]).collect();
    let mut depth = 1;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for path in &frontier {
            if depth < max_depth {
                let tail = &path[path.len() - 1].object;
                for rel in graph.edges(tail, Direction::Outgoing) {
                    let revisits = rel.object == path[0].subject || path.iter().any(|p| p.object == rel.object);
                    if !revisits {
                        let mut longer = path.clone();
                        longer.push(rel.clone());
                        next.push(longer);
                    }
                }
            }
        }
        all.extend(frontier.into_iter().map(|relations| ReasoningPath { relations }));
        frontier = next;
        depth += 1;
    }
    Ok(all)
}

/// Compares two equal-length paths: entity-id sequence first, then predicates.
fn tie_order(a: &[Relation], b: &[Relation]) -> Ordering {
    let ids = |p: &[Relation]| {
        std::iter::once(p[0].subject.clone())
            .chain(p.iter().map(|r| r.object.clone()))
            .collect::<Vec<_>>()
    };
    ids(a)
        .cmp(&ids(b))
        .then_with(|| a.iter().map(|r| &r.predicate).cmp(b.iter().map(|r| &r.predicate)))
}

struct Search<'a> {
    graph: &'a KnowledgeGraph,
    validity: &'a dyn PathValidity,
    prune: bool,
    on_path: HashSet<EntityId>,
    stack: Vec<Relation>,
    best: Option<Vec<Relation>>,
}

impl Search<'_> {
    fn consider(&mut self) {
        let better = match &self.best {
            None => true,
            Some(best) => match self.stack.len().cmp(&best.len()) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => tie_order(&self.stack, best) == Ordering::Less,
            },
        };
        if better {
            self.best = Some(self.stack.clone());
        }
    }

    fn extend_from(&mut self, node: &EntityId) {
        for rel in self.graph.edges(node, Direction::Outgoing) {
            if self.on_path.contains(&rel.object) {
                continue;
            }
            self.stack.push(rel.clone());
            let valid = self.validity.accepts(&self.stack);
            if valid {
                self.consider();
            }
            if valid || !self.prune {
                self.on_path.insert(rel.object.clone());
                self.extend_from(&rel.object);
                self.on_path.remove(&rel.object);
            }
            self.stack.pop();
        }
    }
}

/// Exact longest simple directed path accepted by `validity`.
///
/// Ties in length go to the lexicographically smallest entity-id sequence, then
/// the smallest predicate sequence. Exhaustive, so subgraphs above `node_cap`
/// entities are refused.
pub fn longest_valid_path(
    graph: &KnowledgeGraph,
    validity: &dyn PathValidity,
    node_cap: usize,
) -> Result<ReasoningPath, SynthesisError> {
    if graph.relation_count() == 0 {
        return Err(SynthesisError::NoRelations);
    }
    if graph.entity_count() > node_cap {
        return Err(SynthesisError::NodeCapExceeded {
            nodes: graph.entity_count(),
            cap: node_cap,
        });
    }
    let mut search = Search {
        graph,
        validity,
        prune: validity.prefix_closed(),
        on_path: HashSet::new(),
        stack: Vec::new(),
        best: None,
    };
    let starts: BTreeMap<&EntityId, ()> = graph.relations().iter().map(|r| (&r.subject, ())).collect();
    for start in starts.into_keys() {
        search.on_path.insert(start.clone());
        search.extend_from(start);
        search.on_path.remove(start);
    }
    search
        .best
        .map(|relations| ReasoningPath { relations })
        .ok_or(SynthesisError::NoValidPath)
}
