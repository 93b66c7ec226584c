use serde::Serialize;

use super::features::RarityIndex;
use crate::kg::{Entity, EntityId, KnowledgeGraph, Relation};

/// Rarity threshold applied to entities the agent learns about mid-episode.
const KNOWLEDGE_TAU: f64 = 1e-6;

/// What the agent has seen so far in one episode.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AgentState {
    /// Rendered dialogue turns, oldest first.
    pub context: Vec<String>,
    /// Entities observed so far, linked from the entities of the query that surfaced them.
    #[serde(skip)]
    pub knowledge: KnowledgeGraph,
    /// Queries explored, in order.
    pub history: Vec<String>,
    /// Completed reason-act-observe cycles.
    pub step_index: u32,
    /// Steps whose observation was an error or corrupted.
    pub failures: u32,
}

impl AgentState {
    pub fn new(question: &str) -> Self {
        Self {
            context: vec![format!("Question: {question}")],
            ..Self::default()
        }
    }

    fn ensure_entity(&mut self, name: &str, index: &RarityIndex) -> EntityId {
        let id = EntityId::from_name(name);
        if !self.knowledge.contains(&id) {
            let frequency = index.frequency(name).unwrap_or(0.0);
            self.knowledge
                .add_entity(Entity::new(id.clone(), name, frequency, KNOWLEDGE_TAU))
                .expect("entity absent, checked above");
        }
        id
    }

    /// Folds one completed cycle into the state. Knowledge only grows.
    pub fn record(&mut self, turn: String, tool: Option<(&str, &str)>, observation: &str, failed: bool, index: &RarityIndex) {
        self.context.push(turn);
        if let Some((tool_name, query)) = tool {
            self.history.push(query.to_string());
            let sources: Vec<EntityId> = index
                .entities_in(query)
                .into_iter()
                .map(|n| self.ensure_entity(n, index))
                .collect();
            let found: Vec<EntityId> = index
                .entities_in(observation)
                .into_iter()
                .map(|n| self.ensure_entity(n, index))
                .collect();
            for s in &sources {
                for o in found.iter().filter(|o| *o != s) {
                    self.knowledge
                        .add_relation(Relation::new(s.clone(), tool_name, o.clone()))
                        .expect("both endpoints were just ensured");
                }
            }
        }
        if failed {
            self.failures += 1;
        }
        self.step_index += 1;
    }
}
