//! Knowledge graph with context-enriched relations.
//!
//! Relations are directed. Neighborhoods used by expansion and radius queries
//! ignore direction; path extraction in [`crate::synthesis`] follows it.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, EntityDiscoverer};

/// Predicate attached to discovered entities when the discoverer does not name one.
pub const DISCOVERED_PREDICATE: &str = "discovered_link";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(EntityId),
    #[error("relation `{0}` links an entity to itself")]
    SelfLoop(EntityId),
    #[error("relation predicate must be nonempty")]
    EmptyPredicate,
    #[error("corpus frequency {0} is outside [0, 1]")]
    InvalidFrequency(f64),
    #[error("entity `{id}` rarity flag disagrees with frequency {frequency} under threshold {tau}")]
    RarityMismatch { id: EntityId, frequency: f64, tau: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("expansion failed at step {step}: {source}")]
    Expansion {
        step: usize,
        #[source]
        source: ClientError,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = KgError> = std::result::Result<T, E>;

/// Opaque, cheaply clonable entity identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(Arc<str>);

impl EntityId {
    pub fn new(id: impl AsRef<str>) -> Self {
        Self(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Stable id derived from a surface name: lowercased, whitespace runs become `_`.
    pub fn from_name(name: &str) -> Self {
        let slug = name
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join("_");
        Self::new(slug)
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(value: &str) -> Self {
        Self::new(value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub corpus_frequency: f64,
    pub is_rare: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialty: Option<String>,
}

impl Entity {
    /// Builds an entity whose rarity flag is derived from `frequency < tau`.
    pub fn new(id: impl Into<EntityId>, name: impl Into<String>, frequency: f64, tau: f64) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            corpus_frequency: frequency,
            is_rare: frequency < tau,
            specialty: None,
        }
    }

    /// An entity produced by discovery. Its corpus frequency is unknown and recorded as 0.
    pub fn discovered(name: &str) -> Self {
        Self {
            id: EntityId::from_name(name),
            name: name.to_string(),
            corpus_frequency: 0.0,
            is_rare: true,
            specialty: None,
        }
    }

    pub fn with_specialty(mut self, specialty: impl Into<String>) -> Self {
        self.specialty = Some(specialty.into());
        self
    }
}

impl From<String> for EntityId {
    fn from(value: String) -> Self {
        Self::new(value)
    }
}

/// A directed fact with optional temporal, spatial and clinical context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub subject: EntityId,
    pub predicate: Arc<str>,
    pub object: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinical_context: Option<Arc<str>>,
}

impl Relation {
    pub fn new(subject: impl Into<EntityId>, predicate: &str, object: impl Into<EntityId>) -> Self {
        Self {
            subject: subject.into(),
            predicate: Arc::from(predicate),
            object: object.into(),
            temporal: None,
            spatial: None,
            clinical_context: None,
        }
    }

    pub fn with_temporal(mut self, value: &str) -> Self {
        self.temporal = Some(Arc::from(value));
        self
    }

    pub fn with_spatial(mut self, value: &str) -> Self {
        self.spatial = Some(Arc::from(value));
        self
    }

    pub fn with_clinical_context(mut self, value: &str) -> Self {
        self.clinical_context = Some(Arc::from(value));
        self
    }

    fn triple(&self) -> (EntityId, Arc<str>, EntityId) {
        (self.subject.clone(), self.predicate.clone(), self.object.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, Entity>,
    relations: Vec<Relation>,
    triples: HashSet<(EntityId, Arc<str>, EntityId)>,
    outgoing: BTreeMap<EntityId, Vec<usize>>,
    incoming: BTreeMap<EntityId, Vec<usize>>,
    /// ASCII-lowercased name to the smallest id carrying it.
    by_name: HashMap<String, EntityId>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.relations == other.relations
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Relations are always directed.
    pub fn directed(&self) -> bool {
        true
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn find_by_name(&self, name: &str) -> Option<&Entity> {
        self.by_name.get(&name.to_ascii_lowercase()).and_then(|id| self.entities.get(id))
    }

    /// Surface name of an entity, falling back to its id.
    pub fn name_of<'a>(&'a self, id: &'a EntityId) -> &'a str {
        self.entities.get(id).map_or(id.as_str(), |e| e.name.as_str())
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<()> {
        if !(0.0..=1.0).contains(&entity.corpus_frequency) {
            return Err(KgError::InvalidFrequency(entity.corpus_frequency));
        }
        if self.entities.contains_key(&entity.id) {
            return Err(KgError::DuplicateEntity(entity.id));
        }
        let slot = self.by_name.entry(entity.name.to_ascii_lowercase()).or_insert_with(|| entity.id.clone());
        if entity.id < *slot {
            *slot = entity.id.clone();
        }
        self.entities.insert(entity.id.clone(), entity);
        Ok(())
    }

    /// Inserts a relation; returns `false` when the (subject, predicate, object)
    /// triple already exists, in which case the graph is unchanged.
    pub fn add_relation(&mut self, relation: Relation) -> Result<bool> {
        if relation.predicate.is_empty() {
            return Err(KgError::EmptyPredicate);
        }
        if relation.subject == relation.object {
            return Err(KgError::SelfLoop(relation.subject));
        }
        for end in [&relation.subject, &relation.object] {
            if !self.entities.contains_key(end) {
                return Err(KgError::UnknownEntity(end.clone()));
            }
        }
        if !self.triples.insert(relation.triple()) {
            return Ok(false);
        }
        let idx = self.relations.len();
        self.outgoing.entry(relation.subject.clone()).or_default().push(idx);
        self.incoming.entry(relation.object.clone()).or_default().push(idx);
        self.relations.push(relation);
        Ok(true)
    }

    /// Relations leaving (or entering) `id`, in insertion order.
    pub fn edges(&self, id: &EntityId, direction: Direction) -> impl Iterator<Item = &Relation> {
        let index = match direction {
            Direction::Outgoing => &self.outgoing,
            Direction::Incoming => &self.incoming,
        };
        index
            .get(id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.relations[i])
    }

    /// Entities one relation away from `entity`, in either direction.
    pub fn neighbors(&self, entity: &EntityId) -> Result<BTreeSet<EntityId>> {
        if !self.contains(entity) {
            return Err(KgError::UnknownEntity(entity.clone()));
        }
        let out = self.edges(entity, Direction::Outgoing).map(|r| r.object.clone());
        let inc = self.edges(entity, Direction::Incoming).map(|r| r.subject.clone());
        Ok(out.chain(inc).collect())
    }

    /// Induced subgraph on every entity within `radius` undirected hops of `seed`.
    pub fn subgraph_around(&self, seed: &EntityId, radius: usize) -> Result<KnowledgeGraph> {
        if !self.contains(seed) {
            return Err(KgError::UnknownEntity(seed.clone()));
        }
        let mut depth: BTreeMap<EntityId, usize> = BTreeMap::new();
        depth.insert(seed.clone(), 0);
        let mut queue = VecDeque::from([seed.clone()]);
        while let Some(id) = queue.pop_front() {
            let d = depth[&id];
            if d == radius {
                continue;
            }
            for next in self.neighbors(&id)? {
                if !depth.contains_key(&next) {
                    depth.insert(next.clone(), d + 1);
                    queue.push_back(next);
                }
            }
        }
        self.induced(depth.keys())
    }

    /// Subgraph restricted to `ids`, keeping every relation with both endpoints inside.
    pub fn induced<'a>(&self, ids: impl IntoIterator<Item = &'a EntityId>) -> Result<KnowledgeGraph> {
        let mut sub = KnowledgeGraph::new();
        for id in ids {
            let entity = self
                .entities
                .get(id)
                .ok_or_else(|| KgError::UnknownEntity(id.clone()))?;
            sub.add_entity(entity.clone())?;
        }
        for relation in &self.relations {
            if sub.contains(&relation.subject) && sub.contains(&relation.object) {
                sub.add_relation(relation.clone())?;
            }
        }
        Ok(sub)
    }

    /// Confirms every rarity flag agrees with `frequency < tau`.
    pub fn check_rarity(&self, tau: f64) -> Result<()> {
        for e in self.entities.values() {
            if e.is_rare != (e.corpus_frequency < tau) {
                return Err(KgError::RarityMismatch {
                    id: e.id.clone(),
                    frequency: e.corpus_frequency,
                    tau,
                });
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for entity in self.entities.values() {
            serde_json::to_writer(&mut out, &GraphRecordRef::Entity(entity))
                .map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        for relation in &self.relations {
            serde_json::to_writer(&mut out, &GraphRecordRef::Relation(relation))
                .map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads line-delimited records. Entity and relation lines may be interleaved;
    /// closure is checked once every line has been read.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<KnowledgeGraph> {
        let mut entities = Vec::new();
        let mut relations = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: GraphRecord = serde_json::from_str(&line).map_err(|e| KgError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            match record {
                GraphRecord::Entity(e) => entities.push((idx + 1, e)),
                GraphRecord::Relation(r) => relations.push((idx + 1, r)),
            }
        }
        let mut graph = KnowledgeGraph::new();
        for (line, e) in entities {
            graph.add_entity(e).map_err(|err| KgError::Parse {
                line,
                message: err.to_string(),
            })?;
        }
        for (line, r) in relations {
            graph.add_relation(r).map_err(|err| KgError::Parse {
                line,
                message: err.to_string(),
            })?;
        }
        Ok(graph)
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GraphRecord {
    Entity(Entity),
    Relation(Relation),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GraphRecordRef<'a> {
    Entity(&'a Entity),
    Relation(&'a Relation),
}

/// Which rule produced the next entity of an expansion walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Uniform,
    Discover,
    /// The discover branch returned nothing and there was no neighbor to fall back on.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandOutcome {
    pub next: EntityId,
    pub branch: Branch,
}

/// One expansion step from `current`.
///
/// A fair coin picks between a uniform draw over the undirected neighborhood and
/// a call to the discoverer. An empty neighborhood forces discovery. Discovered
/// entities are linked from `current`; the walk moves to the first of them. If
/// discovery returns nothing the walk falls back to a neighbor, or stays put.
pub fn expand_step<R: Rng + ?Sized>(
    graph: &mut KnowledgeGraph,
    current: &EntityId,
    rng: &mut R,
    discoverer: &dyn EntityDiscoverer,
) -> Result<ExpandOutcome> {
    let neighbors: Vec<EntityId> = graph.neighbors(current)?.into_iter().collect();
    let coin: f64 = rng.gen();
    if coin < 0.5 && !neighbors.is_empty() {
        let pick = rng.gen_range(0..neighbors.len());
        return Ok(ExpandOutcome {
            next: neighbors[pick].clone(),
            branch: Branch::Uniform,
        });
    }

    let context_name = graph.name_of(current).to_string();
    let found = discoverer
        .discover_entities(&context_name)
        .map_err(|source| KgError::Expansion { step: 0, source })?;

    let mut first = None;
    for discovery in found {
        let id = match graph.find_by_name(&discovery.name) {
            Some(existing) => existing.id.clone(),
            None => {
                let entity = Entity::discovered(&discovery.name);
                let id = entity.id.clone();
                if !graph.contains(&id) {
                    graph.add_entity(entity)?;
                }
                id
            }
        };
        if &id == current {
            continue;
        }
        let predicate = discovery.predicate.as_deref().unwrap_or(DISCOVERED_PREDICATE);
        graph.add_relation(Relation::new(current.clone(), predicate, id.clone()))?;
        first.get_or_insert(id);
    }

    match first {
        Some(next) => Ok(ExpandOutcome {
            next,
            branch: Branch::Discover,
        }),
        None if !neighbors.is_empty() => {
            let pick = rng.gen_range(0..neighbors.len());
            Ok(ExpandOutcome {
                next: neighbors[pick].clone(),
                branch: Branch::Uniform,
            })
        }
        None => Ok(ExpandOutcome {
            next: current.clone(),
            branch: Branch::Stalled,
        }),
    }
}

/// Result of [`expand_walk`]: the enlarged graph and the entity visited at each step.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub graph: KnowledgeGraph,
    pub trail: Vec<ExpandOutcome>,
}

/// Runs `steps` expansion steps from `seed`, threading the current entity.
pub fn expand_walk<R: Rng + ?Sized>(
    mut graph: KnowledgeGraph,
    seed: &EntityId,
    steps: usize,
    rng: &mut R,
    discoverer: &dyn EntityDiscoverer,
) -> Result<Expansion> {
    if steps == 0 {
        return Err(KgError::Argument("expansion needs at least one step".into()));
    }
    if !graph.contains(seed) {
        return Err(KgError::UnknownEntity(seed.clone()));
    }
    let mut current = seed.clone();
    let mut trail = Vec::with_capacity(steps);
    for step in 0..steps {
        let outcome = expand_step(&mut graph, &current, rng, discoverer).map_err(|e| match e {
            KgError::Expansion { source, .. } => KgError::Expansion { step, source },
            other => other,
        })?;
        current = outcome.next.clone();
        trail.push(outcome);
    }
    Ok(Expansion { graph, trail })
}
