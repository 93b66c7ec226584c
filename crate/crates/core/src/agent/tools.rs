//! Tool contracts, the registry, and the four built-in tools.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AgentError;
use crate::clients::{DocumentReader, Embedder, WebSearch};
use crate::medtools::{
    diagnosis_posterior, embed_missing, rank_documents, Document, EvidenceTable, MedToolsError, PosteriorOptions,
    RankerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolCategory {
    General,
    Medical,
}

impl ToolCategory {
    pub fn other(self) -> Self {
        match self {
            ToolCategory::General => ToolCategory::Medical,
            ToolCategory::Medical => ToolCategory::General,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub payload: String,
    pub corrupted: bool,
}

impl ToolResult {
    pub fn new(payload: impl Into<String>) -> Self {
        Self {
            payload: payload.into(),
            corrupted: false,
        }
    }
}

/// A callable tool. Errors are plain messages; they become observations.
pub trait Tool: Send + Sync {
    fn invoke(&self, parameters: &Value) -> Result<ToolResult, String>;
}

#[derive(Clone)]
pub struct ToolSpec {
    pub name: String,
    pub category: ToolCategory,
    /// Whether calls count as retrieval when labeling trajectory steps.
    pub retrieval: bool,
    pub tool: Arc<dyn Tool>,
}

impl std::fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("category", &self.category)
            .field("retrieval", &self.retrieval)
            .finish_non_exhaustive()
    }
}

impl ToolSpec {
    pub fn new(name: impl Into<String>, category: ToolCategory, retrieval: bool, tool: Arc<dyn Tool>) -> Self {
        Self {
            name: name.into(),
            category,
            retrieval,
            tool,
        }
    }
}

/// Tools in registration order, with unique names.
#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), AgentError> {
        if self.get(&spec.name).is_some() {
            return Err(AgentError::DuplicateTool(spec.name));
        }
        self.tools.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn in_category(&self, category: ToolCategory) -> Vec<&ToolSpec> {
        self.tools.iter().filter(|t| t.category == category).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.iter()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

/// The `query` parameter, or the whole input when it is a bare string.
pub(crate) fn query_of(parameters: &Value) -> Option<&str> {
    match parameters {
        Value::String(s) => Some(s.as_str()),
        other => other.get("query").and_then(Value::as_str),
    }
}

fn required_query(parameters: &Value) -> Result<&str, String> {
    query_of(parameters)
        .filter(|q| !q.trim().is_empty())
        .ok_or_else(|| "missing `query` parameter".to_string())
}

pub struct WebSearchTool(pub Arc<dyn WebSearch>);

impl Tool for WebSearchTool {
    fn invoke(&self, parameters: &Value) -> Result<ToolResult, String> {
        let hits = self.0.search(required_query(parameters)?).map_err(|e| e.to_string())?;
        if hits.is_empty() {
            return Ok(ToolResult::new("no results"));
        }
        let lines: Vec<String> = hits
            .iter()
            .enumerate()
            .map(|(i, h)| match &h.url {
                Some(url) => format!("{}. {}: {} <{url}>", i + 1, h.title, h.snippet),
                None => format!("{}. {}: {}", i + 1, h.title, h.snippet),
            })
            .collect();
        Ok(ToolResult::new(lines.join("\n")))
    }
}

pub struct DocumentReadTool(pub Arc<dyn DocumentReader>);

impl Tool for DocumentReadTool {
    fn invoke(&self, parameters: &Value) -> Result<ToolResult, String> {
        let document = parameters
            .get("document")
            .and_then(Value::as_str)
            .or_else(|| query_of(parameters))
            .ok_or("missing `document` parameter")?;
        let question = parameters.get("question").and_then(Value::as_str).unwrap_or_default();
        self.0.read(document, question).map(ToolResult::new).map_err(|e| e.to_string())
    }
}

/// Ranks a fixed document collection against the query.
pub struct MedicalRetrieverTool {
    documents: Vec<Document<f64>>,
    embedder: Arc<dyn Embedder>,
    config: RankerConfig,
    top_k: usize,
}

impl MedicalRetrieverTool {
    pub fn new(
        mut documents: Vec<Document<f64>>,
        embedder: Arc<dyn Embedder>,
        config: RankerConfig,
        top_k: usize,
    ) -> Result<Self, MedToolsError> {
        config.validate()?;
        if top_k == 0 {
            return Err(MedToolsError::Argument("top_k must be positive".into()));
        }
        embed_missing(&mut documents, embedder.as_ref())?;
        Ok(Self {
            documents,
            embedder,
            config,
            top_k,
        })
    }
}

impl Tool for MedicalRetrieverTool {
    fn invoke(&self, parameters: &Value) -> Result<ToolResult, String> {
        let query = self.embedder.embed(required_query(parameters)?).map_err(|e| e.to_string())?;
        let ranked = rank_documents(&self.documents, &query, &self.config, self.top_k).map_err(|e| e.to_string())?;
        if ranked.is_empty() {
            return Ok(ToolResult::new("no documents"));
        }
        let lines: Vec<String> = ranked
            .iter()
            .map(|r| {
                let text = self
                    .documents
                    .iter()
                    .find(|d| d.id == r.id)
                    .map_or("", |d| d.text.as_str());
                format!("[{}] ({:.3}) {text}", r.id, r.score)
            })
            .collect();
        Ok(ToolResult::new(lines.join("\n")))
    }
}

/// Differential diagnosis over an evidence table. Takes `symptoms` as a list,
/// or a comma-separated `query`.
pub struct ClinicalReasonerTool {
    table: EvidenceTable<f64>,
    options: PosteriorOptions,
}

impl ClinicalReasonerTool {
    pub fn new(table: EvidenceTable<f64>, options: PosteriorOptions) -> Self {
        Self { table, options }
    }
}

impl Tool for ClinicalReasonerTool {
    fn invoke(&self, parameters: &Value) -> Result<ToolResult, String> {
        let symptoms: Vec<String> = match parameters.get("symptoms").and_then(Value::as_array) {
            Some(list) => list.iter().filter_map(Value::as_str).map(str::to_string).collect(),
            None => required_query(parameters)?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        };
        let posterior = diagnosis_posterior(&symptoms, &self.table, &self.options).map_err(|e| e.to_string())?;
        let mut ranked: Vec<(&String, &f64)> = posterior.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let lines: Vec<String> = ranked.iter().map(|(d, p)| format!("{d}: {p:.4}")).collect();
        Ok(ToolResult::new(lines.join("\n")))
    }
}
