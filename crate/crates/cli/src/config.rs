//! Pipeline configuration, loaded from TOML.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Client sections name an environment variable for credentials; no secret is
//! ever read from or written to the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use kgsynth_core::agent::{EpisodeConfig, SelectionMode, ToolPolicy};
use kgsynth_core::clients::{stable_seed, ClientConfig, Mode};
use kgsynth_core::medtools::RankerConfig;
use kgsynth_core::mining::RarityConfig;
use kgsynth_core::num::decimal_serde;
use kgsynth_core::reward::{EfficiencyRules, RewardWeights};
use kgsynth_core::synthesis::{MixConfig, QuestionConfig, DEFAULT_NODE_CAP};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub global_seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub rarity: RarityConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub ranker: RankerConfig,
    #[serde(default)]
    pub reward: RewardWeights,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub questions: QuestionConfig,
    #[serde(default)]
    pub episodes: EpisodesConfig,
    #[serde(default)]
    pub clients: ClientsConfig,
}

fn default_seed() -> u64 {
    42
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            global_seed: default_seed(),
            paths: PathsConfig::default(),
            rarity: RarityConfig::default(),
            mix: MixConfig::default(),
            ranker: RankerConfig::default(),
            reward: RewardWeights::default(),
            budgets: Budgets::default(),
            questions: QuestionConfig::default(),
            episodes: EpisodesConfig::default(),
            clients: ClientsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of text files, or JSONL of `{"id", "text"}`.
    pub corpus: Option<PathBuf>,
    /// One entity name per line.
    pub lexicon: Option<PathBuf>,
    /// Base knowledge graph in JSONL.
    pub graph: Option<PathBuf>,
    pub output: PathBuf,
    /// Questions for `episodes`, JSONL of `{"id"?, "question", "answer"}`.
    pub questions: Option<PathBuf>,
    /// Documents for the medical retriever, JSONL.
    pub documents: Option<PathBuf>,
    /// Evidence table for the clinical reasoner, JSON.
    pub evidence: Option<PathBuf>,
    /// Medical vocabulary, one term per line.
    pub medical_terms: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            lexicon: None,
            graph: None,
            output: PathBuf::from("out"),
            questions: None,
            documents: None,
            evidence: None,
            medical_terms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Reasoner turns per episode.
    pub max_steps: u32,
    /// Calibration evaluation rounds per item.
    pub max_rounds: u32,
    /// Largest subgraph handed to the exhaustive path search.
    pub node_cap: usize,
    /// Expansion steps per seed entity.
    pub expansion_steps: usize,
    /// Undirected radius of the subgraph cut around each seed; shrunk to fit `node_cap`.
    pub subgraph_radius: usize,
    pub retriever_top_k: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_steps: 8,
            max_rounds: 4,
            node_cap: DEFAULT_NODE_CAP,
            expansion_steps: 3,
            subgraph_radius: 6,
            retriever_top_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodesConfig {
    #[serde(with = "decimal_serde")]
    pub corruption_rate: Ratio<i64>,
    pub selection: SelectionMode,
    /// Consecutive episodes sharing one advantage baseline.
    pub group_size: usize,
    pub policy: ToolPolicy<f64>,
    pub efficiency: EfficiencyRules,
}

impl Default for EpisodesConfig {
    fn default() -> Self {
        Self {
            corruption_rate: EpisodeConfig::default().corruption_rate,
            selection: SelectionMode::default(),
            group_size: 4,
            policy: ToolPolicy::default(),
            efficiency: EfficiencyRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientsConfig {
    pub generator: ClientConfig,
    pub discoverer: ClientConfig,
    pub rarity_judge: ClientConfig,
    /// Calibration panel, keyed by evaluator name.
    pub evaluators: BTreeMap<String, ClientConfig>,
    pub embedder: ClientConfig,
    pub search: ClientConfig,
    pub reader: ClientConfig,
    pub reasoner: Option<ClientConfig>,
    pub preference_judge: Option<ClientConfig>,
    pub efficiency_judge: Option<ClientConfig>,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        Self {
            generator: ClientConfig::mock("builtin:template"),
            discoverer: ClientConfig::mock("builtin:synthetic"),
            rarity_judge: ClientConfig::mock("builtin:keep_all"),
            evaluators: BTreeMap::new(),
            embedder: ClientConfig::mock("builtin:hash"),
            search: ClientConfig::mock("builtin:synthetic"),
            reader: ClientConfig::mock("builtin:excerpt"),
            reasoner: None,
            preference_judge: None,
            efficiency_judge: None,
        }
    }
}

impl ClientsConfig {
    fn all_mut(&mut self) -> impl Iterator<Item = &mut ClientConfig> {
        [
            &mut self.generator,
            &mut self.discoverer,
            &mut self.rarity_judge,
            &mut self.embedder,
            &mut self.search,
            &mut self.reader,
        ]
        .into_iter()
        .chain(self.evaluators.values_mut())
        .chain(self.reasoner.iter_mut())
        .chain(self.preference_judge.iter_mut())
        .chain(self.efficiency_judge.iter_mut())
    }

    fn all(&self) -> impl Iterator<Item = (&str, &ClientConfig)> {
        [
            ("generator", &self.generator),
            ("discoverer", &self.discoverer),
            ("rarity_judge", &self.rarity_judge),
            ("embedder", &self.embedder),
            ("search", &self.search),
            ("reader", &self.reader),
        ]
        .into_iter()
        .chain(self.evaluators.iter().map(|(k, v)| (k.as_str(), v)))
        .chain(self.reasoner.iter().map(|c| ("reasoner", c)))
        .chain(self.preference_judge.iter().map(|c| ("preference_judge", c)))
        .chain(self.efficiency_judge.iter().map(|c| ("efficiency_judge", c)))
    }
}

/// Command-line overrides applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    /// Parses, resolves paths against the file's directory, applies overrides
    /// and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.corpus,
            &mut p.lexicon,
            &mut p.graph,
            &mut p.questions,
            &mut p.documents,
            &mut p.evidence,
            &mut p.medical_terms,
        ]
        .into_iter()
        .flatten()
        {
            if slot.is_relative() {
                *slot = base.join(&*slot);
            }
        }
        if p.output.is_relative() {
            p.output = base.join(&p.output);
        }
        for client in self.clients.all_mut() {
            if let Some(script) = client.script.as_mut() {
                if !script.starts_with("builtin:") && Path::new(script.as_str()).is_relative() {
                    *script = base.join(&*script).display().to_string();
                }
            }
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.global_seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.paths.output = out.clone();
        }
        if let Some(mode) = overrides.mode {
            for client in self.clients.all_mut() {
                client.mode = mode;
            }
        }
    }

    /// Checks every section and that every configured input path exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.rarity.validate().map_err(|e| config_error(format!("rarity: {e}")))?;
        self.mix.validate().map_err(|e| config_error(format!("mix: {e}")))?;
        self.ranker.validate().map_err(|e| config_error(format!("ranker: {e}")))?;
        let zero = Ratio::from_integer(0);
        let w = &self.reward;
        if w.alpha < zero || w.beta < zero || w.gamma < zero {
            return Err(config_error("reward weights must be non-negative"));
        }
        self.episode_config()
            .validate()
            .map_err(|e| config_error(format!("episodes: {e}")))?;
        self.episodes
            .policy
            .validate()
            .map_err(|e| config_error(format!("episodes.policy: {e}")))?;
        if self.episodes.group_size == 0 {
            return Err(config_error("episodes.group_size must be positive"));
        }
        let b = &self.budgets;
        if b.max_rounds == 0 || b.node_cap == 0 || b.expansion_steps == 0 || b.retriever_top_k == 0 {
            return Err(config_error(
                "budgets.max_rounds, node_cap, expansion_steps and retriever_top_k must be positive",
            ));
        }
        for (name, client) in self.clients.all() {
            client.validate().map_err(|e| config_error(format!("clients.{name}: {e}")))?;
            if client.mode == Mode::Mock {
                let script = client.script.as_deref().unwrap_or_default();
                if !script.starts_with("builtin:") && !Path::new(script).exists() {
                    return Err(config_error(format!("clients.{name}: mock script {script} not found")));
                }
            }
        }
        let p = &self.paths;
        for (name, path) in [
            ("corpus", &p.corpus),
            ("lexicon", &p.lexicon),
            ("graph", &p.graph),
            ("questions", &p.questions),
            ("documents", &p.documents),
            ("evidence", &p.evidence),
            ("medical_terms", &p.medical_terms),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(config_error(format!("paths.{name}: {} not found", path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            budget: self.budgets.max_steps,
            corruption_rate: self.episodes.corruption_rate,
            selection: self.episodes.selection,
        }
    }

    /// Seed of one pipeline stage, independent of every other stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.global_seed, stage)
    }
}

pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    stable_seed(stage, &global_seed.to_string())
}

pub(crate) fn required<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| config_error(format!("paths.{name} is required for this command")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn decimals_parse_exactly() {
        let c = PipelineConfig::from_toml_str("[rarity]\ntau_rare = 1e-3\n[mix]\nalpha = \"0.65\"\n").unwrap();
        assert_eq!(c.rarity.tau_rare, Ratio::new(1, 1000));
        assert_eq!(c.mix.alpha, Ratio::new(13, 20));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml_str("[budgets]\nmax_step = 3").is_err());
    }

    #[test]
    fn missing_input_is_a_config_error() {
        let mut c = PipelineConfig::default();
        c.paths.corpus = Some(PathBuf::from("/definitely/not/here"));
        assert!(matches!(c.validate(), Err(CliError::Config(m)) if m.contains("paths.corpus")));
    }

    #[test]
    fn overrides_apply() {
        let mut c = PipelineConfig::default();
        c.apply(&Overrides {
            seed: Some(7),
            out: Some(PathBuf::from("/tmp/x")),
            mode: Some(Mode::Live),
        });
        assert_eq!(c.global_seed, 7);
        assert_eq!(c.paths.output, PathBuf::from("/tmp/x"));
        assert_eq!(c.clients.generator.mode, Mode::Live);
        // live clients without endpoints are rejected
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_seeds_differ_by_stage_and_seed() {
        assert_ne!(stage_seed(42, "expand"), stage_seed(42, "episodes"));
        assert_ne!(stage_seed(42, "expand"), stage_seed(43, "expand"));
        assert_eq!(stage_seed(42, "expand"), stage_seed(42, "expand"));
    }
}
