//! The `kgsynth` command line: synthesize QA datasets, run scored episodes,
//! analyze trajectories and generate the offline fixture bundle.
//!
//! Exit codes: 0 on success, 1 when a pipeline stage fails, 2 on configuration
//! or input errors. Nothing is written unless the whole command succeeds, and
//! nothing is written outside the output directory.

pub mod analyze;
pub mod config;
pub mod episodes;
pub mod fixture;
pub mod output;
pub mod synthesize;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use kgsynth_core::clients::{ClientError, ClientFactory, Mode};

use crate::config::{Overrides, PipelineConfig};
use crate::output::Staged;
use crate::synthesize::Stage;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }
}

/// Client construction failures are configuration problems.
pub(crate) fn client_error(section: &str) -> impl Fn(ClientError) -> CliError + '_ {
    move |e| CliError::Config(format!("clients.{section}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mock,
    Live,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mock => Mode::Mock,
            ModeArg::Live => Mode::Live,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kgsynth", version, about = "Multi-hop QA synthesis and tool-use episode tooling")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `global_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `paths.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Forces every client into one mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Last synthesis stage to run.
    #[arg(long, global = true, value_enum)]
    pub stage: Option<Stage>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine rare entities, expand, extract paths, and build calibrated masked QA.
    Synthesize,
    /// Run one episode per question and write trajectories and rewards.
    Episodes {
        /// Question file; defaults to `paths.questions`.
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Summarize reasoning patterns and tool behavior in a trajectory file.
    Analyze {
        trajectories: PathBuf,
    },
    /// Write the synthetic offline bundle (config, corpus, graph, mock scripts).
    MakeFixture,
}

/// Files written by a successful command, plus a human-readable report.
#[derive(Debug)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub report: String,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    PipelineConfig::load(
        path,
        &Overrides {
            seed: cli.seed,
            out: cli.out.clone(),
            mode: cli.mode.map(Mode::from),
        },
    )
}

/// Script paths are already resolved against the config directory by
/// [`PipelineConfig::load`], so the factory must not prefix them again.
fn factory() -> ClientFactory {
    ClientFactory::new(".")
}

fn text_of(staged: &Staged, name: &str) -> String {
    staged
        .get(name)
        .map(|b| String::from_utf8_lossy(b).into_owned())
        .unwrap_or_default()
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Synthesize => {
            let config = load_config(cli)?;
            let staged =
                synthesize::synthesize(&config, cli.stage.unwrap_or(Stage::Mask), &factory())?;
            let report = text_of(&staged, "summary.txt");
            Ok(Outcome {
                written: staged.commit(&config.paths.output)?,
                report,
            })
        }
        Command::Episodes { questions } => {
            let config = load_config(cli)?;
            let path = questions
                .clone()
                .or_else(|| config.paths.questions.clone())
                .ok_or_else(|| CliError::Config("no question file: pass --questions or set paths.questions".into()))?;
            let questions = episodes::read_questions(&path)?;
            let staged = episodes::episodes(&config, &questions, &factory())?;
            let report = text_of(&staged, "episodes_summary.json");
            Ok(Outcome {
                written: staged.commit(&config.paths.output)?,
                report,
            })
        }
        Command::Analyze { trajectories } => {
            let out_dir = match (&cli.out, &cli.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => load_config(cli)?.paths.output,
                (None, None) => PathBuf::from("out"),
            };
            let text = std::fs::read_to_string(trajectories)
                .map_err(|e| CliError::Config(format!("{}: {e}", trajectories.display())))?;
            let report = analyze::analyze_text(&text);
            let mut staged = Staged::new();
            staged.add_json("analysis.json", &report);
            staged.add("analysis.txt", report.to_text().into_bytes());
            Ok(Outcome {
                written: staged.commit(&out_dir)?,
                report: report.to_text(),
            })
        }
        Command::MakeFixture => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::Config("make-fixture needs --out".into()))?;
            let staged = fixture::make_fixture(cli.seed.unwrap_or(42));
            Ok(Outcome {
                written: staged.commit(&out)?,
                report: format!("fixture written to {}\n", out.display()),
            })
        }
    }
}
