//! Experiment configuration files.
//!
//! A config is one JSON document with the sections `backend`, `system`,
//! `prompt`, `shots`, `goals` and `run`. Relative paths resolve against the
//! directory holding the file. Credentials are never part of the file; the
//! HTTP backend names the environment variable to read instead.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::DiagnosticsConfig;
use crate::error::{CorpusError, HarnessError};
use crate::goalgen::{GoalConfig, RequirementsFormat};
use crate::llm::{GenerationParams, LlmBackendConfig, ModelProfile};
use crate::orchestrator::{default_farewell_patterns, RunConfig, ShotConfig};
use crate::prompt::TaskDescriptionKind;
use crate::shots::ShotKind;
use crate::system::{AnnotatorConfig, MockConfig, MockDatabase, SystemProvider};
use crate::Ontology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database: Option<PathBuf>,
    #[serde(default = "yes")]
    pub empty_act_bye: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "thirty")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub annotator: AnnotatorConfig,
}

fn yes() -> bool {
    true
}

fn thirty() -> f64 {
    30.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub task_description: TaskDescriptionKind,
    pub requirements_format: RequirementsFormat,
    /// Replacement task-description texts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_descriptions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phrase_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotsSection {
    pub kind: ShotKind,
    pub k: usize,
    /// Corpus whose dialogs serve as examples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
}

impl Default for ShotsSection {
    fn default() -> Self {
        let d = ShotConfig::default();
        ShotsSection {
            kind: d.kind,
            k: d.k,
            corpus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalsSection {
    pub ontology: PathBuf,
    #[serde(default)]
    pub generator: GoalConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub profile: ModelProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_sequences: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backoff_base_ms: Option<u64>,
}

impl GenerationSection {
    pub fn params(&self) -> GenerationParams {
        let mut p = GenerationParams::for_profile(self.profile);
        if let Some(v) = self.temperature {
            p.temperature = v;
        }
        if let Some(v) = self.max_tokens {
            p.max_tokens = v;
        }
        if let Some(v) = &self.stop_sequences {
            p.stop_sequences = v.clone();
        }
        p.request_seed = self.request_seed;
        if let Some(v) = self.retries {
            p.retries = v;
        }
        if let Some(v) = self.timeout_secs {
            p.timeout_secs = v;
        }
        if let Some(v) = self.backoff_base_ms {
            p.backoff_base_ms = v;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n_dialogs: usize,
    pub max_turns: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub generation: GenerationSection,
    pub farewell_patterns: Vec<String>,
    pub empty_generation_retries: u32,
    pub record_timing: bool,
    pub diagnostics: DiagnosticsConfig,
    /// Parent directory for run outputs.
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        let d = RunConfig::default();
        RunSection {
            n_dialogs: d.n_dialogs,
            max_turns: d.max_turns,
            seed: d.seed,
            parallelism: d.parallelism,
            generation: GenerationSection::default(),
            farewell_patterns: default_farewell_patterns(),
            empty_generation_retries: d.empty_generation_retries,
            record_timing: d.record_timing,
            diagnostics: d.diagnostics,
            output_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub backend: LlmBackendConfig,
    pub system: SystemSection,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(default)]
    pub shots: ShotsSection,
    pub goals: GoalsSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_dialogs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

fn config_error(path: &Path, e: CorpusError) -> HarnessError {
    match e {
        CorpusError::Schema { pointer, message } => {
            let pointer = if pointer.is_empty() { "/" } else { pointer.as_str() };
            HarnessError::Config(format!("{}: at {pointer}: {message}", path.display()))
        }
        other => HarnessError::Config(format!("{}: {other}", path.display())),
    }
}

impl HarnessConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        crate::corpus::from_json_str(text).map_err(|e| config_error(Path::new("<config>"), e))
    }

    /// Reads a config file; returns it with the directory its relative
    /// paths refer to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), HarnessError> {
        let cfg: HarnessConfig = crate::corpus::read_json(path).map_err(|e| config_error(path, e))?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        let dir = dir.canonicalize().unwrap_or(dir);
        cfg.validate()?;
        Ok((cfg, dir))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.system.kind {
            SystemKind::Mock if self.system.database.is_none() => {
                return Err(HarnessError::Config("system.database is required for the mock system".into()))
            }
            SystemKind::Http if self.system.endpoint.is_none() => {
                return Err(HarnessError::Config("system.endpoint is required for the http system".into()))
            }
            _ => {}
        }
        if self.shots.k > 0 && self.shots.corpus.is_none() {
            return Err(HarnessError::Config("shots.corpus is required when shots.k > 0".into()));
        }
        self.run_config().validate()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        if let Some(n) = o.n_dialogs {
            self.run.n_dialogs = n;
        }
        if let Some(dir) = &o.output_dir {
            self.run.output_dir = dir.clone();
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            n_dialogs: self.run.n_dialogs,
            max_turns: self.run.max_turns,
            seed: self.run.seed,
            parallelism: self.run.parallelism,
            shots: ShotConfig {
                kind: self.shots.kind,
                k: self.shots.k,
            },
            task_description: self.prompt.task_description,
            requirements_format: self.prompt.requirements_format,
            generation: self.run.generation.params(),
            farewell_patterns: self.run.farewell_patterns.clone(),
            empty_generation_retries: self.run.empty_generation_retries,
            record_timing: self.run.record_timing,
            goals: self.goals.generator.clone(),
            diagnostics: self.run.diagnostics.clone(),
        }
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the snapshot and the seed.
    /// Where outputs go and how many workers produce them do not change
    /// the id.
    pub fn run_id(&self) -> String {
        let mut snap = self.snapshot();
        if let Some(run) = snap.get_mut("run").and_then(|r| r.as_object_mut()) {
            run.remove("output_dir");
            run.remove("parallelism");
        }
        let mut h = Sha256::new();
        h.update(snap.to_string().as_bytes());
        h.update(b"\nseed=");
        h.update(self.run.seed.to_string().as_bytes());
        hex::encode(h.finalize())[..16].to_string()
    }

    /// Copy with every relative path joined onto `base`.
    pub fn resolved(&self, base: &Path) -> HarnessConfig {
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut c = self.clone();
        if let LlmBackendConfig::Replay { fixture } = &mut c.backend {
            *fixture = join(fixture);
        }
        c.system.database = c.system.database.as_deref().map(join);
        c.prompt.task_descriptions = c.prompt.task_descriptions.as_deref().map(join);
        c.prompt.phrase_table = c.prompt.phrase_table.as_deref().map(join);
        c.shots.corpus = c.shots.corpus.as_deref().map(join);
        c.goals.ontology = join(&c.goals.ontology);
        c.run.output_dir = join(&c.run.output_dir);
        c
    }

    /// Builds the system provider. Paths must already be resolved.
    pub fn system_provider(&self, ontology: &Ontology) -> Result<SystemProvider, HarnessError> {
        match self.system.kind {
            SystemKind::Mock => {
                let path = self.system.database.as_ref().expect("validated");
                let db = MockDatabase::load(path).map_err(|e| HarnessError::Config(format!("mock database: {e}")))?;
                let unknown = db.check_against(ontology);
                if !unknown.is_empty() {
                    log::warn!("mock database values outside the ontology: {}", unknown.join(", "));
                }
                Ok(SystemProvider::mock(
                    db,
                    ontology.clone(),
                    self.system.annotator.clone(),
                    MockConfig {
                        empty_act_bye: self.system.empty_act_bye,
                    },
                ))
            }
            SystemKind::Http => Ok(SystemProvider::Http {
                endpoint: self.system.endpoint.clone().expect("validated"),
                timeout: Duration::from_secs_f64(self.system.timeout_secs.max(0.001)),
                annotator: std::sync::Arc::new(crate::system::Annotator::new(ontology, self.system.annotator.clone())),
            }),
        }
    }
}
