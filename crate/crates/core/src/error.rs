use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid dialog act: {0}")]
    InvalidAct(String),
    #[error("user goal has no items")]
    EmptyGoal,
    #[error("goal repeats constraint slot {domain}.{slot}")]
    DuplicateGoalSlot { domain: String, slot: String },
    #[error("dialog {dialog}: turn {index} breaks USER/SYSTEM alternation")]
    Alternation { dialog: String, index: usize },
    #[error("dialog {dialog}: turn {index} has empty text")]
    EmptyTurn { dialog: String, index: usize },
    #[error("dialog {0}: outcome already set")]
    OutcomeAlreadySet(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("corpus has {available} dialogs, {required} required per repetition")]
    InsufficientCorpus { available: usize, required: usize },
    #[error("baseline needs at least one repetition")]
    NoRepetitions,
}

impl From<ModelError> for CorpusError {
    fn from(e: ModelError) -> Self {
        CorpusError::Validation(e.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GoalGenError {
    #[error("ontology has no domains with slots")]
    EmptyOntology,
    #[error("invalid goal config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShotError {
    #[error("shot pool holds {pool} entries, {k} requested")]
    PoolTooSmall { pool: usize, k: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("default_domains task description needs at least one shot")]
    MissingShotsForDomains,
    #[error("shot dialog {0} has no turns")]
    EmptyShotDialog(String),
    #[error("user utterance is empty")]
    EmptyUserUtterance,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by backend")]
    RateLimited,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("replay fixture exhausted after {0} completions")]
    FixtureExhausted(usize),
    #[error("generation is empty after post-processing")]
    EmptyGeneration,
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
}

impl LlmError {
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::Timeout | LlmError::RateLimited)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SystemError {
    #[error("system request timed out")]
    Timeout,
    #[error("system protocol error: {0}")]
    Protocol(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("dialog {dialog}: turn {index} carries no act annotation")]
    MissingActs { dialog: String, index: usize },
    #[error("no records to aggregate")]
    EmptyInput,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexError {
    #[error("token stream is empty")]
    EmptyStream,
    #[error("no within-utterance bigrams")]
    NoBigrams,
    #[error("stream has {tokens} tokens, at least {required} required")]
    TooShort { tokens: usize, required: usize },
    #[error("MTLD found zero factors")]
    ZeroFactors,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("no result.json found under {0}")]
    NoResults(PathBuf),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    GoalGen(#[from] GoalGenError),
    #[error(transparent)]
    Shot(#[from] ShotError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
