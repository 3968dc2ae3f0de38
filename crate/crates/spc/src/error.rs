//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("difficulty {0} out of range [2, 8]")]
    DifficultyOutOfRange(usize),
    #[error("prefix is not chain-consistent at step {0}")]
    InconsistentPrefix(usize),
    #[error("perturbation {action} reproduces the input step `{step}`")]
    FixedPointPerturbation { action: String, step: String },
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("script exhausted after {0} consumed entries")]
    ScriptExhausted(usize),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("failed to parse generator output: {0}")]
    ParseFailure(String),
    #[error("sneaky step is textually identical to the original")]
    IdenticalStep,
    #[error("inconsistent reward inputs: {0}")]
    InconsistentInputs(String),
    #[error("empty sample pool: {0}")]
    EmptyPool(String),
    #[error("template field missing: {0}")]
    TemplateFieldMissing(String),
    #[error("no correct solutions for problem {0}")]
    NoCorrectSolutions(String),
    #[error("missing old logprob for sample {0}")]
    MissingOldLogprob(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged: {0}")]
    DivergenceDetected(String),
    #[error("step budget exhausted after {0} steps")]
    StepBudgetExhausted(usize),
    #[error("snapshot {role}/{version} not found in registry")]
    UnknownSnapshot { role: String, version: String },
    #[error("snapshot hash mismatch for {0}")]
    SnapshotHashMismatch(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unlabeled corpus record: {0}")]
    UnlabeledRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
