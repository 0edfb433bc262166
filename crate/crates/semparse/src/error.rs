//! Error types for the library crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape {shape:?} does not match {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("bad configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(String),
    #[error("vocabulary mismatch: checkpoint {side} vocab hash {expected} but corpus yields {actual}")]
    VocabMismatch {
        side: &'static str,
        expected: String,
        actual: String,
    },
}

#[derive(Debug, Error)]
pub enum LangError {
    #[error("parse error at token {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("execution error: {0}")]
    Exec(String),
    #[error("invalid knowledge base: {0}")]
    BadKb(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("template `{template}` has an invalid program pattern: {source}")]
    BadTemplate {
        template: String,
        #[source]
        source: LangError,
    },
    #[error("masking error: {0}")]
    Masking(String),
    #[error("normalization error: {0}")]
    Normalize(String),
    #[error("bad domain spec: {0}")]
    BadSpec(String),
    #[error("corpus i/o: {0}")]
    Io(String),
    #[error("corpus self-consistency violated for instance {instance}: {detail}")]
    Inconsistent { instance: String, detail: String },
    #[error(transparent)]
    Lang(#[from] LangError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("report error: {0}")]
    Report(String),
    #[error("i/o: {0}")]
    Io(String),
}
