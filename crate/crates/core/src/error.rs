use thiserror::Error;

use crate::geometry::RelationKind;
use crate::model::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid bounding box {0:?}: expected 0 <= min < max <= 1 on both axes")]
    InvalidBox([f64; 4]),
    #[error("image has zero width or height")]
    EmptyImage,
}

#[derive(Debug, Error, PartialEq)]
pub enum VocabularyError {
    #[error("vocabulary has no {0}")]
    Empty(&'static str),
    #[error("duplicate {kind} entry `{text}`")]
    Duplicate { kind: &'static str, text: String },
    #[error("object `{object}` collides with {kind} `{word}`")]
    Ambiguous {
        object: String,
        kind: &'static str,
        word: String,
    },
    #[error("vocabulary entry `{0}` is blank")]
    Blank(String),
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("vocabulary too small: need {needed} distinct {what}, have {available}")]
    VocabularyTooSmall {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("scenario {scenario} does not support {n_objects} objects")]
    UnsupportedCount { scenario: Scenario, n_objects: usize },
    #[error("no vocabulary objects found in `{0}`")]
    NoObjectsFound(String),
    #[error("text generation failed after {attempts} attempts: {message}")]
    ClientFailure { attempts: u32, message: String },
    #[error("generated text failed validation after {attempts} attempts: {reason}")]
    ValidationFailure { attempts: u32, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("placement exhausted for object {object} after {restarts} restarts: {constraint}")]
    PlacementExhausted {
        object: usize,
        restarts: u32,
        constraint: String,
    },
    #[error("infeasible geometry: area range {area:?} with aspect range {aspect:?} never fits the image")]
    InfeasibleGeometry { area: (f64, f64), aspect: (f64, f64) },
    #[error("inconsistent constraints: {0}")]
    InvalidConstraints(String),
    #[error("relation {kind} references object {index} but the instruction has {n_objects}")]
    RelationIndex {
        kind: RelationKind,
        index: usize,
        n_objects: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum OpenSetError {
    #[error("line {line}: malformed markup: {reason}")]
    MalformedMarkup { line: usize, reason: String },
    #[error("malformed annotation: {0}")]
    MalformedAnnotation(String),
    #[error("downsample target {target} exceeds pool size {pool}")]
    TargetTooLarge { target: usize, pool: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("QA record for {instruction_id} seed {seed} has no items")]
    EmptyRecord { instruction_id: String, seed: u32 },
    #[error("rankings cover different items")]
    ItemSetMismatch,
    #[error("correlation undefined: {0}")]
    Undefined(&'static str),
    #[error("need at least {needed} reports, got {got}")]
    TooFewReports { needed: usize, got: usize },
    #[error("record references unknown instruction `{0}`")]
    UnknownInstruction(String),
    #[error("record for {instruction_id} has object_index {index} but the instruction has {n_objects} objects")]
    ObjectIndex {
        instruction_id: String,
        index: usize,
        n_objects: usize,
    },
    #[error("{} examples lack records: {}", .0.len(), preview(.0))]
    MissingRecords(Vec<String>),
    #[error("no examples to score")]
    NoExamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 5;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("instruction {id}: {source}")]
    Prompt {
        id: String,
        #[source]
        source: PromptError,
    },
    #[error("instruction {id}: {source}")]
    Layout {
        id: String,
        #[source]
        source: LayoutError,
    },
    #[error("invalid generation plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
}
