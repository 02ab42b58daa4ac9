//! Layout-guided text-to-image benchmark: prompt and layout generation,
//! open-set construction from grounded captions, and scoring of generated
//! images from detector and VQA records.

pub mod analysis;
pub mod closed;
pub mod error;
pub mod geometry;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod openset;
pub mod prompt;
pub mod seed;
pub mod text;

pub use error::{
    GenerationError, GeometryError, LayoutError, MetricError, OpenSetError, PromptError,
    VocabularyError,
};
pub use geometry::{iou, overlaps, relation_holds, BoundingBox, RelationKind};
pub use model::{BenchmarkKind, Detection, Instruction, ObjectSpec, Scenario, Vocabulary};
