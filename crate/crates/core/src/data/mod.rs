//! Instruction-tuning data: normalized annotations, instruction templates,
//! answer formatting and the dataset builder.

mod annotation;
mod builder;
mod format;
mod number;
mod templates;

pub use annotation::{read_annotations, write_jsonl, AnnotationRecord, SaliencyAnnotation, Task, TimedEvent, SCHEMA_VERSION};
pub use builder::{build_dataset, dataset_stats, read_instructions, DatasetStats, InstructionRecord};
pub use format::{format_answer, format_description};
pub use number::{Number, NumberStyle};
pub use templates::{Template, TemplateSet, PLACEHOLDER, TEMPLATES_PER_TASK};
