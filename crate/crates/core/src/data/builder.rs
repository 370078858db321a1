use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotation::check_schema;
use super::{format_answer, AnnotationRecord, Task, TemplateSet, PLACEHOLDER, SCHEMA_VERSION};
use crate::error::{Error, Result};

/// One instruction-tuning sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub schema: u32,
    pub video: String,
    pub task: Task,
    pub instruction: String,
    pub answer: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech: Option<String>,
}

/// Pairs every record with a template drawn uniformly by a generator seeded
/// with `seed`, substitutes the query and formats the answer. Output order
/// follows input order.
pub fn build_dataset(records: &[AnnotationRecord], templates: &TemplateSet, seed: u64) -> Result<Vec<InstructionRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let prefix = |p: Vec<String>| Error::Validation(p.into_iter().map(|m| format!("records[{i}].{m}")).collect());
            let problems = r.problems();
            if !problems.is_empty() {
                return Err(prefix(problems));
            }
            let list = templates.get(r.task);
            let template = &list[rng.gen_range(0..list.len())];
            let instruction = match r.query.as_deref() {
                Some(q) if r.task.needs_query() => template.text.replace(PLACEHOLDER, q.trim()),
                _ => template.text.clone(),
            };
            Ok(InstructionRecord {
                schema: SCHEMA_VERSION,
                video: r.video.clone(),
                task: r.task,
                instruction,
                answer: format_answer(r)?,
                source: r.source.clone(),
                query: r.query.clone(),
                speech: r.speech.clone(),
            })
        })
        .collect()
}

pub fn read_instructions<R: BufRead>(r: R) -> Result<Vec<InstructionRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        check_schema(&v)?;
        out.push(serde_json::from_value(v)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub tasks: usize,
    pub total: usize,
    pub per_task: BTreeMap<Task, usize>,
    pub videos: usize,
    /// Mean duration over distinct videos; absent for an empty input.
    pub avg_duration: Option<f64>,
}

pub fn dataset_stats(records: &[AnnotationRecord]) -> DatasetStats {
    let mut per_task = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut sum = 0.0;
    for r in records {
        *per_task.entry(r.task).or_insert(0) += 1;
        if seen.insert(r.video.as_str()) {
            sum += r.duration;
        }
    }
    DatasetStats {
        tasks: per_task.len(),
        total: records.len(),
        per_task,
        videos: seen.len(),
        avg_duration: (!seen.is_empty()).then(|| sum / seen.len() as f64),
    }
}
