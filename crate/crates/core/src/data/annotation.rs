use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Number;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    DenseCaptioning,
    Grounding,
    Summarization,
    Highlight,
    StepLocalization,
    TranscribedSpeech,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::DenseCaptioning,
        Task::Grounding,
        Task::Summarization,
        Task::Highlight,
        Task::StepLocalization,
        Task::TranscribedSpeech,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::DenseCaptioning => "dense_captioning",
            Task::Grounding => "grounding",
            Task::Summarization => "summarization",
            Task::Highlight => "highlight",
            Task::StepLocalization => "step_localization",
            Task::TranscribedSpeech => "transcribed_speech",
        }
    }

    /// Tasks whose answer is a list of timed captions.
    pub fn is_caption_task(&self) -> bool {
        matches!(self, Task::DenseCaptioning | Task::StepLocalization | Task::TranscribedSpeech)
    }

    pub fn is_saliency_task(&self) -> bool {
        matches!(self, Task::Summarization | Task::Highlight)
    }

    pub fn needs_query(&self) -> bool {
        matches!(self, Task::Grounding | Task::Highlight)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub start: Number,
    pub end: Number,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyAnnotation {
    pub times: Vec<Number>,
    pub scores: Vec<Number>,
    /// Length of the clip starting at each time, for locating a predicted
    /// time inside the annotated clips.
    #[serde(default = "default_clip_len")]
    pub clip_len: f64,
}

fn default_clip_len() -> f64 {
    2.0
}

/// One normalized annotation, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub schema: u32,
    pub video: String,
    pub duration: f64,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<TimedEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency: Option<SaliencyAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// Transcript of the video's speech, given to the model as extra input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech: Option<String>,
    #[serde(default)]
    pub source: String,
}

impl AnnotationRecord {
    pub fn new(video: impl Into<String>, duration: f64, task: Task) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            video: video.into(),
            duration,
            task,
            segments: Vec::new(),
            saliency: None,
            query: None,
            speech: None,
            source: String::new(),
        }
    }

    /// Every violated invariant, each prefixed with its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.schema != SCHEMA_VERSION {
            p.push(format!("schema: expected {SCHEMA_VERSION}, found {}", self.schema));
        }
        if self.video.trim().is_empty() {
            p.push("video: empty id".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            p.push(format!("duration: {} is not a positive length", self.duration));
        }
        for (i, s) in self.segments.iter().enumerate() {
            let (a, b) = (s.start.value, s.end.value);
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b && b <= self.duration) {
                p.push(format!("segments[{i}]: ({a}, {b}) not within [0, {}]", self.duration));
            }
            if self.task.is_caption_task() && s.text.trim().trim_end_matches('.').trim().is_empty() {
                p.push(format!("segments[{i}].text: empty description"));
            }
        }
        match self.task {
            Task::Grounding => {
                if self.segments.len() != 1 {
                    p.push(format!("segments: grounding needs exactly one segment, found {}", self.segments.len()));
                }
            }
            t if t.is_caption_task() && self.segments.is_empty() => p.push("segments: no events".into()),
            _ => {}
        }
        if self.task.needs_query() && self.query.as_deref().map_or(true, |q| q.trim().is_empty()) {
            p.push("query: required for this task".into());
        }
        if self.task.is_saliency_task() {
            match &self.saliency {
                None => p.push("saliency: required for this task".into()),
                Some(s) => {
                    if s.times.is_empty() {
                        p.push("saliency.times: empty".into());
                    }
                    if s.times.len() != s.scores.len() {
                        p.push(format!(
                            "saliency: {} times but {} scores",
                            s.times.len(),
                            s.scores.len()
                        ));
                    }
                    for (i, t) in s.times.iter().enumerate() {
                        if !(0.0..=self.duration).contains(&t.value) {
                            p.push(format!("saliency.times[{i}]: {} outside [0, {}]", t.value, self.duration));
                        }
                    }
                    if let Some(i) = s.scores.iter().position(|v| !v.value.is_finite()) {
                        p.push(format!("saliency.scores[{i}]: not finite"));
                    }
                    if !(s.clip_len.is_finite() && s.clip_len > 0.0) {
                        p.push("saliency.clip_len: must be positive".into());
                    }
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// Key used to pair predictions with references.
    pub fn key(&self) -> String {
        match &self.query {
            Some(q) => format!("{}/{}/{}", self.video, self.task, q),
            None => format!("{}/{}", self.video, self.task),
        }
    }
}

/// Reads annotation JSONL, rejecting records written under another schema
/// version. Blank lines are skipped.
pub fn read_annotations<R: BufRead>(r: R) -> Result<Vec<AnnotationRecord>> {
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

pub(crate) fn check_schema(v: &serde_json::Value) -> Result<()> {
    match v.get("schema").and_then(|s| s.as_u64()) {
        Some(s) if s == SCHEMA_VERSION as u64 => Ok(()),
        Some(s) => Err(Error::Schema {
            expected: SCHEMA_VERSION,
            found: s as u32,
        }),
        None => Err(Error::Schema {
            expected: SCHEMA_VERSION,
            found: 0,
        }),
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
