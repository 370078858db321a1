use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "<query_placeholder>";
pub const TEMPLATES_PER_TASK: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub text: String,
    /// False for the paraphrases written for this crate.
    #[serde(default)]
    pub canonical: bool,
}

/// Six instruction templates per task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateSet {
    templates: BTreeMap<Task, Vec<Template>>,
}

impl TemplateSet {
    /// Checks cardinality and placeholders for every task.
    pub fn new(templates: BTreeMap<Task, Vec<Template>>) -> Result<Self> {
        let mut problems = Vec::new();
        for task in Task::ALL {
            let Some(list) = templates.get(&task) else {
                problems.push(format!("{task}: no templates"));
                continue;
            };
            if list.len() != TEMPLATES_PER_TASK {
                problems.push(format!("{task}: {} templates, expected {TEMPLATES_PER_TASK}", list.len()));
            }
            for (i, t) in list.iter().enumerate() {
                let has = t.text.contains(PLACEHOLDER);
                if task.needs_query() && !has {
                    problems.push(format!("{task}[{i}]: missing {PLACEHOLDER}"));
                }
                if !task.needs_query() && has {
                    problems.push(format!("{task}[{i}]: unexpected {PLACEHOLDER}"));
                }
                if !t.text.is_ascii() {
                    problems.push(format!("{task}[{i}]: non-ASCII text"));
                }
            }
        }
        if problems.is_empty() {
            Ok(Self { templates })
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn get(&self, task: Task) -> &[Template] {
        &self.templates[&task]
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: BTreeMap<Task, Vec<Template>> = serde_json::from_str(s)?;
        Self::new(map)
    }

    pub fn builtin() -> Self {
        let mut m = BTreeMap::new();
        for (task, texts) in BUILTIN {
            let list = texts
                .iter()
                .enumerate()
                .map(|(i, t)| Template {
                    text: t.to_string(),
                    canonical: i == 0,
                })
                .collect();
            m.insert(task, list);
        }
        Self::new(m).expect("built-in templates are valid")
    }
}

/// The first entry of each list is the published instruction example.
const BUILTIN: [(Task, [&str; 6]); 6] = [
    (
        Task::DenseCaptioning,
        [
            "Localize a series of activity events in the video, output the start and end timestamp for each event, and describe each event with sentences.",
            "Find every activity event in the video. For each one, give its start and end time and a sentence describing it.",
            "Detect the sequence of events in this video, list the start and end timestamps of each, and describe what happens in a sentence.",
            "Identify all the activities that take place in the video and report when each starts and ends, together with a short description.",
            "Break the video down into its events. Output the start and end timestamps of each event followed by a descriptive sentence.",
            "List the events shown in the video in order, with start and end timestamps in seconds and a sentence describing each event.",
        ],
    ),
    (
        Task::Grounding,
        [
            "Detect and report the start and end timestamps of the video segment that semantically matches the given textual query <query_placeholder>.",
            "Find the segment of the video that matches the description <query_placeholder> and give its start and end timestamps.",
            "When does the following happen in the video: <query_placeholder>? Report the start and end times in seconds.",
            "Locate the moment described by <query_placeholder> in the video and output its start and end timestamps.",
            "Give the start and end timestamps of the part of the video that corresponds to the query <query_placeholder>.",
            "Identify the time span in the video during which <query_placeholder> takes place, as start and end timestamps.",
        ],
    ),
    (
        Task::Summarization,
        [
            "Generate a summarized version of the video, focusing on extracting key frames that best represent the overall narrative. The output should be a list of timestamps in seconds and their corresponding salient scores.",
            "Summarize the video by selecting the key frames that best capture its story. List their timestamps in seconds and their saliency scores.",
            "Pick out the most representative moments of the video for a summary, and output each timestamp in seconds with its saliency score.",
            "Create a short summary of the video made of key frames. Report the timestamps of those frames and how salient each one is.",
            "Which frames best summarize this video? Give their timestamps in seconds and a saliency score for each.",
            "Extract the key timestamps that represent the video's overall content and provide a saliency score for every timestamp.",
        ],
    ),
    (
        Task::Highlight,
        [
            "Watch the provided video and mark out the scenes that stand out based on the description: <query_placeholder>. Document the timestamps of these highlights and evaluate their saliency scores.",
            "Find the highlight moments in the video that relate to <query_placeholder>, and give their timestamps and saliency scores.",
            "Given the description <query_placeholder>, list the timestamps of the most relevant clips in the video along with their saliency scores.",
            "Mark the moments in the video that best match <query_placeholder>. Report each timestamp and rate its saliency.",
            "Which parts of the video are highlights for the query <query_placeholder>? Output their timestamps and saliency scores.",
            "Identify the clips that stand out with respect to <query_placeholder>, documenting the timestamp and saliency score of each.",
        ],
    ),
    (
        Task::StepLocalization,
        [
            "Identify and mark the video segments corresponding to a series of actions or steps, specifying the timestamps and describing the steps.",
            "Locate each step performed in the video, giving its start and end timestamps and a short description of the step.",
            "Break the procedure shown in the video into steps. For every step, report when it starts and ends and what is done.",
            "Find the segments of the video where each action step happens, and describe the steps with their timestamps.",
            "List the sequence of steps in the video with the start and end time of each and a brief description.",
            "Mark out the actions carried out in the video step by step, with start and end timestamps and a description for each.",
        ],
    ),
    (
        Task::TranscribedSpeech,
        [
            "Watch the video, transcribe the speech, and indicate when each segment starts and ends.",
            "Transcribe what is said in the video and give the start and end timestamps of each speech segment.",
            "Write down the spoken words in the video, split into segments with their start and end times.",
            "Produce a timestamped transcript of the speech in the video, marking where each segment begins and ends.",
            "Listen to the video and transcribe the speech, reporting the start and end timestamps for every segment.",
            "Provide the transcription of the video's audio in segments, each with a start and end timestamp in seconds.",
        ],
    ),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_six_per_task() {
        let set = TemplateSet::builtin();
        for task in Task::ALL {
            assert_eq!(set.get(task).len(), 6);
            assert_eq!(set.get(task).iter().filter(|t| t.canonical).count(), 1);
        }
    }

    #[test]
    fn cardinality_and_placeholder_enforced() {
        let mut m: BTreeMap<Task, Vec<Template>> = Task::ALL
            .into_iter()
            .map(|t| (t, TemplateSet::builtin().get(t).to_vec()))
            .collect();
        m.get_mut(&Task::Summarization).unwrap().pop();
        m.get_mut(&Task::Grounding).unwrap()[2].text = "No placeholder here.".into();
        let Err(Error::Validation(p)) = TemplateSet::new(m) else {
            panic!("expected validation error")
        };
        assert_eq!(p.len(), 2, "{p:?}");
    }

    #[test]
    fn json_form() {
        let set = TemplateSet::builtin();
        let s = serde_json::to_string(&set).unwrap();
        assert_eq!(TemplateSet::from_json(&s).unwrap(), set);
    }
}
