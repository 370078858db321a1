// Fixtures for the instruction-data builder, shared with the acceptance suite.

#![allow(dead_code)]

use chronoframe::data::{dataset_stats, Task, TemplateSet, TEMPLATES_PER_TASK};
use chronoframe::harness::{synth_corpus, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TABLE_ANNOTATIONS: &str = include_str!("../fixtures/format_table_annotations.jsonl");
pub const TABLE_ANSWERS: &str = include_str!("../fixtures/format_table_answers.txt");

/// Lines of `answers` that differ from the expected table strings.
pub fn answer_mismatches(answers: &[String]) -> Vec<String> {
    let want: Vec<&str> = TABLE_ANSWERS.lines().collect();
    let mut out = Vec::new();
    if answers.len() != want.len() {
        out.push(format!("{} answers, expected {}", answers.len(), want.len()));
    }
    for (got, want) in answers.iter().zip(&want) {
        if got != want {
            out.push(format!("got  {got:?}\nwant {want:?}"));
        }
    }
    out
}

/// Template sets that break the six-per-task rule, each of which must be
/// rejected.
pub fn bad_template_sets() -> Vec<String> {
    let builtin: serde_json::Value = serde_json::to_value(TemplateSet::builtin()).unwrap();
    let mut out = Vec::new();
    for n in [0, 5, 7] {
        let mut v = builtin.clone();
        let list = v["grounding"].as_array_mut().unwrap();
        list.resize(n, list[0].clone());
        out.push(v.to_string());
    }
    let mut v = builtin.clone();
    v.as_object_mut().unwrap().remove("highlight");
    out.push(v.to_string());
    out
}

pub fn template_rule_holds() -> bool {
    let builtin = TemplateSet::builtin();
    Task::ALL.iter().all(|t| builtin.get(*t).len() == TEMPLATES_PER_TASK)
        && bad_template_sets().iter().all(|s| TemplateSet::from_json(s).is_err())
}

/// Stats of a generated corpus against what the generator produced.
pub fn stats_mismatches(seed: u64) -> Vec<String> {
    let spec = SyntheticSpec {
        videos: 16,
        min_duration: 20,
        max_duration: 40,
        events_per_video: 2,
        frames: 8,
        resolution: 28,
        tasks: Task::ALL.to_vec(),
        strict: false,
    };
    let corpus = synth_corpus(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let stats = dataset_stats(&corpus.records);
    let mut out = Vec::new();
    if stats.videos != spec.videos {
        out.push(format!("videos {} != {}", stats.videos, spec.videos));
    }
    if stats.total != spec.videos * spec.tasks.len() || stats.tasks != spec.tasks.len() {
        out.push(format!("total {} over {} tasks", stats.total, stats.tasks));
    }
    for t in &spec.tasks {
        if stats.per_task.get(t) != Some(&spec.videos) {
            out.push(format!("{t}: {:?}", stats.per_task.get(t)));
        }
    }
    let want = corpus.videos.iter().map(|v| v.duration).sum::<f64>() / corpus.videos.len() as f64;
    match stats.avg_duration {
        Some(a) if (a - want).abs() <= 1e-9 => {}
        other => out.push(format!("avg duration {other:?} != {want}")),
    }
    out
}
