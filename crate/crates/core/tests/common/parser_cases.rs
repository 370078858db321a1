// Parser fixtures shared by the parser tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chronoframe::data::{format_answer, AnnotationRecord, Number, SaliencyAnnotation, Task, TimedEvent};
use chronoframe::parser::{parse_for_task, Parsed};
use chronoframe::segment::{SaliencySeries, Segment, TimedCaption};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub const PARAPHRASES: &str = include_str!("../fixtures/paraphrases.json");

#[derive(Deserialize)]
#[serde(untagged)]
enum Expected {
    Captions(Vec<(f64, f64, String)>),
    Saliency { times: Vec<f64>, scores: Vec<f64> },
    Segment(Option<(f64, f64)>),
}

#[derive(Deserialize)]
struct Case {
    text: String,
    #[serde(default)]
    duration: Option<f64>,
    expected: Expected,
}

fn captions(xs: &[(f64, f64, &str)]) -> Parsed {
    Parsed::Captions {
        captions: xs.iter().map(|&(a, b, t)| TimedCaption::new(a, b, t).unwrap()).collect(),
    }
}

fn saliency(times: &[f64], scores: &[f64]) -> Parsed {
    Parsed::Saliency {
        saliency: SaliencySeries {
            times: times.to_vec(),
            scores: scores.to_vec(),
        },
    }
}

fn expected_parse(e: Expected) -> Parsed {
    match e {
        Expected::Captions(v) => captions(&v.iter().map(|(a, b, t)| (*a, *b, t.as_str())).collect::<Vec<_>>()),
        Expected::Saliency { times, scores } => saliency(&times, &scores),
        Expected::Segment(s) => Parsed::Grounding {
            segment: s.map(|(a, b)| Segment::new(a, b).unwrap()),
        },
    }
}

/// Output examples of the answer-format table, one per task, with
/// what the parser must extract from each.
pub fn format_table_examples() -> Vec<(Task, &'static str, Parsed)> {
    let highlight_times: Vec<f64> = (0..16).map(|i| 44.0 + 2.0 * i as f64).collect();
    vec![
        (
            Task::DenseCaptioning,
            "90 - 102 seconds, spread margarine on two slices of white bread in the video. 114.0 - 127.0 seconds, place a slice of cheese on the bread.",
            captions(&[
                (90.0, 102.0, "spread margarine on two slices of white bread in the video"),
                (114.0, 127.0, "place a slice of cheese on the bread"),
            ]),
        ),
        (
            Task::Grounding,
            "The given query happens in 0.0 - 6.9 seconds.",
            Parsed::Grounding {
                segment: Some(Segment::new(0.0, 6.9).unwrap()),
            },
        ),
        (
            Task::Summarization,
            "The key timestamps are in the 8.5, 10.0, 11.0, 12.0, 23.5, 44.5, 45.0 seconds. Their saliency scores are 1.8, 3.7, 4.5, 4.2, 2.1, 4.7, 4.2.",
            saliency(&[8.5, 10.0, 11.0, 12.0, 23.5, 44.5, 45.0], &[1.8, 3.7, 4.5, 4.2, 2.1, 4.7, 4.2]),
        ),
        (
            Task::Highlight,
            "There are 16 highlight moments in the 44.0, 46.0, 48.0, 50.0, 52.0, 54.0, 56.0, 58.0, 60.0, 62.0, 64.0, 66.0, 68.0, 70.0, 72.0, 74.0 second. Their saliency scores are 2.7, 4.0, 3.7, 3.3, 2.7, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 2.7, 3.0, 3.0, 3.0.",
            saliency(
                &highlight_times,
                &[2.7, 4.0, 3.7, 3.3, 2.7, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 2.7, 3.0, 3.0, 3.0],
            ),
        ),
        (
            Task::StepLocalization,
            "21.0 - 22.0 seconds, begin to run up.  23.0 - 24.0 seconds, begin to jump up.  25.0 - 26.0 seconds, fall to the ground.",
            captions(&[
                (21.0, 22.0, "begin to run up"),
                (23.0, 24.0, "begin to jump up"),
                (25.0, 26.0, "fall to the ground"),
            ]),
        ),
        (
            Task::TranscribedSpeech,
            "Transcribed speech: 4.0 - 9.3 seconds, Dolby as well as we had over 7.7 million minutes viewed. This week we visit restaurant. 9.3 - 15.4 seconds, August by Chef John Besh in New Orleans 2015. Restaurant August is currently regarded as New.",
            captions(&[
                (4.0, 9.3, "Dolby as well as we had over 7.7 million minutes viewed. This week we visit restaurant"),
                (9.3, 15.4, "August by Chef John Besh in New Orleans 2015. Restaurant August is currently regarded as New"),
            ]),
        ),
    ]
}

/// Examples whose parse differs from the expected structure.
pub fn format_table_failures() -> Vec<String> {
    format_table_examples()
        .into_iter()
        .filter_map(|(task, text, want)| {
            let got = parse_for_task(task, text, None);
            (got != want).then(|| format!("{task}: got {got:?}"))
        })
        .collect()
}

pub struct FixtureScore {
    pub total: usize,
    pub correct: usize,
    pub failures: Vec<String>,
}

impl FixtureScore {
    pub fn rate(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Exact-match extraction rate on the paraphrase fixtures, per task.
pub fn paraphrase_scores() -> BTreeMap<Task, FixtureScore> {
    let all: BTreeMap<Task, Vec<Case>> = serde_json::from_str(PARAPHRASES).expect("fixture file parses");
    all.into_iter()
        .map(|(task, cases)| {
            let mut score = FixtureScore {
                total: cases.len(),
                correct: 0,
                failures: Vec::new(),
            };
            for c in cases {
                let want = expected_parse(c.expected);
                let got = parse_for_task(task, &c.text, c.duration);
                if got == want {
                    score.correct += 1;
                } else {
                    score.failures.push(format!("{:?}\n  want {want:?}\n  got  {got:?}", c.text));
                }
            }
            (task, score)
        })
        .collect()
}

const WORDS: &[&str] = &[
    "a", "the", "man", "woman", "dog", "slowly", "opens", "closes", "door", "red", "bowl", "pours", "water", "into", "over", "cuts",
    "bread", "with", "knife", "kid", "runs", "across", "field", "camera", "pans", "left", "onion", "pan", "stirs", "sauce", "then",
];

fn number(rng: &mut ChaCha8Rng, v: f64) -> Number {
    if rng.gen_bool(0.5) {
        Number::int(v.round() as i64)
    } else {
        Number::dec((v * 10.0).round() / 10.0)
    }
}

fn description(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..8);
    let mut words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    // A description never ends on a joining word.
    if words.last() == Some(&"then") {
        words.pop();
        words.push("door");
    }
    words.join(" ")
}

/// A valid record for `task` with distinct, non-empty segments and
/// distinct saliency times, so that formatting loses nothing the parser
/// would need.
pub fn random_record(rng: &mut ChaCha8Rng, task: Task, id: usize) -> AnnotationRecord {
    let duration = rng.gen_range(20.0..600.0_f64).round();
    let mut r = AnnotationRecord::new(format!("rand{id:05}"), duration, task);
    if task.needs_query() {
        r.query = Some(description(rng));
    }
    if matches!(task, Task::Summarization | Task::Highlight) {
        let n = rng.gen_range(1..12);
        let mut t = rng.gen_range(0.0..duration / 2.0);
        let mut times = Vec::new();
        for _ in 0..n {
            let v = number(rng, t);
            if v.rendered_value() > duration {
                break;
            }
            if times.last().map_or(true, |p: &Number| p.rendered_value() < v.rendered_value()) {
                times.push(v);
            }
            t += rng.gen_range(1.0..10.0);
        }
        if times.is_empty() {
            times.push(Number::int(0));
        }
        let scores = times
            .iter()
            .map(|_| {
                let v = rng.gen_range(0.0..5.0);
                number(rng, v)
            })
            .collect();
        r.saliency = Some(SaliencyAnnotation {
            times,
            scores,
            clip_len: 2.0,
        });
    } else {
        let n = if task == Task::Grounding { 1 } else { rng.gen_range(1..6) };
        let mut t = 0.0;
        while r.segments.len() < n {
            let gap = rng.gen_range(0.0..20.0);
            let len = rng.gen_range(1.0..40.0);
            let a = number(rng, t + gap);
            let b = number(rng, a.value + len);
            if b.rendered_value() > duration {
                break;
            }
            if a.rendered_value() < b.rendered_value() {
                r.segments.push(TimedEvent {
                    start: a,
                    end: b,
                    text: if task.is_caption_task() { description(rng) } else { String::new() },
                });
                t = b.value;
            }
        }
        if r.segments.is_empty() {
            r.segments.push(TimedEvent {
                start: Number::int(0),
                end: Number::int(1),
                text: if task.is_caption_task() { description(rng) } else { String::new() },
            });
        }
    }
    r.validate().expect("generated record is valid");
    r
}

fn numeric_fields(r: &AnnotationRecord) -> Parsed {
    match r.task {
        Task::Grounding => Parsed::Grounding {
            segment: Some(Segment::new(r.segments[0].start.rendered_value(), r.segments[0].end.rendered_value()).unwrap()),
        },
        Task::Summarization | Task::Highlight => {
            let s = r.saliency.as_ref().unwrap();
            saliency(
                &s.times.iter().map(|n| n.rendered_value()).collect::<Vec<_>>(),
                &s.scores.iter().map(|n| n.rendered_value()).collect::<Vec<_>>(),
            )
        }
        _ => Parsed::Captions {
            captions: r
                .segments
                .iter()
                .map(|e| TimedCaption::new(e.start.rendered_value(), e.end.rendered_value(), "").unwrap())
                .collect(),
        },
    }
}

fn strip_text(p: Parsed) -> Parsed {
    match p {
        Parsed::Captions { captions } => Parsed::Captions {
            captions: captions.into_iter().map(|c| TimedCaption { text: String::new(), ..c }).collect(),
        },
        other => other,
    }
}

/// Formats `n` random records (cycling through the tasks) and parses them
/// back; returns the records whose numbers did not survive.
pub fn round_trip_failures(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..n {
        let task = Task::ALL[i % Task::ALL.len()];
        let r = random_record(&mut rng, task, i);
        let text = format_answer(&r).expect("valid record formats");
        let got = strip_text(parse_for_task(task, &text, Some(r.duration)));
        let want = numeric_fields(&r);
        if got != want {
            out.push(format!("{text:?}\n  want {want:?}\n  got  {got:?}"));
        }
    }
    out
}
