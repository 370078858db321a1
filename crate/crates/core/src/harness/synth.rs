//! Synthetic videos with exact ground truth.
//!
//! A video is a dark background on which each event paints one pattern (a
//! solid or striped colour field) over the frames sampled inside the event's
//! segment. Pattern `k` uses colour `k % 6`; patterns 6..12 are striped.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, Number, SaliencyAnnotation, Task, TimedEvent};
use crate::error::{Error, Result};
use crate::video::{Frame, VideoClip};

use super::sample_frames;

pub const NUM_PATTERNS: usize = 12;
const BACKGROUND: [f32; 3] = [0.05, 0.05, 0.05];
const COLORS: [(&str, [f32; 3]); 6] = [
    ("red", [0.9, 0.1, 0.1]),
    ("green", [0.1, 0.85, 0.1]),
    ("blue", [0.1, 0.2, 0.9]),
    ("yellow", [0.9, 0.9, 0.1]),
    ("cyan", [0.1, 0.9, 0.9]),
    ("magenta", [0.9, 0.1, 0.9]),
];
const STRIPE: usize = 4;

pub fn pattern_name(k: usize) -> String {
    let color = COLORS[k % COLORS.len()].0;
    if k >= COLORS.len() {
        format!("{color} striped block")
    } else {
        format!("{color} block")
    }
}

fn pattern_pixel(k: usize, y: usize) -> [f32; 3] {
    let striped = k >= COLORS.len();
    if striped && (y / STRIPE) % 2 == 1 {
        BACKGROUND
    } else {
        COLORS[k % COLORS.len()].1
    }
}

/// Paints pattern `k` over the whole frame.
pub fn paint(frame: &mut Frame, k: usize) {
    for y in 0..frame.height {
        let rgb = pattern_pixel(k, y);
        for x in 0..frame.width {
            frame.set_pixel(y, x, rgb);
        }
    }
}

/// Inverse of [`paint`]; `None` for a background frame or anything else.
pub fn detect_pattern(frame: &Frame) -> Option<usize> {
    (0..NUM_PATTERNS).find(|&k| (0..frame.height).all(|y| (0..frame.width).all(|x| frame.pixel(y, x) == pattern_pixel(k, y))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub pattern: usize,
    pub start: u32,
    pub end: u32,
}

impl SynthEvent {
    fn contains(&self, t: f64) -> bool {
        self.start as f64 <= t && t < self.end as f64
    }

    fn overlaps(&self, o: &SynthEvent) -> bool {
        self.start < o.end && o.start < self.end
    }
}

/// Renders `events` into `frames` bin-centre samples of a `duration`-second
/// video. In strict mode overlapping events are rejected; otherwise the later
/// event wins where they overlap.
pub fn render_video(duration: f64, events: &[SynthEvent], frames: usize, size: usize, strict: bool) -> Result<VideoClip> {
    for (i, e) in events.iter().enumerate() {
        if e.pattern >= NUM_PATTERNS || e.start >= e.end || e.end as f64 > duration {
            return Err(Error::Validation(vec![format!("events[{i}]: invalid event {e:?}")]));
        }
        if strict {
            if let Some(j) = events[..i].iter().position(|o| o.overlaps(e)) {
                return Err(Error::Validation(vec![format!("events[{i}]: overlaps events[{j}]")]));
            }
        }
    }
    let times = sample_frames(duration, frames)?;
    let frames = times
        .iter()
        .map(|&t| {
            let mut f = Frame::filled(size, size, BACKGROUND);
            if let Some(e) = events.iter().rev().find(|e| e.contains(t)) {
                paint(&mut f, e.pattern);
            }
            f
        })
        .collect();
    VideoClip::new(frames, times, duration)
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub videos: usize,
    /// Whole seconds, inclusive.
    pub min_duration: usize,
    pub max_duration: usize,
    pub events_per_video: usize,
    pub frames: usize,
    pub resolution: usize,
    pub tasks: Vec<Task>,
    pub strict: bool,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.videos == 0 {
            p.push("videos: must be positive".to_string());
        }
        if self.events_per_video == 0 || self.events_per_video > NUM_PATTERNS {
            p.push(format!("events_per_video: must lie in 1..={NUM_PATTERNS}"));
        }
        if self.min_duration < 4 * self.events_per_video || self.min_duration > self.max_duration {
            p.push("min_duration: need 4·events_per_video <= min_duration <= max_duration".to_string());
        }
        if self.tasks.is_empty() {
            p.push("tasks: at least one task".to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthVideo {
    pub id: String,
    pub duration: f64,
    pub events: Vec<SynthEvent>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub videos: Vec<SynthVideo>,
    pub clips: Vec<VideoClip>,
    pub records: Vec<AnnotationRecord>,
}

/// Splits the video into equal slots and places one event inside each, with
/// a random margin on both sides, so events never overlap.
fn place_events<R: Rng>(duration: u32, n: usize, rng: &mut R) -> Vec<(u32, u32)> {
    let slot = duration as f64 / n as f64;
    (0..n)
        .map(|i| {
            let lo = (i as f64 * slot).ceil() as u32;
            let hi = ((i + 1) as f64 * slot).floor() as u32;
            let margin = ((hi - lo) / 4).max(0);
            let start = lo + rng.gen_range(0..=margin);
            let end = hi - rng.gen_range(0..=margin);
            (start, end)
        })
        .collect()
}

pub fn synth_corpus<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut videos = Vec::new();
    let mut clips = Vec::new();
    let mut records = Vec::new();
    for v in 0..spec.videos {
        let duration = rng.gen_range(spec.min_duration..=spec.max_duration) as u32;
        let mut patterns: Vec<usize> = (0..NUM_PATTERNS).collect();
        patterns.shuffle(rng);
        let events: Vec<SynthEvent> = place_events(duration, spec.events_per_video, rng)
            .into_iter()
            .zip(patterns)
            .map(|((start, end), pattern)| SynthEvent { pattern, start, end })
            .collect();
        let video = SynthVideo {
            id: format!("synth{v:04}"),
            duration: duration as f64,
            events,
        };
        clips.push(render_video(video.duration, &video.events, spec.frames, spec.resolution, spec.strict)?);
        let focus = rng.gen_range(0..video.events.len());
        for &task in &spec.tasks {
            records.push(annotate(&video, task, focus));
        }
        videos.push(video);
    }
    Ok(SyntheticCorpus { videos, clips, records })
}

fn timed(e: &SynthEvent, text: String) -> TimedEvent {
    TimedEvent {
        start: Number::int(e.start as i64),
        end: Number::int(e.end as i64),
        text,
    }
}

/// The record for one task. `focus` picks the event used by the query tasks.
fn annotate(video: &SynthVideo, task: Task, focus: usize) -> AnnotationRecord {
    let mut r = AnnotationRecord::new(&video.id, video.duration, task);
    r.source = "synthetic".into();
    let described = |f: &dyn Fn(&str) -> String| video.events.iter().map(|e| timed(e, f(&pattern_name(e.pattern)))).collect();
    let e = video.events[focus];
    match task {
        Task::DenseCaptioning => r.segments = described(&|n| format!("a {n} appears on screen")),
        Task::StepLocalization => r.segments = described(&|n| format!("show the {n}")),
        Task::TranscribedSpeech => {
            r.segments = described(&|n| format!("here is the {n}"));
            r.speech = Some(r.segments.iter().map(|s| s.text.clone()).collect::<Vec<_>>().join(" "));
        }
        Task::Grounding => {
            r.query = Some(format!("the {} appears", pattern_name(e.pattern)));
            r.segments = vec![timed(&e, String::new())];
        }
        Task::Summarization => {
            let (times, scores) = video
                .events
                .iter()
                .map(|e| {
                    let mid = (e.start + e.end) as f64 / 2.0;
                    (Number::dec(mid), Number::dec(3.0 + (e.pattern % 4) as f64 * 0.5))
                })
                .unzip();
            r.saliency = Some(SaliencyAnnotation {
                times,
                scores,
                clip_len: 2.0,
            });
        }
        Task::Highlight => {
            r.query = Some(pattern_name(e.pattern));
            let (mut times, mut scores) = (Vec::new(), Vec::new());
            let first = e.start / 2 * 2;
            let mut t = first.saturating_sub(2);
            while t < e.end + 2 && (t as f64) < video.duration {
                let inside = t + 2 > e.start && t < e.end;
                times.push(Number::int(t as i64));
                scores.push(Number::dec(if inside { 4.0 } else { 2.0 }));
                t += 2;
            }
            r.saliency = Some(SaliencyAnnotation {
                times,
                scores,
                clip_len: 2.0,
            });
            r.segments = vec![timed(&e, String::new())];
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            videos: 6,
            min_duration: 20,
            max_duration: 40,
            events_per_video: 3,
            frames: 16,
            resolution: 28,
            tasks: Task::ALL.to_vec(),
            strict: true,
        }
    }

    #[test]
    fn patterns_are_distinguishable() {
        for k in 0..NUM_PATTERNS {
            let mut f = Frame::filled(28, 28, BACKGROUND);
            paint(&mut f, k);
            assert_eq!(detect_pattern(&f), Some(k));
        }
        assert_eq!(detect_pattern(&Frame::filled(28, 28, BACKGROUND)), None);
    }

    #[test]
    fn frames_show_exactly_their_events() {
        let ev = [SynthEvent {
            pattern: 3,
            start: 10,
            end: 20,
        }];
        let clip = render_video(40.0, &ev, 40, 28, true).unwrap();
        for (f, &t) in clip.frames.iter().zip(&clip.timestamps) {
            let want = (10.0..20.0).contains(&t).then_some(3);
            assert_eq!(detect_pattern(f), want, "t = {t}");
        }
    }

    #[test]
    fn strict_rejects_overlap() {
        let ev = [
            SynthEvent {
                pattern: 1,
                start: 0,
                end: 10,
            },
            SynthEvent {
                pattern: 2,
                start: 5,
                end: 15,
            },
        ];
        assert!(render_video(20.0, &ev, 8, 28, true).is_err());
        assert!(render_video(20.0, &ev, 8, 28, false).is_ok());
    }

    #[test]
    fn deterministic_valid_and_counted() {
        let a = synth_corpus(&spec(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = synth_corpus(&spec(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.clips, b.clips);
        assert_eq!(a.records.len(), 6 * 6);
        for r in &a.records {
            r.validate().unwrap();
        }
        for v in &a.videos {
            assert!((20.0..=40.0).contains(&v.duration));
            for (i, e) in v.events.iter().enumerate() {
                assert!(e.start < e.end && e.end as f64 <= v.duration);
                assert!(v.events[..i].iter().all(|o| !o.overlaps(e)));
            }
        }
    }
}
