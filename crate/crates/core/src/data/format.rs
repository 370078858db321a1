use super::{AnnotationRecord, Number, Task, TimedEvent};
use crate::error::{Error, Result};

/// Trims whitespace and trailing periods so the formatter can append one.
pub fn format_description(text: &str) -> String {
    text.trim().trim_end_matches('.').trim_end().to_string()
}

fn join_numbers(xs: &[Number]) -> String {
    xs.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ")
}

fn caption_entries(events: &[TimedEvent], sep: &str) -> String {
    events
        .iter()
        .map(|e| format!("{} - {} seconds, {}.", e.start, e.end, format_description(&e.text)))
        .collect::<Vec<_>>()
        .join(sep)
}

/// Renders the reference answer for a record.
pub fn format_answer(record: &AnnotationRecord) -> Result<String> {
    record.validate()?;
    let out = match record.task {
        Task::DenseCaptioning => caption_entries(&record.segments, " "),
        Task::StepLocalization => caption_entries(&record.segments, "  "),
        Task::TranscribedSpeech => format!("Transcribed speech: {}", caption_entries(&record.segments, " ")),
        Task::Grounding => {
            let s = &record.segments[0];
            format!("The given query happens in {} - {} seconds.", s.start, s.end)
        }
        Task::Summarization => {
            let s = saliency(record)?;
            format!(
                "The key timestamps are in the {} seconds. Their saliency scores are {}.",
                join_numbers(&s.times),
                join_numbers(&s.scores)
            )
        }
        Task::Highlight => {
            let s = saliency(record)?;
            format!(
                "There are {} highlight moments in the {} second. Their saliency scores are {}.",
                s.times.len(),
                join_numbers(&s.times),
                join_numbers(&s.scores)
            )
        }
    };
    Ok(out)
}

fn saliency(record: &AnnotationRecord) -> Result<&super::SaliencyAnnotation> {
    record
        .saliency
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["saliency: required for this task".into()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SaliencyAnnotation;

    fn ev(a: Number, b: Number, t: &str) -> TimedEvent {
        TimedEvent {
            start: a,
            end: b,
            text: t.into(),
        }
    }

    #[test]
    fn grounding_and_dense_captioning() {
        let mut g = AnnotationRecord::new("v", 30.0, Task::Grounding);
        g.query = Some("a person opens the door".into());
        g.segments.push(ev(Number::dec(0.0), Number::dec(6.9), ""));
        assert_eq!(format_answer(&g).unwrap(), "The given query happens in 0.0 - 6.9 seconds.");

        let mut d = AnnotationRecord::new("v", 200.0, Task::DenseCaptioning);
        d.segments.push(ev(Number::int(90), Number::int(102), "spread margarine on two slices of white bread in the video"));
        assert_eq!(
            format_answer(&d).unwrap(),
            "90 - 102 seconds, spread margarine on two slices of white bread in the video."
        );
    }

    #[test]
    fn trailing_period_not_doubled() {
        let mut d = AnnotationRecord::new("v", 20.0, Task::StepLocalization);
        d.segments.push(ev(Number::dec(1.0), Number::dec(2.0), "jump. "));
        d.segments.push(ev(Number::dec(3.0), Number::dec(4.0), "land"));
        assert_eq!(format_answer(&d).unwrap(), "1.0 - 2.0 seconds, jump.  3.0 - 4.0 seconds, land.");
    }

    #[test]
    fn empty_highlight_is_rejected() {
        let mut h = AnnotationRecord::new("v", 20.0, Task::Highlight);
        h.query = Some("q".into());
        h.saliency = Some(SaliencyAnnotation {
            times: vec![],
            scores: vec![],
            clip_len: 2.0,
        });
        assert!(matches!(format_answer(&h), Err(Error::Validation(_))));
    }
}
