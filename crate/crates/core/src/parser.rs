//! Rule-based extraction of segments, captions and saliency lists from free
//! model text.
//!
//! Rule set, version 1:
//!
//! * A time is `90`, `90.0`, `1:30` or `01:02:03`, optionally followed by a
//!   unit (`s`, `sec`, `secs`, `second`, `seconds`).
//! * A range is two times joined by `-`, an en or em dash, `~`, `to`, `and`,
//!   `until`, `till` or `through`. It counts only when one side carries a
//!   unit, a side uses clock notation, or it is introduced by `from` or
//!   `between`.
//! * A caption's text runs from the end of its range to the start of the next
//!   range. When the text after the last range is empty and there is text
//!   before the first, captions take the text that precedes their range.
//! * Saliency answers are read as `time: score` pairs when at least two such
//!   pairs appear (a bare colon before exactly two digits is a clock time,
//!   not a pair), otherwise as a list of times followed by a list of scores
//!   after the word "score" or "saliency".

use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{SaliencySeries, Segment, TimedCaption};

const TIME: &str = r"(?:\d{1,2}:\d{2}:\d{2}|\d{1,3}:\d{2}|\d+)(?:\.\d+)?";
const UNIT: &str = r"(?:seconds|second|secs|sec|s)\b";

fn re(cell: &'static OnceLock<Regex>, pattern: impl FnOnce() -> String) -> &'static Regex {
    cell.get_or_init(|| Regex::new(&pattern()).expect("valid parser regex"))
}

fn range_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || {
        format!(
            r"(?i)(?P<pre>\b(?:from|between)\s+)?\b(?P<a>{TIME})(?P<ua>\s*{UNIT})?\s*(?:-|–|—|~|\bto\b|\band\b|\buntil\b|\btill\b|\bthrough\b)\s*(?P<b>{TIME})(?P<ub>\s*{UNIT})?"
        )
    })
}

fn time_token_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || format!(r"(?i)^(?P<t>{TIME})\s*(?:{UNIT})?$"))
}

/// Converts one time token to seconds.
pub fn normalize_time(token: &str) -> Result<f64> {
    let caps = time_token_re()
        .captures(token.trim())
        .ok_or_else(|| Error::Parse(format!("`{token}` is not a time")))?;
    let t = &caps["t"];
    let mut total = 0.0;
    for part in t.split(':') {
        let v: f64 = part.parse().map_err(|_| Error::Parse(format!("`{token}` is not a time")))?;
        total = total * 60.0 + v;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
struct RangeMatch {
    start: usize,
    end: usize,
    a: f64,
    b: f64,
}

fn accepted(c: &Captures<'_>) -> bool {
    c.name("pre").is_some()
        || c.name("ua").is_some()
        || c.name("ub").is_some()
        || c["a"].contains(':')
        || c["b"].contains(':')
}

/// Every range in textual order. With `lenient`, ranges without a unit or
/// prefix are kept too.
fn find_ranges(text: &str, lenient: bool) -> Vec<RangeMatch> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let Some(c) = range_re().captures_at(text, pos) else { break };
        let whole = c.get(0).expect("group 0");
        if lenient || accepted(&c) {
            if let (Ok(a), Ok(b)) = (normalize_time(&c["a"]), normalize_time(&c["b"])) {
                out.push(RangeMatch {
                    start: whole.start(),
                    end: whole.end(),
                    a,
                    b,
                });
            }
            pos = whole.end();
        } else {
            // Retry from just past the first time so an overlapping range
            // starting at the second time is still found.
            pos = c.name("a").expect("group a").end();
        }
    }
    out
}

fn clamp(a: f64, b: f64, duration: Option<f64>) -> Option<Segment> {
    let (a, b) = match duration {
        Some(d) => (a.min(d), b.min(d)),
        None => (a, b),
    };
    if b > a {
        Segment::new(a, b).ok()
    } else {
        None
    }
}

/// Text after a range, minus joining words and a trailing `Step 2` style
/// label that belongs to the next range.
fn clean_after(s: &str) -> String {
    static TAIL: OnceLock<Regex> = OnceLock::new();
    let tail = re(&TAIL, || r"(?i)[\s,;:]*(?:\b(?:and|then|next|finally)\b)?[\s,;:]*(?:\b(?:step|event|part)\s*\d+)?[\s,;:(]*$".into());
    let s = s.trim_start_matches(|c: char| c.is_whitespace() || ",:;-–—).".contains(c));
    let s = tail.replace(s, "");
    s.trim().trim_end_matches('.').trim().to_string()
}

fn clean_before(s: &str) -> String {
    static TAIL: OnceLock<Regex> = OnceLock::new();
    let tail = re(&TAIL, || {
        r"(?i)[\s,;:(\-]*(?:\b(?:during|at|in|within|over|happens|occurs|is|from|between|around|approximately|about)\b[\s,;:(]*)*$".into()
    });
    let s = s.trim_start_matches(|c: char| c.is_whitespace() || ",:;.)".contains(c));
    let s = tail.replace(s, "");
    s.trim().trim_end_matches('.').trim().to_string()
}

/// Timed captions in textual order. Ranges are clamped to `[0, duration]`
/// when the duration is known; empty or inverted ranges and ranges without
/// any description are dropped.
pub fn parse_segments(text: &str, duration: Option<f64>) -> Vec<TimedCaption> {
    let ranges = find_ranges(text, false);
    if ranges.is_empty() {
        return Vec::new();
    }
    let after: Vec<String> = ranges
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let stop = ranges.get(i + 1).map_or(text.len(), |n| n.start);
            clean_after(&text[r.end..stop])
        })
        .collect();
    let before_first = clean_before(&text[..ranges[0].start]);
    let prefix_style = after.last().is_some_and(|s| s.is_empty()) && !before_first.is_empty();

    let mut out = Vec::new();
    for (i, r) in ranges.iter().enumerate() {
        let desc = if prefix_style {
            let from = if i == 0 { 0 } else { ranges[i - 1].end };
            clean_before(&text[from..r.start])
        } else {
            after[i].clone()
        };
        if desc.is_empty() {
            continue;
        }
        if let Some(seg) = clamp(r.a, r.b, duration) {
            out.push(TimedCaption { segment: seg, text: desc });
        }
    }
    out
}

/// The answer segment of a grounding response: the first valid range after
/// "happens in" when that phrase is present, else the first valid range.
pub fn parse_grounding(text: &str, duration: Option<f64>) -> Option<Segment> {
    let lower = text.to_ascii_lowercase();
    let anchor = ["happens in", "happens from", "happens between", "occurs in", "occurs from", "occurs between"]
        .iter()
        .filter_map(|p| lower.find(p))
        .min();
    for lenient in [false, true] {
        let valid: Vec<(usize, Segment)> = find_ranges(text, lenient)
            .into_iter()
            .filter_map(|r| clamp(r.a, r.b, duration).map(|s| (r.start, s)))
            .collect();
        if let Some(a) = anchor {
            if let Some((_, s)) = valid.iter().find(|(p, _)| *p >= a) {
                return Some(*s);
            }
        }
        if let Some((_, s)) = valid.first() {
            return Some(*s);
        }
        // Unit-free ranges are only trusted in a sentence that announces
        // the answer.
        if anchor.is_none() {
            break;
        }
    }
    None
}

fn number_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || format!(r"\b(?P<t>{TIME})(?P<u>\s*{UNIT})?"))
}

fn pair_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || {
        format!(
            r"(?i)\b(?P<t>{TIME})\s*(?:{UNIT})?\s*(?:\(\s*(?:saliency\s+)?(?:score\s*)?[:=]?\s*|:\s*|->\s*|=\s*|,?\s*with\s+(?:a\s+)?(?:saliency\s+)?score\s+(?:of\s+)?)(?P<s>\d+(?:\.\d+)?)"
        )
    })
}

/// Numbers in `text`, skipping counts ("16 highlight moments") and scale
/// markers ("out of 5").
fn list_numbers(text: &str) -> Vec<f64> {
    static SKIP_AFTER: OnceLock<Regex> = OnceLock::new();
    let skip_after = re(&SKIP_AFTER, || {
        r"(?i)^\s*(?:highlight|key|moments?|clips?|timestamps?|frames?|salient|important|notable)\b".into()
    });
    number_re()
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0).expect("group 0");
            let before = text[..m.start()].to_ascii_lowercase();
            if before.trim_end().ends_with("out of") || text[..m.start()].ends_with('/') {
                return None;
            }
            if skip_after.is_match(&text[m.end()..]) {
                return None;
            }
            normalize_time(&c["t"]).ok()
        })
        .collect()
}

/// `1:05` matched as time 1 with score 05.
fn is_clock(text: &str, c: &Captures<'_>) -> bool {
    let (t, s) = (c.name("t").expect("group t"), c.name("s").expect("group s"));
    &text[t.end()..s.start()] == ":" && s.as_str().len() == 2 && s.as_str().bytes().all(|b| b.is_ascii_digit())
}

/// Clip times and their saliency scores.
pub fn parse_saliency(text: &str) -> SaliencySeries {
    let pairs: Vec<(f64, f64)> = pair_re()
        .captures_iter(text)
        .filter(|c| !is_clock(text, c))
        .filter_map(|c| Some((normalize_time(&c["t"]).ok()?, c["s"].parse().ok()?)))
        .collect();
    if pairs.len() >= 2 {
        let (t, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        return SaliencySeries::normalized(&t, &s);
    }

    static KEY: OnceLock<Regex> = OnceLock::new();
    let key = re(&KEY, || r"(?i)saliency|score|rated|ratings?".into());
    for m in key.find_iter(text) {
        let times = list_numbers(&text[..m.start()]);
        if times.is_empty() {
            continue;
        }
        let scores = list_numbers(&text[m.end()..]);
        if scores.is_empty() {
            return SaliencySeries::default();
        }
        return SaliencySeries::normalized(&times, &scores);
    }
    SaliencySeries::default()
}

/// A parsed response, tagged by the kind of answer the task expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parsed {
    Captions { captions: Vec<TimedCaption> },
    Grounding { segment: Option<Segment> },
    Saliency { saliency: SaliencySeries },
}

impl Parsed {
    /// True when nothing usable was extracted.
    pub fn is_miss(&self) -> bool {
        match self {
            Parsed::Captions { captions } => captions.is_empty(),
            Parsed::Grounding { segment } => segment.is_none(),
            Parsed::Saliency { saliency } => saliency.is_empty(),
        }
    }
}

/// Applies the parser matching `task`.
pub fn parse_for_task(task: crate::data::Task, text: &str, duration: Option<f64>) -> Parsed {
    use crate::data::Task;
    match task {
        Task::Grounding => Parsed::Grounding {
            segment: parse_grounding(text, duration),
        },
        Task::Summarization | Task::Highlight => Parsed::Saliency {
            saliency: parse_saliency(text),
        },
        _ => Parsed::Captions {
            captions: parse_segments(text, duration),
        },
    }
}
