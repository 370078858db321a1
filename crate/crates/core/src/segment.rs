//! Time segments, timed captions and saliency series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start <= end) {
            return Err(Error::Domain(format!("invalid segment ({start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            start: self.start * k,
            end: self.end * k,
        }
    }
}

/// Temporal intersection over union; 0 when the union has no length.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCaption {
    #[serde(flatten)]
    pub segment: Segment,
    pub text: String,
}

impl TimedCaption {
    pub fn new(start: f64, end: f64, text: impl Into<String>) -> Result<Self> {
        Ok(Self {
            segment: Segment::new(start, end)?,
            text: text.into(),
        })
    }
}

/// Parallel clip times and saliency scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SaliencySeries {
    pub times: Vec<f64>,
    pub scores: Vec<f64>,
}

impl SaliencySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Pairs by position, truncates to the shorter list, sorts by time and
    /// keeps the highest score among identical times.
    pub fn normalized(times: &[f64], scores: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = times.iter().copied().zip(scores.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Self::default();
        for (t, s) in pairs {
            match out.times.last() {
                Some(&last) if last == t => {
                    let k = out.scores.len() - 1;
                    out.scores[k] = out.scores[k].max(s);
                }
                _ => {
                    out.times.push(t);
                    out.scores.push(s);
                }
            }
        }
        out
    }
}
