use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationRecord, Task, TimedEvent, SCHEMA_VERSION};
use crate::error::Result;
use crate::metrics::{
    dense_cider, dvc_f1, highlight_map, hit_at_1_report, recall_at_1, soda_c, ClipSaliency, DvcScores, HitReport, MapReport, ScoredMoment,
    SodaScores, DEFAULT_HIT_THRESHOLD,
};
use crate::parser::Parsed;
use crate::segment::{iou, SaliencySeries, Segment, TimedCaption};

/// Generated text for one instruction, as written by `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutput {
    #[serde(default = "schema_version")]
    pub schema: u32,
    #[serde(default)]
    pub video: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub text: String,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Structured prediction written by `parse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub schema: u32,
    pub video: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub parsed: Parsed,
    /// Nothing could be extracted from the text.
    pub miss: bool,
}

impl Prediction {
    /// Same layout as [`AnnotationRecord::key`].
    pub fn key(&self) -> String {
        match &self.query {
            Some(q) => format!("{}/{}/{}", self.video, self.task, q),
            None => format!("{}/{}", self.video, self.task),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingMetrics {
    pub r1_iou_0_5: f64,
    pub r1_iou_0_7: f64,
    pub mean_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionMetrics {
    pub f1: DvcScores,
    pub cider: f64,
    pub soda_c: SodaScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMetrics {
    pub hit_at_1: HitReport,
    /// False when `hit_threshold` was changed from the default of 4.0.
    pub default_hit_threshold: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapReport>,
}

/// One reference item and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub key: String,
    pub video: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub references: usize,
    /// References with no prediction at all; scored as misses.
    pub missing_predictions: usize,
    /// Predictions whose text yielded nothing usable.
    pub parser_misses: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captioning: Option<CaptionMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency: Option<SaliencyMetrics>,
    pub per_video: Vec<ItemScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub predictions: usize,
    pub references: usize,
    /// Predictions that match no reference key.
    pub unmatched_predictions: usize,
    pub parser_misses: usize,
    pub tasks: BTreeMap<Task, TaskReport>,
}

fn segment_of(e: &TimedEvent) -> Result<Segment> {
    Segment::new(e.start.rendered_value(), e.end.rendered_value())
}

fn captions_of(r: &AnnotationRecord) -> Result<Vec<TimedCaption>> {
    r.segments
        .iter()
        .map(|e| TimedCaption::new(e.start.rendered_value(), e.end.rendered_value(), e.text.clone()))
        .collect()
}

fn clip_saliency(r: &AnnotationRecord) -> ClipSaliency {
    let s = r.saliency.as_ref();
    ClipSaliency {
        times: s.map_or(Vec::new(), |s| s.times.iter().map(|n| n.rendered_value()).collect()),
        scores: s.map_or(Vec::new(), |s| s.scores.iter().map(|n| n.rendered_value()).collect()),
        clip_len: s.map_or(2.0, |s| s.clip_len),
    }
}

/// Reference moments for mAP: the record's segments when given, otherwise
/// maximal runs of adjacent clips scoring at least `threshold`.
fn reference_moments(r: &AnnotationRecord, threshold: f64) -> Result<Vec<Segment>> {
    if !r.segments.is_empty() {
        return r.segments.iter().map(segment_of).collect();
    }
    let c = clip_saliency(r);
    let mut clips: Vec<(f64, f64)> = c.times.iter().copied().zip(c.scores.iter().copied()).collect();
    clips.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Segment> = Vec::new();
    for (t, s) in clips {
        if s < threshold {
            continue;
        }
        match out.last_mut() {
            Some(last) if (last.end - t).abs() < 1e-9 => last.end = t + c.clip_len,
            _ => out.push(Segment::new(t, t + c.clip_len)?),
        }
    }
    Ok(out)
}

/// Each predicted clip becomes a moment `[t, t + clip_len)` ranked by its
/// predicted score.
fn predicted_moments(s: &SaliencySeries, clip_len: f64) -> Vec<ScoredMoment> {
    s.times
        .iter()
        .zip(&s.scores)
        .filter_map(|(&t, &c)| Segment::new(t, t + clip_len).ok().map(|segment| ScoredMoment { segment, confidence: c }))
        .collect()
}

/// Scores predictions against references, pairing them by key. A reference
/// without a prediction counts as an empty prediction.
pub fn evaluate(predictions: &[Prediction], references: &[AnnotationRecord], hit_threshold: f64) -> Result<EvalReport> {
    let mut by_key: HashMap<String, &Prediction> = HashMap::new();
    for p in predictions {
        by_key.entry(p.key()).or_insert(p);
    }
    let ref_keys: std::collections::HashSet<String> = references.iter().map(|r| r.key()).collect();
    let unmatched_predictions = by_key.keys().filter(|k| !ref_keys.contains(*k)).count();

    let mut grouped: BTreeMap<Task, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in references {
        r.validate()?;
        grouped.entry(r.task).or_default().push(r);
    }
    let mut tasks = BTreeMap::new();
    let mut parser_misses_total = 0;
    for (task, mut refs) in grouped {
        refs.sort_by_key(|r| r.key());
        let preds: Vec<Option<&Prediction>> = refs.iter().map(|r| by_key.get(&r.key()).copied()).collect();
        let missing = preds.iter().filter(|p| p.is_none()).count();
        let misses = preds.iter().flatten().filter(|p| p.miss).count();
        parser_misses_total += misses;
        let mut report = TaskReport {
            references: refs.len(),
            missing_predictions: missing,
            parser_misses: misses,
            grounding: None,
            captioning: None,
            saliency: None,
            per_video: Vec::new(),
        };
        let item = |r: &AnnotationRecord, metrics: Vec<(&str, f64)>| ItemScore {
            key: r.key(),
            video: r.video.clone(),
            metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        };
        if task == Task::Grounding {
            let gts: Vec<Segment> = refs.iter().map(|r| segment_of(&r.segments[0])).collect::<Result<_>>()?;
            let ps: Vec<Option<Segment>> = preds
                .iter()
                .map(|p| match p.map(|p| &p.parsed) {
                    Some(Parsed::Grounding { segment }) => *segment,
                    _ => None,
                })
                .collect();
            let ious: Vec<f64> = ps.iter().zip(&gts).map(|(p, g)| p.map_or(0.0, |p| iou(&p, g))).collect();
            report.grounding = Some(GroundingMetrics {
                r1_iou_0_5: recall_at_1(&ps, &gts, 0.5)?,
                r1_iou_0_7: recall_at_1(&ps, &gts, 0.7)?,
                mean_iou: 100.0 * ious.iter().sum::<f64>() / ious.len() as f64,
            });
            report.per_video = refs.iter().zip(&ious).map(|(r, &v)| item(r, vec![("iou", v)])).collect();
        } else if task.is_caption_task() {
            let mut videos = Vec::new();
            for (r, p) in refs.iter().zip(&preds) {
                let pc = match p.map(|p| &p.parsed) {
                    Some(Parsed::Captions { captions }) => captions.clone(),
                    _ => Vec::new(),
                };
                videos.push((pc, captions_of(r)?));
            }
            let seg = |v: &[TimedCaption]| v.iter().map(|c| c.segment).collect::<Vec<_>>();
            let f1_input: Vec<_> = videos.iter().map(|(p, g)| (seg(p), seg(g))).collect();
            report.captioning = Some(CaptionMetrics {
                f1: dvc_f1(&f1_input),
                cider: dense_cider(&videos)?,
                soda_c: soda_c(&videos)?,
            });
            report.per_video = refs
                .iter()
                .zip(&f1_input)
                .map(|(r, v)| item(r, vec![("f1", dvc_f1(std::slice::from_ref(v)).f1)]))
                .collect();
        } else {
            let mut items = Vec::new();
            let mut map_items = Vec::new();
            for (r, p) in refs.iter().zip(&preds) {
                let ps = match p.map(|p| &p.parsed) {
                    Some(Parsed::Saliency { saliency }) => saliency.clone(),
                    _ => SaliencySeries::default(),
                };
                let gt = clip_saliency(r);
                if task == Task::Highlight {
                    map_items.push((predicted_moments(&ps, gt.clip_len), reference_moments(r, hit_threshold)?));
                }
                items.push((ps, gt));
            }
            report.per_video = refs
                .iter()
                .zip(&items)
                .map(|(r, it)| {
                    let h = hit_at_1_report(std::slice::from_ref(it), hit_threshold);
                    item(r, vec![("hit_at_1", h.hit_at_1.unwrap_or(0.0))])
                })
                .collect();
            report.saliency = Some(SaliencyMetrics {
                hit_at_1: hit_at_1_report(&items, hit_threshold),
                default_hit_threshold: hit_threshold == DEFAULT_HIT_THRESHOLD,
                map: (task == Task::Highlight).then(|| highlight_map(&map_items)),
            });
        }
        tasks.insert(task, report);
    }
    Ok(EvalReport {
        schema: SCHEMA_VERSION,
        predictions: predictions.len(),
        references: references.len(),
        unmatched_predictions,
        parser_misses: parser_misses_total,
        tasks,
    })
}
