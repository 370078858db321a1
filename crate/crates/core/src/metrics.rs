//! Temporal localization and captioning metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{iou, SaliencySeries, Segment, TimedCaption};

pub const DVC_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
pub const RECALL_THRESHOLDS: [f64; 2] = [0.5, 0.7];
pub const MAP_THRESHOLDS: [f64; 2] = [0.5, 0.75];
pub const DEFAULT_HIT_THRESHOLD: f64 = 4.0;

/// Percentage of queries whose prediction reaches IoU `mu` with the
/// reference. A missing prediction is a miss.
pub fn recall_at_1(preds: &[Option<Segment>], gts: &[Segment], mu: f64) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::Empty("no grounding queries"));
    }
    if preds.len() != gts.len() {
        return Err(Error::shape("recall_at_1", &[preds.len()], &[gts.len()]));
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.is_some_and(|p| iou(&p, g) >= mu))
        .count();
    Ok(100.0 * hits as f64 / gts.len() as f64)
}

/// One-to-one matching that repeatedly takes the remaining pair with the
/// highest IoU (at least `t`); ties go to the lower prediction index, then the
/// lower reference index. Returns `(pred, ref)` pairs in the order taken.
pub fn greedy_match(preds: &[Segment], gts: &[Segment], t: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let v = iou(p, g);
            if v >= t {
                cand.push((v, i, j));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; gts.len()];
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Precision and recall of one video at IoU threshold `t`, as fractions.
pub fn dvc_precision_recall(preds: &[Segment], gts: &[Segment], t: f64) -> (f64, f64) {
    let m = greedy_match(preds, gts, t).len() as f64;
    let p = if preds.is_empty() { 0.0 } else { m / preds.len() as f64 };
    let r = if gts.is_empty() { 0.0 } else { m / gts.len() as f64 };
    (p, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvcScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Precision and recall averaged over the thresholds and then over videos,
/// followed by their harmonic mean. All values are percentages.
pub fn dvc_f1(videos: &[(Vec<Segment>, Vec<Segment>)]) -> DvcScores {
    if videos.is_empty() {
        return DvcScores {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let (mut p, mut r) = (0.0, 0.0);
    for (preds, gts) in videos {
        for t in DVC_THRESHOLDS {
            let (vp, vr) = dvc_precision_recall(preds, gts, t);
            p += vp;
            r += vr;
        }
    }
    let n = (videos.len() * DVC_THRESHOLDS.len()) as f64;
    let (p, r) = (p / n, r / n);
    DvcScores {
        precision: 100.0 * p,
        recall: 100.0 * r,
        f1: 100.0 * harmonic(p, r),
    }
}

/// Lower-cased alphanumeric words.
pub fn caption_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect()
}

type NGramCounts = HashMap<Vec<String>, f64>;

fn ngram_counts(tokens: &[String], n: usize) -> NGramCounts {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    m
}

/// TF-IDF n-gram similarity (n = 1..4) scaled to `[0, 10]`.
///
/// Document frequencies come from the reference corpus given at
/// construction. The weight of an n-gram is its count times
/// `ln((N + 1) / (df + 1)) + 1`, so unseen n-grams still carry weight and a
/// one-document corpus gives every n-gram weight 1. For each order the score
/// is `Σ min(c, r)·r / (|c|·|r|)` over the candidate and reference weights;
/// orders where neither side has an n-gram are skipped.
#[derive(Debug, Clone)]
pub struct Cider {
    df: [HashMap<Vec<String>, f64>; 4],
    docs: f64,
}

impl Cider {
    pub fn new<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("CIDEr reference corpus"));
        }
        let mut df: [HashMap<Vec<String>, f64>; 4] = Default::default();
        for doc in corpus {
            let toks = caption_tokens(doc.as_ref());
            for (n, table) in df.iter_mut().enumerate() {
                for g in ngram_counts(&toks, n + 1).into_keys() {
                    *table.entry(g).or_insert(0.0) += 1.0;
                }
            }
        }
        Ok(Self {
            df,
            docs: corpus.len() as f64,
        })
    }

    fn idf(&self, n: usize, g: &[String]) -> f64 {
        let df = self.df[n].get(g).copied().unwrap_or(0.0);
        ((self.docs + 1.0) / (df + 1.0)).ln() + 1.0
    }

    fn weights(&self, toks: &[String], n: usize) -> NGramCounts {
        let mut m = ngram_counts(toks, n + 1);
        for (g, v) in m.iter_mut() {
            *v *= self.idf(n, g);
        }
        m
    }

    /// Score of one candidate against one reference.
    pub fn pair(&self, candidate: &str, reference: &str) -> f64 {
        let c = caption_tokens(candidate);
        let r = caption_tokens(reference);
        let mut sum = 0.0;
        let mut orders = 0;
        for n in 0..4 {
            let wc = self.weights(&c, n);
            let wr = self.weights(&r, n);
            if wc.is_empty() && wr.is_empty() {
                continue;
            }
            orders += 1;
            let norm = |m: &NGramCounts| {
                let mut keys: Vec<_> = m.iter().collect();
                keys.sort_by(|a, b| a.0.cmp(b.0));
                keys.iter().map(|(_, v)| *v * *v).sum::<f64>().sqrt()
            };
            let (nc, nr) = (norm(&wc), norm(&wr));
            if nc == 0.0 || nr == 0.0 {
                continue;
            }
            let mut keys: Vec<_> = wc.keys().filter(|g| wr.contains_key(*g)).collect();
            keys.sort();
            let dot: f64 = keys.iter().map(|g| wc[*g].min(wr[*g]) * wr[*g]).sum();
            sum += dot / (nc * nr);
        }
        if orders == 0 {
            0.0
        } else {
            10.0 * sum / orders as f64
        }
    }

    /// Mean pair score over several references; 0 with none.
    pub fn score(&self, candidate: &str, references: &[&str]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        references.iter().map(|r| self.pair(candidate, r)).sum::<f64>() / references.len() as f64
    }

    /// Mean score over `(candidate, references)` pairs.
    pub fn corpus(&self, pairs: &[(&str, Vec<&str>)]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        pairs.iter().map(|(c, r)| self.score(c, r)).sum::<f64>() / pairs.len() as f64
    }
}

/// Dense-captioning CIDEr: at each IoU threshold every prediction is scored
/// against all references it overlaps by at least the threshold (0 when it
/// overlaps none); the mean over predictions is averaged over thresholds and
/// videos.
pub fn dense_cider(videos: &[(Vec<TimedCaption>, Vec<TimedCaption>)]) -> Result<f64> {
    let corpus: Vec<&str> = videos.iter().flat_map(|(_, g)| g.iter().map(|c| c.text.as_str())).collect();
    let cider = Cider::new(&corpus)?;
    let mut total = 0.0;
    for (preds, gts) in videos {
        for t in DVC_THRESHOLDS {
            if preds.is_empty() {
                continue;
            }
            let mut s = 0.0;
            for p in preds {
                let refs: Vec<&str> = gts
                    .iter()
                    .filter(|g| iou(&p.segment, &g.segment) >= t)
                    .map(|g| g.text.as_str())
                    .collect();
                s += cider.score(&p.text, &refs);
            }
            total += s / preds.len() as f64;
        }
    }
    Ok(total / (videos.len() * DVC_THRESHOLDS.len()).max(1) as f64)
}

/// Order-preserving one-to-one matching maximizing the summed weight.
/// Returns the best total and the matched pairs in increasing order.
pub fn soda_match(weights: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let n = weights.len();
    let m = weights.first().map_or(0, Vec::len);
    let mut best = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let take = best[i - 1][j - 1] + weights[i - 1][j - 1];
            best[i][j] = best[i - 1][j].max(best[i][j - 1]).max(take);
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if best[i][j] == best[i - 1][j] {
            i -= 1;
        } else if best[i][j] == best[i][j - 1] {
            j -= 1;
        } else {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        }
    }
    pairs.reverse();
    (best[n][m], pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SodaScores {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Story-level score: per video, the best order-preserving matching under
/// weight `iou × CIDEr` gives precision `total / |preds|` and recall
/// `total / |refs|`; their harmonic mean is averaged over videos and scaled
/// by 100. Captions are sorted by start time first.
pub fn soda_c(videos: &[(Vec<TimedCaption>, Vec<TimedCaption>)]) -> Result<SodaScores> {
    let corpus: Vec<&str> = videos.iter().flat_map(|(_, g)| g.iter().map(|c| c.text.as_str())).collect();
    let cider = Cider::new(&corpus)?;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for (preds, gts) in videos {
        let mut preds = preds.clone();
        let mut gts = gts.clone();
        preds.sort_by(|a, b| a.segment.start.total_cmp(&b.segment.start));
        gts.sort_by(|a, b| a.segment.start.total_cmp(&b.segment.start));
        let w: Vec<Vec<f64>> = preds
            .iter()
            .map(|pc| gts.iter().map(|g| iou(&pc.segment, &g.segment) * cider.pair(&pc.text, &g.text)).collect())
            .collect();
        let (total, _) = soda_match(&w);
        let vp = if preds.is_empty() { 0.0 } else { total / preds.len() as f64 };
        let vr = if gts.is_empty() { 0.0 } else { total / gts.len() as f64 };
        p += vp;
        r += vr;
        f += harmonic(vp, vr);
    }
    let n = videos.len().max(1) as f64;
    Ok(SodaScores {
        precision: 100.0 * p / n,
        recall: 100.0 * r / n,
        f: 100.0 * f / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredMoment {
    pub segment: Segment,
    pub confidence: f64,
}

/// Ranking used for AP: confidence descending, then earlier start, then
/// input order.
pub fn rank_moments(preds: &[ScoredMoment]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .total_cmp(&preds[a].confidence)
            .then(preds[a].segment.start.total_cmp(&preds[b].segment.start))
            .then(a.cmp(&b))
    });
    order
}

/// True-positive flags in rank order: each prediction takes the unmatched
/// reference with the highest IoU of at least `t` (lowest index on ties).
pub fn ranked_hits(preds: &[ScoredMoment], gts: &[Segment], t: f64) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    rank_moments(preds)
        .into_iter()
        .map(|i| {
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gts.iter().enumerate() {
                let v = iou(&preds[i].segment, g);
                if !used[j] && v >= t && best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, j));
                }
            }
            if let Some((_, j)) = best {
                used[j] = true;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Area under the precision-recall curve with precision replaced by its
/// running maximum from the right. Each true positive adds `1 / n_refs`
/// recall at the interpolated precision of its rank.
pub fn average_precision(hits: &[bool], n_refs: usize) -> f64 {
    if n_refs == 0 {
        return 0.0;
    }
    let mut prec = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += h as usize;
        prec.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    let step = 1.0 / n_refs as f64;
    let mut ap = 0.0;
    for (k, &h) in hits.iter().enumerate() {
        if h {
            ap += step * prec[k];
        }
    }
    ap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    /// Percentage; `None` when no query has references.
    pub map: Option<f64>,
    pub per_threshold: Vec<(f64, f64)>,
    pub queries: usize,
    pub skipped_no_reference: usize,
}

/// Mean AP over queries and the thresholds 0.5 and 0.75. Queries without
/// references are skipped and counted.
pub fn highlight_map(queries: &[(Vec<ScoredMoment>, Vec<Segment>)]) -> MapReport {
    let kept: Vec<_> = queries.iter().filter(|(_, g)| !g.is_empty()).collect();
    let skipped = queries.len() - kept.len();
    if kept.is_empty() {
        return MapReport {
            map: None,
            per_threshold: Vec::new(),
            queries: 0,
            skipped_no_reference: skipped,
        };
    }
    let mut per_threshold = Vec::new();
    for t in MAP_THRESHOLDS {
        let s: f64 = kept
            .iter()
            .map(|(p, g)| average_precision(&ranked_hits(p, g, t), g.len()))
            .sum();
        per_threshold.push((t, 100.0 * s / kept.len() as f64));
    }
    let map = per_threshold.iter().map(|(_, v)| v).sum::<f64>() / per_threshold.len() as f64;
    MapReport {
        map: Some(map),
        per_threshold,
        queries: kept.len(),
        skipped_no_reference: skipped,
    }
}

/// Annotated clips: clip `i` covers `[times[i], times[i] + clip_len)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSaliency {
    pub times: Vec<f64>,
    pub scores: Vec<f64>,
    pub clip_len: f64,
}

impl ClipSaliency {
    pub fn score_at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.scores)
            .find(|(&s, _)| s <= t && t < s + self.clip_len)
            .map(|(_, &v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitOutcome {
    Hit,
    Miss,
    /// The top time lies outside every annotated clip.
    OutOfRange,
    EmptyPrediction,
}

/// Checks the clip holding the highest-scored predicted time (earliest on
/// ties) against `threshold`, inclusive.
pub fn hit_at_1(pred: &SaliencySeries, gt: &ClipSaliency, threshold: f64) -> HitOutcome {
    let mut best: Option<(f64, f64)> = None;
    for (&t, &s) in pred.times.iter().zip(&pred.scores) {
        match best {
            Some((bt, bs)) if s < bs || (s == bs && t >= bt) => {}
            _ => best = Some((t, s)),
        }
    }
    let Some((t, _)) = best else {
        return HitOutcome::EmptyPrediction;
    };
    match gt.score_at(t) {
        None => HitOutcome::OutOfRange,
        Some(v) if v >= threshold => HitOutcome::Hit,
        Some(_) => HitOutcome::Miss,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub hit_at_1: Option<f64>,
    pub threshold: f64,
    pub queries: usize,
    pub hits: usize,
    pub out_of_range: usize,
    pub empty: usize,
}

pub fn hit_at_1_report(items: &[(SaliencySeries, ClipSaliency)], threshold: f64) -> HitReport {
    let mut r = HitReport {
        hit_at_1: None,
        threshold,
        queries: items.len(),
        hits: 0,
        out_of_range: 0,
        empty: 0,
    };
    for (p, g) in items {
        match hit_at_1(p, g, threshold) {
            HitOutcome::Hit => r.hits += 1,
            HitOutcome::OutOfRange => r.out_of_range += 1,
            HitOutcome::EmptyPrediction => r.empty += 1,
            HitOutcome::Miss => {}
        }
    }
    if !items.is_empty() {
        r.hit_at_1 = Some(100.0 * r.hits as f64 / items.len() as f64);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: f64, b: f64) -> Segment {
        Segment::new(a, b).unwrap()
    }

    fn cap(a: f64, b: f64, t: &str) -> TimedCaption {
        TimedCaption::new(a, b, t).unwrap()
    }

    #[test]
    fn recall_cases() {
        let g = vec![seg(0.0, 10.0)];
        assert_eq!(recall_at_1(&[Some(seg(0.0, 10.0))], &g, 0.7).unwrap(), 100.0);
        // IoU 0.6: (0,10) vs (0,6)
        let p = [Some(seg(0.0, 6.0))];
        assert_eq!(recall_at_1(&p, &g, 0.5).unwrap(), 100.0);
        assert_eq!(recall_at_1(&p, &g, 0.7).unwrap(), 0.0);
        assert_eq!(recall_at_1(&[None], &g, 0.5).unwrap(), 0.0);
        assert!(matches!(recall_at_1(&[], &[], 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn f1_cases() {
        let same = vec![seg(0.0, 5.0), seg(6.0, 9.0)];
        assert_eq!(dvc_f1(&[(same.clone(), same.clone())]).f1, 100.0);
        assert_eq!(dvc_f1(&[(vec![seg(0.0, 10.0)], vec![seg(5.0, 15.0)])]).f1, 25.0);
        assert_eq!(dvc_f1(&[(vec![], same)]).f1, 0.0);
    }

    #[test]
    fn cider_self_and_disjoint() {
        let c = "spread margarine on two slices of white bread";
        let s = Cider::new(&[c]).unwrap();
        assert!((s.pair(c, c) - 10.0).abs() < 1e-9);
        assert_eq!(s.pair("completely different words", c), 0.0);
        assert!(Cider::new::<&str>(&[]).is_err());
    }

    #[test]
    fn soda_identity_and_crossing() {
        let gts = vec![cap(0.0, 5.0, "a man cuts bread"), cap(5.0, 10.0, "he adds cheese")];
        let s = soda_c(&[(gts.clone(), gts.clone())]).unwrap();
        assert!((s.f - 1000.0).abs() < 1e-9, "{s:?}");
        // Only crossing pairs carry weight.
        let (total, pairs) = soda_match(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(total, 1.0);
        assert_eq!(pairs.len(), 1);
        let (total, _) = soda_match(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn ap_cases() {
        let g = vec![seg(0.0, 10.0)];
        let exact = ScoredMoment {
            segment: seg(0.0, 10.0),
            confidence: 1.0,
        };
        let wrong = ScoredMoment {
            segment: seg(20.0, 30.0),
            confidence: 2.0,
        };
        assert_eq!(highlight_map(&[(vec![exact], g.clone())]).map, Some(100.0));
        assert_eq!(average_precision(&ranked_hits(&[exact, wrong], &g, 0.5), 1), 0.5);
        let r = highlight_map(&[(vec![exact], vec![])]);
        assert_eq!((r.map, r.skipped_no_reference), (None, 1));
    }

    #[test]
    fn hit_cases() {
        let gt = ClipSaliency {
            times: vec![0.0, 2.0, 4.0],
            scores: vec![2.7, 4.0, 1.0],
            clip_len: 2.0,
        };
        let p = |t: f64| SaliencySeries {
            times: vec![t, 4.0],
            scores: vec![5.0, 1.0],
        };
        assert_eq!(hit_at_1(&p(2.0), &gt, 4.0), HitOutcome::Hit);
        assert_eq!(hit_at_1(&p(0.5), &gt, 4.0), HitOutcome::Miss);
        assert_eq!(hit_at_1(&p(9.0), &gt, 4.0), HitOutcome::OutOfRange);
        assert_eq!(hit_at_1(&SaliencySeries::default(), &gt, 4.0), HitOutcome::EmptyPrediction);
        let tie = SaliencySeries {
            times: vec![0.0, 2.0],
            scores: vec![3.0, 3.0],
        };
        assert_eq!(hit_at_1(&tie, &gt, 4.0), HitOutcome::Miss);
    }
}
