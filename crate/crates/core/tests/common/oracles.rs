// Brute-force counterparts of the matchers in `metrics`, and an exhaustive
// enumeration of small instances to compare them on.

#![allow(dead_code)]

use std::cmp::Ordering;

use chronoframe::metrics::{dvc_f1, greedy_match, highlight_map, soda_match, ScoredMoment, DVC_THRESHOLDS, MAP_THRESHOLDS};
use chronoframe::segment::Segment;

fn seg(a: f64, b: f64) -> Segment {
    Segment::new(a, b).unwrap()
}

/// Written out independently of `segment::iou`. On an integer grid both
/// divide the same two exact integers, so they agree bit for bit.
pub fn oracle_iou(p: &Segment, g: &Segment) -> f64 {
    let inter = (p.end.min(g.end) - p.start.max(g.start)).max(0.0);
    let union = p.end.max(g.end) - p.start.min(g.start);
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Every partial one-to-one assignment of `n` rows to `m` columns, as
/// `row -> Option<column>`.
fn assignments(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    fn go(i: usize, n: usize, m: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(i + 1, n, m, used, cur, out);
        cur.pop();
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                go(i + 1, n, m, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

/// Edge order of the greedy matcher: larger IoU first, then lower
/// prediction index, then lower reference index.
fn edge_cmp(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// The matching whose edge list, sorted best-first, is lexicographically
/// greatest among all one-to-one matchings with IoU >= t.
pub fn oracle_match(preds: &[Segment], gts: &[Segment], t: f64) -> Vec<(usize, usize)> {
    let mut best: Option<Vec<(f64, usize, usize)>> = None;
    for a in assignments(preds.len(), gts.len()) {
        let mut edges = Vec::new();
        let mut ok = true;
        for (i, j) in a.iter().enumerate() {
            if let Some(j) = *j {
                let v = oracle_iou(&preds[i], &gts[j]);
                if v < t {
                    ok = false;
                    break;
                }
                edges.push((v, i, j));
            }
        }
        if !ok {
            continue;
        }
        edges.sort_by(edge_cmp);
        let better = match &best {
            None => true,
            Some(b) => {
                let mut ord = Ordering::Equal;
                for (x, y) in edges.iter().zip(b) {
                    ord = edge_cmp(x, y);
                    if ord != Ordering::Equal {
                        break;
                    }
                }
                ord == Ordering::Less || (ord == Ordering::Equal && edges.len() > b.len())
            }
        };
        if better {
            best = Some(edges);
        }
    }
    best.unwrap_or_default().into_iter().map(|(_, i, j)| (i, j)).collect()
}

/// F1 over one video from the oracle matching.
pub fn oracle_f1(preds: &[Segment], gts: &[Segment]) -> f64 {
    let (mut p, mut r) = (0.0, 0.0);
    for t in DVC_THRESHOLDS {
        let k = oracle_match(preds, gts, t).len() as f64;
        p += if preds.is_empty() { 0.0 } else { k / preds.len() as f64 };
        r += if gts.is_empty() { 0.0 } else { k / gts.len() as f64 };
    }
    let (p, r) = (p / 4.0, r / 4.0);
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * (2.0 * p * r / (p + r))
    }
}

/// Best total weight over order-preserving matchings, summed in increasing
/// order.
pub fn oracle_soda(weights: &[Vec<f64>]) -> f64 {
    let n = weights.len();
    let m = weights.first().map_or(0, Vec::len);
    let mut best = 0.0f64;
    for a in assignments(n, m) {
        let pairs: Vec<(usize, usize)> = a.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
        if pairs.windows(2).any(|w| w[1].1 <= w[0].1) {
            continue;
        }
        let total = pairs.iter().fold(0.0, |s, &(i, j)| s + weights[i][j]);
        best = best.max(total);
    }
    best
}

/// Hit flags in rank order. Each ranked prediction takes the unmatched
/// reference of largest IoU >= t, found by searching every assignment for
/// the lexicographically best sequence of (IoU, lowest reference index).
pub fn oracle_ranked_hits(preds: &[ScoredMoment], gts: &[Segment], t: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&preds[a], &preds[b]);
        y.confidence
            .partial_cmp(&x.confidence)
            .unwrap()
            .then(x.segment.start.partial_cmp(&y.segment.start).unwrap())
            .then(a.cmp(&b))
    });
    let key = |a: &[Option<usize>]| -> Vec<(f64, i64)> {
        a.iter()
            .enumerate()
            .map(|(k, j)| match j {
                Some(j) => (oracle_iou(&preds[order[k]].segment, &gts[*j]), -(*j as i64)),
                None => (-1.0, 0),
            })
            .collect()
    };
    let mut best: Option<(Vec<(f64, i64)>, Vec<Option<usize>>)> = None;
    for a in assignments(preds.len(), gts.len()) {
        if a.iter()
            .enumerate()
            .any(|(k, j)| j.is_some_and(|j| oracle_iou(&preds[order[k]].segment, &gts[j]) < t))
        {
            continue;
        }
        let kv = key(&a);
        if best.as_ref().map_or(true, |(b, _)| kv.partial_cmp(b) == Some(Ordering::Greater)) {
            best = Some((kv, a));
        }
    }
    best.map(|(_, a)| a.iter().map(Option::is_some).collect()).unwrap_or_default()
}

/// All-points AP: each hit adds `1/n_refs` times the best precision at any
/// rank at or below it.
pub fn oracle_ap(hits: &[bool], n_refs: usize) -> f64 {
    let prec: Vec<f64> = (0..hits.len())
        .map(|k| hits[..=k].iter().filter(|h| **h).count() as f64 / (k + 1) as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            let best = prec[k..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ap += (1.0 / n_refs as f64) * best;
        }
    }
    ap
}

pub fn oracle_map(preds: &[ScoredMoment], gts: &[Segment]) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let per: Vec<f64> = MAP_THRESHOLDS
        .iter()
        .map(|&t| 100.0 * oracle_ap(&oracle_ranked_hits(preds, gts, t), gts.len()) / 1.0)
        .collect();
    Some(per.iter().sum::<f64>() / per.len() as f64)
}

/// Lists of up to `max_len` segments drawn with repetition from `pool`.
fn lists(pool: &[Segment], max_len: usize) -> Vec<Vec<Segment>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for l in &frontier {
            for s in pool {
                let mut l2: Vec<Segment> = l.clone();
                l2.push(*s);
                next.push(l2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every (predictions, references) pair from two families: up to four
/// segments per side over two three-segment pools, and up to two per side
/// over all ten integer segments in [0, 4].
pub fn enumerate_instances() -> Vec<(Vec<Segment>, Vec<Segment>)> {
    let pred_pool = [seg(0.0, 4.0), seg(2.0, 6.0), seg(1.0, 3.0)];
    let gt_pool = [seg(0.0, 3.0), seg(2.0, 5.0), seg(4.0, 8.0)];
    let grid: Vec<Segment> = (0..5).flat_map(|a| (a + 1..5).map(move |b| seg(a as f64, b as f64))).collect();
    let mut out = Vec::new();
    for p in lists(&pred_pool, 4) {
        for g in lists(&gt_pool, 4) {
            out.push((p.clone(), g));
        }
    }
    for p in lists(&grid, 2) {
        for g in lists(&grid, 2) {
            out.push((p.clone(), g));
        }
    }
    out
}

/// A caption-similarity stand-in so the SODA weights are not plain IoU.
fn text_weight(i: usize, j: usize) -> f64 {
    0.5 + ((i + 2 * j) % 3) as f64 * 0.25
}

/// Confidences with ties so rank tie-breaking is exercised.
fn confidence(i: usize) -> f64 {
    [0.9, 0.5, 0.9, 0.2][i % 4]
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub cases: usize,
    pub dvc_mismatches: Vec<String>,
    pub soda_mismatches: Vec<String>,
    pub map_mismatches: Vec<String>,
}

pub fn compare_all() -> OracleReport {
    let mut r = OracleReport::default();
    for (p, g) in enumerate_instances() {
        r.cases += 1;

        for t in DVC_THRESHOLDS {
            let got = greedy_match(&p, &g, t);
            let want = oracle_match(&p, &g, t);
            if got != want {
                r.dvc_mismatches.push(format!("match t={t} {p:?} vs {g:?}: {got:?} != {want:?}"));
            }
        }
        let f1 = dvc_f1(&[(p.clone(), g.clone())]).f1;
        let want_f1 = oracle_f1(&p, &g);
        if f1 != want_f1 {
            r.dvc_mismatches.push(format!("f1 {p:?} vs {g:?}: {f1} != {want_f1}"));
        }

        let w: Vec<Vec<f64>> = (0..p.len())
            .map(|i| (0..g.len()).map(|j| oracle_iou(&p[i], &g[j]) * text_weight(i, j)).collect())
            .collect();
        let (total, pairs) = soda_match(&w);
        let recomputed = pairs.iter().fold(0.0, |s, &(i, j)| s + w[i][j]);
        let monotone = pairs.windows(2).all(|x| x[0].0 < x[1].0 && x[0].1 < x[1].1);
        let want = oracle_soda(&w);
        if total != want || recomputed != total || !monotone {
            r.soda_mismatches.push(format!("soda {p:?} vs {g:?}: {total} ({pairs:?}) != {want}"));
        }

        let moments: Vec<ScoredMoment> = p
            .iter()
            .enumerate()
            .map(|(i, s)| ScoredMoment {
                segment: *s,
                confidence: confidence(i),
            })
            .collect();
        let got = highlight_map(&[(moments.clone(), g.clone())]).map;
        let want = oracle_map(&moments, &g);
        if got != want {
            r.map_mismatches.push(format!("map {p:?} vs {g:?}: {got:?} != {want:?}"));
        }
    }
    r
}
