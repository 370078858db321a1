mod common {
    pub mod oracles;
}

use std::collections::BTreeMap;

use chronoframe::metrics::{
    average_precision, dvc_f1, highlight_map, recall_at_1, soda_match, Cider, ScoredMoment,
};
use chronoframe::segment::{iou, Segment};
use common::oracles::compare_all;
use proptest::prelude::*;

fn seg(a: f64, b: f64) -> Segment {
    Segment::new(a, b).unwrap()
}

#[test]
fn matchers_equal_exhaustive_oracles() {
    let r = compare_all();
    assert!(r.cases >= 10_000, "{} cases", r.cases);
    assert!(r.dvc_mismatches.is_empty(), "{:#?}", &r.dvc_mismatches[..r.dvc_mismatches.len().min(5)]);
    assert!(r.soda_mismatches.is_empty(), "{:#?}", &r.soda_mismatches[..r.soda_mismatches.len().min(5)]);
    assert!(r.map_mismatches.is_empty(), "{:#?}", &r.map_mismatches[..r.map_mismatches.len().min(5)]);
}

#[test]
fn hand_computed_values() {
    assert!((iou(&seg(0.0, 10.0), &seg(5.0, 15.0)) - 1.0 / 3.0).abs() < 1e-15);
    // IoU 1/3 clears only the 0.3 threshold: P = R = 1/4.
    assert!((dvc_f1(&[(vec![seg(0.0, 10.0)], vec![seg(5.0, 15.0)])]).f1 - 25.0).abs() < 1e-12);
    assert_eq!(dvc_f1(&[(vec![], vec![seg(0.0, 1.0)])]).f1, 0.0);

    // IoU 0.6 straddles the two recall thresholds.
    let p = [Some(seg(0.0, 6.0))];
    let g = [seg(0.0, 10.0)];
    assert_eq!(recall_at_1(&p, &g, 0.5).unwrap(), 100.0);
    assert_eq!(recall_at_1(&p, &g, 0.7).unwrap(), 0.0);
    assert_eq!(recall_at_1(&[None], &g, 0.5).unwrap(), 0.0);

    // Only crossing pairs overlap, so order preservation allows one.
    let (total, pairs) = soda_match(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert_eq!((total, pairs.len()), (1.0, 1));
    let (total, _) = soda_match(&[vec![0.0, 0.7], vec![0.0, 0.0]]);
    assert_eq!(total, 0.7);

    assert_eq!(average_precision(&[false, true], 1), 0.5);
    let m = |a, b, c| ScoredMoment {
        segment: seg(a, b),
        confidence: c,
    };
    let r = highlight_map(&[(vec![m(20.0, 30.0, 0.9), m(0.0, 10.0, 0.5)], vec![seg(0.0, 10.0)])]);
    assert_eq!(r.map, Some(50.0));
    let r = highlight_map(&[(vec![m(0.0, 10.0, 0.5)], vec![]), (vec![m(0.0, 10.0, 0.5)], vec![seg(0.0, 10.0)])]);
    assert_eq!((r.map, r.skipped_no_reference), (Some(100.0), 1));
}

/// Straight from the definition with string n-grams in ordered maps.
fn cider_oracle(corpus: &[&str], cand: &str, reference: &str) -> f64 {
    let words = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect()
    };
    let grams = |w: &[String], n: usize| -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for i in 0..(w.len() + 1).saturating_sub(n) {
            *m.entry(w[i..i + n].join(" ")).or_insert(0.0) += 1.0;
        }
        m
    };
    let docs: Vec<Vec<String>> = corpus.iter().map(|d| words(d)).collect();
    let (c, r) = (words(cand), words(reference));
    let mut scores = Vec::new();
    for n in 1..=4 {
        let idf = |g: &str| {
            let df = docs.iter().filter(|d| grams(d, n).contains_key(g)).count() as f64;
            ((docs.len() as f64 + 1.0) / (df + 1.0)).ln() + 1.0
        };
        let wc: BTreeMap<String, f64> = grams(&c, n).into_iter().map(|(g, v)| (g.clone(), v * idf(&g))).collect();
        let wr: BTreeMap<String, f64> = grams(&r, n).into_iter().map(|(g, v)| (g.clone(), v * idf(&g))).collect();
        if wc.is_empty() && wr.is_empty() {
            continue;
        }
        let nc = wc.values().map(|v| v * v).sum::<f64>().sqrt();
        let nr = wr.values().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = wc.iter().filter_map(|(g, v)| wr.get(g).map(|u| v.min(*u) * u)).sum();
        scores.push(if nc == 0.0 || nr == 0.0 { 0.0 } else { dot / (nc * nr) });
    }
    if scores.is_empty() {
        0.0
    } else {
        10.0 * scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[test]
fn cider_against_counting_oracle() {
    let s = "place a slice of cheese on the bread";
    let self_score = Cider::new(&[s]).unwrap().pair(s, s);
    assert!((self_score - 10.0).abs() <= 1e-9, "{self_score}");

    let corpus = ["a man slices the bread on a board", "the woman pours water into a red bowl"];
    let cider = Cider::new(&corpus).unwrap();
    for (c, r) in [
        ("a man cuts the bread", corpus[0]),
        ("the woman pours water", corpus[1]),
        ("a red bowl of water on the board", corpus[1]),
        ("nothing shared here", corpus[0]),
        ("a", corpus[0]),
    ] {
        let want = cider_oracle(&corpus, c, r);
        assert!((cider.pair(c, r) - want).abs() <= 1e-9, "{c:?}: {} vs {want}", cider.pair(c, r));
    }
    assert_eq!(cider.pair("nothing shared here", corpus[0]), 0.0);
}

fn arb_segments() -> impl Strategy<Value = Vec<Segment>> {
    prop::collection::vec((0u32..50, 1u32..20), 0..5)
        .prop_map(|v| v.into_iter().map(|(a, l)| seg(a as f64, (a + l) as f64)).collect())
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in 0.0..100.0f64, la in 0.0..50.0f64, b in 0.0..100.0f64, lb in 0.0..50.0f64) {
        let (x, y) = (seg(a, a + la), seg(b, b + lb));
        let v = iou(&x, &y);
        prop_assert_eq!(v, iou(&y, &x));
        prop_assert!((0.0..=1.0).contains(&v));
        if la > 0.0 {
            prop_assert!((iou(&x, &x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_ignore_time_units(p in arb_segments(), g in arb_segments()) {
        // Scaling by a power of two keeps every IoU bit-identical.
        let scale = |v: &[Segment]| v.iter().map(|s| s.scaled(4.0)).collect::<Vec<_>>();
        prop_assert_eq!(dvc_f1(&[(p.clone(), g.clone())]), dvc_f1(&[(scale(&p), scale(&g))]));
        if !g.is_empty() {
            let ps: Vec<Option<Segment>> = g.iter().enumerate().map(|(i, s)| p.get(i).copied().or(Some(*s))).collect();
            let ps4: Vec<Option<Segment>> = ps.iter().map(|s| s.map(|s| s.scaled(4.0))).collect();
            for mu in [0.5, 0.7] {
                prop_assert_eq!(recall_at_1(&ps, &g, mu).unwrap(), recall_at_1(&ps4, &scale(&g), mu).unwrap());
            }
        }
    }

    #[test]
    fn extra_predictions_behave(p in arb_segments(), g in arb_segments(), extra in (200u32..300, 1u32..10)) {
        prop_assume!(!g.is_empty());
        let base = dvc_f1(&[(p.clone(), g.clone())]);
        // A copy of a reference never lowers recall.
        let mut more = p.clone();
        more.push(g[0]);
        prop_assert!(dvc_f1(&[(more, g.clone())]).recall >= base.recall);
        // A prediction far from every reference never raises precision.
        let mut noise = p.clone();
        noise.push(seg(extra.0 as f64, (extra.0 + extra.1) as f64));
        prop_assert!(dvc_f1(&[(noise, g.clone())]).precision <= base.precision);
    }
}
